#include <iostream>

#include "palm/cli.hpp"

int main(int argc, char** argv) {
  return palm::cli::run({argv + 1, argv + argc}, std::cout, std::cerr);
}
