#pragma once

#include <stdexcept>
#include <string>

namespace palm {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// A file could not be opened, read, or written.
class IoError : public Error {
public:
  using Error::Error;
};

/// File contents are not in a supported format.
class FormatError : public Error {
public:
  using Error::Error;
};

/// File is damaged: truncated, malformed, or failing its checksum.
class CorruptFileError : public FormatError {
public:
  using FormatError::FormatError;
};

class VersionMismatchError : public FormatError {
public:
  using FormatError::FormatError;
};

/// A caller-supplied argument violates an operation's precondition.
class InvalidArgument : public Error {
public:
  using Error::Error;
};

/// Tensor or layer shapes do not chain.
class ShapeError : public InvalidArgument {
public:
  using InvalidArgument::InvalidArgument;
};

/// A rectangle or coordinate falls outside the raster it indexes.
class OutOfBoundsError : public InvalidArgument {
public:
  using InvalidArgument::InvalidArgument;
};

/// A sampling request cannot be satisfied under its constraints.
class InfeasibleError : public Error {
public:
  using Error::Error;
};

} // namespace palm
