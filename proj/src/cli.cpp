#include "palm/cli.hpp"

#include <CLI11.hpp>
#include <cstdio>
#include <fstream>
#include <httplib.h>
#include <iomanip>
#include <json.hpp>
#include <sstream>

#include "palm/annotate.hpp"
#include "palm/detector.hpp"
#include "palm/errors.hpp"
#include "palm/eval.hpp"
#include "palm/gradcheck.hpp"
#include "palm/overlay.hpp"
#include "palm/random.hpp"
#include "palm/synth.hpp"
#include "palm/train.hpp"

namespace palm::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

constexpr double kGradTolerance = 1e-3;

struct Options {
  std::uint64_t seed = 1;
  std::string out;

  // synth
  int scenes = 1;
  std::size_t palm_crops = 300;
  std::size_t nopalm_crops = 500;
  SynthConfig synth;

  // train
  std::string dataset;
  nn::TrainConfig train;

  // detect
  std::string model;
  std::string scene;
  DetectorParams detector;

  // evaluate
  std::vector<std::string> pairs;
  double tolerance = 20.0;

  // serve
  std::string workspace;
  std::string listen = "127.0.0.1:8080";
};

void require_file(const std::string& path, const char* what) {
  if (!fs::is_regular_file(path)) throw IoError(std::string(what) + " not found: " + path);
}

std::string scene_name(std::size_t k) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "scene_%03zu", k);
  return buf;
}

int cmd_synth(const Options& o, std::ostream& out) {
  o.synth.validate();
  if (o.scenes < 0) throw InvalidArgument("--scenes must not be negative");
  const fs::path root(o.out);
  fs::create_directories(root / "scenes");
  for (int k = 0; k < o.scenes; ++k) {
    const auto scene = generate_scene(o.synth, derive_seed(o.seed, 1000 + static_cast<std::uint64_t>(k)));
    const std::string name = scene_name(static_cast<std::size_t>(k));
    save_raster(scene.image, root / "scenes" / (name + ".png"));
    write_truth_csv(scene.truth, root / "scenes" / (name + "_truth.csv"));
    out << name << ": " << scene.truth.centers.size() << " trees\n";
  }
  if (o.palm_crops + o.nopalm_crops > 0) {
    const Dataset d = generate_crops(o.synth, derive_seed(o.seed, 1), o.palm_crops, o.nopalm_crops);
    save_dataset(d, root / "crops");
    out << "crops: " << d.count(Label::Palm) << " palm, " << d.count(Label::NoPalm) << " no_palm\n";
  }
  return 0;
}

int cmd_train(const Options& o, std::ostream& out, std::ostream& err) {
  if (!fs::is_directory(o.dataset)) throw IoError("dataset directory not found: " + o.dataset);
  nn::TrainConfig cfg = o.train;
  cfg.seed = o.seed;
  cfg.validate();
  const Dataset data = load_dataset(o.dataset);
  const auto report = nn::train(nn::ModelConfig::lenet(data.channels, data.side), data, cfg,
                                [&err](int epoch, double loss, double acc) {
                                  err << "epoch " << epoch + 1 << " loss " << std::fixed
                                      << std::setprecision(4) << loss << " val_acc " << acc << '\n';
                                });
  const fs::path root(o.out);
  fs::create_directories(root);
  nn::save_model(report.model, root / "model.bin");
  ordered_json j{{"seed", cfg.seed},
                 {"epochs", cfg.epochs},
                 {"learning_rate", cfg.learning_rate},
                 {"momentum", cfg.momentum},
                 {"batch_size", cfg.batch_size},
                 {"train_loss", report.train_loss},
                 {"validation_accuracy", report.validation_accuracy},
                 {"validation_loss", report.validation_loss},
                 {"best_epoch", report.best_epoch + 1},
                 {"best_validation_accuracy", report.best_validation_accuracy}};
  std::ofstream(root / "train_report.json") << j.dump(2) << '\n';
  out << "best validation accuracy " << std::fixed << std::setprecision(4)
      << report.best_validation_accuracy << " at epoch " << report.best_epoch + 1 << '\n';
  return 0;
}

int cmd_detect(const Options& o, std::ostream& out) {
  require_file(o.model, "model file");
  require_file(o.scene, "scene image");
  const DetectorParams& p = o.detector;
  p.validate();
  const nn::Model model = nn::load_model(o.model);
  const Raster scene = load_raster(o.scene);
  if (scene.width() < p.window_side || scene.height() < p.window_side) {
    throw InvalidArgument("scene too small: " + std::to_string(scene.width()) + "x" +
                          std::to_string(scene.height()) + " is smaller than one " +
                          std::to_string(p.window_side) + "px window");
  }
  const Detection d = detect(model, scene, p);
  const fs::path root(o.out);
  fs::create_directories(root);
  write_peaks_csv(d.peaks, root / "peaks.csv");
  write_confidence_pgm16(d.raw, root / "confidence_raw.pgm");
  write_confidence_text(d.raw, root / "confidence_raw.txt");
  write_confidence_pgm16(d.smoothed, root / "confidence_smoothed.pgm");
  write_confidence_text(d.smoothed, root / "confidence_smoothed.txt");
  save_raster(render_overlay(scene, d.raw), root / "overlay_raw.png");
  save_raster(render_overlay(scene, d.smoothed), root / "overlay_smoothed.png");
  save_raster(render_overlay(scene, d.peaks), root / "overlay_peaks.png");
  out << d.peaks.peaks.size() << " trees detected\n";
  return 0;
}

int cmd_evaluate(const Options& o, std::ostream& out) {
  if (o.pairs.size() % 2 != 0) {
    throw InvalidArgument("evaluate takes PEAKS TRUTH pairs, got an odd number of paths");
  }
  std::vector<SceneScore> scores;
  for (std::size_t i = 0; i < o.pairs.size(); i += 2) {
    require_file(o.pairs[i], "peaks file");
    require_file(o.pairs[i + 1], "truth file");
  }
  for (std::size_t i = 0; i < o.pairs.size(); i += 2) {
    const GroundTruth truth = read_truth_csv(o.pairs[i + 1]);
    PeakList peaks{read_peaks_csv(o.pairs[i]), truth.scene_width, truth.scene_height};
    const std::string name = fs::path(o.pairs[i + 1]).stem().string();
    try {
      scores.push_back({name, evaluate_scene(peaks, truth, o.tolerance)});
    } catch (const InvalidArgument& e) {
      throw InvalidArgument(name + ": " + e.what());
    }
  }
  const std::string text = to_json(summarize(std::move(scores), o.tolerance));
  if (!o.out.empty()) {
    fs::create_directories(fs::path(o.out).parent_path().empty() ? fs::path(".")
                                                                 : fs::path(o.out).parent_path());
    std::ofstream(o.out) << text << '\n';
  }
  out << text << '\n';
  return 0;
}

int cmd_gradcheck(const Options& o, std::ostream& out) {
  bool ok = true;
  for (const auto& r : nn::run_gradient_checks(o.seed)) {
    const bool pass = r.max_rel_error < kGradTolerance;
    ok = ok && pass;
    char line[160];
    std::snprintf(line, sizeof line, "%-8s max_rel_error %.3e over %zu entries %s\n",
                  r.layer.c_str(), r.max_rel_error, r.checked, pass ? "ok" : "FAIL");
    out << line;
  }
  if (!ok) throw Error("gradient check failed (tolerance " + std::to_string(kGradTolerance) + ")");
  return 0;
}

int cmd_serve(const Options& o, std::ostream& out) {
  const auto colon = o.listen.rfind(':');
  if (colon == std::string::npos) throw InvalidArgument("--listen expects HOST:PORT");
  const std::string host = o.listen.substr(0, colon);
  int port = 0;
  try {
    port = std::stoi(o.listen.substr(colon + 1));
  } catch (const std::exception&) {
    throw InvalidArgument("--listen port is not a number: " + o.listen);
  }
  if (port < 1 || port > 65535) throw InvalidArgument("--listen port out of range");
  AnnotationService service(o.workspace, o.seed);
  httplib::Server server;
  register_routes(server, service, default_web_dir());
  if (!server.bind_to_port(host, port)) throw IoError("cannot listen on " + o.listen);
  out << "serving " << o.workspace << " on http://" << o.listen << '\n' << std::flush;
  server.listen_after_bind();
  return 0;
}

} // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Palm crown counting toolkit", "palmcount"};
  app.require_subcommand(1);
  Options o;

  auto* synth = app.add_subcommand("synth", "Generate synthetic scenes, truth files and labeled crops");
  synth->add_option("--out", o.out, "Output directory")->required();
  synth->add_option("--seed", o.seed, "Random seed");
  synth->add_option("--scenes", o.scenes, "Number of full scenes")->capture_default_str();
  synth->add_option("--palm", o.palm_crops, "Palm crops")->capture_default_str();
  synth->add_option("--no-palm", o.nopalm_crops, "No-palm crops")->capture_default_str();
  synth->add_option("--width", o.synth.width)->capture_default_str();
  synth->add_option("--height", o.synth.height)->capture_default_str();
  synth->add_option("--trees-min", o.synth.trees_min)->capture_default_str();
  synth->add_option("--trees-max", o.synth.trees_max)->capture_default_str();
  synth->add_option("--channels", o.synth.channels, "1 (panchromatic) or 3")->capture_default_str();

  auto* train = app.add_subcommand("train", "Train the crop classifier");
  train->add_option("dataset", o.dataset, "Dataset directory")->required();
  train->add_option("--out", o.out, "Output directory")->required();
  train->add_option("--seed", o.seed, "Random seed");
  train->add_option("--epochs", o.train.epochs)->capture_default_str();
  train->add_option("--lr", o.train.learning_rate)->capture_default_str();
  train->add_option("--batch", o.train.batch_size)->capture_default_str();
  train->add_flag("--augment", o.train.augment, "Random flips and quarter turns");

  auto* detect = app.add_subcommand("detect", "Locate crowns in a scene");
  detect->add_option("model", o.model, "Model file")->required();
  detect->add_option("scene", o.scene, "Scene image")->required();
  detect->add_option("--out", o.out, "Output directory")->required();
  detect->add_option("--window", o.detector.window_side)->capture_default_str();
  detect->add_option("--stride", o.detector.stride)->capture_default_str();
  detect->add_option("--kernel", o.detector.kernel_side,
                     "Smoothing kernel side in cells (odd; default: largest odd <= window / (3 * stride))");
  detect->add_option("--nms-radius", o.detector.nms_radius,
                     "Suppression radius in cells (default: window / (2 * stride))");
  detect->add_option("--threshold", o.detector.threshold)->capture_default_str();

  auto* evaluate = app.add_subcommand("evaluate", "Score detections against truth");
  evaluate->add_option("pairs", o.pairs, "PEAKS.csv TRUTH.csv [PEAKS.csv TRUTH.csv ...]")->required();
  evaluate->add_option("--tolerance", o.tolerance, "Match radius in px")->capture_default_str();
  evaluate->add_option("--out", o.out, "Also write the report to this file");

  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of every layer");
  gradcheck->add_option("--seed", o.seed, "Random seed");

  auto* serve = app.add_subcommand("serve", "Serve the crop-labeling API and UI");
  serve->add_option("workspace", o.workspace, "Directory with scenes/ (crops go to dataset/)")->required();
  serve->add_option("--listen", o.listen, "HOST:PORT")->capture_default_str();
  serve->add_option("--seed", o.seed, "Seed for negative sampling");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return e.get_exit_code() == 0 ? 2 : e.get_exit_code();
  }

  try {
    if (*synth) return cmd_synth(o, out);
    if (*train) return cmd_train(o, out, err);
    if (*detect) return cmd_detect(o, out);
    if (*evaluate) return cmd_evaluate(o, out);
    if (*gradcheck) return cmd_gradcheck(o, out);
    if (*serve) return cmd_serve(o, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

} // namespace palm::cli
