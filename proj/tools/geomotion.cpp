// Copyright 2026 The geomotion Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// geomotion command-line entry point.
//
// Exit codes: 0 success, 1 other failure, 2 configuration error, 3 data
// error, 4 numerical divergence. Failures print one JSON object to stderr.

#include "geomotion/config.hpp"
#include "geomotion/gradsuite.hpp"
#include "geomotion/metrics.hpp"
#include "geomotion/synthscenes.hpp"
#include "geomotion/trainer.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <iomanip>
#include <iostream>

namespace gm = geomotion;

namespace {

struct Common {
  std::string config_file;
  std::vector<std::string> overrides;

  gm::Config load() const { return gm::load_config(config_file, overrides); }
};

void add_common(CLI::App* sub, Common& common) {
  sub->add_option("--config", common.config_file, "JSON configuration file");
  sub->add_option("overrides", common.overrides, "key=value configuration overrides");
  sub->footer(gm::config_help());
}

void write_manifest(const gm::fs::path& dir, const std::string& command, const gm::Config& config,
                    gm::json extra = gm::json::object()) {
  gm::json manifest = {{"tool", "geomotion"},
                       {"version", gm::kVersion},
                       {"command", command},
                       {"seed", config.at("seed")},
                       {"config", config.values()}};
  for (auto& [key, value] : extra.items()) manifest[key] = value;
  gm::write_json(manifest, dir / "manifest.json");
}

std::vector<gm::FrameSequence> load_dataset(const gm::fs::path& dir, int size) {
  const auto dirs = gm::list_sequences(dir);
  if (dirs.empty()) throw gm::DataError(dir.string() + " holds no sequences");
  std::vector<gm::FrameSequence> out;
  for (const auto& d : dirs) out.push_back(gm::load_sequence(d, size));
  return out;
}

gm::ProviderSpec provider_for(const gm::Config& config, const gm::fs::path& dataset) {
  gm::ProviderSpec spec = gm::provider_spec(config);
  if (spec.kind == gm::ProviderKind::File && spec.dataset_dir.empty()) spec.dataset_dir = dataset;
  return spec;
}

gm::json seg_summary(const gm::SegReport& r) {
  return {{"J_M", r.j_m}, {"F_M", r.f_m}, {"J&F", r.j_and_f}, {"J_R", r.j_r}, {"frames", r.frames}};
}

// ---------------------------------------------------------------------------

int cmd_gen(const gm::Config& config, const gm::fs::path& out, bool tokens) {
  const gm::SceneConfig scene = gm::scene_config(config);
  const auto seed = config.get<std::uint64_t>("seed");
  const int count = config.get<int>("sequences");
  if (count < 1) throw gm::ConfigError("sequences must be at least 1");
  gm::fs::create_directories(out);
  const auto suite = gm::generate_suite(scene, static_cast<std::size_t>(count), seed);
  gm::ModelConfig model;
  if (tokens) model = gm::model_config(config);
  for (const auto& s : suite) {
    const gm::fs::path dir = out / s.sequence.name;
    gm::save_sequence(s.sequence, dir, {{"seed", seed}, {"scene", gm::scene_config_to_json(scene)}});
    if (tokens) {
      const gm::GeometryBundle bundle = gm::synthetic_tokens(s.sequence, gm::provider_spec(config), model.grid(),
                                                             model.channels, model.cam_width);
      gm::write_bundle(bundle, dir);
    }
  }
  write_manifest(out, "gen", config, {{"sequences", count}, {"tokens", tokens}});
  std::cout << gm::json{{"dataset", out.string()}, {"sequences", count}}.dump() << '\n';
  return 0;
}

int cmd_train(const gm::Config& config, const gm::fs::path& out) {
  gm::TrainConfig cfg = gm::train_config(config);
  cfg.output_dir = out;
  const gm::fs::path train_dir = config.get<std::string>("train_dir");
  const gm::fs::path heldout_dir = config.get<std::string>("heldout_dir");
  if (train_dir.empty()) throw gm::ConfigError("train needs train_dir=<dataset>");
  const auto train = gm::prepare_training_set(load_dataset(train_dir, cfg.model.image_size),
                                              provider_for(config, train_dir), cfg.model);
  gm::TrainingSet heldout;
  if (!heldout_dir.empty()) {
    heldout = gm::prepare_training_set(load_dataset(heldout_dir, cfg.model.image_size),
                                       provider_for(config, heldout_dir), cfg.model);
  }
  gm::fs::create_directories(out);
  write_manifest(out, "train", config);
  gm::Trainer trainer(cfg, train, heldout_dir.empty() ? nullptr : &heldout);
  const gm::TrainReport report = trainer.run();

  gm::json evals = gm::json::array();
  for (const auto& e : report.evals) evals.push_back({{"step", e.step}, {"J_M", e.j_m}, {"F_M", e.f_m}, {"J_R", e.j_r}});
  gm::json summary = {{"steps", report.steps},
                      {"epochs", report.epochs},
                      {"final_loss", report.losses.empty() ? 0.0 : report.losses.back()},
                      {"wall_seconds", report.wall_seconds},
                      {"steps_to_target", report.steps_to_target},
                      {"checkpoint", report.checkpoint.string()},
                      {"evals", evals}};
  if (report.heldout) {
    summary["heldout"] = seg_summary(*report.heldout);
    gm::write_json(gm::report_to_json(*report.heldout), out / "heldout_report.json");
  }
  gm::write_json(summary, out / "train_report.json");
  std::cout << summary.dump() << '\n';
  return 0;
}

int cmd_eval(const gm::Config& config, const gm::fs::path& pred, const gm::fs::path& gt, const gm::fs::path& out) {
  const gm::SegReport report =
      gm::evaluate_dataset(pred, gt, config.get<double>("threshold"), config.get<int>("boundary_tolerance"));
  if (!out.empty()) {
    gm::fs::create_directories(out);
    gm::write_json(gm::report_to_json(report), out / "report.json");
    gm::write_report_csv(report, out / "report.csv");
    write_manifest(out, "eval", config, {{"pred", pred.string()}, {"gt", gt.string()}});
  }
  std::cout << seg_summary(report).dump() << '\n';
  return 0;
}

std::string shell_quote(const std::string& s) {
  std::string q = "'";
  for (char c : s) q += c == '\'' ? std::string("'\\''") : std::string(1, c);
  return q + "'";
}

gm::RefinementHook external_refiner(const std::string& command, const gm::fs::path& frames_dir,
                                    const gm::fs::path& work) {
  return [=](const std::vector<gm::RgbImage>& frames, const gm::CoarseMasks& coarse) {
    const gm::fs::path coarse_dir = work / "coarse";
    const gm::fs::path refined_dir = work / "refined";
    gm::fs::create_directories(coarse_dir);
    gm::fs::create_directories(refined_dir);
    for (gm::Index t = 0; t < coarse.probs.rows(); ++t) {
      gm::GrayImage image(coarse.width, coarse.height);
      for (gm::Index i = 0; i < coarse.probs.cols(); ++i) {
        image.pixels[static_cast<std::size_t>(i)] =
            static_cast<std::uint8_t>(std::lround(std::clamp(coarse.probs(t, i), 0.0f, 1.0f) * 255.0f));
      }
      gm::write_gray_png(image, coarse_dir / (gm::frame_stem(static_cast<std::size_t>(t)) + ".png"));
    }
    const std::string line =
        command + ' ' + shell_quote(frames_dir.string()) + ' ' + shell_quote(coarse_dir.string()) + ' ' +
        shell_quote(refined_dir.string());
    const int status = std::system(line.c_str());
    if (status != 0) throw gm::DataError("refinement command failed (status " + std::to_string(status) + "): " + line);
    const int width = frames.front().width;
    const int height = frames.front().height;
    gm::MatrixF refined(coarse.probs.rows(), static_cast<gm::Index>(width) * height);
    for (gm::Index t = 0; t < refined.rows(); ++t) {
      const gm::fs::path file = refined_dir / (gm::frame_stem(static_cast<std::size_t>(t)) + ".png");
      if (!gm::fs::exists(file)) throw gm::DataError("refinement command did not write " + file.string());
      const gm::GrayImage image = gm::read_gray_png(file);
      if (image.width != width || image.height != height) {
        throw gm::ShapeError("refined mask " + file.string() + " is " + std::to_string(image.width) + "x" +
                             std::to_string(image.height) + ", frames are " + std::to_string(width) + "x" +
                             std::to_string(height));
      }
      for (std::size_t i = 0; i < image.pixels.size(); ++i) refined(t, static_cast<gm::Index>(i)) = image.pixels[i] / 255.0f;
    }
    return refined;
  };
}

int cmd_infer(const gm::Config& config, const gm::fs::path& checkpoint, const gm::fs::path& data,
              const gm::fs::path& out, const std::string& refine_cmd) {
  const gm::MotionModel<float> model = gm::model_from_checkpoint(gm::load_checkpoint(checkpoint));
  const int size = model.config().image_size;
  const gm::ProviderSpec spec = provider_for(config, data);
  gm::fs::create_directories(out);
  std::size_t frames = 0;
  for (const auto& dir : gm::list_sequences(data)) {
    const gm::FrameSequence seq = gm::load_sequence(dir, size);
    const gm::GeometryBundle bundle =
        gm::provide(seq, spec, model.config().grid(), model.config().channels, model.config().cam_width);
    const gm::CoarseMasks coarse{gm::predict_sequence(model, seq, bundle), seq.height(), seq.width()};
    gm::RefinementHook hook;
    if (!refine_cmd.empty()) hook = external_refiner(refine_cmd, dir / "frames", out / ".refine" / seq.name);
    const gm::MatrixF refined = gm::refine(seq.frames, coarse, hook);
    const gm::fs::path seq_out = out / seq.name;
    gm::fs::create_directories(seq_out);
    for (gm::Index t = 0; t < refined.rows(); ++t) {
      gm::GrayImage image(seq.width(), seq.height());
      for (gm::Index i = 0; i < refined.cols(); ++i) {
        image.pixels[static_cast<std::size_t>(i)] =
            static_cast<std::uint8_t>(std::lround(std::clamp(refined(t, i), 0.0f, 1.0f) * 255.0f));
      }
      gm::write_gray_png(image, seq_out / (gm::frame_stem(static_cast<std::size_t>(t)) + ".png"));
      ++frames;
    }
  }
  write_manifest(out, "infer", config, {{"checkpoint", checkpoint.string()}, {"data", data.string()},
                                        {"refine_cmd", refine_cmd}});
  std::cout << gm::json{{"masks", out.string()}, {"frames", frames}}.dump() << '\n';
  return 0;
}

int cmd_bench(const gm::Config& config, const gm::fs::path& checkpoint, const gm::fs::path& data,
              const gm::fs::path& out) {
  const gm::MotionModel<float> model = checkpoint.empty()
                                           ? gm::MotionModel<float>(gm::model_config(config), config.get<std::uint64_t>("seed"))
                                           : gm::model_from_checkpoint(gm::load_checkpoint(checkpoint));
  const gm::ProviderSpec spec = provider_for(config, data);
  const int repetitions = config.get<int>("repetitions");
  std::vector<double> per_sequence;
  std::size_t frames = 0;
  for (const auto& dir : gm::list_sequences(data)) {
    // Disk IO and provider tokens stay outside the timed region.
    const gm::FrameSequence seq = gm::load_sequence(dir, model.config().image_size);
    const gm::GeometryBundle bundle =
        gm::provide(seq, spec, model.config().grid(), model.config().channels, model.config().cam_width);
    per_sequence.push_back(gm::median_seconds_per_frame(
        [&] { (void)gm::refine(seq.frames, {gm::predict_sequence(model, seq, bundle), seq.height(), seq.width()}); },
        seq.size(), repetitions));
    frames += seq.size();
  }
  if (per_sequence.empty()) throw gm::DataError(data.string() + " holds no sequences");
  std::sort(per_sequence.begin(), per_sequence.end());
  const std::size_t mid = per_sequence.size() / 2;
  const double median = per_sequence.size() % 2 ? per_sequence[mid] : 0.5 * (per_sequence[mid - 1] + per_sequence[mid]);
  const gm::json result = {{"runtime_per_frame_s", median}, {"sequences", per_sequence.size()}, {"frames", frames},
                           {"repetitions", repetitions}};
  if (!out.empty()) {
    gm::fs::create_directories(out);
    gm::write_json(result, out / "bench.json");
    write_manifest(out, "bench", config);
  }
  std::cout << result.dump() << '\n';
  return 0;
}

int cmd_gradcheck(double tolerance, int points, std::uint64_t seed) {
  const auto rows = gm::run_gradcheck_suite(tolerance, points, seed);
  bool ok = true;
  std::cout << std::left << std::setw(20) << "op" << std::setw(14) << "max_rel_err" << std::setw(10) << "seconds"
            << "result\n";
  for (const auto& r : rows) {
    std::cout << std::left << std::setw(20) << r.name << std::setw(14) << std::setprecision(3) << std::scientific
              << r.error << std::setw(10) << std::fixed << std::setprecision(3) << r.seconds
              << (r.passed ? "PASS" : "FAIL") << '\n';
    ok = ok && r.passed;
  }
  if (!ok) {
    std::cerr << gm::json{{"error", {{"kind", "gradcheck"}, {"message", "gradient check failed"}, {"exit_code", 1}}}}.dump()
              << '\n';
    return 1;
  }
  return 0;
}

int report_error(const std::string& kind, const std::string& message, int code) {
  std::cerr << gm::json{{"error", {{"kind", kind}, {"message", message}, {"exit_code", code}}}}.dump() << '\n';
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"geomotion: motion segmentation from frozen geometry features"};
  app.require_subcommand(1);
  app.set_version_flag("--version", gm::kVersion);
  app.footer(gm::config_help());

  Common common;
  gm::fs::path out;
  gm::fs::path pred;
  gm::fs::path gt;
  gm::fs::path checkpoint;
  gm::fs::path data;
  std::string refine_cmd;
  bool tokens = false;
  double tolerance = 1e-4;
  int points = 1;

  auto* gen = app.add_subcommand("gen", "Generate a synthetic scene dataset");
  add_common(gen, common);
  gen->add_option("--out", out, "dataset directory")->required();
  gen->add_flag("--tokens", tokens, "also write synthetic provider tokens for the file provider");

  auto* train = app.add_subcommand("train", "Train a model (train_dir=... heldout_dir=...)");
  add_common(train, common);
  train->add_option("--out", out, "run directory (checkpoint, loss.csv, reports)")->required();

  auto* eval = app.add_subcommand("eval", "Score predicted masks against ground truth");
  add_common(eval, common);
  eval->add_option("--pred", pred, "prediction directory <seq>/<frame>.png")->required();
  eval->add_option("--gt", gt, "dataset directory with <seq>/masks")->required();
  eval->add_option("--out", out, "report directory");

  auto* infer = app.add_subcommand("infer", "Predict mask PNGs for a dataset");
  add_common(infer, common);
  infer->add_option("--checkpoint", checkpoint, "checkpoint directory")->required();
  infer->add_option("--data", data, "dataset directory")->required();
  infer->add_option("--out", out, "output directory")->required();
  infer->add_option("--refine-cmd", refine_cmd, "external refiner: CMD <frames_dir> <coarse_dir> <out_dir>");

  auto* bench = app.add_subcommand("bench", "Median inference seconds per frame");
  add_common(bench, common);
  bench->add_option("--checkpoint", checkpoint, "checkpoint directory (random init when omitted)");
  bench->add_option("--data", data, "dataset directory")->required();
  bench->add_option("--out", out, "result directory");

  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of every differentiable op");
  gradcheck->add_option("--tolerance", tolerance, "max relative error")->capture_default_str();
  gradcheck->add_option("--points", points, "random points per op")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report_error("config", e.what(), 2);
  }

  try {
    if (gen->parsed()) return cmd_gen(common.load(), out, tokens);
    if (train->parsed()) return cmd_train(common.load(), out);
    if (eval->parsed()) return cmd_eval(common.load(), pred, gt, out);
    if (infer->parsed()) return cmd_infer(common.load(), checkpoint, data, out, refine_cmd);
    if (bench->parsed()) return cmd_bench(common.load(), checkpoint, data, out);
    if (gradcheck->parsed()) return cmd_gradcheck(tolerance, points, 0);
  } catch (const gm::ConfigError& e) {
    return report_error(e.kind(), e.what(), 2);
  } catch (const gm::DataError& e) {
    return report_error(e.kind(), e.what(), 3);
  } catch (const gm::NumericError& e) {
    return report_error(e.kind(), e.what(), 4);
  } catch (const gm::Error& e) {
    return report_error(e.kind(), e.what(), 1);
  } catch (const gm::fs::filesystem_error& e) {
    return report_error("data", e.what(), 3);
  } catch (const std::exception& e) {
    return report_error("internal", e.what(), 1);
  }
  return 1;
}
