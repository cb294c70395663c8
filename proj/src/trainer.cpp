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

#include "geomotion/trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <future>

namespace geomotion {

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

std::size_t stride_for(std::size_t length, std::size_t count) {
  if (count == 0) return 1;
  const auto step = static_cast<std::size_t>(std::lround(static_cast<double>(length) / static_cast<double>(count)));
  return std::max<std::size_t>(1, step);
}

// Portable Fisher-Yates (std::shuffle's draw sequence is unspecified).
void shuffle(std::vector<std::size_t>& items, std::mt19937_64& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(items[i - 1], items[j]);
  }
}

std::vector<FlowField> pick(const std::vector<FlowField>& flows, const std::vector<std::size_t>& idx) {
  std::vector<FlowField> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(flows[i]);
  return out;
}

std::vector<BinaryMask> pick(const std::vector<BinaryMask>& masks, const std::vector<std::size_t>& idx) {
  std::vector<BinaryMask> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(masks[i]);
  return out;
}

constexpr const char* kParamPrefix = "param/";
constexpr const char* kFirstMomentPrefix = "adam.m/";
constexpr const char* kSecondMomentPrefix = "adam.v/";

TensorFile vector_file(const Vector<float>& values, const std::vector<Index>& shape) {
  TensorFile file;
  for (Index extent : shape) file.shape.push_back(static_cast<std::uint64_t>(extent));
  file.data.assign(values.data(), values.data() + values.size());
  return file;
}

void vector_from_file(Vector<float>& values, const TensorFile& file, const std::string& name) {
  if (static_cast<Index>(file.data.size()) != values.size()) {
    throw ShapeError("checkpoint tensor '" + name + "' has " + std::to_string(file.data.size()) + " values, expected " +
                     std::to_string(values.size()));
  }
  values = Eigen::Map<const Vector<float>>(file.data.data(), values.size());
}

}  // namespace

std::vector<std::size_t> sample_frames(std::size_t length, std::size_t count, std::size_t phase) {
  if (length == 0) throw DataError("cannot sample frames from an empty sequence");
  const std::size_t step = stride_for(length, count);
  std::vector<std::size_t> out(count);
  for (std::size_t i = 0; i < count; ++i) out[i] = (phase + i * step) % length;
  return out;
}

void TrainConfig::validate() const {
  model.validate();
  loss.validate();
  if (!(learning_rate > 0)) throw ConfigError("learning_rate must be positive");
  if (beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1) throw ConfigError("Adam betas must lie in [0, 1)");
  if (!(adam_epsilon > 0)) throw ConfigError("adam_epsilon must be positive");
  if (epochs < 0) throw ConfigError("epochs must be non-negative");
  if (max_steps < 0) throw ConfigError("max_steps must be non-negative");
  if (eval_every < 0) throw ConfigError("eval_every must be non-negative");
  if (threshold < 0 || threshold >= 1) throw ConfigError("threshold must lie in [0, 1)");
}

json train_config_to_json(const TrainConfig& cfg) {
  return {{"model", model_config_to_json(cfg.model)},
          {"loss",
           {{"focal_weight", cfg.loss.focal_weight},
            {"dice_weight", cfg.loss.dice_weight},
            {"alpha", cfg.loss.alpha},
            {"gamma", cfg.loss.gamma},
            {"dice_smooth", cfg.loss.dice_smooth},
            {"clamp", cfg.loss.clamp}}},
          {"learning_rate", cfg.learning_rate},
          {"beta1", cfg.beta1},
          {"beta2", cfg.beta2},
          {"adam_epsilon", cfg.adam_epsilon},
          {"clip_norm", cfg.clip_norm},
          {"epochs", cfg.epochs},
          {"max_steps", cfg.max_steps},
          {"seed", cfg.seed},
          {"eval_every", cfg.eval_every},
          {"target_jm", cfg.target_jm},
          {"stop_at_target", cfg.stop_at_target},
          {"threshold", cfg.threshold},
          {"deterministic", cfg.deterministic},
          {"output_dir", cfg.output_dir.string()},
          {"init_checkpoint", cfg.init_checkpoint.string()}};
}

TrainConfig train_config_from_json(const json& doc) {
  TrainConfig cfg;
  try {
    cfg.model = model_config_from_json(doc.at("model"));
    const auto& loss = doc.at("loss");
    cfg.loss.focal_weight = loss.at("focal_weight").get<double>();
    cfg.loss.dice_weight = loss.at("dice_weight").get<double>();
    cfg.loss.alpha = loss.at("alpha").get<double>();
    cfg.loss.gamma = loss.at("gamma").get<double>();
    cfg.loss.dice_smooth = loss.at("dice_smooth").get<double>();
    cfg.loss.clamp = loss.at("clamp").get<double>();
    cfg.learning_rate = doc.at("learning_rate").get<double>();
    cfg.beta1 = doc.at("beta1").get<double>();
    cfg.beta2 = doc.at("beta2").get<double>();
    cfg.adam_epsilon = doc.at("adam_epsilon").get<double>();
    cfg.clip_norm = doc.at("clip_norm").get<double>();
    cfg.epochs = doc.at("epochs").get<int>();
    cfg.max_steps = doc.at("max_steps").get<int>();
    cfg.seed = doc.at("seed").get<std::uint64_t>();
    cfg.eval_every = doc.at("eval_every").get<int>();
    cfg.target_jm = doc.at("target_jm").get<double>();
    cfg.stop_at_target = doc.at("stop_at_target").get<bool>();
    cfg.threshold = doc.at("threshold").get<double>();
    cfg.deterministic = doc.at("deterministic").get<bool>();
    cfg.output_dir = doc.at("output_dir").get<std::string>();
    cfg.init_checkpoint = doc.at("init_checkpoint").get<std::string>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed training config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

TrainingSet prepare_training_set(std::vector<FrameSequence> sequences, const ProviderSpec& provider,
                                 const ModelConfig& model) {
  TrainingSet set;
  const TokenGrid grid = model.grid();
  for (auto& seq : sequences) {
    seq.validate();
    if (seq.width() != model.image_size || seq.height() != model.image_size) {
      throw ShapeError("sequence '" + seq.name + "' is " + std::to_string(seq.width()) + "x" +
                       std::to_string(seq.height()) + ", model expects " + std::to_string(model.image_size));
    }
    set.bundles.push_back(provide(seq, provider, grid, model.channels, model.cam_width));
  }
  set.sequences = std::move(sequences);
  return set;
}

void write_loss_csv(const TrainReport& report, const fs::path& destination) {
  std::ofstream out(destination, std::ios::trunc);
  if (!out) throw DataError("cannot write " + destination.string());
  out.precision(9);
  out << "step,loss,seconds\n";
  for (std::size_t i = 0; i < report.losses.size(); ++i) {
    out << i + 1 << ',' << report.losses[i] << ',' << (i < report.step_seconds.size() ? report.step_seconds[i] : 0.0)
        << '\n';
  }
}

void Adam::step(ParamStore<float>& params) {
  if (m_.empty()) {
    for (const auto& [name, tensor] : params) {
      m_.push_back(Vector<float>::Zero(tensor.size()));
      v_.push_back(Vector<float>::Zero(tensor.size()));
    }
  }
  if (m_.size() != params.size()) throw ShapeError("optimizer state does not match the parameter set");
  ++t_;
  const float b1 = static_cast<float>(beta1_);
  const float b2 = static_cast<float>(beta2_);
  const float correction1 = static_cast<float>(1.0 - std::pow(beta1_, static_cast<double>(t_)));
  const float correction2 = static_cast<float>(1.0 - std::pow(beta2_, static_cast<double>(t_)));
  const float lr = static_cast<float>(lr_);
  const float eps = static_cast<float>(epsilon_);
  std::size_t i = 0;
  for (auto& [name, tensor] : params) {
    auto& m = m_[i];
    auto& v = v_[i];
    ++i;
    m = b1 * m + (1.0f - b1) * tensor.grad;
    v = b2 * v + (1.0f - b2) * tensor.grad.cwiseAbs2();
    tensor.value.array() -= lr * (m.array() / correction1) / ((v.array() / correction2).sqrt() + eps);
  }
}

double clip_gradients(ParamStore<float>& params, double max_norm) {
  double squared = 0.0;
  for (const auto& [name, tensor] : params) squared += tensor.grad.cast<double>().squaredNorm();
  const double norm = std::sqrt(squared);
  if (max_norm > 0 && norm > max_norm) {
    const float scale = static_cast<float>(max_norm / norm);
    for (auto& [name, tensor] : params) tensor.grad *= scale;
  }
  return norm;
}

MatrixF predict_sequence(const MotionModel<float>& model, const FrameSequence& sequence, const GeometryBundle& bundle) {
  const std::size_t length = sequence.size();
  const auto window = static_cast<std::size_t>(model.config().max_frames);
  const std::size_t step = stride_for(length, window);
  MatrixF out(static_cast<Index>(length), static_cast<Index>(sequence.width()) * sequence.height());
  for (std::size_t phase = 0; phase < step && phase < length; ++phase) {
    std::vector<std::size_t> group;
    for (std::size_t t = phase; t < length; t += step) group.push_back(t);
    for (std::size_t begin = 0; begin < group.size(); begin += window) {
      const std::vector<std::size_t> idx(group.begin() + static_cast<std::ptrdiff_t>(begin),
                                         group.begin() + static_cast<std::ptrdiff_t>(std::min(group.size(), begin + window)));
      const MatrixF probs = model.forward(bundle.select(idx), pick(sequence.flows, idx));
      for (std::size_t r = 0; r < idx.size(); ++r) out.row(static_cast<Index>(idx[r])) = probs.row(static_cast<Index>(r));
    }
  }
  return out;
}

SegReport evaluate_model(const MotionModel<float>& model, const TrainingSet& data, double threshold, bool parallel) {
  auto score_one = [&](std::size_t s) {
    const auto& seq = data.sequences[s];
    if (seq.masks.size() != seq.size()) throw DataError("sequence '" + seq.name + "' has no ground-truth masks");
    const MatrixF probs = predict_sequence(model, seq, data.bundles[s]);
    std::vector<BinaryMask> preds;
    for (Index t = 0; t < probs.rows(); ++t) preds.push_back(binarize(probs.row(t), seq.width(), seq.height(), threshold));
    return score_sequence(seq.name, preds, seq.masks);
  };
  std::vector<SequenceScore> scores;
  if (parallel) {
    std::vector<std::future<SequenceScore>> jobs;
    for (std::size_t s = 0; s < data.size(); ++s) jobs.push_back(std::async(std::launch::async, score_one, s));
    for (auto& job : jobs) scores.push_back(job.get());
  } else {
    for (std::size_t s = 0; s < data.size(); ++s) scores.push_back(score_one(s));
  }
  return aggregate(std::move(scores));
}

std::size_t load_parameters(MotionModel<float>& model, const Checkpoint& checkpoint) {
  std::size_t loaded = 0;
  for (const auto& [name, file] : checkpoint.tensors) {
    if (!name.starts_with(kParamPrefix)) continue;
    const std::string param = name.substr(std::char_traits<char>::length(kParamPrefix));
    if (!model.params().contains(param)) continue;
    assign_from(model.params().at(param), file, param);
    ++loaded;
  }
  if (loaded == 0) throw DataError("checkpoint holds no parameters of this model");
  return loaded;
}

Checkpoint model_checkpoint(const MotionModel<float>& model) {
  Checkpoint checkpoint;
  checkpoint.meta = {{"kind", "model"}, {"model", model_config_to_json(model.config())}};
  for (const auto& [name, tensor] : model.params()) {
    checkpoint.tensors.emplace_back(kParamPrefix + name, to_tensor_file(tensor));
  }
  return checkpoint;
}

MotionModel<float> model_from_checkpoint(const Checkpoint& checkpoint) {
  if (!checkpoint.meta.contains("model")) throw FormatError("checkpoint lacks a model configuration");
  MotionModel<float> model(model_config_from_json(checkpoint.meta.at("model")), 0);
  const std::size_t loaded = load_parameters(model, checkpoint);
  if (loaded != model.params().size()) {
    throw DataError("checkpoint holds " + std::to_string(loaded) + " of " + std::to_string(model.params().size()) +
                    " model parameters");
  }
  return model;
}

Trainer::Trainer(TrainConfig cfg, const TrainingSet& train, const TrainingSet* heldout)
    : cfg_(std::move(cfg)), train_(train), heldout_(heldout), model_(cfg_.model, cfg_.seed),
      adam_(cfg_.learning_rate, cfg_.beta1, cfg_.beta2, cfg_.adam_epsilon) {
  cfg_.validate();
  if (train_.size() == 0) throw DataError("training set is empty");
  if (!cfg_.init_checkpoint.empty()) load_parameters(model_, load_checkpoint(cfg_.init_checkpoint));
}

Checkpoint Trainer::checkpoint() const {
  Checkpoint checkpoint = model_checkpoint(model_);
  checkpoint.meta["kind"] = "training";
  checkpoint.meta["epoch"] = epoch_;
  checkpoint.meta["adam_steps"] = adam_.steps();
  checkpoint.meta["losses"] = losses_;
  checkpoint.meta["step_seconds"] = step_seconds_;
  checkpoint.meta["train"] = train_config_to_json(cfg_);
  const Adam& adam = adam_;
  if (!adam.first_moments().empty()) {
    std::size_t i = 0;
    for (const auto& [name, tensor] : model_.params()) {
      checkpoint.tensors.emplace_back(kFirstMomentPrefix + name, vector_file(adam.first_moments()[i], tensor.shape));
      checkpoint.tensors.emplace_back(kSecondMomentPrefix + name, vector_file(adam.second_moments()[i], tensor.shape));
      ++i;
    }
  }
  return checkpoint;
}

void Trainer::restore(const Checkpoint& checkpoint) {
  if (checkpoint.meta.value("kind", "") != "training") throw FormatError("not a training checkpoint");
  const std::size_t loaded = load_parameters(model_, checkpoint);
  if (loaded != model_.params().size()) throw ShapeError("training checkpoint does not cover every parameter");
  try {
    epoch_ = checkpoint.meta.at("epoch").get<int>();
    losses_ = checkpoint.meta.at("losses").get<std::vector<double>>();
    step_seconds_ = checkpoint.meta.at("step_seconds").get<std::vector<double>>();
    adam_ = Adam(cfg_.learning_rate, cfg_.beta1, cfg_.beta2, cfg_.adam_epsilon);
    adam_.set_steps(checkpoint.meta.at("adam_steps").get<long>());
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed training checkpoint: ") + e.what());
  }
  if (adam_.steps() > 0) {
    for (const auto& [name, tensor] : model_.params()) {
      const TensorFile* m = checkpoint.find(kFirstMomentPrefix + name);
      const TensorFile* v = checkpoint.find(kSecondMomentPrefix + name);
      if (!m || !v) throw FormatError("training checkpoint lacks optimizer state for '" + name + "'");
      adam_.first_moments().push_back(Vector<float>::Zero(tensor.size()));
      adam_.second_moments().push_back(Vector<float>::Zero(tensor.size()));
      vector_from_file(adam_.first_moments().back(), *m, name);
      vector_from_file(adam_.second_moments().back(), *v, name);
    }
  }
}

bool Trainer::evaluate_into(TrainReport& report) {
  if (!heldout_ || heldout_->size() == 0) return false;
  const SegReport seg = evaluate_model(model_, *heldout_, cfg_.threshold, !cfg_.deterministic);
  const int step = static_cast<int>(losses_.size());
  report.evals.push_back({step, seg.j_m, seg.f_m, seg.j_r});
  report.heldout = seg;
  if (cfg_.target_jm > 0 && report.steps_to_target < 0 && seg.j_m >= cfg_.target_jm) {
    report.steps_to_target = step;
    return cfg_.stop_at_target;
  }
  return false;
}

void Trainer::train_epoch(TrainReport& report, bool& stop) {
  std::mt19937_64 rng(splitmix(cfg_.seed ^ splitmix(static_cast<std::uint64_t>(epoch_) + 1)));
  std::vector<std::size_t> order(train_.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  shuffle(order, rng);
  const auto window = static_cast<std::size_t>(cfg_.model.max_frames);
  for (std::size_t s : order) {
    if (cfg_.max_steps > 0 && static_cast<int>(losses_.size()) >= cfg_.max_steps) {
      stop = true;
      return;
    }
    const auto& seq = train_.sequences[s];
    if (seq.masks.size() != seq.size()) throw DataError("training sequence '" + seq.name + "' has no masks");
    const std::size_t phase = static_cast<std::size_t>(rng() % stride_for(seq.size(), window));
    const auto idx = sample_frames(seq.size(), window, phase);

    const auto start = std::chrono::steady_clock::now();
    const MatrixF gt = mask_matrix<float>(pick(seq.masks, idx));
    const float loss = model_.loss_and_grad(train_.bundles[s].select(idx), pick(seq.flows, idx), gt, cfg_.loss);
    if (!std::isfinite(loss)) {
      throw NumericError("training diverged at step " + std::to_string(losses_.size() + 1) + " (loss is not finite)");
    }
    clip_gradients(model_.params(), cfg_.clip_norm);
    adam_.step(model_.params());
    const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;
    losses_.push_back(loss);
    step_seconds_.push_back(elapsed.count());

    if (cfg_.eval_every > 0 && static_cast<int>(losses_.size()) % cfg_.eval_every == 0 && evaluate_into(report)) {
      stop = true;
      return;
    }
  }
}

TrainReport Trainer::run() {
  const auto start = std::chrono::steady_clock::now();
  TrainReport report;
  if (!cfg_.output_dir.empty()) fs::create_directories(cfg_.output_dir);
  bool stop = cfg_.eval_every > 0 && evaluate_into(report);
  while (!stop && epoch_ < cfg_.epochs) {
    train_epoch(report, stop);
    if (stop && cfg_.max_steps > 0 && static_cast<int>(losses_.size()) >= cfg_.max_steps) {
      // Budget reached before the epoch finished; the partial epoch is not counted.
      break;
    }
    ++epoch_;
    if (!cfg_.output_dir.empty()) save_checkpoint(checkpoint(), cfg_.output_dir / "checkpoint");
  }
  if (heldout_ && heldout_->size() > 0 &&
      (report.evals.empty() || report.evals.back().step != static_cast<int>(losses_.size()))) {
    evaluate_into(report);
  }
  report.losses = losses_;
  report.step_seconds = step_seconds_;
  report.steps = static_cast<int>(losses_.size());
  report.epochs = epoch_;
  const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;
  report.wall_seconds = elapsed.count();
  if (!cfg_.output_dir.empty()) {
    report.checkpoint = cfg_.output_dir / "checkpoint";
    save_checkpoint(checkpoint(), report.checkpoint);
    write_loss_csv(report, cfg_.output_dir / "loss.csv");
  }
  return report;
}

InitComparison init_experiment(const TrainConfig& cfg, const TrainingSet& train, const TrainingSet& heldout,
                               const fs::path& checkpoint) {
  InitComparison result;
  TrainConfig random_cfg = cfg;
  random_cfg.init_checkpoint.clear();
  if (!cfg.output_dir.empty()) random_cfg.output_dir = cfg.output_dir / "random";
  result.random = Trainer(random_cfg, train, &heldout).run();
  if (!checkpoint.empty()) {
    TrainConfig init_cfg = cfg;
    init_cfg.init_checkpoint = checkpoint;
    if (!cfg.output_dir.empty()) init_cfg.output_dir = cfg.output_dir / "pretrained";
    result.pretrained = Trainer(init_cfg, train, &heldout).run();
  }
  return result;
}

}  // namespace geomotion
