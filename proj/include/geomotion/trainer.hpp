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

#pragma once

#include "geomotion/metrics.hpp"
#include "geomotion/model.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace geomotion {

/// k frame indices spaced round(L / k) apart starting at `phase`, wrapping
/// around the sequence end so that exactly k indices are returned.
std::vector<std::size_t> sample_frames(std::size_t length, std::size_t count, std::size_t phase = 0);

struct TrainConfig {
  ModelConfig model;
  LossConfig loss;
  double learning_rate = 2e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  double clip_norm = 1.0;  // global gradient-norm clip; <= 0 disables
  int epochs = 60;
  int max_steps = 0;       // 0: bounded by epochs only
  std::uint64_t seed = 0;  // parameter init, data order and frame phase
  int eval_every = 0;      // held-out evaluation period in steps; 0 disables
  double target_jm = 0.0;  // record (and optionally stop at) the first eval reaching this J_M
  bool stop_at_target = false;
  double threshold = 0.5;
  bool deterministic = true;
  fs::path output_dir;      // checkpoints and loss CSV when non-empty
  fs::path init_checkpoint;  // parameters loaded before training when non-empty

  void validate() const;
};

json train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const json& doc);

/// Sequences with their frozen provider tokens computed once up front.
struct TrainingSet {
  std::vector<FrameSequence> sequences;
  std::vector<GeometryBundle> bundles;

  std::size_t size() const { return sequences.size(); }
};

TrainingSet prepare_training_set(std::vector<FrameSequence> sequences, const ProviderSpec& provider,
                                 const ModelConfig& model);

struct EvalPoint {
  int step = 0;
  double j_m = 0.0;
  double f_m = 0.0;
  double j_r = 0.0;
};

struct TrainReport {
  std::vector<double> losses;        // one per optimizer step
  std::vector<double> step_seconds;  // wall time per step
  std::vector<EvalPoint> evals;
  int steps = 0;
  int epochs = 0;
  int steps_to_target = -1;  // first eval step with J_M >= target, -1 if never
  double wall_seconds = 0.0;
  std::optional<SegReport> heldout;
  fs::path checkpoint;
};

void write_loss_csv(const TrainReport& report, const fs::path& destination);

/// Adam with bias correction over a ParamStore.
class Adam {
 public:
  Adam() = default;
  Adam(double lr, double beta1, double beta2, double epsilon) : lr_(lr), beta1_(beta1), beta2_(beta2), epsilon_(epsilon) {}

  void step(ParamStore<float>& params);
  long steps() const { return t_; }

  // Moments in parameter order, for checkpointing.
  std::vector<Vector<float>>& first_moments() { return m_; }
  std::vector<Vector<float>>& second_moments() { return v_; }
  const std::vector<Vector<float>>& first_moments() const { return m_; }
  const std::vector<Vector<float>>& second_moments() const { return v_; }
  void set_steps(long t) { t_ = t; }

 private:
  double lr_ = 1e-3;
  double beta1_ = 0.9;
  double beta2_ = 0.999;
  double epsilon_ = 1e-8;
  long t_ = 0;
  std::vector<Vector<float>> m_;
  std::vector<Vector<float>> v_;
};

/// Scales gradients so their global L2 norm is at most max_norm. Returns the pre-clip norm.
double clip_gradients(ParamStore<float>& params, double max_norm);

/// Per-frame probabilities [L, H*W] for a whole sequence. Frames are grouped
/// with the training stride and decoded in groups of at most max_frames.
MatrixF predict_sequence(const MotionModel<float>& model, const FrameSequence& sequence, const GeometryBundle& bundle);

SegReport evaluate_model(const MotionModel<float>& model, const TrainingSet& data, double threshold = 0.5,
                         bool parallel = false);

/// Copies every checkpoint parameter into the model (shapes must match;
/// parameters the checkpoint lacks keep their values). Returns the count loaded.
std::size_t load_parameters(MotionModel<float>& model, const Checkpoint& checkpoint);

/// Model checkpoint (parameters only) for inference tools.
Checkpoint model_checkpoint(const MotionModel<float>& model);
MotionModel<float> model_from_checkpoint(const Checkpoint& checkpoint);

class Trainer {
 public:
  Trainer(TrainConfig cfg, const TrainingSet& train, const TrainingSet* heldout = nullptr);

  MotionModel<float>& model() { return model_; }
  const TrainConfig& config() const { return cfg_; }

  /// Full training state: parameters, Adam moments, step/epoch and loss history.
  Checkpoint checkpoint() const;
  void restore(const Checkpoint& checkpoint);

  /// Trains until the epoch budget, max_steps or the target stop condition.
  /// Writes an epoch checkpoint and the loss CSV when output_dir is set.
  TrainReport run();

 private:
  void train_epoch(TrainReport& report, bool& stop);
  bool evaluate_into(TrainReport& report);

  TrainConfig cfg_;
  const TrainingSet& train_;
  const TrainingSet* heldout_;
  MotionModel<float> model_;
  Adam adam_;
  int epoch_ = 0;
  std::vector<double> losses_;
  std::vector<double> step_seconds_;
};

struct InitComparison {
  TrainReport random;
  std::optional<TrainReport> pretrained;
};

/// Trains from random init and, when `checkpoint` is non-empty, from the
/// checkpoint's parameters with identical seeds and data order.
InitComparison init_experiment(const TrainConfig& cfg, const TrainingSet& train, const TrainingSet& heldout,
                               const fs::path& checkpoint);

}  // namespace geomotion
