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

// Video segmentation scores.
//
//   J    intersection over union of binary masks (1 when both are empty)
//   F    boundary F-measure with a pixel tolerance
//   J_M  mean over sequences of per-sequence mean J
//   F_M  mean over sequences of per-sequence mean F
//   J&F  (J_M + F_M) / 2
//   J_R  fraction of all frames with J strictly greater than 0.5

#pragma once

#include "geomotion/dataio.hpp"

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace geomotion {

double region_j(const BinaryMask& pred, const BinaryMask& gt);

/// Foreground pixels 4-adjacent to background or to the image border.
BinaryMask boundary_map(const BinaryMask& mask);

/// Dilation by a Euclidean disk of the given radius.
BinaryMask dilate_disk(const BinaryMask& mask, int radius);

double boundary_f(const BinaryMask& pred, const BinaryMask& gt, int tolerance);

/// ceil(0.0075 * image diagonal).
int default_boundary_tolerance(int width, int height);

/// Fraction of frames with J > 0.5.
double region_recall(std::span<const double> frame_j);

struct SequenceScore {
  std::string name;
  std::vector<std::string> frames;
  std::vector<double> j;
  std::vector<double> f;

  double j_mean() const;
  double f_mean() const;
};

struct SegReport {
  std::vector<SequenceScore> sequences;
  double j_m = 0.0;
  double f_m = 0.0;
  double j_and_f = 0.0;
  double j_r = 0.0;
  std::size_t frames = 0;
  std::optional<double> runtime_per_frame;
};

/// Scores one sequence frame by frame.
SequenceScore score_sequence(const std::string& name, const std::vector<BinaryMask>& preds,
                             const std::vector<BinaryMask>& gts, int tolerance = -1);

/// Dataset aggregation (sequence-mean J_M/F_M, frame-level J_R).
SegReport aggregate(std::vector<SequenceScore> sequences);

/// pred_dir/<seq>/<frame>.png holds 8-bit probability masks; gt_dir/<seq>/masks/<frame>.png
/// holds ground truth. Probabilities are binarized with p > threshold.
/// Missing prediction frames raise one DataError listing every missing file.
SegReport evaluate_dataset(const fs::path& pred_dir, const fs::path& gt_dir, double threshold = 0.5,
                           int tolerance = -1);

json report_to_json(const SegReport& report);
void write_report_csv(const SegReport& report, const fs::path& destination);

/// Median over repetitions of run()'s wall time divided by `frames`.
double median_seconds_per_frame(const std::function<void()>& run, std::size_t frames, int repetitions);

}  // namespace geomotion
