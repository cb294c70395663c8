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

#include "geomotion/metrics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>

namespace geomotion {

namespace {

void require_same_shape(const BinaryMask& a, const BinaryMask& b, const char* op) {
  if (a.width != b.width || a.height != b.height) {
    throw ShapeError(std::string(op) + ": masks are " + std::to_string(a.width) + "x" + std::to_string(a.height) +
                     " and " + std::to_string(b.width) + "x" + std::to_string(b.height));
  }
}

double mean_of(const std::vector<double>& values) {
  if (values.empty()) return 0.0;
  return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

}  // namespace

double region_j(const BinaryMask& pred, const BinaryMask& gt) {
  require_same_shape(pred, gt, "region_j");
  std::size_t intersection = 0;
  std::size_t unite = 0;
  for (std::size_t i = 0; i < pred.values.size(); ++i) {
    const bool p = pred.values[i] != 0;
    const bool g = gt.values[i] != 0;
    intersection += p && g;
    unite += p || g;
  }
  return unite == 0 ? 1.0 : static_cast<double>(intersection) / static_cast<double>(unite);
}

BinaryMask boundary_map(const BinaryMask& mask) {
  BinaryMask boundary(mask.width, mask.height);
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      if (!mask.at(x, y)) continue;
      const bool edge = x == 0 || y == 0 || x == mask.width - 1 || y == mask.height - 1 || !mask.at(x - 1, y) ||
                        !mask.at(x + 1, y) || !mask.at(x, y - 1) || !mask.at(x, y + 1);
      boundary.at(x, y) = edge ? 1 : 0;
    }
  }
  return boundary;
}

BinaryMask dilate_disk(const BinaryMask& mask, int radius) {
  if (radius <= 0) return mask;
  std::vector<std::pair<int, int>> offsets;
  for (int dy = -radius; dy <= radius; ++dy) {
    for (int dx = -radius; dx <= radius; ++dx) {
      if (dx * dx + dy * dy <= radius * radius) offsets.emplace_back(dx, dy);
    }
  }
  BinaryMask out(mask.width, mask.height);
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      if (!mask.at(x, y)) continue;
      for (const auto& [dx, dy] : offsets) {
        const int nx = x + dx;
        const int ny = y + dy;
        if (nx >= 0 && ny >= 0 && nx < mask.width && ny < mask.height) out.at(nx, ny) = 1;
      }
    }
  }
  return out;
}

double boundary_f(const BinaryMask& pred, const BinaryMask& gt, int tolerance) {
  require_same_shape(pred, gt, "boundary_f");
  if (tolerance < 0) throw ConfigError("boundary tolerance must be non-negative");
  const BinaryMask pred_boundary = boundary_map(pred);
  const BinaryMask gt_boundary = boundary_map(gt);
  const std::size_t pred_count = pred_boundary.count();
  const std::size_t gt_count = gt_boundary.count();
  if (pred_count == 0 && gt_count == 0) return 1.0;
  if (pred_count == 0 || gt_count == 0) return 0.0;

  const BinaryMask pred_zone = dilate_disk(pred_boundary, tolerance);
  const BinaryMask gt_zone = dilate_disk(gt_boundary, tolerance);
  std::size_t pred_matched = 0;
  std::size_t gt_matched = 0;
  for (std::size_t i = 0; i < pred_boundary.values.size(); ++i) {
    pred_matched += pred_boundary.values[i] && gt_zone.values[i];
    gt_matched += gt_boundary.values[i] && pred_zone.values[i];
  }
  const double precision = static_cast<double>(pred_matched) / static_cast<double>(pred_count);
  const double recall = static_cast<double>(gt_matched) / static_cast<double>(gt_count);
  if (precision + recall == 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

int default_boundary_tolerance(int width, int height) {
  return static_cast<int>(std::ceil(0.0075 * std::hypot(static_cast<double>(width), static_cast<double>(height))));
}

double region_recall(std::span<const double> frame_j) {
  if (frame_j.empty()) return 0.0;
  const auto hits = std::count_if(frame_j.begin(), frame_j.end(), [](double j) { return j > 0.5; });
  return static_cast<double>(hits) / static_cast<double>(frame_j.size());
}

double SequenceScore::j_mean() const { return mean_of(j); }
double SequenceScore::f_mean() const { return mean_of(f); }

SequenceScore score_sequence(const std::string& name, const std::vector<BinaryMask>& preds,
                             const std::vector<BinaryMask>& gts, int tolerance) {
  if (preds.size() != gts.size()) throw DataError("sequence '" + name + "': prediction and ground-truth counts differ");
  SequenceScore score;
  score.name = name;
  for (std::size_t t = 0; t < preds.size(); ++t) {
    const int tol = tolerance >= 0 ? tolerance : default_boundary_tolerance(gts[t].width, gts[t].height);
    score.frames.push_back(frame_stem(t));
    score.j.push_back(region_j(preds[t], gts[t]));
    score.f.push_back(boundary_f(preds[t], gts[t], tol));
  }
  return score;
}

SegReport aggregate(std::vector<SequenceScore> sequences) {
  SegReport report;
  report.sequences = std::move(sequences);
  std::vector<double> all_j;
  std::vector<double> seq_j;
  std::vector<double> seq_f;
  for (const auto& s : report.sequences) {
    if (s.j.empty()) continue;
    seq_j.push_back(s.j_mean());
    seq_f.push_back(s.f_mean());
    all_j.insert(all_j.end(), s.j.begin(), s.j.end());
  }
  report.frames = all_j.size();
  report.j_m = mean_of(seq_j);
  report.f_m = mean_of(seq_f);
  report.j_and_f = 0.5 * (report.j_m + report.f_m);
  report.j_r = region_recall(all_j);
  return report;
}

SegReport evaluate_dataset(const fs::path& pred_dir, const fs::path& gt_dir, double threshold, int tolerance) {
  if (!fs::is_directory(gt_dir)) throw DataError("ground-truth directory " + gt_dir.string() + " does not exist");
  if (!fs::is_directory(pred_dir)) throw DataError("prediction directory " + pred_dir.string() + " does not exist");
  std::vector<fs::path> sequences;
  for (const auto& entry : fs::directory_iterator(gt_dir)) {
    if (entry.is_directory() && fs::is_directory(entry.path() / "masks")) sequences.push_back(entry.path());
  }
  std::sort(sequences.begin(), sequences.end());
  if (sequences.empty()) throw DataError(gt_dir.string() + " holds no sequences with masks/");

  std::vector<std::string> missing;
  std::vector<SequenceScore> scores;
  for (const auto& seq : sequences) {
    const std::string name = seq.filename().string();
    std::vector<fs::path> gt_files;
    for (const auto& entry : fs::directory_iterator(seq / "masks")) {
      if (entry.path().extension() == ".png") gt_files.push_back(entry.path());
    }
    std::sort(gt_files.begin(), gt_files.end());
    SequenceScore score;
    score.name = name;
    for (const auto& gt_file : gt_files) {
      const fs::path pred_file = pred_dir / name / gt_file.filename();
      if (!fs::exists(pred_file)) {
        missing.push_back(name + "/" + gt_file.filename().string());
        continue;
      }
      const BinaryMask gt = read_mask_png(gt_file);
      const GrayImage prob = read_gray_png(pred_file);
      if (prob.width != gt.width || prob.height != gt.height) {
        throw ShapeError(pred_file.string() + " does not match its ground-truth size");
      }
      BinaryMask pred(prob.width, prob.height);
      for (std::size_t i = 0; i < prob.pixels.size(); ++i) pred.values[i] = prob.pixels[i] / 255.0 > threshold ? 1 : 0;
      const int tol = tolerance >= 0 ? tolerance : default_boundary_tolerance(gt.width, gt.height);
      score.frames.push_back(gt_file.stem().string());
      score.j.push_back(region_j(pred, gt));
      score.f.push_back(boundary_f(pred, gt, tol));
    }
    scores.push_back(std::move(score));
  }
  if (!missing.empty()) {
    std::string message = std::to_string(missing.size()) + " prediction frame(s) missing:";
    for (const auto& m : missing) message += "\n  " + m;
    throw DataError(message);
  }
  return aggregate(std::move(scores));
}

json report_to_json(const SegReport& report) {
  json sequences = json::array();
  for (const auto& s : report.sequences) {
    sequences.push_back({{"name", s.name}, {"frames", s.j.size()}, {"J", s.j_mean()}, {"F", s.f_mean()},
                         {"J_per_frame", s.j}, {"F_per_frame", s.f}});
  }
  json doc = {{"J_M", report.j_m}, {"F_M", report.f_m}, {"J&F", report.j_and_f}, {"J_R", report.j_r},
              {"frames", report.frames}, {"sequences", sequences}};
  if (report.runtime_per_frame) doc["runtime_per_frame_s"] = *report.runtime_per_frame;
  return doc;
}

void write_report_csv(const SegReport& report, const fs::path& destination) {
  std::ofstream out(destination, std::ios::trunc);
  if (!out) throw DataError("cannot write " + destination.string());
  out << "sequence,frame,J,F\n";
  for (const auto& s : report.sequences) {
    for (std::size_t t = 0; t < s.j.size(); ++t) {
      out << s.name << ',' << (t < s.frames.size() ? s.frames[t] : frame_stem(t)) << ',' << s.j[t] << ',' << s.f[t]
          << '\n';
    }
  }
  out << "ALL,J_M," << report.j_m << ",\n";
  out << "ALL,F_M,," << report.f_m << '\n';
  out << "ALL,J&F," << report.j_and_f << ",\n";
  out << "ALL,J_R," << report.j_r << ",\n";
}

double median_seconds_per_frame(const std::function<void()>& run, std::size_t frames, int repetitions) {
  if (repetitions < 1) throw ConfigError("repetitions must be at least 1");
  if (frames == 0) throw ConfigError("cannot time an empty sequence");
  std::vector<double> samples;
  for (int r = 0; r < repetitions; ++r) {
    const auto start = std::chrono::steady_clock::now();
    run();
    const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;
    samples.push_back(elapsed.count() / static_cast<double>(frames));
  }
  std::sort(samples.begin(), samples.end());
  const std::size_t mid = samples.size() / 2;
  return samples.size() % 2 ? samples[mid] : 0.5 * (samples[mid - 1] + samples[mid]);
}

}  // namespace geomotion
