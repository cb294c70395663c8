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

#include "geomotion/gradsuite.hpp"

#include "geomotion/model.hpp"
#include "geomotion/synthscenes.hpp"

#include <chrono>
#include <functional>
#include <random>

namespace geomotion {

namespace {

using Store = ParamStore<double>;
// Computes the loss and accumulates gradients into the store.
using StoreLoss = std::function<double(Store&)>;

double check_store(Store& store, const StoreLoss& loss) {
  const Objective objective = [&](const Eigen::VectorXd& x, Eigen::VectorXd* grad) {
    store.unflatten(x);
    store.zero_grad();
    const double value = loss(store);
    if (grad) *grad = store.flatten_grad();
    return value;
  };
  return grad_check(objective, store.flatten());
}

void fill_uniform(Store& store, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  for (auto& [name, tensor] : store) {
    for (Index i = 0; i < tensor.size(); ++i) tensor.value[i] = u(rng);
  }
}

MatrixD random_matrix(Index rows, Index cols, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  MatrixD m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

double project(const MatrixD& y, const MatrixD& r) { return (y.array() * r.array()).sum(); }

MatrixD random_mask(Index rows, Index cols, std::mt19937_64& rng) {
  std::bernoulli_distribution coin(0.4);
  MatrixD m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = coin(rng) ? 1.0 : 0.0;
  return m;
}

FlowField random_flow(int width, int height, std::mt19937_64& rng) {
  std::uniform_real_distribution<float> u(-2.0f, 2.0f);
  FlowField flow(width, height);
  for (auto& value : flow.vectors) value = u(rng);
  return flow;
}

using Case = std::function<double(std::mt19937_64&)>;

std::vector<std::pair<std::string, Case>> registry() {
  std::vector<std::pair<std::string, Case>> cases;

  cases.emplace_back("linear", [](std::mt19937_64& rng) {
    Store s;
    s.add("x", {5, 6});
    s.add("w", {4, 6});
    s.add("b", {4});
    fill_uniform(s, rng);
    const MatrixD r = random_matrix(5, 4, rng);
    return check_store(s, [&](Store& p) {
      const MatrixD y = linear<double>(p.matrix("x"), p.matrix("w"), p.vec("b"));
      p.grad_matrix("x") += linear_backward<double>(p.matrix("x"), p.matrix("w"), r, p.grad_matrix("w"), p.grad_vec("b"));
      return project(y, r);
    });
  });

  cases.emplace_back("sigmoid", [](std::mt19937_64& rng) {
    Store s;
    s.add("x", {5, 6});
    fill_uniform(s, rng, -3.0, 3.0);
    const MatrixD r = random_matrix(5, 6, rng);
    return check_store(s, [&](Store& p) {
      const MatrixD y = sigmoid<double>(p.matrix("x"));
      p.grad_matrix("x") += sigmoid_backward<double>(y, r);
      return project(y, r);
    });
  });

  cases.emplace_back("softmax", [](std::mt19937_64& rng) {
    Store s;
    s.add("x", {5, 7});
    fill_uniform(s, rng, -2.0, 2.0);
    const MatrixD r = random_matrix(5, 7, rng);
    return check_store(s, [&](Store& p) {
      const MatrixD y = softmax_rows<double>(p.matrix("x"));
      p.grad_matrix("x") += softmax_rows_backward<double>(y, r);
      return project(y, r);
    });
  });

  cases.emplace_back("layer_norm", [](std::mt19937_64& rng) {
    Store s;
    s.add("x", {6, 8});
    s.add("gamma", {8});
    s.add("beta", {8});
    fill_uniform(s, rng);
    const MatrixD r = random_matrix(6, 8, rng);
    return check_store(s, [&](Store& p) {
      LayerNormCache<double> cache;
      const MatrixD y = layer_norm<double>(p.matrix("x"), p.vec("gamma"), p.vec("beta"), cache);
      p.grad_matrix("x") += layer_norm_backward<double>(cache, p.vec("gamma"), r, p.grad_vec("gamma"), p.grad_vec("beta"));
      return project(y, r);
    });
  });

  cases.emplace_back("attention", [](std::mt19937_64& rng) {
    Store s;
    s.add("x", {6, 8});
    s.add("qkv.w", {24, 8});
    s.add("qkv.b", {24});
    s.add("out.w", {8, 8});
    s.add("out.b", {8});
    fill_uniform(s, rng);
    const MatrixD r = random_matrix(6, 8, rng);
    return check_store(s, [&](Store& p) {
      AttentionCache<double> cache;
      const AttentionWeights<double> w{p.matrix("qkv.w"), p.vec("qkv.b"), p.matrix("out.w"), p.vec("out.b")};
      const MatrixD y = attention<double>(p.matrix("x"), w, 2, cache);
      AttentionGrads<double> g{p.grad_matrix("qkv.w"), p.grad_vec("qkv.b"), p.grad_matrix("out.w"), p.grad_vec("out.b")};
      p.grad_matrix("x") += attention_backward<double>(cache, w, 2, r, g);
      return project(y, r);
    });
  });

  cases.emplace_back("conv3x3", [](std::mt19937_64& rng) {
    Store s;
    s.add("x", {2, 5 * 6});
    s.add("w", {3, 2 * 9});
    s.add("b", {3});
    fill_uniform(s, rng);
    const MatrixD r = random_matrix(3, 5 * 6, rng);
    return check_store(s, [&](Store& p) {
      const MatrixD y = conv3x3<double>(p.matrix("x"), 5, 6, p.matrix("w"), p.vec("b"));
      p.grad_matrix("x") += conv3x3_backward<double>(p.matrix("x"), 5, 6, p.matrix("w"), r, p.grad_matrix("w"), p.grad_vec("b"));
      return project(y, r);
    });
  });

  cases.emplace_back("bilinear_resize", [](std::mt19937_64& rng) {
    Store s;
    s.add("x", {2, 6 * 8});
    fill_uniform(s, rng);
    const MatrixD down = random_matrix(2, 3 * 4, rng);
    const MatrixD up = random_matrix(2, 9 * 11, rng);
    return check_store(s, [&](Store& p) {
      const MatrixD a = bilinear_resize<double>(p.matrix("x"), 6, 8, 3, 4);
      const MatrixD b = bilinear_resize<double>(p.matrix("x"), 6, 8, 9, 11);
      p.grad_matrix("x") += bilinear_resize_backward<double>(down, 6, 8, 3, 4);
      p.grad_matrix("x") += bilinear_resize_backward<double>(up, 6, 8, 9, 11);
      return project(a, down) + project(b, up);
    });
  });

  cases.emplace_back("focal", [](std::mt19937_64& rng) {
    Store s;
    s.add("p", {24});
    fill_uniform(s, rng, 0.05, 0.95);
    const MatrixD gt = random_mask(24, 1, rng);
    return check_store(s, [&](Store& p) {
      Vector<double> grad;
      const double value = focal_loss<double>(p.vec("p"), gt, 0.25, 2.0, 1e-7, &grad);
      p.grad_vec("p") += grad;
      return value;
    });
  });

  cases.emplace_back("dice", [](std::mt19937_64& rng) {
    Store s;
    s.add("p", {24});
    fill_uniform(s, rng, 0.05, 0.95);
    const MatrixD gt = random_mask(24, 1, rng);
    return check_store(s, [&](Store& p) {
      Vector<double> grad;
      const double value = dice_loss<double>(p.vec("p"), gt, 1.0, &grad);
      p.grad_vec("p") += grad;
      return value;
    });
  });

  cases.emplace_back("total_loss", [](std::mt19937_64& rng) {
    Store s;
    s.add("p", {3, 16});
    fill_uniform(s, rng, 0.05, 0.95);
    const MatrixD gt = random_mask(3, 16, rng);
    return check_store(s, [&](Store& p) {
      MatrixD grad;
      const double value = total_loss<double>(p.matrix("p"), gt, LossConfig{}, &grad);
      p.grad_matrix("p") += grad;
      return value;
    });
  });

  cases.emplace_back("fusion.linears", [](std::mt19937_64& rng) {
    const Index tokens = 6, channels = 2, flow_width = 2, cam_width = 3;
    Store s;
    init_fusion(s, channels, flow_width, cam_width, rng);
    fill_uniform(s, rng);
    const MatrixD low = random_matrix(tokens, 2 * channels, rng);
    const MatrixD high = random_matrix(tokens, 2 * channels, rng);
    const MatrixD cam = random_matrix(tokens, cam_width, rng);
    const MatrixD r = random_matrix(tokens, 2 * channels, rng);
    // Flow tokens are treated as an input so their gradient is checked too.
    s.add("flow", {tokens, flow_width});
    fill_uniform(s, rng);
    return check_store(s, [&](Store& p) {
      FusionCache<double> cache;
      const MatrixD fused = aggregate<double>(low, high, p.matrix("flow"), cam, p, &cache);
      p.grad_matrix("flow") += aggregate_backward<double>(cache, p, r);
      return project(fused, r);
    });
  });

  cases.emplace_back("flow_cnn", [](std::mt19937_64& rng) {
    const TokenGrid grid = TokenGrid::for_image(8, 8, 4);
    Store s;
    init_flow_encoder(s, 4, rng);
    fill_uniform(s, rng, -0.5, 0.5);
    const std::vector<FlowField> flows{random_flow(8, 8, rng), random_flow(8, 8, rng)};
    const MatrixD r = random_matrix(2 * grid.tokens(), 4, rng);
    return check_store(s, [&](Store& p) {
      FlowEncoderCache<double> cache;
      const MatrixD tokens = encode_flow<double>(flows, p, grid, &cache);
      encode_flow_backward<double>(cache, p, grid, r);
      return project(tokens, r);
    });
  });

  cases.emplace_back("attention_block", [](std::mt19937_64& rng) {
    const TokenGrid grid = TokenGrid::for_image(8, 8, 4);
    const DecoderConfig cfg{8, 2, 1, 4, 4, 2, true};
    Store s;
    init_decoder(s, cfg, rng);
    fill_uniform(s, rng, -0.5, 0.5);
    const MatrixD fused = random_matrix(2 * grid.tokens(), 8, rng);
    const MatrixD r = random_matrix(2 * grid.tokens(), 16, rng);
    return check_store(s, [&](Store& p) {
      DecoderCache<double> cache;
      const MatrixD logits = decode<double>(fused, 2, grid, p, cfg, &cache);
      decode_backward<double>(cache, p, cfg, grid, r);
      return project(logits, r);
    });
  });

  cases.emplace_back("decoder.mask_loss", [](std::mt19937_64& rng) {
    const TokenGrid grid = TokenGrid::for_image(8, 8, 4);
    const DecoderConfig cfg{8, 2, 2, 4, 4, 2, true};
    Store s;
    init_decoder(s, cfg, rng);
    fill_uniform(s, rng, -0.5, 0.5);
    const MatrixD fused = random_matrix(2 * grid.tokens(), 8, rng);
    const MatrixD gt = random_mask(2, 64, rng);
    return check_store(s, [&](Store& p) {
      DecoderCache<double> cache;
      const MatrixD logits = decode<double>(fused, 2, grid, p, cfg, &cache);
      const MatrixD probs = to_mask<double>(logits, 2, grid);
      MatrixD dprobs;
      const double value = total_loss<double>(probs, gt, LossConfig{}, &dprobs);
      decode_backward<double>(cache, p, cfg, grid, to_mask_backward<double>(probs, dprobs, grid));
      return value;
    });
  });

  cases.emplace_back("end_to_end", [](std::mt19937_64& rng) {
    SceneConfig scene;
    scene.height = scene.width = 16;
    scene.frames = 2;
    scene.object_count = 1;
    scene.min_size = 5;
    scene.max_size = 8;
    scene.camera_range = 1.0;
    const FrameSequence seq = generate_sequence(scene, rng()).sequence;
    ModelConfig cfg;
    cfg.image_size = 16;
    cfg.patch = 8;
    cfg.channels = 4;
    cfg.flow_width = 4;
    cfg.cam_width = 4;
    cfg.heads = 2;
    cfg.max_frames = 2;
    const GeometryBundle bundle = provide(seq, ProviderSpec{}, cfg.grid(), cfg.channels, cfg.cam_width);
    MotionModel<double> model(cfg, rng());
    const MatrixD gt = mask_matrix<double>(seq.masks);
    const Objective objective = [&](const Eigen::VectorXd& x, Eigen::VectorXd* grad) {
      model.params().unflatten(x);
      const double value = model.loss_and_grad(bundle, seq.flows, gt, LossConfig{});
      if (grad) *grad = model.params().flatten_grad();
      return value;
    };
    return grad_check(objective, model.params().flatten());
  });

  return cases;
}

}  // namespace

std::vector<GradCheckRow> run_gradcheck_suite(double tolerance, int points, std::uint64_t seed) {
  if (points < 1) throw ConfigError("gradcheck needs at least one point per op");
  std::vector<GradCheckRow> rows;
  for (const auto& [name, check] : registry()) {
    const auto start = std::chrono::steady_clock::now();
    GradCheckRow row;
    row.name = name;
    for (int i = 0; i < points; ++i) {
      std::mt19937_64 rng(seed * 1000003ull + static_cast<std::uint64_t>(i));
      row.error = std::max(row.error, check(rng));
    }
    row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    row.passed = row.error < tolerance;
    rows.push_back(row);
  }
  return rows;
}

}  // namespace geomotion
