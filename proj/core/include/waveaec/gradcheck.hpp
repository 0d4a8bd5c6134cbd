#pragma once

#include <functional>
#include <random>
#include <string>
#include <vector>

#include "waveaec/losses.hpp"
#include "waveaec/model.hpp"
#include "waveaec/tensor.hpp"

// Central finite-difference verification of the reverse-mode gradients. All
// checks run in double; the production float build shares the same templated
// code paths.

namespace waveaec {

// Rebuilds the loss via `build` (which must read the current values of the
// `wrt` tensors), compares analytic gradients against central differences,
// and returns the worst relative error. coords_per_tensor < 0 checks every
// coordinate; otherwise a deterministic random subset per tensor.
inline double gradcheck_max_rel_err(
    const std::function<Tensor<double>()>& build,
    const std::vector<Tensor<double>>& wrt, int coords_per_tensor = -1,
    double h = 1e-5, uint64_t seed = 7) {
  for (const auto& t : wrt) t->requires_grad = true;
  auto loss = build();
  if (loss->numel() != 1)
    throw ShapeError("gradcheck: loss must be scalar");
  for (const auto& t : wrt) {
    t->ensure_grad();
    t->zero_grad();
  }
  backward(loss);
  std::vector<std::vector<double>> analytic;
  analytic.reserve(wrt.size());
  for (const auto& t : wrt) {
    t->ensure_grad();
    analytic.push_back(t->g);
  }

  std::mt19937_64 rng(seed);
  double worst = 0.0;
  for (std::size_t i = 0; i < wrt.size(); ++i) {
    const auto& t = wrt[i];
    std::vector<std::size_t> coords;
    if (coords_per_tensor < 0 ||
        std::size_t(coords_per_tensor) >= t->numel()) {
      coords.resize(t->numel());
      for (std::size_t j = 0; j < t->numel(); ++j) coords[j] = j;
    } else {
      for (int c = 0; c < coords_per_tensor; ++c)
        coords.push_back(rng() % t->numel());
    }
    for (std::size_t j : coords) {
      const double orig = t->v[j];
      t->v[j] = orig + h;
      const double lp = build()->v[0];
      t->v[j] = orig - h;
      const double lm = build()->v[0];
      t->v[j] = orig;
      const double numeric = (lp - lm) / (2.0 * h);
      const double a = analytic[i][j];
      const double denom =
          std::max({1.0, std::abs(a), std::abs(numeric)});
      worst = std::max(worst, std::abs(a - numeric) / denom);
    }
  }
  return worst;
}

struct GradCase {
  std::string name;
  double rel_err = 0.0;
};

namespace detail {

inline Tensor<double> randn(std::vector<int> shape, std::mt19937_64& rng,
                            double scale = 1.0) {
  std::normal_distribution<double> dist(0.0, scale);
  auto t = make_tensor<double>(std::move(shape));
  for (double& v : t->v) v = dist(rng);
  return t;
}

}  // namespace detail

// One finite-difference case per differentiable primitive, plus composite
// checks (logmel frontend, SISNR, attention, end-to-end total loss on a
// reduced geometry). Thresholding is the caller's job.
inline std::vector<GradCase> gradient_suite(bool include_end_to_end = true) {
  using detail::randn;
  std::mt19937_64 rng(20240901);
  std::vector<GradCase> out;
  auto check = [&](const std::string& name,
                   const std::function<Tensor<double>()>& build,
                   const std::vector<Tensor<double>>& wrt,
                   int coords = -1, double h = 1e-5) {
    out.push_back({name, gradcheck_max_rel_err(build, wrt, coords, h)});
  };

  {
    auto a = randn({3, 4}, rng), b = randn({3, 4}, rng);
    check("add", [&] { return sum(mul(add(a, b), add(a, b))); }, {a, b});
    check("sub", [&] { return sum(mul(sub(a, b), sub(a, b))); }, {a, b});
    check("mul", [&] { return sum(mul(a, b)); }, {a, b});
  }
  {
    auto a = randn({3, 4}, rng);
    auto b = randn({3, 4}, rng);
    for (double& v : b->v) v = 1.5 + std::abs(v);  // away from zero
    check("div", [&] { return sum(div(a, b)); }, {a, b});
  }
  {
    auto a = randn({5}, rng);
    check("scale", [&] { return sum(scale(a, -2.5)); }, {a});
    check("add_scalar", [&] { return sum(mul(add_scalar(a, 0.7), a)); }, {a});
    check("sigmoid", [&] { return sum(sigmoid(a)); }, {a});
    check("tanh", [&] { return sum(tanh_t(a)); }, {a});
    check("swish", [&] { return sum(swish(a)); }, {a});
    check("log10", [&] {
      auto sq = add_scalar(mul(a, a), 0.5);
      return sum(log10_t(sq));
    }, {a});
  }
  {
    auto alpha = randn({1}, rng);
    auto x = randn({4}, rng);
    check("scalar_mul", [&] { return sum(scalar_mul(alpha, x)); }, {alpha, x});
  }
  {
    auto a = randn({6}, rng);
    for (double& v : a->v) v = 1.0 + std::abs(v);
    check("power", [&] { return sum(power(a, 1.7)); }, {a});
    // keep every input well above the floor so the clamp kink is not hit
    check("log_floor", [&] { return sum(log_floor(a, 1e-3)); }, {a});
  }
  {
    auto a = randn({3, 5}, rng);
    check("sum", [&] { return sum(a); }, {a});
    check("mean", [&] { return mean(a); }, {a});
  }
  {
    auto a = randn({7}, rng), b = randn({7}, rng);
    check("dot", [&] { return dot(a, b); }, {a, b});
    check("sum_sq", [&] { return sum_sq(a); }, {a});
    check("l2_norm", [&] { return l2_norm(a); }, {a});
  }
  {
    auto a = randn({3, 4}, rng), b = randn({4, 5}, rng), c = randn({3, 5}, rng);
    check("matmul", [&] { return sum(mul(matmul(a, b), c)); }, {a, b});
  }
  {
    auto x = randn({3, 4}, rng), b = randn({4}, rng), w = randn({4}, rng);
    auto m = randn({3, 4}, rng);
    check("add_rowvec", [&] { return sum(mul(add_rowvec(x, b), m)); }, {x, b});
    check("mul_rowvec", [&] { return sum(mul(mul_rowvec(x, w), m)); }, {x, w});
  }
  {
    auto a = randn({3, 2}, rng), b = randn({3, 3}, rng);
    auto m = randn({3, 5}, rng);
    check("concat_cols", [&] { return sum(mul(concat_cols(a, b), m)); },
          {a, b});
  }
  {
    auto x = randn({3, 6}, rng);
    auto m = randn({3, 2}, rng);
    check("slice_cols", [&] { return sum(mul(slice_cols(x, 1, 2), m)); }, {x});
    check("glu", [&] { return sum(glu(x)); }, {x});
  }
  {
    auto x = randn({4, 5}, rng);
    auto m = randn({4, 5}, rng);
    check("softmax", [&] { return sum(mul(softmax(x), m)); }, {x});
  }
  {
    auto x = randn({4, 6}, rng);
    auto gamma = randn({6}, rng), beta = randn({6}, rng);
    auto m = randn({4, 6}, rng);
    check("layer_norm",
          [&] { return sum(mul(layer_norm(x, gamma, beta), m)); },
          {x, gamma, beta});
  }
  {
    auto x = randn({12}, rng), k = randn({4}, rng);
    auto m = randn({12}, rng);
    check("conv1d_causal", [&] { return sum(mul(conv1d_causal(x, k), m)); },
          {x, k});
  }
  {
    auto x = randn({6, 3}, rng);
    auto k = randn({3, 4}, rng);
    auto b = randn({3}, rng);
    auto m = randn({6, 3}, rng);
    check("depthwise_conv1d_causal",
          [&] { return sum(mul(depthwise_conv1d_causal(x, k, b), m)); },
          {x, k, b});
  }
  {
    auto q = randn({6, 4}, rng, 0.5), k = randn({6, 4}, rng, 0.5),
         v = randn({6, 4}, rng);
    auto m = randn({6, 4}, rng);
    check("causal_local_attention",
          [&] {
            return sum(mul(causal_local_attention(q, k, v, 2, 3), m));
          },
          {q, k, v});
  }
  {
    auto x = randn({13}, rng);
    auto m = randn({3, 8}, rng);
    check("frame_rows", [&] { return sum(mul(frame_rows(x, 8, 4), m)); }, {x});
  }
  {
    auto f = randn({3, 8}, rng);
    auto m = randn({16}, rng);
    check("overlap_add_rows",
          [&] { return sum(mul(overlap_add_rows(f, 4), m)); }, {f});
  }
  {
    auto x = randn({5, 3}, rng);
    auto m = randn({5, 6}, rng);
    check("stack_frames", [&] { return sum(mul(stack_frames(x, 2), m)); },
          {x});
    auto m2 = randn({2, 3}, rng);
    check("subsample_rows",
          [&] { return sum(mul(subsample_rows(x, 3), m2)); }, {x});
  }
  {
    auto target = randn({64}, rng, 0.3);
    auto estimate = randn({64}, rng, 0.3);
    check("sisnr_loss", [&] { return sisnr_loss(target, estimate); },
          {target, estimate});
  }

  if (include_end_to_end) {
    // Reduced geometries keep the finite-difference sweep affordable while
    // exercising the full composite graph.
    LogmelFrontendConfig fcfg;
    fcfg.num_mels = 8;
    fcfg.frame_ms = 2;   // 32 samples
    fcfg.hop_ms = 1;     // 16 samples
    fcfg.fft_size = 32;
    fcfg.stack = 2;
    fcfg.subsample = 2;
    fcfg.mel_high_hz = 7000.0;
    LogmelFrontendT<double> frontend(fcfg);
    {
      auto x = randn({96}, rng, 0.3);
      auto m = make_tensor<double>({3, 16});
      std::normal_distribution<double> dist(0.0, 1.0);
      for (double& v : m->v) v = dist(rng);
      check("logmel_frontend",
            [&] { return sum(mul(frontend(x), m)); }, {x}, -1, 1e-6);
    }

    ProxyAsrEncoderConfig pcfg;
    pcfg.input_dim = fcfg.output_dim();  // 16
    pcfg.width = 8;
    pcfg.num_layers = 1;
    pcfg.conv_kernel = 3;
    pcfg.attn_heads = 2;
    pcfg.attn_left_context = 4;
    pcfg.ffn_expansion = 2;
    ProxyAsrEncoderT<double> proxy(pcfg);

    AecModelConfig mcfg;
    mcfg.window_len = 8;
    mcfg.hop = 4;
    mcfg.feature_dim = 8;
    mcfg.num_layers = 1;
    mcfg.conv_kernel = 3;
    mcfg.attn_heads = 2;
    mcfg.attn_left_context = 4;
    mcfg.ffn_expansion = 2;
    AecModelT<double> model(mcfg, /*seed=*/3);

    auto mixture = randn({96}, rng, 0.3);
    auto reference = randn({96}, rng, 0.3);
    auto target = randn({96}, rng, 0.3);
    LossWeights weights{2.0};

    auto build = [&] {
      auto predicted = model.forward_samples(mixture, reference);
      return total_loss(target, predicted, weights, proxy, frontend).total;
    };
    // every input coordinate, plus a random subset of each parameter tensor
    check("total_loss_wrt_inputs", build, {mixture, reference}, -1, 1e-6);
    std::vector<Tensor<double>> params = model.parameters();
    check("total_loss_wrt_params", build, params, 4, 1e-6);
  }
  return out;
}

}  // namespace waveaec
