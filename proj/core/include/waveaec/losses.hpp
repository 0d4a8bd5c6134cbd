#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "waveaec/model.hpp"
#include "waveaec/tensor.hpp"
#include "waveaec/waveform.hpp"

namespace waveaec {

constexpr double kSisnrEpsilon = 1e-8;

// ---------------------------------------------------------------------------
// SISNR: 10 log10 ||a* s||^2 / ||a* s - sh||^2 with a* = <s,sh> / ||s||^2.
// The epsilon bounds both norms so a perfect reconstruction stays finite.

inline double sisnr(const Waveform& target, const Waveform& estimate) {
  if (target.size() != estimate.size())
    throw ShapeError("sisnr: length mismatch");
  double dot_se = 0.0, ss = 0.0, ee = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    dot_se += target[i] * estimate[i];
    ss += target[i] * target[i];
    ee += estimate[i] * estimate[i];
  }
  if (ss == 0.0) throw DataError("sisnr: zero target signal");
  const double alpha = dot_se / ss;
  const double scaled = alpha * alpha * ss;
  const double err = scaled - 2.0 * alpha * dot_se + ee;
  return 10.0 * std::log10((scaled + kSisnrEpsilon) /
                           (std::max(err, 0.0) + kSisnrEpsilon));
}

inline double sisnr_improvement(const Waveform& mixture,
                                const Waveform& enhanced,
                                const Waveform& target) {
  return sisnr(target, enhanced) - sisnr(target, mixture);
}

// Differentiable SISNR in dB; gradient flows into the estimate (and target,
// if it carries one).
template <typename T>
Tensor<T> sisnr_loss(const Tensor<T>& target, const Tensor<T>& estimate) {
  detail::check_same_shape(target, estimate, "sisnr");
  auto alpha = div(dot(target, estimate), sum_sq(target));
  auto scaled = scalar_mul(alpha, target);
  auto err = sub(scaled, estimate);
  auto ratio = div(add_scalar(sum_sq(scaled), kSisnrEpsilon),
                   add_scalar(sum_sq(err), kSisnrEpsilon));
  return scale(log10_t(ratio), 10.0);
}

// ---------------------------------------------------------------------------
// Logmel frontend: magnitude-squared STFT -> mel filterbank -> log with
// floor -> stack 4 -> subsample 3. Parameter-free; gradients pass through.

struct LogmelFrontendConfig {
  int num_mels = 128;
  int frame_ms = 32;
  int hop_ms = 10;
  int stack = 4;
  int subsample = 3;
  int fft_size = 512;
  double mel_low_hz = 125.0;
  double mel_high_hz = 7500.0;
  double log_floor = 1e-3;

  int frame_samples() const { return frame_ms * kSampleRate / 1000; }
  int hop_samples() const { return hop_ms * kSampleRate / 1000; }
  int output_dim() const { return num_mels * stack; }
};

inline double hz_to_mel(double hz) {
  return 2595.0 * std::log10(1.0 + hz / 700.0);
}
inline double mel_to_hz(double mel) {
  return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
}

// HTK-style triangular filters as a [num_bins x num_mels] matrix.
std::vector<double> mel_filterbank_matrix(const LogmelFrontendConfig& cfg);

template <typename T>
class LogmelFrontendT {
 public:
  explicit LogmelFrontendT(const LogmelFrontendConfig& cfg = {}) : cfg_(cfg) {
    const int n = cfg.frame_samples();
    const int bins = cfg.fft_size / 2 + 1;
    std::vector<T> window(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
      window[std::size_t(i)] =
          T(0.5 - 0.5 * std::cos(2.0 * M_PI * double(i) / double(n)));
    window_ = from_values<T>({n}, std::move(window));

    std::vector<T> cosm(std::size_t(n) * std::size_t(bins));
    std::vector<T> sinm(cosm.size());
    for (int i = 0; i < n; ++i)
      for (int b = 0; b < bins; ++b) {
        const double ang = -2.0 * M_PI * double(i) * double(b) / cfg.fft_size;
        cosm[std::size_t(i * bins + b)] = T(std::cos(ang));
        sinm[std::size_t(i * bins + b)] = T(std::sin(ang));
      }
    dft_cos_ = from_values<T>({n, bins}, std::move(cosm));
    dft_sin_ = from_values<T>({n, bins}, std::move(sinm));

    auto mel = mel_filterbank_matrix(cfg);
    std::vector<T> melT(mel.begin(), mel.end());
    mel_ = from_values<T>({bins, cfg.num_mels}, std::move(melT));
  }

  const LogmelFrontendConfig& config() const { return cfg_; }

  // Non-trainable by construction.
  std::size_t parameter_count() const { return 0; }

  // [N] samples -> [K x num_mels*stack] features.
  Tensor<T> operator()(const Tensor<T>& samples) const {
    if (samples->shape.size() != 1 ||
        samples->shape[0] < cfg_.frame_samples())
      throw DataError("logmel_frontend: input shorter than one frame");
    auto frames =
        frame_rows(samples, cfg_.frame_samples(), cfg_.hop_samples());
    auto windowed = mul_rowvec(frames, window_);
    auto re = matmul(windowed, dft_cos_);
    auto im = matmul(windowed, dft_sin_);
    auto powspec = add(mul(re, re), mul(im, im));
    auto mel_energies = matmul(powspec, mel_);
    auto logmel = log_floor(mel_energies, cfg_.log_floor);
    return subsample_rows(stack_frames(logmel, cfg_.stack), cfg_.subsample);
  }

 private:
  LogmelFrontendConfig cfg_;
  Tensor<T> window_, dft_cos_, dft_sin_, mel_;
};

using LogmelFrontend = LogmelFrontendT<Real>;

// ---------------------------------------------------------------------------
// Frozen proxy for the production ASR encoder: a deterministic 2-layer
// causal conformer, width 64, fed by the logmel frontend. Its parameters
// never receive updates; gradients flow through it into the input branch.

struct ProxyAsrEncoderConfig {
  int input_dim = 512;
  int width = 64;
  int num_layers = 2;
  int conv_kernel = 15;
  int attn_heads = 4;
  int attn_left_context = 31;
  int ffn_expansion = 4;
  uint64_t seed = 0x5eedA5C0DE;
};

template <typename T>
class ProxyAsrEncoderT {
 public:
  explicit ProxyAsrEncoderT(const ProxyAsrEncoderConfig& cfg = {}) : cfg_(cfg) {
    std::mt19937_64 rng(cfg.seed);
    AecModelConfig block_cfg;
    block_cfg.feature_dim = cfg.width;
    block_cfg.conv_kernel = cfg.conv_kernel;
    block_cfg.attn_heads = cfg.attn_heads;
    block_cfg.attn_left_context = cfg.attn_left_context;
    block_cfg.ffn_expansion = cfg.ffn_expansion;
    input_proj_.init(params_, "proxy.in", cfg.input_dim, cfg.width, rng,
                     /*requires_grad=*/false);
    blocks_.resize(std::size_t(cfg.num_layers));
    for (int l = 0; l < cfg.num_layers; ++l)
      blocks_[std::size_t(l)].init(params_, "proxy.block" + std::to_string(l),
                                   block_cfg, cfg.width, rng,
                                   /*requires_grad=*/false);
  }

  const ProxyAsrEncoderConfig& config() const { return cfg_; }
  const std::vector<std::pair<std::string, Tensor<T>>>& named_parameters() const {
    return params_.items;
  }

  Tensor<T> operator()(const Tensor<T>& features) const {
    auto h = input_proj_(features);
    for (const auto& block : blocks_) h = block(h, /*lookahead=*/0);
    return h;
  }

 private:
  ProxyAsrEncoderConfig cfg_;
  nn::ParamList<T> params_;
  nn::Linear<T> input_proj_;
  std::vector<nn::ConformerBlock<T>> blocks_;
};

using ProxyAsrEncoder = ProxyAsrEncoderT<Real>;

// ---------------------------------------------------------------------------
// ASR loss: squared L2 distance between encoder outputs on target and
// predicted signals, summed over frames (unnormalized, per the mean_reduce
// flag). The target branch is detached so no gradient reaches it.

template <typename T>
Tensor<T> asr_loss(const Tensor<T>& target, const Tensor<T>& predicted,
                   const ProxyAsrEncoderT<T>& encoder,
                   const LogmelFrontendT<T>& frontend,
                   bool mean_reduce = false) {
  detail::check_same_shape(target, predicted, "asr_loss");
  auto enc_target = encoder(frontend(detach(target)));
  auto enc_pred = encoder(frontend(predicted));
  auto diff = sub(enc_target, enc_pred);
  auto per_elem = mul(diff, diff);
  if (mean_reduce) {
    // mean over frames, sum over channels
    return scale(sum(per_elem), 1.0 / double(per_elem->shape[0]));
  }
  return sum(per_elem);
}

struct LossWeights {
  double lambda = 5e4;  // ASR loss weight at the paper's operating point
};

template <typename T>
struct TotalLoss {
  Tensor<T> total;
  Tensor<T> neg_sisnr;  // scalar, the -SISNR term
  Tensor<T> asr;        // scalar, unweighted ASR term
};

// L = -SISNR(s, sh) + lambda * L_ASR. With lambda == 0 the ASR term is
// evaluated on a detached branch so it is logged but contributes no
// gradient.
template <typename T>
TotalLoss<T> total_loss(const Tensor<T>& target, const Tensor<T>& predicted,
                        const LossWeights& weights,
                        const ProxyAsrEncoderT<T>& encoder,
                        const LogmelFrontendT<T>& frontend,
                        bool mean_reduce = false) {
  if (!(weights.lambda >= 0.0) || !std::isfinite(weights.lambda))
    throw DataError("total_loss: lambda must be finite and non-negative");
  TotalLoss<T> out;
  out.neg_sisnr = scale(sisnr_loss(target, predicted), -1.0);
  if (weights.lambda > 0.0) {
    out.asr = asr_loss(target, predicted, encoder, frontend, mean_reduce);
    out.total = add(out.neg_sisnr, scale(out.asr, weights.lambda));
  } else {
    out.asr = asr_loss(target, detach(predicted), encoder, frontend,
                       mean_reduce);
    out.total = out.neg_sisnr;
  }
  return out;
}

}  // namespace waveaec
