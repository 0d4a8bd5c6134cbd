#pragma once

#include <fstream>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "waveaec/framing.hpp"
#include "waveaec/tensor.hpp"
#include "waveaec/waveform.hpp"

// TasNet-style waveform masking model: linear encoders for mixture and
// reference, a causal conformer stack estimating a sigmoid mask over the
// mixture features, and a linear tanh decoder back to waveform frames.

namespace waveaec {

struct AecModelConfig {
  int window_len = 80;
  int hop = 40;
  int feature_dim = 128;
  int num_layers = 4;
  int conv_kernel = 15;
  int attn_heads = 8;
  int attn_left_context = 31;
  int ffn_expansion = 4;
  // Test hook: lets attention see one future frame, breaking causality on
  // purpose for the negative-control probe.
  bool noncausal_ablation = false;

  void validate() const {
    if (window_len <= 0 || hop <= 0 || feature_dim <= 0 || num_layers <= 0 ||
        conv_kernel <= 0 || attn_heads <= 0 || ffn_expansion <= 0 ||
        attn_left_context < 0)
      throw DataError("AecModelConfig: all sizes must be positive");
    if (feature_dim % attn_heads != 0)
      throw DataError("AecModelConfig: feature_dim must divide by attn_heads");
  }

  double hop_ms() const { return double(hop) * 1000.0 / kSampleRate; }
};

struct ReceptiveField {
  double attention_ms = 0.0;  // num_layers * left_context * hop
  double conv_ms = 0.0;       // num_layers * (kernel - 1) * hop, reported separately
};

inline ReceptiveField receptive_field_ms(int num_layers, int attn_left_context,
                                         int conv_kernel, double hop_ms) {
  ReceptiveField rf;
  rf.attention_ms = double(num_layers) * double(attn_left_context) * hop_ms;
  rf.conv_ms = double(num_layers) * double(conv_kernel - 1) * hop_ms;
  return rf;
}

inline ReceptiveField receptive_field_ms(const AecModelConfig& cfg) {
  return receptive_field_ms(cfg.num_layers, cfg.attn_left_context,
                            cfg.conv_kernel, cfg.hop_ms());
}

namespace nn {

template <typename T>
struct ParamList {
  std::vector<std::pair<std::string, Tensor<T>>> items;

  Tensor<T> add(const std::string& name, std::vector<int> shape,
                bool requires_grad) {
    auto t = make_tensor<T>(std::move(shape), requires_grad);
    t->name = name;
    items.emplace_back(name, t);
    return t;
  }
};

template <typename T>
struct Linear {
  Tensor<T> w, b;

  void init(ParamList<T>& params, const std::string& prefix, int in, int out,
            std::mt19937_64& rng, bool requires_grad) {
    w = params.add(prefix + ".w", {in, out}, requires_grad);
    b = params.add(prefix + ".b", {out}, requires_grad);
    glorot_init(w, in, out, rng);
  }

  Tensor<T> operator()(const Tensor<T>& x) const { return linear(x, w, b); }
};

template <typename T>
struct Norm {
  Tensor<T> gamma, beta;

  void init(ParamList<T>& params, const std::string& prefix, int dim,
            bool requires_grad) {
    gamma = params.add(prefix + ".gamma", {dim}, requires_grad);
    beta = params.add(prefix + ".beta", {dim}, requires_grad);
    for (T& v : gamma->v) v = T(1);
  }

  Tensor<T> operator()(const Tensor<T>& x) const {
    return layer_norm(x, gamma, beta);
  }
};

// Half-step feed-forward: LN -> expand -> swish -> project, residual scaled
// by 0.5 at the call site.
template <typename T>
struct FeedForward {
  Norm<T> ln;
  Linear<T> expand, project;

  void init(ParamList<T>& params, const std::string& prefix, int dim,
            int expansion, std::mt19937_64& rng, bool requires_grad) {
    ln.init(params, prefix + ".ln", dim, requires_grad);
    expand.init(params, prefix + ".expand", dim, dim * expansion, rng,
                requires_grad);
    project.init(params, prefix + ".project", dim * expansion, dim, rng,
                 requires_grad);
  }

  Tensor<T> operator()(const Tensor<T>& x) const {
    return project(swish(expand(ln(x))));
  }
};

// Pointwise conv -> GLU -> causal depthwise conv -> group norm -> swish ->
// pointwise conv.
template <typename T>
struct ConvModule {
  Norm<T> ln;
  Linear<T> pointwise_in;   // dim -> 2*dim, halved again by the GLU
  Tensor<T> dw_kernel, dw_bias;
  Norm<T> gn;               // single group, per-frame over channels
  Linear<T> pointwise_out;

  void init(ParamList<T>& params, const std::string& prefix, int dim,
            int kernel, std::mt19937_64& rng, bool requires_grad) {
    ln.init(params, prefix + ".ln", dim, requires_grad);
    pointwise_in.init(params, prefix + ".pw_in", dim, 2 * dim, rng,
                      requires_grad);
    dw_kernel = params.add(prefix + ".dw.k", {dim, kernel}, requires_grad);
    dw_bias = params.add(prefix + ".dw.b", {dim}, requires_grad);
    glorot_init(dw_kernel, kernel, kernel, rng);
    gn.init(params, prefix + ".gn", dim, requires_grad);
    pointwise_out.init(params, prefix + ".pw_out", dim, dim, rng,
                      requires_grad);
  }

  Tensor<T> operator()(const Tensor<T>& x) const {
    auto h = glu(pointwise_in(ln(x)));
    h = depthwise_conv1d_causal(h, dw_kernel, dw_bias);
    return pointwise_out(swish(gn(h)));
  }
};

template <typename T>
struct Mhsa {
  Norm<T> ln;
  Linear<T> wq, wk, wv, wo;
  int heads = 8;
  int left_context = 31;

  void init(ParamList<T>& params, const std::string& prefix, int dim,
            int num_heads, int left, std::mt19937_64& rng, bool requires_grad) {
    heads = num_heads;
    left_context = left;
    ln.init(params, prefix + ".ln", dim, requires_grad);
    wq.init(params, prefix + ".q", dim, dim, rng, requires_grad);
    wk.init(params, prefix + ".k", dim, dim, rng, requires_grad);
    wv.init(params, prefix + ".v", dim, dim, rng, requires_grad);
    wo.init(params, prefix + ".o", dim, dim, rng, requires_grad);
  }

  Tensor<T> operator()(const Tensor<T>& x, int lookahead) const {
    auto h = ln(x);
    auto attended = causal_local_attention(wq(h), wk(h), wv(h), heads,
                                           left_context, lookahead);
    return wo(attended);
  }
};

// Conformer block with convolution before attention, per-sub-layer
// residuals, and a closing layer norm.
template <typename T>
struct ConformerBlock {
  FeedForward<T> ffn1, ffn2;
  ConvModule<T> conv;
  Mhsa<T> mhsa;
  Norm<T> out_ln;

  void init(ParamList<T>& params, const std::string& prefix,
            const AecModelConfig& cfg, int dim, std::mt19937_64& rng,
            bool requires_grad) {
    ffn1.init(params, prefix + ".ffn1", dim, cfg.ffn_expansion, rng,
              requires_grad);
    conv.init(params, prefix + ".conv", dim, cfg.conv_kernel, rng,
              requires_grad);
    mhsa.init(params, prefix + ".mhsa", dim, cfg.attn_heads,
              cfg.attn_left_context, rng, requires_grad);
    ffn2.init(params, prefix + ".ffn2", dim, cfg.ffn_expansion, rng,
              requires_grad);
    out_ln.init(params, prefix + ".out_ln", dim, requires_grad);
  }

  Tensor<T> operator()(const Tensor<T>& x, int lookahead) const {
    auto h = add(x, scale(ffn1(x), 0.5));
    h = add(h, conv(h));
    h = add(h, mhsa(h, lookahead));
    h = add(h, scale(ffn2(h), 0.5));
    return out_ln(h);
  }
};

}  // namespace nn

template <typename T>
struct AecModelT {
  AecModelConfig cfg;
  nn::ParamList<T> params;
  nn::Linear<T> mixture_encoder, reference_encoder, stack_projection;
  std::vector<nn::ConformerBlock<T>> blocks;
  nn::Linear<T> mask_head, decoder;

  explicit AecModelT(const AecModelConfig& config = {}, uint64_t seed = 1,
                     bool trainable = true)
      : cfg(config) {
    cfg.validate();
    std::mt19937_64 rng(seed);
    const int d = cfg.feature_dim;
    mixture_encoder.init(params, "enc_mix", cfg.window_len, d, rng, trainable);
    reference_encoder.init(params, "enc_ref", cfg.window_len, d, rng, trainable);
    stack_projection.init(params, "stack_proj", 2 * d, d, rng, trainable);
    blocks.resize(std::size_t(cfg.num_layers));
    for (int l = 0; l < cfg.num_layers; ++l)
      blocks[std::size_t(l)].init(params, "block" + std::to_string(l), cfg, d,
                                  rng, trainable);
    mask_head.init(params, "mask_head", d, d, rng, trainable);
    decoder.init(params, "decoder", d, cfg.window_len, rng, trainable);
  }

  const std::vector<std::pair<std::string, Tensor<T>>>& named_parameters() const {
    return params.items;
  }

  std::vector<Tensor<T>> parameters() const {
    std::vector<Tensor<T>> out;
    out.reserve(params.items.size());
    for (const auto& [name, t] : params.items) out.push_back(t);
    return out;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& [name, t] : params.items) n += t->numel();
    return n;
  }

  // [T x window] mixture/reference frames -> [T x window] enhanced frames.
  Tensor<T> forward_frames(const Tensor<T>& mix_frames,
                           const Tensor<T>& ref_frames) const {
    const int lookahead = cfg.noncausal_ablation ? 1 : 0;
    auto enc_mix = mixture_encoder(mix_frames);
    auto enc_ref = reference_encoder(ref_frames);
    auto h = stack_projection(concat_cols(enc_mix, enc_ref));
    for (const auto& block : blocks) h = block(h, lookahead);
    auto mask = sigmoid(mask_head(h));
    auto masked = mul(mask, enc_mix);
    return tanh_t(decoder(masked));
  }

  // 1-D sample tensors in, 1-D enhanced sample tensor out (differentiable).
  Tensor<T> forward_samples(const Tensor<T>& mixture,
                            const Tensor<T>& reference) const {
    detail::check_same_shape(mixture, reference, "forward_samples");
    auto mix_frames = frame_rows(mixture, cfg.window_len, cfg.hop);
    auto ref_frames = frame_rows(reference, cfg.window_len, cfg.hop);
    auto out_frames = forward_frames(mix_frames, ref_frames);
    return overlap_add_rows(out_frames, cfg.hop);
  }
};

using AecModel = AecModelT<Real>;

template <typename T>
Tensor<T> waveform_to_tensor(const Waveform& w, bool requires_grad = false) {
  std::vector<T> v(w.samples.begin(), w.samples.end());
  return from_values<T>({int(w.size())}, std::move(v), requires_grad);
}

template <typename T>
Waveform tensor_to_waveform(const Tensor<T>& t, std::size_t len) {
  Waveform w;
  w.samples.assign(t->v.begin(), t->v.end());
  w.samples.resize(len, 0.0);
  return w;
}

template <typename T>
Waveform enhance(const AecModelT<T>& model, const Waveform& mixture,
                 const Waveform& reference) {
  if (mixture.size() != reference.size())
    throw ShapeError("enhance: mixture and reference length mismatch");
  if (mixture.size() == 0) throw DataError("enhance: empty input");
  auto out = model.forward_samples(waveform_to_tensor<T>(mixture),
                                   waveform_to_tensor<T>(reference));
  return tensor_to_waveform(out, mixture.size());
}

// Perturbs the framed inputs strictly after frame t and checks that output
// frames <= t are bit-identical.
template <typename T>
bool causality_probe(const AecModelT<T>& model, const Waveform& mixture,
                     const Waveform& reference, int t,
                     double perturbation = 1e3) {
  auto mix = waveform_to_tensor<T>(mixture);
  auto ref = waveform_to_tensor<T>(reference);
  auto mix_frames = frame_rows(mix, model.cfg.window_len, model.cfg.hop);
  auto ref_frames = frame_rows(ref, model.cfg.window_len, model.cfg.hop);
  const int Tn = mix_frames->shape[0];
  if (t >= Tn - 1 || t < 0)
    throw DataError("causality_probe: need t < num_frames - 1");

  auto base = model.forward_frames(mix_frames, ref_frames);

  auto mix_pert = from_values<T>(mix_frames->shape, mix_frames->v);
  auto ref_pert = from_values<T>(ref_frames->shape, ref_frames->v);
  const int win = model.cfg.window_len;
  for (int r = t + 1; r < Tn; ++r)
    for (int c = 0; c < win; ++c) {
      mix_pert->v[std::size_t(r * win + c)] += T(perturbation);
      ref_pert->v[std::size_t(r * win + c)] -= T(perturbation);
    }
  auto pert = model.forward_frames(mix_pert, ref_pert);

  for (int r = 0; r <= t; ++r)
    for (int c = 0; c < win; ++c)
      if (base->v[std::size_t(r * win + c)] != pert->v[std::size_t(r * win + c)])
        return false;
  return true;
}

// Versioned key-value sidecar for the model geometry.
void write_model_config(const std::string& path, const AecModelConfig& cfg);
AecModelConfig read_model_config(const std::string& path);

}  // namespace waveaec
