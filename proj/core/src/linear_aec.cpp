#include "waveaec/linear_aec.hpp"

#include <algorithm>
#include <cmath>

namespace waveaec {

SubbandFilterState::SubbandFilterState(std::size_t num_bins,
                                       const LinearAecConfig& cfg)
    : taps(num_bins, std::vector<std::complex<double>>(std::size_t(cfg.taps))),
      ref_history(num_bins,
                  std::vector<std::complex<double>>(std::size_t(cfg.taps))),
      mean_ref_power(num_bins, 0.0),
      step_size(cfg.step_size),
      reg_scale(cfg.reg_scale) {
  if (step_size <= 0.0 || step_size > 1.0)
    throw DataError("linear_aec: step_size must be in (0, 1]");
}

void SubbandFilterState::process_frame(
    const std::vector<std::complex<double>>& mixture_bins,
    const std::vector<std::complex<double>>& reference_bins,
    std::vector<std::complex<double>>* residual,
    std::vector<std::complex<double>>* echo_estimate) {
  const std::size_t bins = taps.size();
  if (mixture_bins.size() != bins || reference_bins.size() != bins)
    throw ShapeError("linear_aec: bin count mismatch");
  ++frames_seen;
  residual->resize(bins);
  echo_estimate->resize(bins);
  const std::size_t order = taps[0].size();
  for (std::size_t b = 0; b < bins; ++b) {
    auto& hist = ref_history[b];
    for (std::size_t k = order - 1; k > 0; --k) hist[k] = hist[k - 1];
    hist[0] = reference_bins[b];

    mean_ref_power[b] +=
        (std::norm(hist[0]) - mean_ref_power[b]) / double(frames_seen);

    std::complex<double> est(0.0, 0.0);
    for (std::size_t k = 0; k < order; ++k) est += taps[b][k] * hist[k];
    const std::complex<double> err = mixture_bins[b] - est;
    (*echo_estimate)[b] = est;
    (*residual)[b] = err;

    if (adaptation_enabled) {
      double hist_energy = 0.0;
      for (std::size_t k = 0; k < order; ++k) hist_energy += std::norm(hist[k]);
      const double reg = reg_scale * (mean_ref_power[b] + 1e-12);
      const double denom = hist_energy + reg;
      if (denom > 0.0) {
        const double g = step_size / denom;
        for (std::size_t k = 0; k < order; ++k)
          taps[b][k] += g * std::conj(hist[k]) * err;
      }
    }
  }
}

namespace {

double erle_over(const Waveform& x, const Waveform& e, std::size_t begin,
                 std::size_t end) {
  double num = 0.0, den = 0.0;
  end = std::min(end, x.size());
  for (std::size_t i = begin; i < end; ++i) {
    num += x[i] * x[i];
    den += e[i] * e[i];
  }
  return 10.0 * std::log10((num + 1e-12) / (den + 1e-12));
}

}  // namespace

LinearAecOutput linear_aec_process(const Waveform& mixture,
                                   const Waveform& reference,
                                   const LinearAecConfig& cfg,
                                   SubbandFilterState& state) {
  if (mixture.size() != reference.size())
    throw ShapeError("linear_aec: mixture and reference length mismatch");
  if (mixture.size() == 0) throw DataError("linear_aec: empty input");

  const FrameSpec spec = cfg.frame_spec();
  Spectrogram mix_spec = stft(mixture, spec);
  Spectrogram ref_spec = stft(reference, spec);

  Spectrogram res_spec, echo_spec;
  res_spec.spec = echo_spec.spec = spec;
  res_spec.frames.resize(mix_spec.num_frames());
  echo_spec.frames.resize(mix_spec.num_frames());

  const bool caller_froze = !state.adaptation_enabled;
  for (std::size_t t = 0; t < mix_spec.num_frames(); ++t) {
    if (!caller_froze && cfg.preamble_ms.has_value()) {
      const double frame_end_ms =
          double(t * std::size_t(spec.hop) + std::size_t(spec.window_len)) *
          1000.0 / kSampleRate;
      state.adaptation_enabled = frame_end_ms <= *cfg.preamble_ms;
    }
    state.process_frame(mix_spec.frames[t], ref_spec.frames[t],
                        &res_spec.frames[t], &echo_spec.frames[t]);
  }

  LinearAecOutput out;
  out.enhanced = istft(res_spec);
  out.echo_estimate = istft(echo_spec);
  out.enhanced.samples.resize(mixture.size());
  out.echo_estimate.samples.resize(mixture.size());

  std::size_t erle_end = mixture.size();
  if (cfg.preamble_ms.has_value())
    erle_end = std::min(erle_end, std::size_t(*cfg.preamble_ms / 1000.0 *
                                              kSampleRate));
  out.erle_db = erle_over(mixture, out.enhanced, 0, erle_end);
  return out;
}

LinearAecOutput linear_aec_process(const Waveform& mixture,
                                   const Waveform& reference,
                                   const LinearAecConfig& cfg) {
  const FrameSpec spec = cfg.frame_spec();
  SubbandFilterState state(std::size_t(spec.window_len) / 2 + 1, cfg);
  return linear_aec_process(mixture, reference, cfg, state);
}

}  // namespace waveaec
