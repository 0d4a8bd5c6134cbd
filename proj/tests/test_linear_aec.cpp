#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"
#include "test_support.hpp"
#include "waveaec/datasim.hpp"
#include "waveaec/linear_aec.hpp"
#include "waveaec/losses.hpp"

using namespace waveaec;

namespace {

// Sparse decaying 8 ms FIR, well within the subband filter's span.
std::vector<double> echo_path() {
  std::vector<double> fir(128, 0.0);
  fir[10] = 0.9;
  fir[40] = -0.45;
  fir[80] = 0.25;
  fir[120] = -0.12;
  return fir;
}

double erle_tail_db(const Waveform& mixture, const Waveform& enhanced,
                    std::size_t tail) {
  double num = 0.0, den = 0.0;
  const std::size_t begin = mixture.size() - tail;
  for (std::size_t i = begin; i < mixture.size(); ++i) {
    num += mixture[i] * mixture[i];
    den += enhanced[i] * enhanced[i];
  }
  return 10.0 * std::log10((num + 1e-12) / (den + 1e-12));
}

}  // namespace

TEST_CASE("subband NLMS converges on an in-span linear echo") {
  const std::size_t n = 10 * kSampleRate;
  auto ref = testsup::white(n, 42, 0.1);
  Waveform mixture = convolve(ref, echo_path());
  auto out = linear_aec_process(mixture, ref);
  CHECK(out.enhanced.size() == mixture.size());
  CHECK(out.echo_estimate.size() == mixture.size());
  // echo-only input: the residual over the last 2 s should be well below
  // the mixture
  CHECK(erle_tail_db(mixture, out.enhanced, 2 * kSampleRate) >= 20.0);
  CHECK(out.enhanced.all_finite());
}

TEST_CASE("zero reference passes the mixture through") {
  auto mixture = testsup::speechy(4 * kSampleRate, 7, 0.1);
  Waveform ref = Waveform::zeros(mixture.size());
  auto out = linear_aec_process(mixture, ref);
  double max_err = 0.0;
  for (std::size_t i = 2048; i + 2048 < mixture.size(); ++i)
    max_err = std::max(max_err, std::abs(out.enhanced[i] - mixture[i]));
  CHECK(max_err < 1e-6);
}

TEST_CASE("externally frozen state never adapts") {
  auto ref = testsup::speechy(2 * kSampleRate, 8, 0.15);
  Waveform mixture = convolve(ref, echo_path());
  LinearAecConfig cfg;
  SubbandFilterState state(2048 / 2 + 1, cfg);
  freeze_adaptation(state);
  auto out = linear_aec_process(mixture, ref, cfg, state);
  for (const auto& bin_taps : state.taps)
    for (const auto& t : bin_taps) CHECK(t == std::complex<double>(0.0, 0.0));
  // zero filter: the residual equals the mixture on the interior
  double max_err = 0.0;
  for (std::size_t i = 2048; i + 2048 < mixture.size(); ++i)
    max_err = std::max(max_err, std::abs(out.enhanced[i] - mixture[i]));
  CHECK(max_err < 1e-6);
  resume_adaptation(state);
  CHECK(state.adaptation_enabled);
}

TEST_CASE("preamble-gated adaptation protects near-end speech") {
  const double preamble_ms = 3000.0;
  const std::size_t preamble = std::size_t(preamble_ms / 1000.0 * kSampleRate);
  const std::size_t n = 8 * kSampleRate;
  auto ref = testsup::speechy(n, 9, 0.15);
  Waveform echo = convolve(ref, echo_path());
  auto target_tail = testsup::speechy(n - preamble, 10, 0.15);
  Waveform target = Waveform::zeros(n);
  for (std::size_t i = 0; i < target_tail.size(); ++i)
    target.samples[preamble + i] = target_tail[i];
  Waveform mixture = Waveform::zeros(n);
  for (std::size_t i = 0; i < n; ++i)
    mixture.samples[i] = echo[i] + target[i];

  LinearAecConfig cfg;
  cfg.preamble_ms = preamble_ms;
  auto out = linear_aec_process(mixture, ref, cfg);
  // adapting only on the echo-only preamble still cancels echo later, so the
  // near-end talker comes out ahead of the raw mixture
  CHECK(sisnr_improvement(mixture, out.enhanced, target) > 5.0);
  // ERLE reported over the preamble region is substantial; speech-driven
  // adaptation converges more slowly than the white-noise case
  CHECK(out.erle_db >= 10.0);
}

TEST_CASE("processing is deterministic") {
  auto ref = testsup::speechy(2 * kSampleRate, 11, 0.15);
  Waveform mixture = convolve(ref, echo_path());
  auto a = linear_aec_process(mixture, ref);
  auto b = linear_aec_process(mixture, ref);
  REQUIRE(a.enhanced.size() == b.enhanced.size());
  for (std::size_t i = 0; i < a.enhanced.size(); ++i)
    CHECK(a.enhanced[i] == b.enhanced[i]);
  CHECK(a.erle_db == b.erle_db);
}

TEST_CASE("input validation") {
  Waveform a = Waveform::zeros(1000), b = Waveform::zeros(999);
  CHECK_THROWS_AS(linear_aec_process(a, b), ShapeError);
  CHECK_THROWS_AS(linear_aec_process(Waveform{}, Waveform{}), DataError);
  LinearAecConfig bad;
  bad.step_size = 0.0;
  CHECK_THROWS_AS(SubbandFilterState(1025, bad), DataError);
  bad.step_size = 1.5;
  CHECK_THROWS_AS(SubbandFilterState(1025, bad), DataError);
}

TEST_CASE("config frame spec is the 128 ms window at 50% overlap") {
  LinearAecConfig cfg;
  const FrameSpec spec = cfg.frame_spec();
  CHECK(spec.window_len == 2048);
  CHECK(spec.hop == 1024);
}
