// Microbenchmarks for the hot paths: STFT, subband echo cancellation,
// the mask-estimator forward pass, and the log-mel frontend.

#include <benchmark/benchmark.h>

#include "test_support.hpp"
#include "waveaec/datasim.hpp"
#include "waveaec/linear_aec.hpp"
#include "waveaec/losses.hpp"
#include "waveaec/model.hpp"
#include "waveaec/stft.hpp"

using namespace waveaec;

namespace {

void BM_Stft(benchmark::State& state) {
  const std::size_t n = std::size_t(state.range(0)) * kSampleRate;
  auto w = testsup::speechy(n, 1, 0.15);
  const FrameSpec spec(2048, 1024);
  for (auto _ : state) {
    auto s = stft(w, spec);
    benchmark::DoNotOptimize(s.frames.data());
  }
  state.SetItemsProcessed(int64_t(state.iterations()) * int64_t(n));
}
BENCHMARK(BM_Stft)->Arg(1)->Arg(4);

void BM_StftRoundTrip(benchmark::State& state) {
  const std::size_t n = std::size_t(state.range(0)) * kSampleRate;
  auto w = testsup::speechy(n, 2, 0.15);
  const FrameSpec spec(2048, 1024);
  for (auto _ : state) {
    auto back = istft(stft(w, spec));
    benchmark::DoNotOptimize(back.samples.data());
  }
  state.SetItemsProcessed(int64_t(state.iterations()) * int64_t(n));
}
BENCHMARK(BM_StftRoundTrip)->Arg(1);

void BM_LinearAec(benchmark::State& state) {
  const std::size_t n = std::size_t(state.range(0)) * kSampleRate;
  auto ref = testsup::speechy(n, 3, 0.15);
  std::vector<double> fir(128, 0.0);
  fir[10] = 0.9;
  fir[40] = -0.45;
  Waveform mixture = convolve(ref, fir);
  for (auto _ : state) {
    auto out = linear_aec_process(mixture, ref);
    benchmark::DoNotOptimize(out.enhanced.samples.data());
  }
  state.SetItemsProcessed(int64_t(state.iterations()) * int64_t(n));
}
BENCHMARK(BM_LinearAec)->Arg(1)->Arg(4);

void BM_MaskEstimatorForward(benchmark::State& state) {
  AecModelConfig cfg;
  cfg.feature_dim = int(state.range(0));
  cfg.num_layers = int(state.range(1));
  AecModel model(cfg, 1, /*trainable=*/false);
  const std::size_t n = kSampleRate;  // one second
  auto mixture = testsup::speechy(n, 4, 0.15);
  auto reference = testsup::speechy(n, 5, 0.15);
  for (auto _ : state) {
    auto out = enhance(model, mixture, reference);
    benchmark::DoNotOptimize(out.samples.data());
  }
  state.SetItemsProcessed(int64_t(state.iterations()) * int64_t(n));
}
BENCHMARK(BM_MaskEstimatorForward)
    ->Args({64, 2})    // reduced geometry used by the toy training runs
    ->Args({128, 4});  // full geometry

void BM_LogmelFrontend(benchmark::State& state) {
  LogmelFrontend frontend;
  const std::size_t n = kSampleRate;
  auto x = waveform_to_tensor<Real>(testsup::speechy(n, 6, 0.15));
  for (auto _ : state) {
    auto y = frontend(x);
    benchmark::DoNotOptimize(y->v.data());
  }
  state.SetItemsProcessed(int64_t(state.iterations()) * int64_t(n));
}
BENCHMARK(BM_LogmelFrontend);

void BM_RirGeneration(benchmark::State& state) {
  for (auto _ : state) {
    auto rir = generate_rir(double(state.range(0)), 2.0, 7);
    benchmark::DoNotOptimize(rir.taps.data());
  }
}
BENCHMARK(BM_RirGeneration)->Arg(200)->Arg(600);

}  // namespace

BENCHMARK_MAIN();
