#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <fstream>

#include "doctest.h"
#include "test_support.hpp"
#include "waveaec/checkpoint.hpp"
#include "waveaec/pipeline.hpp"
#include "waveaec/wav_io.hpp"

using namespace waveaec;

namespace {

AecModelConfig tiny_config() {
  AecModelConfig cfg;
  cfg.window_len = 16;
  cfg.hop = 8;
  cfg.feature_dim = 16;
  cfg.num_layers = 1;
  cfg.conv_kernel = 5;
  cfg.attn_heads = 4;
  cfg.attn_left_context = 6;
  cfg.ffn_expansion = 2;
  return cfg;
}

// Writes n tiny synthetic examples and returns their manifest entries.
std::vector<ManifestEntry> tiny_manifest(const testsup::TempDir& dir, int n,
                                         std::size_t len = 4000) {
  std::vector<ManifestEntry> out;
  for (int i = 0; i < n; ++i) {
    auto target = testsup::speechy(len, 500 + uint64_t(i), 0.15);
    auto reference = testsup::speechy(len, 600 + uint64_t(i), 0.15);
    Waveform mixture = Waveform::zeros(len);
    for (std::size_t j = 0; j < len; ++j)
      mixture.samples[j] = target[j] + 0.5 * reference[j];
    ManifestEntry e;
    e.id = "t" + std::to_string(i);
    e.mixture_path = dir.file(e.id + ".mix.wav");
    e.reference_path = dir.file(e.id + ".ref.wav");
    e.target_path = dir.file(e.id + ".tgt.wav");
    e.ser_db = i % 2 ? 0.0 : -5.0;
    write_wav(e.mixture_path, mixture, WavEncoding::kFloat32);
    write_wav(e.reference_path, reference, WavEncoding::kFloat32);
    write_wav(e.target_path, target, WavEncoding::kFloat32);
    out.push_back(e);
  }
  return out;
}

}  // namespace

TEST_CASE("lambda schedule hits the documented breakpoints exactly") {
  TrainConfig cfg;
  cfg.lambda_final = 5e4;
  cfg.total_steps = 20000;  // desk scaling is a no-op at the full length
  CHECK(lambda_at_step(cfg, 0) == 0.0);
  CHECK(lambda_at_step(cfg, 5000) == 0.0);
  CHECK(lambda_at_step(cfg, 12500) == 25000.0);
  CHECK(lambda_at_step(cfg, 20000) == 50000.0);
  CHECK(lambda_at_step(cfg, 30000) == 50000.0);
  CHECK_THROWS_AS(lambda_at_step(cfg, -1), DataError);
}

TEST_CASE("desk scaling shrinks the ramp with the run length") {
  TrainConfig cfg;
  cfg.lambda_final = 5e4;
  cfg.total_steps = 2000;  // scale = 0.1 -> breakpoints 500 and 2000
  CHECK(lambda_at_step(cfg, 500) == 0.0);
  CHECK(lambda_at_step(cfg, 1250) == 25000.0);
  CHECK(lambda_at_step(cfg, 2000) == 50000.0);
}

TEST_CASE("train config validation") {
  TrainConfig cfg;
  cfg.total_steps = 0;
  CHECK_THROWS_AS(cfg.validate(), DataError);
  cfg = TrainConfig{};
  cfg.lambda_final = -1.0;
  CHECK_THROWS_AS(cfg.validate(), DataError);
  cfg = TrainConfig{};
  cfg.desk_scale = false;
  cfg.total_steps = 2000;  // ramp_end 20000 > total_steps
  CHECK_THROWS_AS(cfg.validate(), DataError);
}

TEST_CASE("key-value config parsing") {
  testsup::TempDir dir("kvcfg");
  {
    std::ofstream os(dir.file("train.cfg"));
    os << "version 1\n# a comment\nlambda_final 100.5\ntotal_steps 7\n"
       << "batch_size 2\nseed 9\ndesk_scale 0\nramp_start_step 1\n"
       << "ramp_end_step 5\n";
  }
  auto cfg = train_config_from_kv(read_kv_config(dir.file("train.cfg")));
  CHECK(cfg.lambda_final == 100.5);
  CHECK(cfg.total_steps == 7);
  CHECK(cfg.batch_size == 2);
  CHECK(cfg.seed == 9);
  CHECK(!cfg.desk_scale);

  {
    std::ofstream os(dir.file("nover.cfg"));
    os << "lambda_final 1\n";
  }
  CHECK_THROWS_AS(read_kv_config(dir.file("nover.cfg")), DataError);
  {
    std::ofstream os(dir.file("unknown.cfg"));
    os << "version 1\nwhat 3\n";
  }
  CHECK_THROWS_AS(train_config_from_kv(read_kv_config(dir.file("unknown.cfg"))),
                  DataError);
  CHECK_THROWS_AS(read_kv_config(dir.file("missing.cfg")), DataError);
}

TEST_CASE("system mode names round-trip") {
  for (const char* name : {"none", "linear", "neural", "cascade"})
    CHECK(system_name(parse_system(name)) == name);
  CHECK_THROWS_AS(parse_system("quantum"), UsageError);
}

TEST_CASE("training runs, logs, checkpoints, and resumes bit-exactly") {
  testsup::TempDir dir("trainresume");
  auto manifest = tiny_manifest(dir, 2);

  TrainConfig cfg;
  cfg.lambda_final = 0.0;
  cfg.total_steps = 6;
  cfg.checkpoint_every = 3;
  cfg.seed = 4;

  const auto full_dir = (dir.path / "full").string();
  const auto part_dir = (dir.path / "part").string();

  AecModel model_full(tiny_config(), cfg.seed);
  auto full = train(model_full, manifest, cfg, full_dir);
  REQUIRE(full.curve.size() == 6);
  CHECK(full.final_checkpoint == full_dir + "/step6.ckpt");
  CHECK(std::filesystem::exists(full_dir + "/step3.ckpt"));
  CHECK(std::filesystem::exists(full_dir + "/loss_log.tsv"));

  // losses decrease over even this short horizon's start
  CHECK(std::isfinite(full.curve.back().total));

  // interrupted run: 3 steps, then resume to 6 in a fresh directory
  TrainConfig half = cfg;
  half.total_steps = 3;
  AecModel model_half(tiny_config(), cfg.seed);
  auto part1 = train(model_half, manifest, half, part_dir);
  AecModel model_resumed(tiny_config(), cfg.seed);
  auto part2 = train(model_resumed, manifest, cfg, part_dir,
                     part_dir + "/step3.ckpt");
  REQUIRE(part2.curve.size() == 3);  // steps 3..5

  // the resumed tail matches the uninterrupted run record-for-record
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(part2.curve[i].step == full.curve[i + 3].step);
    CHECK(part2.curve[i].total == full.curve[i + 3].total);
    CHECK(part2.curve[i].neg_sisnr == full.curve[i + 3].neg_sisnr);
  }
  // and the final checkpoints are byte-identical
  CHECK(file_hash(full_dir + "/step6.ckpt") ==
        file_hash(part_dir + "/step6.ckpt"));
}

TEST_CASE("non-finite data raises NumericError naming the step") {
  testsup::TempDir dir("trainnan");
  auto manifest = tiny_manifest(dir, 1);
  // poison the target
  auto target = read_wav(manifest[0].target_path);
  target.samples[100] = std::numeric_limits<double>::infinity();
  write_wav(manifest[0].target_path, target, WavEncoding::kFloat32);

  TrainConfig cfg;
  cfg.lambda_final = 0.0;
  cfg.total_steps = 2;
  AecModel model(tiny_config(), 1);
  try {
    train(model, manifest, cfg, (dir.path / "out").string());
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("step") != std::string::npos);
  }
}

TEST_CASE("train rejects an empty manifest") {
  AecModel model(tiny_config(), 1);
  TrainConfig cfg;
  CHECK_THROWS_AS(train(model, {}, cfg, "/tmp/never"), DataError);
}

TEST_CASE("evaluate in passthrough mode reports zero improvement") {
  testsup::TempDir dir("evalnone");
  auto manifest = tiny_manifest(dir, 3);
  EvalOptions opts;
  opts.system = SystemKind::kNone;
  auto report = evaluate(manifest, opts);
  REQUIRE(report.utterances.size() == 3);
  for (const auto& u : report.utterances) {
    CHECK(u.sisnri_db == 0.0);
    CHECK(u.erle_db == 0.0);
  }
  CHECK(report.mean_sisnri_db == 0.0);
  // buckets keyed by the two nominal SERs in the manifest
  CHECK(report.buckets.size() == 2);
  int total = 0;
  for (const auto& b : report.buckets) total += b.count;
  CHECK(total == 3);
  // report files
  write_report(report, dir.file("records.tsv"), dir.file("summary.txt"));
  CHECK(std::filesystem::exists(dir.file("records.tsv")));
  auto text = format_report(report);
  CHECK(text.find("none") != std::string::npos);
}

TEST_CASE("evaluate validates its inputs") {
  EvalOptions opts;
  opts.system = SystemKind::kNeural;  // no model supplied
  testsup::TempDir dir("evalbad");
  auto manifest = tiny_manifest(dir, 1);
  CHECK_THROWS_AS(evaluate(manifest, opts), UsageError);
  opts.system = SystemKind::kNone;
  CHECK_THROWS_AS(evaluate({}, opts), DataError);
}

TEST_CASE("parallel evaluation matches the single-threaded result") {
  testsup::TempDir dir("evaljobs");
  auto manifest = tiny_manifest(dir, 4);
  EvalOptions serial;
  serial.system = SystemKind::kLinear;
  EvalOptions parallel = serial;
  parallel.jobs = 3;
  auto a = evaluate(manifest, serial);
  auto b = evaluate(manifest, parallel);
  REQUIRE(a.utterances.size() == b.utterances.size());
  for (std::size_t i = 0; i < a.utterances.size(); ++i) {
    CHECK(a.utterances[i].sisnri_db == b.utterances[i].sisnri_db);
    CHECK(a.utterances[i].erle_db == b.utterances[i].erle_db);
  }
}

TEST_CASE("cascade with an identity neural stage equals the linear stage") {
  auto mixture = testsup::speechy(8000, 70, 0.15);
  auto reference = testsup::speechy(8000, 71, 0.15);
  LinearAecConfig lin;
  auto linear_only = linear_aec_process(mixture, reference, lin);
  auto cascaded = cascade_enhance(
      lin, [](const Waveform& m, const Waveform&) { return m; }, mixture,
      reference);
  REQUIRE(cascaded.size() == linear_only.enhanced.size());
  for (std::size_t i = 0; i < cascaded.size(); ++i)
    CHECK(cascaded[i] == linear_only.enhanced[i]);
}
