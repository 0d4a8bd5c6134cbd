#include "waveaec/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <thread>

#include "waveaec/checkpoint.hpp"
#include "waveaec/wav_io.hpp"

namespace fs = std::filesystem;

namespace waveaec {

double lambda_at_step(const TrainConfig& cfg, long step) {
  if (step < 0) throw DataError("lambda_at_step: negative step");
  double start = double(cfg.ramp_start_step);
  double end = double(cfg.ramp_end_step);
  if (cfg.desk_scale && cfg.total_steps < 20000) {
    const double s = double(cfg.total_steps) / 20000.0;
    start *= s;
    end *= s;
  }
  if (step <= start) return 0.0;
  if (step >= end) return cfg.lambda_final;
  return cfg.lambda_final * (double(step) - start) / (end - start);
}

namespace {

struct LoadedExample {
  Waveform mixture, reference, target;
};

std::vector<LoadedExample> load_examples(
    const std::vector<ManifestEntry>& manifest) {
  std::vector<LoadedExample> out;
  out.reserve(manifest.size());
  for (const auto& e : manifest)
    out.push_back({read_wav(e.mixture_path), read_wav(e.reference_path),
                   read_wav(e.target_path)});
  return out;
}

// Data order is a pure function of (seed, step): a fresh permutation per
// epoch, derived without any state carried across steps.
std::size_t sample_index(uint64_t seed, long step, std::size_t n) {
  const long epoch = step / long(n);
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  std::mt19937_64 rng(seed ^ (0x9E3779B97F4A7C15ull * uint64_t(epoch + 1)));
  std::shuffle(perm.begin(), perm.end(), rng);
  return perm[std::size_t(step % long(n))];
}

std::vector<std::pair<std::string, Tensor<Real>>> trainer_state_tensors(
    const AecModel& model, const AdamState<Real>& adam) {
  std::vector<std::pair<std::string, Tensor<Real>>> out;
  const auto& named = model.named_parameters();
  for (const auto& [name, t] : named) out.emplace_back(name, t);
  for (std::size_t i = 0; i < named.size(); ++i) {
    out.emplace_back("adam.m." + named[i].first,
                     from_values<Real>(named[i].second->shape,
                                       std::vector<Real>(adam.m[i])));
    out.emplace_back("adam.v." + named[i].first,
                     from_values<Real>(named[i].second->shape,
                                       std::vector<Real>(adam.v[i])));
  }
  out.emplace_back("trainer.step",
                   scalar_tensor<Real>(Real(adam.step_count)));
  return out;
}

}  // namespace

TrainResult train(AecModel& model, const std::vector<ManifestEntry>& manifest,
                  const TrainConfig& cfg, const std::string& out_dir,
                  const std::string& resume_checkpoint) {
  cfg.validate();
  if (manifest.empty()) throw DataError("train: empty manifest");
  fs::create_directories(out_dir);

  const auto examples = load_examples(manifest);
  LogmelFrontend frontend;
  ProxyAsrEncoder proxy;
  auto params = model.parameters();
  AdamState<Real> adam(params, cfg.adam);

  long start_step = 0;
  if (!resume_checkpoint.empty()) {
    auto ckpt = load_checkpoint<Real>(resume_checkpoint);
    const auto& named = model.named_parameters();
    for (std::size_t i = 0; i < named.size(); ++i) {
      const auto& [name, t] = named[i];
      auto it = ckpt.find(name);
      if (it == ckpt.end())
        throw DataError("resume: missing tensor " + name);
      if (it->second->shape != t->shape)
        throw ShapeError("resume: shape mismatch for " + name);
      t->v = it->second->v;
      auto im = ckpt.find("adam.m." + name);
      auto iv = ckpt.find("adam.v." + name);
      if (im == ckpt.end() || iv == ckpt.end())
        throw DataError("resume: missing Adam state for " + name);
      adam.m[i] = im->second->v;
      adam.v[i] = iv->second->v;
    }
    auto is = ckpt.find("trainer.step");
    if (is == ckpt.end()) throw DataError("resume: missing trainer.step");
    start_step = long(is->second->v[0]);
    adam.step_count = start_step;
  }

  std::ofstream log(fs::path(out_dir) / "loss_log.tsv",
                    start_step == 0 ? std::ios::trunc : std::ios::app);
  TrainResult result;

  for (long step = start_step; step < cfg.total_steps; ++step) {
    const double lambda = lambda_at_step(cfg, step);
    LossWeights weights{lambda};

    Tensor<Real> batch_total;
    double neg_sisnr_val = 0.0, asr_val = 0.0;
    for (int b = 0; b < cfg.batch_size; ++b) {
      const std::size_t idx = sample_index(
          cfg.seed, step * cfg.batch_size + b, examples.size());
      const auto& ex = examples[idx];
      auto mixture = waveform_to_tensor<Real>(ex.mixture);
      auto reference = waveform_to_tensor<Real>(ex.reference);
      auto target = waveform_to_tensor<Real>(ex.target);
      auto predicted = model.forward_samples(mixture, reference);
      auto loss =
          total_loss(target, predicted, weights, proxy, frontend,
                     cfg.asr_mean_reduce);
      neg_sisnr_val += double(loss.neg_sisnr->v[0]);
      asr_val += double(loss.asr->v[0]);
      batch_total = b == 0 ? loss.total : add(batch_total, loss.total);
    }
    if (cfg.batch_size > 1)
      batch_total = scale(batch_total, 1.0 / cfg.batch_size);
    neg_sisnr_val /= cfg.batch_size;
    asr_val /= cfg.batch_size;

    const double total_val = double(batch_total->v[0]);
    if (!std::isfinite(total_val))
      throw NumericError("train: non-finite loss at step " +
                         std::to_string(step));

    for (auto& p : params) p->zero_grad();
    backward(batch_total);
    clip_grad_norm(params, cfg.grad_clip);
    adam_step(params, adam);

    StepRecord rec{step, neg_sisnr_val, asr_val, lambda, total_val};
    result.curve.push_back(rec);
    log << rec.step << '\t' << rec.neg_sisnr << '\t' << rec.asr << '\t'
        << rec.lambda << '\t' << rec.total << '\n';

    const long done = step + 1;
    if (done % cfg.checkpoint_every == 0 || done == cfg.total_steps) {
      const std::string path =
          (fs::path(out_dir) / ("step" + std::to_string(done) + ".ckpt"))
              .string();
      save_checkpoint(path, trainer_state_tensors(model, adam));
      result.final_checkpoint = path;
    }
  }
  return result;
}

// ---------------------------------------------------------------------------

SystemKind parse_system(const std::string& name) {
  if (name == "none") return SystemKind::kNone;
  if (name == "linear") return SystemKind::kLinear;
  if (name == "neural") return SystemKind::kNeural;
  if (name == "cascade") return SystemKind::kCascade;
  throw UsageError("unknown system mode: " + name);
}

std::string system_name(SystemKind kind) {
  switch (kind) {
    case SystemKind::kNone: return "none";
    case SystemKind::kLinear: return "linear";
    case SystemKind::kNeural: return "neural";
    case SystemKind::kCascade: return "cascade";
  }
  return "?";
}

Waveform cascade_enhance(const LinearAecConfig& linear_cfg,
                         const Enhancer& neural, const Waveform& mixture,
                         const Waveform& reference) {
  auto linear_out = linear_aec_process(mixture, reference, linear_cfg);
  return neural(linear_out.enhanced, reference);
}

Waveform cascade_enhance(const LinearAecConfig& linear_cfg,
                         const AecModel& model, const Waveform& mixture,
                         const Waveform& reference) {
  return cascade_enhance(
      linear_cfg,
      [&model](const Waveform& m, const Waveform& r) {
        return enhance(model, m, r);
      },
      mixture, reference);
}

// ---------------------------------------------------------------------------

namespace {

double preamble_erle_db(const Waveform& mixture, const Waveform& enhanced,
                        double preamble_ms) {
  std::size_t end = mixture.size();
  if (preamble_ms > 0.0)
    end = std::min(end,
                   std::size_t(preamble_ms / 1000.0 * kSampleRate));
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < end; ++i) {
    num += mixture[i] * mixture[i];
    den += enhanced[i] * enhanced[i];
  }
  return 10.0 * std::log10((num + 1e-12) / (den + 1e-12));
}

}  // namespace

EvalReport evaluate(const std::vector<ManifestEntry>& manifest,
                    const EvalOptions& opts) {
  if (manifest.empty()) throw DataError("evaluate: empty manifest");
  if ((opts.system == SystemKind::kNeural ||
       opts.system == SystemKind::kCascade) &&
      opts.model == nullptr)
    throw UsageError("evaluate: neural/cascade modes need a model");

  EvalReport report;
  report.system = opts.system;
  report.utterances.resize(manifest.size());

  LogmelFrontend frontend;
  ProxyAsrEncoder proxy;

  auto run_one = [&](std::size_t i) {
    const auto& e = manifest[i];
    Waveform mixture = read_wav(e.mixture_path);
    Waveform reference = read_wav(e.reference_path);
    Waveform target = read_wav(e.target_path);

    LinearAecConfig lin = opts.linear;
    if (opts.use_preamble_adaptation && e.preamble_ms > 0.0)
      lin.preamble_ms = e.preamble_ms;

    Waveform enhanced;
    switch (opts.system) {
      case SystemKind::kNone:
        enhanced = mixture;
        break;
      case SystemKind::kLinear:
        enhanced = linear_aec_process(mixture, reference, lin).enhanced;
        break;
      case SystemKind::kNeural:
        enhanced = enhance(*opts.model, mixture, reference);
        break;
      case SystemKind::kCascade:
        enhanced = cascade_enhance(lin, *opts.model, mixture, reference);
        break;
    }

    UtteranceResult r;
    r.id = e.id;
    r.ser_db = e.ser_db;
    r.sisnri_db = sisnr_improvement(mixture, enhanced, target);
    r.erle_db = preamble_erle_db(mixture, enhanced, e.preamble_ms);
    {
      auto loss = asr_loss(waveform_to_tensor<Real>(target),
                           detach(waveform_to_tensor<Real>(enhanced)), proxy,
                           frontend);
      r.asr_loss = double(loss->v[0]);
    }
    report.utterances[i] = r;
  };

  const int jobs = std::max(1, opts.jobs);
  if (jobs == 1) {
    for (std::size_t i = 0; i < manifest.size(); ++i) run_one(i);
  } else {
    std::vector<std::thread> workers;
    std::atomic<std::size_t> next{0};
    for (int j = 0; j < jobs; ++j)
      workers.emplace_back([&] {
        for (std::size_t i = next++; i < manifest.size(); i = next++)
          run_one(i);
      });
    for (auto& w : workers) w.join();
  }

  // aggregates and per-SER buckets (keyed by the nominal manifest SER)
  std::map<double, SerBucket> buckets;
  for (const auto& r : report.utterances) {
    report.mean_sisnri_db += r.sisnri_db;
    report.mean_erle_db += r.erle_db;
    report.mean_asr_loss += r.asr_loss;
    auto& b = buckets[r.ser_db];
    b.ser_db = r.ser_db;
    ++b.count;
    b.mean_sisnri_db += r.sisnri_db;
    b.mean_erle_db += r.erle_db;
    b.mean_asr_loss += r.asr_loss;
  }
  const double n = double(report.utterances.size());
  report.mean_sisnri_db /= n;
  report.mean_erle_db /= n;
  report.mean_asr_loss /= n;
  for (auto& [ser, b] : buckets) {
    b.mean_sisnri_db /= b.count;
    b.mean_erle_db /= b.count;
    b.mean_asr_loss /= b.count;
    report.buckets.push_back(b);
  }
  return report;
}

std::string format_report(const EvalReport& report) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(2);
  os << "system: " << system_name(report.system) << "  utterances: "
     << report.utterances.size() << "\n";
  os << "  SER(dB)   count   SISNRi(dB)   ERLE(dB)   proxy-ASR-loss\n";
  for (const auto& b : report.buckets) {
    os << "  " << b.ser_db << "\t" << b.count << "\t" << b.mean_sisnri_db
       << "\t" << b.mean_erle_db << "\t" << b.mean_asr_loss << "\n";
  }
  os << "  overall\t" << report.utterances.size() << "\t"
     << report.mean_sisnri_db << "\t" << report.mean_erle_db << "\t"
     << report.mean_asr_loss << "\n";
  return os.str();
}

void write_report(const EvalReport& report, const std::string& records_path,
                  const std::string& summary_path) {
  std::ofstream rec(records_path, std::ios::trunc);
  if (!rec) throw DataError("cannot write report records: " + records_path);
  rec.precision(17);
  for (const auto& r : report.utterances)
    rec << r.id << '\t' << r.ser_db << '\t' << r.sisnri_db << '\t'
        << r.erle_db << '\t' << r.asr_loss << '\n';
  std::ofstream sum(summary_path, std::ios::trunc);
  if (!sum) throw DataError("cannot write report summary: " + summary_path);
  sum << format_report(report);
}

// ---------------------------------------------------------------------------

std::map<std::string, std::string> read_kv_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot read config: " + path);
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string key, value;
    if (!(ls >> key >> value))
      throw DataError("config: malformed line: " + line);
    kv[key] = value;
  }
  auto it = kv.find("version");
  if (it == kv.end() || it->second != "1")
    throw DataError("config: missing or unsupported version: " + path);
  return kv;
}

TrainConfig train_config_from_kv(
    const std::map<std::string, std::string>& kv) {
  TrainConfig cfg;
  for (const auto& [key, value] : kv) {
    if (key == "version") continue;
    else if (key == "lambda_final") cfg.lambda_final = std::stod(value);
    else if (key == "ramp_start_step") cfg.ramp_start_step = std::stol(value);
    else if (key == "ramp_end_step") cfg.ramp_end_step = std::stol(value);
    else if (key == "batch_size") cfg.batch_size = std::stoi(value);
    else if (key == "total_steps") cfg.total_steps = std::stol(value);
    else if (key == "checkpoint_every") cfg.checkpoint_every = std::stol(value);
    else if (key == "seed") cfg.seed = std::stoull(value);
    else if (key == "lr") cfg.adam.lr = std::stod(value);
    else if (key == "beta1") cfg.adam.beta1 = std::stod(value);
    else if (key == "beta2") cfg.adam.beta2 = std::stod(value);
    else if (key == "epsilon") cfg.adam.epsilon = std::stod(value);
    else if (key == "grad_clip") cfg.grad_clip = std::stod(value);
    else if (key == "desk_scale") cfg.desk_scale = value == "1" || value == "true";
    else if (key == "asr_mean_reduce")
      cfg.asr_mean_reduce = value == "1" || value == "true";
    else throw DataError("config: unknown key '" + key + "'");
  }
  return cfg;
}

}  // namespace waveaec
