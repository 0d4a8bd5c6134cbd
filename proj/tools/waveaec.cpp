// waveaec: single-binary command line for the echo cancellation toolkit.
//
// Subcommands: simulate, train, enhance, evaluate, inspect-model, gradcheck.
// Every subcommand accepts --seed and --config; flags override config-file
// values. Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical
// failure.

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "waveaec/datasim.hpp"
#include "waveaec/gradcheck.hpp"
#include "waveaec/linear_aec.hpp"
#include "waveaec/losses.hpp"
#include "waveaec/model_io.hpp"
#include "waveaec/pipeline.hpp"
#include "waveaec/wav_io.hpp"

namespace fs = std::filesystem;
using namespace waveaec;

namespace {

constexpr double kGradTolerance = 1e-4;

// Applies "key value" config entries to a SimConfig; unknown keys reject.
SimConfig sim_config_from_kv(const std::map<std::string, std::string>& kv) {
  SimConfig cfg;
  for (const auto& [key, value] : kv) {
    if (key == "version") continue;
    else if (key == "count") cfg.count = std::stoi(value);
    else if (key == "ser_min") cfg.ser_min = std::stod(value);
    else if (key == "ser_max") cfg.ser_max = std::stod(value);
    else if (key == "preamble_ms") cfg.preamble_ms = std::stod(value);
    else if (key == "rt60_ms") cfg.rt60_ms = std::stod(value);
    else if (key == "echo_rt60_ms") cfg.echo_rt60_ms = std::stod(value);
    else if (key == "nonlinear_drive") cfg.nonlinear_drive = std::stod(value);
    else if (key == "snr_db") cfg.snr_db = std::stod(value);
    else throw DataError("config: unknown key '" + key + "'");
  }
  return cfg;
}

int cmd_simulate(const std::string& corpus, const std::string& out,
                 const SimConfig& cfg, uint64_t seed) {
  const auto entries = simulate_corpus(corpus, out, cfg, seed);
  std::cout << "wrote " << entries.size() << " examples to " << out << "\n"
            << "manifest: " << (fs::path(out) / "manifest.tsv").string()
            << "\n";
  return 0;
}

int cmd_train(const std::string& manifest_path, const std::string& out,
              const TrainConfig& cfg, const AecModelConfig& model_cfg,
              const std::string& resume) {
  const auto manifest = read_manifest(manifest_path);
  fs::create_directories(out);
  AecModel model(model_cfg, cfg.seed);
  if (!resume.empty()) {
    // train() restores optimizer state and step; the geometry must match
    load_model_params(model, resume);
  }
  write_model_config((fs::path(out) / "model.cfg").string(), model_cfg);
  const auto result = train(model, manifest, cfg, out, resume);
  if (!result.curve.empty()) {
    const auto& last = result.curve.back();
    std::cout << "final step " << last.step << "  -sisnr " << last.neg_sisnr
              << "  asr " << last.asr << "  lambda " << last.lambda
              << "  total " << last.total << "\n";
  }
  std::cout << "checkpoint: " << result.final_checkpoint << "\n"
            << "loss log: " << (fs::path(out) / "loss_log.tsv").string()
            << "\n";
  return 0;
}

int cmd_enhance(const std::string& mode, const std::string& mixture_path,
                const std::string& reference_path,
                const std::string& model_path, const std::string& out,
                const std::string& target_path, double preamble_ms) {
  const SystemKind system = parse_system(mode);
  const Waveform mixture = read_wav(mixture_path);
  const Waveform reference = read_wav(reference_path);
  if ((system == SystemKind::kNeural || system == SystemKind::kCascade) &&
      model_path.empty())
    throw UsageError("enhance: --model is required for neural/cascade modes");

  LinearAecConfig lin;
  if (preamble_ms > 0.0) lin.preamble_ms = preamble_ms;

  Waveform enhanced;
  switch (system) {
    case SystemKind::kNone:
      enhanced = mixture;
      break;
    case SystemKind::kLinear: {
      auto r = linear_aec_process(mixture, reference, lin);
      enhanced = r.enhanced;
      std::cout << "erle_db " << r.erle_db << "\n";
      break;
    }
    case SystemKind::kNeural: {
      auto model = load_model(model_path);
      enhanced = enhance(model, mixture, reference);
      break;
    }
    case SystemKind::kCascade: {
      auto model = load_model(model_path);
      enhanced = cascade_enhance(lin, model, mixture, reference);
      break;
    }
  }
  if (!enhanced.all_finite())
    throw NumericError("enhance: non-finite output samples");
  write_wav(out, enhanced, WavEncoding::kFloat32);
  if (!target_path.empty()) {
    const Waveform target = read_wav(target_path);
    std::cout << "sisnri_db " << sisnr_improvement(mixture, enhanced, target)
              << "\n";
  }
  std::cout << "wrote " << out << "\n";
  return 0;
}

int cmd_evaluate(const std::string& mode, const std::string& manifest_path,
                 const std::string& report_path, const std::string& summary,
                 const std::string& model_path, int jobs) {
  EvalOptions opts;
  opts.system = parse_system(mode);
  opts.jobs = jobs;
  std::optional<AecModel> model;
  if (!model_path.empty()) {
    model.emplace(load_model(model_path));
    opts.model = &*model;
  }
  const auto manifest = read_manifest(manifest_path);
  const auto report = evaluate(manifest, opts);
  const std::string summary_path =
      summary.empty() ? report_path + ".summary" : summary;
  write_report(report, report_path, summary_path);
  std::cout << format_report(report);
  return 0;
}

int cmd_inspect_model(const std::string& model_path,
                      const std::string& config_path) {
  AecModelConfig cfg;
  if (!config_path.empty())
    cfg = read_model_config(config_path);
  else if (!model_path.empty())
    cfg = sidecar_config_for(model_path);
  AecModel model(cfg, /*seed=*/1, /*trainable=*/false);
  if (!model_path.empty()) load_model_params(model, model_path);

  std::cout << "parameter                      shape        count\n";
  for (const auto& [name, t] : model.named_parameters()) {
    std::cout << name;
    for (std::size_t i = name.size(); i < 31; ++i) std::cout << ' ';
    std::string shape = shape_str(t->shape);
    std::cout << shape;
    for (std::size_t i = shape.size(); i < 13; ++i) std::cout << ' ';
    std::cout << t->numel() << "\n";
  }
  std::cout << "total parameters: " << model.parameter_count() << "\n";

  const auto rf = receptive_field_ms(cfg);
  std::cout << "attention past context: " << rf.attention_ms << " ms ("
            << cfg.num_layers << " layers x " << cfg.attn_left_context
            << " frames x " << cfg.hop_ms() << " ms)\n";
  std::cout << "conv past context: " << rf.conv_ms << " ms (reported "
            << "separately; depthwise kernel " << cfg.conv_kernel << ")\n";

  // Cross-check against the recognition frontend's frame rate: the same
  // layer/context product at the logmel stride.
  const LogmelFrontendConfig fcfg;
  const double logmel_stride_ms = double(fcfg.hop_ms * fcfg.subsample);
  const auto rf_logmel = receptive_field_ms(
      cfg.num_layers, cfg.attn_left_context, cfg.conv_kernel, logmel_stride_ms);
  std::cout << "logmel-stride check: " << rf_logmel.attention_ms << " ms ("
            << cfg.num_layers << " layers x " << cfg.attn_left_context
            << " frames x " << logmel_stride_ms << " ms)\n";
  return 0;
}

int cmd_gradcheck(bool quick) {
  const auto cases = gradient_suite(!quick);
  bool ok = true;
  for (const auto& c : cases) {
    const bool pass = c.rel_err < kGradTolerance;
    ok = ok && pass;
    std::cout << (pass ? "pass" : "FAIL") << "  " << c.name << "  rel_err "
              << c.rel_err << "\n";
  }
  if (!ok) throw NumericError("gradcheck: finite-difference mismatch");
  std::cout << "gradcheck: " << cases.size() << " cases ok\n";
  return 0;
}


struct SimulateOpts {
  std::string corpus, out, config;
  uint64_t seed = 1;
  int count = 0;
  double ser_min = -20.0, ser_max = 5.0, preamble_ms = 0.0;
  double rt60_ms = 200.0, echo_rt60_ms = 150.0, nonlinear_drive = 0.0;
  double snr_db = 0.0;
  std::vector<double> ser_list;
};

struct TrainOpts {
  std::string manifest, out, config, model_config, resume;
  uint64_t seed = 1;
  double lambda = 5e4;
  long steps = 2000, checkpoint_every = 500;
  long ramp_start = 5000, ramp_end = 20000;
  int batch = 1;
  bool no_desk_scale = false;
};

struct EnhanceOpts {
  std::string mode, mixture, reference, model, out, target, config;
  uint64_t seed = 1;
  double preamble_ms = 0.0;
};

struct EvaluateOpts {
  std::string mode, manifest, report, summary, model, config;
  uint64_t seed = 1;
  int jobs = 1;
};

struct InspectOpts {
  std::string model, model_config, config;
  uint64_t seed = 1;
};

struct GradcheckOpts {
  std::string config;
  uint64_t seed = 1;
  bool quick = false;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"waveaec: desk-scale acoustic echo cancellation toolkit"};
  app.require_subcommand(1);

  std::function<int()> action;

  // --- simulate -----------------------------------------------------------
  {
    auto* sub = app.add_subcommand("simulate",
                                   "simulate a synthetic echo corpus");
    auto opt = std::make_shared<SimulateOpts>();
    sub->add_option("--corpus", opt->corpus, "corpus dir with target/ and reference/ (and optional noise/)")->required();
    sub->add_option("--out", opt->out, "output directory")->required();
    sub->add_option("--seed", opt->seed, "random seed");
    sub->add_option("--config", opt->config, "key-value config file");
    auto* o_count = sub->add_option("--count", opt->count, "number of examples (0: targets x SER list)");
    auto* o_smin = sub->add_option("--ser-min", opt->ser_min, "SER range low (dB)");
    auto* o_smax = sub->add_option("--ser-max", opt->ser_max, "SER range high (dB)");
    auto* o_ser = sub->add_option("--ser", opt->ser_list, "explicit SER values, cycled");
    auto* o_pre = sub->add_option("--preamble-ms", opt->preamble_ms, "echo-only preamble length (ms)");
    auto* o_rt = sub->add_option("--rt60-ms", opt->rt60_ms, "target RIR rt60 (ms, 0 = anechoic)");
    auto* o_ert = sub->add_option("--echo-rt60-ms", opt->echo_rt60_ms, "echo RIR rt60 (ms, 0 = anechoic)");
    auto* o_drv = sub->add_option("--nonlinear-drive", opt->nonlinear_drive, "soft-clip drive for the echo path (0 = linear)");
    auto* o_snr = sub->add_option("--snr-db", opt->snr_db, "noise SNR (dB); omit for no noise");
    sub->callback([=, &action] {
      action = [=]() {
        SimConfig cfg;
        if (!opt->config.empty())
          cfg = sim_config_from_kv(read_kv_config(opt->config));
        if (o_count->count()) cfg.count = opt->count;
        if (o_smin->count()) cfg.ser_min = opt->ser_min;
        if (o_smax->count()) cfg.ser_max = opt->ser_max;
        if (o_ser->count()) cfg.ser_list = opt->ser_list;
        if (o_pre->count()) cfg.preamble_ms = opt->preamble_ms;
        if (o_rt->count()) cfg.rt60_ms = opt->rt60_ms;
        if (o_ert->count()) cfg.echo_rt60_ms = opt->echo_rt60_ms;
        if (o_drv->count()) cfg.nonlinear_drive = opt->nonlinear_drive;
        if (o_snr->count()) cfg.snr_db = opt->snr_db;
        return cmd_simulate(opt->corpus, opt->out, cfg, opt->seed);
      };
    });
  }

  // --- train --------------------------------------------------------------
  {
    auto* sub = app.add_subcommand("train", "train the neural stage");
    auto opt = std::make_shared<TrainOpts>();
    sub->add_option("--manifest", opt->manifest, "training manifest TSV")->required();
    sub->add_option("--out", opt->out, "output directory")->required();
    sub->add_option("--seed", opt->seed, "random seed");
    sub->add_option("--config", opt->config, "key-value training config file");
    sub->add_option("--model-config", opt->model_config, "model geometry file (default: standard geometry)");
    sub->add_option("--resume", opt->resume, "checkpoint to resume from");
    auto* o_lambda = sub->add_option("--lambda", opt->lambda, "final ASR-loss weight");
    auto* o_steps = sub->add_option("--steps", opt->steps, "total training steps");
    auto* o_ck = sub->add_option("--checkpoint-every", opt->checkpoint_every, "checkpoint interval (steps)");
    auto* o_rs = sub->add_option("--ramp-start", opt->ramp_start, "lambda ramp start step");
    auto* o_re = sub->add_option("--ramp-end", opt->ramp_end, "lambda ramp end step");
    auto* o_batch = sub->add_option("--batch", opt->batch, "batch size");
    auto* o_nds = sub->add_flag("--no-desk-scale", opt->no_desk_scale, "do not rescale ramp breakpoints to the run length");
    sub->callback([=, &action] {
      action = [=]() {
        TrainConfig cfg;
        if (!opt->config.empty())
          cfg = train_config_from_kv(read_kv_config(opt->config));
        cfg.seed = opt->seed;
        if (o_lambda->count()) cfg.lambda_final = opt->lambda;
        if (o_steps->count()) cfg.total_steps = opt->steps;
        if (o_ck->count()) cfg.checkpoint_every = opt->checkpoint_every;
        if (o_rs->count()) cfg.ramp_start_step = opt->ramp_start;
        if (o_re->count()) cfg.ramp_end_step = opt->ramp_end;
        if (o_batch->count()) cfg.batch_size = opt->batch;
        if (o_nds->count()) cfg.desk_scale = false;
        AecModelConfig model_cfg;
        if (!opt->model_config.empty())
          model_cfg = read_model_config(opt->model_config);
        return cmd_train(opt->manifest, opt->out, cfg, model_cfg, opt->resume);
      };
    });
  }

  // --- enhance ------------------------------------------------------------
  {
    auto* sub = app.add_subcommand("enhance", "enhance one utterance");
    auto opt = std::make_shared<EnhanceOpts>();
    sub->add_option("--mode", opt->mode, "none|linear|neural|cascade")->required();
    sub->add_option("--mixture", opt->mixture, "mixture WAV")->required();
    sub->add_option("--reference", opt->reference, "far-end reference WAV")->required();
    sub->add_option("--out", opt->out, "output WAV path")->required();
    sub->add_option("--model", opt->model, "model checkpoint (neural/cascade)");
    sub->add_option("--target", opt->target, "clean target WAV; prints SISNRi when given");
    sub->add_option("--preamble-ms", opt->preamble_ms, "limit linear adaptation to this echo-only preamble");
    sub->add_option("--seed", opt->seed, "random seed");
    sub->add_option("--config", opt->config, "key-value config file (validated only)");
    sub->callback([=, &action] {
      action = [=]() {
        if (!opt->config.empty()) read_kv_config(opt->config);
        return cmd_enhance(opt->mode, opt->mixture, opt->reference, opt->model,
                           opt->out, opt->target, opt->preamble_ms);
      };
    });
  }

  // --- evaluate -----------------------------------------------------------
  {
    auto* sub = app.add_subcommand("evaluate", "evaluate a system over a manifest");
    auto opt = std::make_shared<EvaluateOpts>();
    sub->add_option("--mode", opt->mode, "none|linear|neural|cascade")->required();
    sub->add_option("--manifest", opt->manifest, "evaluation manifest TSV")->required();
    sub->add_option("--report", opt->report, "per-utterance records output path")->required();
    sub->add_option("--summary", opt->summary, "summary table path (default: <report>.summary)");
    sub->add_option("--model", opt->model, "model checkpoint (neural/cascade)");
    sub->add_option("--jobs", opt->jobs, "parallel workers");
    sub->add_option("--seed", opt->seed, "random seed");
    sub->add_option("--config", opt->config, "key-value config file (validated only)");
    sub->callback([=, &action] {
      action = [=]() {
        if (!opt->config.empty()) read_kv_config(opt->config);
        return cmd_evaluate(opt->mode, opt->manifest, opt->report,
                            opt->summary, opt->model, opt->jobs);
      };
    });
  }

  // --- inspect-model ------------------------------------------------------
  {
    auto* sub = app.add_subcommand("inspect-model",
                                   "print parameter table and receptive field");
    auto opt = std::make_shared<InspectOpts>();
    sub->add_option("--model", opt->model, "model checkpoint (optional; default geometry otherwise)");
    sub->add_option("--model-config", opt->model_config, "explicit geometry file");
    sub->add_option("--seed", opt->seed, "random seed");
    sub->add_option("--config", opt->config, "key-value config file (validated only)");
    sub->callback([=, &action] {
      action = [=]() {
        if (!opt->config.empty()) read_kv_config(opt->config);
        return cmd_inspect_model(opt->model, opt->model_config);
      };
    });
  }

  // --- gradcheck ----------------------------------------------------------
  {
    auto* sub = app.add_subcommand("gradcheck",
                                   "finite-difference gradient verification");
    auto opt = std::make_shared<GradcheckOpts>();
    sub->add_flag("--quick", opt->quick, "skip the end-to-end composite checks");
    sub->add_option("--seed", opt->seed, "random seed");
    sub->add_option("--config", opt->config, "key-value config file (validated only)");
    sub->callback([=, &action] {
      action = [=]() {
        if (!opt->config.empty()) read_kv_config(opt->config);
        return cmd_gradcheck(opt->quick);
      };
    });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    return action ? action() : 1;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const NumericError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  }
}
