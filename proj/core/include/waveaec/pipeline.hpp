#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "waveaec/datasim.hpp"
#include "waveaec/linear_aec.hpp"
#include "waveaec/losses.hpp"
#include "waveaec/model.hpp"

namespace waveaec {

struct TrainConfig {
  double lambda_final = 5e4;
  long ramp_start_step = 5000;
  long ramp_end_step = 20000;
  int batch_size = 1;
  long total_steps = 2000;
  long checkpoint_every = 500;
  uint64_t seed = 1;
  AdamConfig adam;       // lr 1e-3, beta1 0.9, beta2 0.98, eps 1e-9
  double grad_clip = 5.0;
  bool desk_scale = true;  // scale ramp breakpoints by total_steps/20000
  bool asr_mean_reduce = false;

  void validate() const {
    if (total_steps <= 0 || batch_size <= 0)
      throw DataError("TrainConfig: total_steps and batch_size must be > 0");
    if (!(lambda_final >= 0.0))
      throw DataError("TrainConfig: lambda_final must be >= 0");
    if (!desk_scale && !(ramp_start_step < ramp_end_step &&
                         ramp_end_step <= total_steps))
      throw DataError(
          "TrainConfig: need ramp_start < ramp_end <= total_steps");
  }
};

// Piecewise-linear ASR-weight schedule: 0 until the ramp start, linear to
// lambda_final at the ramp end, constant after. With desk_scale the
// breakpoints shrink by total_steps/20000 when the run is shorter.
double lambda_at_step(const TrainConfig& cfg, long step);

struct StepRecord {
  long step = 0;
  double neg_sisnr = 0.0;
  double asr = 0.0;
  double lambda = 0.0;
  double total = 0.0;
};

struct TrainResult {
  std::vector<StepRecord> curve;
  std::string final_checkpoint;
};

// Trains in place. Checkpoints (model + Adam moments + step counter) land in
// out_dir as step<N>.ckpt; the loss curve goes to out_dir/loss_log.tsv.
// Resuming from a checkpoint reproduces the uninterrupted run bit-exactly:
// the data order is a pure function of the step index.
TrainResult train(AecModel& model, const std::vector<ManifestEntry>& manifest,
                  const TrainConfig& cfg, const std::string& out_dir,
                  const std::string& resume_checkpoint = "");

// ---------------------------------------------------------------------------
// inference systems

enum class SystemKind { kNone, kLinear, kNeural, kCascade };

SystemKind parse_system(const std::string& name);
std::string system_name(SystemKind kind);

using Enhancer =
    std::function<Waveform(const Waveform& mixture, const Waveform& reference)>;

// Linear stage output feeds the neural stage as its mixture; the original
// reference is passed through.
Waveform cascade_enhance(const LinearAecConfig& linear_cfg,
                         const Enhancer& neural, const Waveform& mixture,
                         const Waveform& reference);

Waveform cascade_enhance(const LinearAecConfig& linear_cfg,
                         const AecModel& model, const Waveform& mixture,
                         const Waveform& reference);

// ---------------------------------------------------------------------------
// evaluation

struct UtteranceResult {
  std::string id;
  double ser_db = 0.0;
  double sisnri_db = 0.0;
  double erle_db = 0.0;
  double asr_loss = 0.0;
};

struct SerBucket {
  double ser_db = 0.0;
  int count = 0;
  double mean_sisnri_db = 0.0;
  double mean_erle_db = 0.0;
  double mean_asr_loss = 0.0;
};

struct EvalReport {
  SystemKind system = SystemKind::kNone;
  std::vector<UtteranceResult> utterances;
  std::vector<SerBucket> buckets;  // keyed by the manifest's nominal SER
  double mean_sisnri_db = 0.0;
  double mean_erle_db = 0.0;
  double mean_asr_loss = 0.0;
};

struct EvalOptions {
  SystemKind system = SystemKind::kNone;
  LinearAecConfig linear;
  const AecModel* model = nullptr;  // required for neural/cascade
  int jobs = 1;
  bool use_preamble_adaptation = true;
};

EvalReport evaluate(const std::vector<ManifestEntry>& manifest,
                    const EvalOptions& opts);

// Line-delimited per-utterance records plus a human-readable summary table.
void write_report(const EvalReport& report, const std::string& records_path,
                  const std::string& summary_path);
std::string format_report(const EvalReport& report);

// ---------------------------------------------------------------------------
// versioned key-value config files ("key value" lines, version required)

std::map<std::string, std::string> read_kv_config(const std::string& path);
TrainConfig train_config_from_kv(const std::map<std::string, std::string>& kv);

}  // namespace waveaec
