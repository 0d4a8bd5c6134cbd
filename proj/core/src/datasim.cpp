#include "waveaec/datasim.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "waveaec/fft.hpp"
#include "waveaec/wav_io.hpp"

namespace fs = std::filesystem;

namespace waveaec {

namespace {

constexpr double kSpeedOfSound = 343.0;

struct Vec3 {
  double x, y, z;
};

double dist(const Vec3& a, const Vec3& b) {
  const double dx = a.x - b.x, dy = a.y - b.y, dz = a.z - b.z;
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

}  // namespace

Rir generate_rir(double rt60_ms, double distance_m, uint64_t seed) {
  if (distance_m < 0.1 || distance_m > 6.0)
    throw DataError("generate_rir: distance_m out of [0.1, 6]");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> side(3.0, 8.0);
  const Vec3 room{side(rng), side(rng), side(rng)};

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto place_inside = [&](double margin) {
    return Vec3{margin + unit(rng) * (room.x - 2 * margin),
                margin + unit(rng) * (room.y - 2 * margin),
                margin + unit(rng) * (room.z - 2 * margin)};
  };
  const Vec3 mic = place_inside(0.5);
  // source at the requested distance in a random direction, clamped inside
  Vec3 src;
  for (int attempt = 0;; ++attempt) {
    const double theta = 2.0 * M_PI * unit(rng);
    const double phi = std::acos(2.0 * unit(rng) - 1.0);
    src = {mic.x + distance_m * std::sin(phi) * std::cos(theta),
           mic.y + distance_m * std::sin(phi) * std::sin(theta),
           mic.z + distance_m * std::cos(phi)};
    const bool inside = src.x > 0.1 && src.x < room.x - 0.1 && src.y > 0.1 &&
                        src.y < room.y - 0.1 && src.z > 0.1 &&
                        src.z < room.z - 0.1;
    if (inside || attempt > 200) break;
  }

  Rir rir;
  rir.rt60_ms = rt60_ms;
  rir.source_distance_m = distance_m;

  const double d_direct = std::max(dist(mic, src), 1e-3);
  const std::size_t direct_delay =
      std::size_t(std::lround(d_direct / kSpeedOfSound * kSampleRate));

  if (rt60_ms == 0.0) {  // anechoic flag
    rir.taps.assign(direct_delay + 1, 0.0);
    rir.taps[direct_delay] = 1.0;
    return rir;
  }
  if (rt60_ms < 100.0 || rt60_ms > 900.0)
    throw DataError("generate_rir: rt60_ms out of [100, 900]");

  const double rt60 = rt60_ms / 1000.0;
  const double volume = room.x * room.y * room.z;
  const double surface =
      2.0 * (room.x * room.y + room.x * room.z + room.y * room.z);
  // Eyring inversion for a frequency-independent reflection coefficient
  const double beta = std::exp(-0.1611 * volume / (surface * rt60) / 2.0);

  const double max_dist = kSpeedOfSound * rt60 + d_direct;
  const std::size_t len =
      std::size_t(std::ceil(max_dist / kSpeedOfSound * kSampleRate)) + 1;
  rir.taps.assign(len, 0.0);

  const int nx = int(std::ceil(max_dist / (2.0 * room.x))) + 1;
  const int ny = int(std::ceil(max_dist / (2.0 * room.y))) + 1;
  const int nz = int(std::ceil(max_dist / (2.0 * room.z))) + 1;
  for (int qx = -nx; qx <= nx; ++qx)
    for (int px = 0; px < 2; ++px) {
      const double ix = (px ? -src.x : src.x) + 2.0 * qx * room.x;
      const double refl_x = std::abs(qx - px) + std::abs(qx);
      for (int qy = -ny; qy <= ny; ++qy)
        for (int py = 0; py < 2; ++py) {
          const double iy = (py ? -src.y : src.y) + 2.0 * qy * room.y;
          const double refl_xy = refl_x + std::abs(qy - py) + std::abs(qy);
          for (int qz = -nz; qz <= nz; ++qz)
            for (int pz = 0; pz < 2; ++pz) {
              const double iz = (pz ? -src.z : src.z) + 2.0 * qz * room.z;
              const double refl = refl_xy + std::abs(qz - pz) + std::abs(qz);
              const double d = std::max(dist(mic, {ix, iy, iz}), 1e-3);
              if (d > max_dist) continue;
              const std::size_t tap =
                  std::size_t(std::lround(d / kSpeedOfSound * kSampleRate));
              if (tap >= len) continue;
              rir.taps[tap] += std::pow(beta, refl) / (4.0 * M_PI * d);
            }
        }
    }

  // The uniform-reflection image model decays somewhat slower than the
  // Eyring target. Measure the realized decay and reshape the tail
  // exponentially (anchored at the direct path) until it matches.
  for (int iter = 0; iter < 2; ++iter) {
    const double measured_ms = measure_rt60_ms(rir);
    if (measured_ms <= 0.0) break;
    const double gamma =
        3.0 * std::log(10.0) *
        (1000.0 / rt60_ms - 1000.0 / measured_ms);  // amplitude rate, 1/s
    for (std::size_t i = 0; i < rir.taps.size(); ++i) {
      const double dt = (double(i) - double(direct_delay)) / kSampleRate;
      rir.taps[i] *= std::exp(-gamma * dt);
    }
  }

  // unit direct-path gain
  const double direct_amp = 1.0 / (4.0 * M_PI * d_direct);
  for (double& t : rir.taps) t /= direct_amp;
  return rir;
}

double measure_rt60_ms(const Rir& rir) {
  const std::size_t n = rir.taps.size();
  if (n == 0) return 0.0;
  // Schroeder backward integration
  std::vector<double> edc(n);
  double acc = 0.0;
  for (std::size_t i = n; i-- > 0;) {
    acc += rir.taps[i] * rir.taps[i];
    edc[i] = acc;
  }
  const double total = edc[0];
  if (total <= 0.0) return 0.0;
  auto time_to_db = [&](double db) -> double {
    const double thresh = total * std::pow(10.0, db / 10.0);
    for (std::size_t i = 0; i < n; ++i)
      if (edc[i] <= thresh) return double(i) / kSampleRate;
    return double(n) / kSampleRate;
  };
  const double t5 = time_to_db(-5.0);
  const double t35 = time_to_db(-35.0);
  if (t35 <= t5) return 0.0;
  return (t35 - t5) * (60.0 / 30.0) * 1000.0;
}

Waveform convolve(const Waveform& x, const std::vector<double>& taps) {
  if (taps.empty() || x.size() == 0) return Waveform::zeros(x.size());
  const std::size_t out_len = x.size() + taps.size() - 1;
  const std::size_t nfft = next_pow2(out_len);
  std::vector<std::complex<double>> a(nfft), b(nfft);
  for (std::size_t i = 0; i < x.size(); ++i) a[i] = x.samples[i];
  for (std::size_t i = 0; i < taps.size(); ++i) b[i] = taps[i];
  fft_inplace(a, false);
  fft_inplace(b, false);
  for (std::size_t i = 0; i < nfft; ++i) a[i] *= b[i];
  fft_inplace(a, true);
  Waveform out = Waveform::zeros(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out.samples[i] = a[i].real();
  return out;
}

Waveform soft_clip(const Waveform& x, double drive) {
  if (drive <= 0.0) return x;
  Waveform out = x;
  for (double& v : out.samples) v = std::tanh(drive * v) / drive;
  return out;
}

double active_power(const Waveform& w, std::size_t begin, std::size_t end) {
  constexpr std::size_t kFrame = 320;  // 20 ms
  constexpr double kThreshDb = -60.0;
  end = std::min(end, w.size());
  const double thresh_power = std::pow(10.0, kThreshDb / 10.0);
  double acc = 0.0;
  std::size_t count = 0;
  for (std::size_t start = begin; start + kFrame <= end; start += kFrame) {
    double p = 0.0;
    for (std::size_t i = start; i < start + kFrame; ++i)
      p += w.samples[i] * w.samples[i];
    p /= double(kFrame);
    if (p > thresh_power) {
      acc += p * double(kFrame);
      count += kFrame;
    }
  }
  return count == 0 ? 0.0 : acc / double(count);
}

Example mix(const MixtureSpec& spec) {
  if (spec.target.size() == 0 || spec.reference.size() == 0)
    throw DataError("mix: empty target or reference");

  const std::size_t preamble =
      std::size_t(std::lround(spec.preamble_ms / 1000.0 * kSampleRate));
  const std::size_t total = preamble + spec.target.size();

  // reference playback covers the whole example; tile when too short
  Waveform ref_full = Waveform::zeros(total);
  for (std::size_t i = 0; i < total; ++i)
    ref_full.samples[i] = spec.reference.samples[i % spec.reference.size()];

  Waveform target_reverb = convolve(spec.target, spec.target_rir.taps);
  Waveform target_shifted = Waveform::zeros(total);
  for (std::size_t i = 0; i < spec.target.size(); ++i)
    target_shifted.samples[preamble + i] = target_reverb.samples[i];

  Waveform echo =
      convolve(soft_clip(ref_full, spec.nonlinear_drive), spec.echo_rir.taps);

  // scale the echo so target/echo active power over the overlap region hits
  // the requested SER
  const double p_target = active_power(target_shifted, preamble, total);
  const double p_echo = active_power(echo, preamble, total);
  if (p_target <= 0.0) throw DataError("mix: silent target, cannot set SER");
  if (p_echo <= 0.0) throw DataError("mix: silent reference, cannot set SER");
  const double gain =
      std::sqrt(p_target / p_echo * std::pow(10.0, -spec.ser_db / 10.0));
  for (double& v : echo.samples) v *= gain;

  Waveform noise = Waveform::zeros(total);
  if (spec.noise.has_value() && spec.snr_db.has_value()) {
    const Waveform& src = *spec.noise;
    if (src.size() == 0) throw DataError("mix: empty noise waveform");
    for (std::size_t i = 0; i < total; ++i)
      noise.samples[i] = src.samples[i % src.size()];
    const double p_noise = active_power(noise, 0, total);
    if (p_noise > 0.0) {
      const double ngain =
          std::sqrt(p_target / p_noise * std::pow(10.0, -*spec.snr_db / 10.0));
      for (double& v : noise.samples) v *= ngain;
    }
  }

  Example ex;
  ex.mixture = Waveform::zeros(total);
  for (std::size_t i = 0; i < total; ++i)
    ex.mixture.samples[i] =
        target_shifted.samples[i] + echo.samples[i] + noise.samples[i];
  ex.reference = std::move(ref_full);
  ex.target_reverberant = std::move(target_shifted);
  ex.echo = std::move(echo);
  ex.noise = std::move(noise);
  ex.meta.ser_db = spec.ser_db;
  ex.meta.snr_db = spec.snr_db;
  ex.meta.preamble_ms = spec.preamble_ms;
  ex.meta.nonlinear_drive = spec.nonlinear_drive;
  ex.meta.seed = spec.seed;
  {
    const double pt = active_power(ex.target_reverberant, preamble, total);
    const double pe = active_power(ex.echo, preamble, total);
    ex.meta.measured_ser_db = 10.0 * std::log10(pt / pe);
  }
  return ex;
}

// ---------------------------------------------------------------------------
// manifests

namespace {

std::string fmt_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find('\t', start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

std::vector<std::string> list_wavs(const fs::path& dir) {
  std::vector<std::string> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".wav")
      out.push_back(entry.path().string());
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

void write_manifest(const std::string& path,
                    const std::vector<ManifestEntry>& entries) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError("cannot write manifest: " + path);
  for (const auto& e : entries) {
    os << e.id << '\t' << e.mixture_path << '\t' << e.reference_path << '\t'
       << e.target_path << '\t' << fmt_double(e.ser_db) << '\t'
       << fmt_double(e.preamble_ms) << '\t' << e.seed << '\t'
       << fmt_double(e.rt60_ms) << '\t' << fmt_double(e.nonlinear_drive)
       << '\t' << (e.snr_db ? fmt_double(*e.snr_db) : std::string("-"))
       << '\n';
  }
}

std::vector<ManifestEntry> read_manifest(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot read manifest: " + path);
  std::vector<ManifestEntry> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    auto f = split_tabs(line);
    if (f.size() != 10)
      throw DataError("manifest: expected 10 fields, got " +
                      std::to_string(f.size()) + " in: " + line);
    ManifestEntry e;
    e.id = f[0];
    e.mixture_path = f[1];
    e.reference_path = f[2];
    e.target_path = f[3];
    e.ser_db = std::stod(f[4]);
    e.preamble_ms = std::stod(f[5]);
    e.seed = std::stoull(f[6]);
    e.rt60_ms = std::stod(f[7]);
    e.nonlinear_drive = std::stod(f[8]);
    if (f[9] != "-") e.snr_db = std::stod(f[9]);
    out.push_back(std::move(e));
  }
  return out;
}

void write_recipes(const std::string& path,
                   const std::vector<RecipeEntry>& entries) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError("cannot write recipe manifest: " + path);
  for (const auto& e : entries)
    os << e.target_path << '\t' << e.reference_path << '\t'
       << (e.noise_path.empty() ? "-" : e.noise_path) << '\t'
       << fmt_double(e.ser_db) << '\t' << fmt_double(e.preamble_ms) << '\t'
       << e.seed << '\n';
}

std::vector<RecipeEntry> read_recipes(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot read recipe manifest: " + path);
  std::vector<RecipeEntry> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    auto f = split_tabs(line);
    if (f.size() != 6)
      throw DataError("recipe manifest: expected 6 fields in: " + line);
    RecipeEntry e;
    e.target_path = f[0];
    e.reference_path = f[1];
    e.noise_path = f[2] == "-" ? "" : f[2];
    e.ser_db = std::stod(f[3]);
    e.preamble_ms = std::stod(f[4]);
    e.seed = std::stoull(f[5]);
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<RecipeEntry> build_manifest(const std::string& corpus_dir,
                                        const SimConfig& cfg, uint64_t seed) {
  const auto targets = list_wavs(fs::path(corpus_dir) / "target");
  const auto references = list_wavs(fs::path(corpus_dir) / "reference");
  const auto noises = list_wavs(fs::path(corpus_dir) / "noise");
  if (targets.empty() || references.empty())
    throw DataError("build_manifest: empty corpus under " + corpus_dir);

  std::mt19937_64 rng(seed);
  const int count = cfg.count > 0
                        ? cfg.count
                        : int(targets.size() *
                              std::max<std::size_t>(1, cfg.ser_list.size()));
  std::vector<RecipeEntry> out;
  out.reserve(std::size_t(count));
  std::uniform_real_distribution<double> ser_dist(cfg.ser_min, cfg.ser_max);
  for (int i = 0; i < count; ++i) {
    RecipeEntry e;
    e.target_path = targets[std::size_t(i) % targets.size()];
    e.reference_path =
        references[rng() % references.size()];
    if (!noises.empty() && cfg.snr_db.has_value())
      e.noise_path = noises[rng() % noises.size()];
    e.ser_db = cfg.ser_list.empty()
                   ? ser_dist(rng)
                   : cfg.ser_list[std::size_t(i) % cfg.ser_list.size()];
    e.preamble_ms = cfg.preamble_ms;
    e.seed = rng();
    out.push_back(std::move(e));
  }
  // deterministic shuffle
  std::shuffle(out.begin(), out.end(), rng);
  return out;
}

std::vector<ManifestEntry> simulate_corpus(const std::string& corpus_dir,
                                           const std::string& out_dir,
                                           const SimConfig& cfg,
                                           uint64_t seed) {
  const auto recipes = build_manifest(corpus_dir, cfg, seed);
  fs::create_directories(out_dir);
  std::vector<ManifestEntry> entries;
  entries.reserve(recipes.size());
  for (std::size_t i = 0; i < recipes.size(); ++i) {
    const auto& r = recipes[i];
    MixtureSpec spec;
    spec.target = read_wav(r.target_path);
    spec.reference = read_wav(r.reference_path);
    if (!r.noise_path.empty()) {
      spec.noise = read_wav(r.noise_path);
      spec.snr_db = cfg.snr_db;
    }
    spec.seed = r.seed;
    spec.ser_db = r.ser_db;
    spec.preamble_ms = r.preamble_ms;
    spec.nonlinear_drive = cfg.nonlinear_drive;
    spec.target_rir = generate_rir(cfg.rt60_ms, 2.0, r.seed);
    spec.echo_rir = generate_rir(cfg.echo_rt60_ms, 0.3, r.seed ^ 0x9E3779B9ull);
    Example ex = mix(spec);

    char id[16];
    std::snprintf(id, sizeof(id), "ex%05zu", i);
    ManifestEntry m;
    m.id = id;
    const fs::path base = fs::path(out_dir) / id;
    m.mixture_path = base.string() + ".mix.wav";
    m.reference_path = base.string() + ".ref.wav";
    m.target_path = base.string() + ".tgt.wav";
    write_wav(m.mixture_path, ex.mixture, WavEncoding::kFloat32);
    write_wav(m.reference_path, ex.reference, WavEncoding::kFloat32);
    write_wav(m.target_path, ex.target_reverberant, WavEncoding::kFloat32);
    m.ser_db = r.ser_db;
    m.preamble_ms = r.preamble_ms;
    m.seed = r.seed;
    m.rt60_ms = cfg.rt60_ms;
    m.nonlinear_drive = cfg.nonlinear_drive;
    m.snr_db = spec.snr_db;
    entries.push_back(m);

    std::ofstream meta(base.string() + ".meta", std::ios::trunc);
    meta << "id " << id << "\nser_db " << fmt_double(r.ser_db)
         << "\nmeasured_ser_db " << fmt_double(ex.meta.measured_ser_db)
         << "\npreamble_ms " << fmt_double(r.preamble_ms) << "\nseed "
         << r.seed << "\nrt60_ms " << fmt_double(cfg.rt60_ms)
         << "\nnonlinear_drive " << fmt_double(cfg.nonlinear_drive) << "\n";
  }
  write_manifest((fs::path(out_dir) / "manifest.tsv").string(), entries);
  return entries;
}

}  // namespace waveaec
