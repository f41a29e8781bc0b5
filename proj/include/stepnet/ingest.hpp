#pragma once

// Sensor recordings: CSV loading/writing and the synthetic gait generator.

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "stepnet/error.hpp"
#include "stepnet/random.hpp"

namespace stepnet {

inline constexpr int kChannels = 6;

/// One 6-axis reading. Acceleration in g, angular rate in deg/s.
struct SensorSample {
  double t = 0.0;
  double ax = 0.0, ay = 0.0, az = 0.0;
  double gx = 0.0, gy = 0.0, gz = 0.0;

  double channel(int c) const {
    switch (c) {
      case 0: return ax;
      case 1: return ay;
      case 2: return az;
      case 3: return gx;
      case 4: return gy;
      default: return gz;
    }
  }
  void set_channel(int c, double v) {
    switch (c) {
      case 0: ax = v; break;
      case 1: ay = v; break;
      case 2: az = v; break;
      case 3: gx = v; break;
      case 4: gy = v; break;
      default: gz = v; break;
    }
  }
  bool operator==(const SensorSample&) const = default;
};

enum class Foot : std::uint8_t { Left = 0, Right = 1 };

inline char foot_char(Foot f) { return f == Foot::Left ? 'L' : 'R'; }
inline Foot other(Foot f) { return f == Foot::Left ? Foot::Right : Foot::Left; }

struct StepEvent {
  double t = 0.0;
  Foot foot = Foot::Left;
  bool operator==(const StepEvent&) const = default;
};

struct Recording {
  std::string subject_id;
  std::string device;
  std::vector<SensorSample> samples;
  std::vector<StepEvent> events;
  double native_rate_hz = 0.0;

  double t_first() const { return samples.front().t; }
  double t_last() const { return samples.back().t; }
  bool operator==(const Recording&) const = default;
};

/// Checks the Recording invariants; throws DataError on violation.
inline void validate(const Recording& rec) {
  if (rec.samples.empty()) throw DataError("recording '" + rec.subject_id + "' has no samples");
  if (!(rec.native_rate_hz > 0.0) || !std::isfinite(rec.native_rate_hz)) {
    throw DataError("recording '" + rec.subject_id + "' has non-positive sample rate");
  }
  for (const auto& s : rec.samples) {
    if (!std::isfinite(s.t) || s.t < 0.0) throw DataError("sample time must be finite and >= 0");
    for (int c = 0; c < kChannels; ++c) {
      if (!std::isfinite(s.channel(c))) throw DataError("non-finite channel value");
    }
  }
  for (std::size_t i = 0; i < rec.events.size(); ++i) {
    const double t = rec.events[i].t;
    if (t < rec.t_first() || t > rec.t_last()) {
      throw DataError("step event at t=" + std::to_string(t) + " lies outside the sample span");
    }
    if (i > 0 && !(t > rec.events[i - 1].t)) throw DataError("step events must be strictly increasing in t");
  }
}

// ---------------------------------------------------------------------------
// CSV I/O

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split(std::string_view line, char sep = ',') {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    out.push_back(trim(line.substr(start, pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline double parse_double(std::string_view field, std::size_t line) {
  double v = 0.0;
  if (!field.empty() && field.front() == '+') field.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || ptr != field.data() + field.size()) {
    throw ParseError("cannot parse number '" + std::string(field) + "'", line);
  }
  if (!std::isfinite(v)) throw ParseError("non-finite value '" + std::string(field) + "'", line);
  return v;
}

/// Shortest decimal (fixed notation) that parses back to the identical double.
inline std::string format_double(double v) {
  char buf[512];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::fixed);
  if (ec != std::errc()) throw Error("cannot format value");
  return std::string(buf, ptr);
}

inline std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

/// Write via a temporary file and rename so readers never see partial output.
inline void write_atomic(const std::filesystem::path& path, const std::string& content) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw DataError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace detail

inline constexpr std::string_view kSensorHeader = "t,ax,ay,az,gx,gy,gz";
inline constexpr std::string_view kAnnotationHeader = "t,foot";

/// Parse a sensor CSV. Samples are stable-sorted by t; repeated timestamps are rejected.
inline std::vector<SensorSample> load_samples(const std::filesystem::path& csv_path) {
  const auto lines = detail::read_lines(csv_path);
  if (lines.empty()) throw DataError("empty sensor file " + csv_path.string());
  if (detail::trim(lines[0]) != kSensorHeader) {
    throw ParseError("expected header '" + std::string(kSensorHeader) + "'", 1);
  }
  std::vector<SensorSample> samples;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (detail::trim(lines[i]).empty()) continue;
    const auto fields = detail::split(lines[i]);
    if (fields.size() != 7) {
      throw ParseError("expected 7 fields, got " + std::to_string(fields.size()), i + 1);
    }
    SensorSample s;
    s.t = detail::parse_double(fields[0], i + 1);
    if (s.t < 0.0) throw ParseError("negative timestamp", i + 1);
    for (int c = 0; c < kChannels; ++c) s.set_channel(c, detail::parse_double(fields[c + 1], i + 1));
    samples.push_back(s);
  }
  if (samples.empty()) throw DataError("sensor file " + csv_path.string() + " has no samples");
  std::stable_sort(samples.begin(), samples.end(),
                   [](const SensorSample& a, const SensorSample& b) { return a.t < b.t; });
  for (std::size_t i = 1; i < samples.size(); ++i) {
    if (!(samples[i].t > samples[i - 1].t)) {
      throw DataError("duplicate timestamp t=" + detail::format_double(samples[i].t) + " in " +
                      csv_path.string());
    }
  }
  return samples;
}

/// Parse an annotation CSV. Non-alternating feet are reported through `warnings`.
inline std::vector<StepEvent> load_events(const std::filesystem::path& annot_path,
                                          std::vector<std::string>* warnings = nullptr) {
  const auto lines = detail::read_lines(annot_path);
  if (lines.empty()) throw DataError("empty annotation file " + annot_path.string());
  if (detail::trim(lines[0]) != kAnnotationHeader) {
    throw ParseError("expected header '" + std::string(kAnnotationHeader) + "'", 1);
  }
  std::vector<StepEvent> events;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (detail::trim(lines[i]).empty()) continue;
    const auto fields = detail::split(lines[i]);
    if (fields.size() != 2) throw ParseError("expected 2 fields", i + 1);
    StepEvent e;
    e.t = detail::parse_double(fields[0], i + 1);
    if (fields[1] == "L") {
      e.foot = Foot::Left;
    } else if (fields[1] == "R") {
      e.foot = Foot::Right;
    } else {
      throw ParseError("foot must be L or R, got '" + std::string(fields[1]) + "'", i + 1);
    }
    if (!events.empty()) {
      if (!(e.t > events.back().t)) throw ParseError("step events must be strictly increasing", i + 1);
      if (e.foot == events.back().foot && warnings) {
        warnings->push_back("line " + std::to_string(i + 1) + ": consecutive steps with the same foot");
      }
    }
    events.push_back(e);
  }
  return events;
}

/// Load a sensor CSV plus its annotation CSV into a validated Recording.
inline Recording load_recording(const std::filesystem::path& csv_path,
                                const std::filesystem::path& annot_path, std::string subject_id,
                                std::string device, std::vector<std::string>* warnings = nullptr) {
  Recording rec;
  rec.subject_id = std::move(subject_id);
  rec.device = std::move(device);
  rec.samples = load_samples(csv_path);
  if (rec.samples.size() < 2) throw DataError("need at least 2 samples to estimate the sample rate");
  rec.events = load_events(annot_path, warnings);
  rec.native_rate_hz =
      static_cast<double>(rec.samples.size() - 1) / (rec.samples.back().t - rec.samples.front().t);
  validate(rec);
  return rec;
}

inline std::string samples_csv(const Recording& rec) {
  std::string out(kSensorHeader);
  out += '\n';
  for (const auto& s : rec.samples) {
    out += detail::format_double(s.t);
    for (int c = 0; c < kChannels; ++c) {
      out += ',';
      out += detail::format_double(s.channel(c));
    }
    out += '\n';
  }
  return out;
}

inline std::string events_csv(const Recording& rec) {
  std::string out(kAnnotationHeader);
  out += '\n';
  for (const auto& e : rec.events) {
    out += detail::format_double(e.t);
    out += ',';
    out += foot_char(e.foot);
    out += '\n';
  }
  return out;
}

/// Values are written in shortest round-trip fixed notation, so loading gives back the same doubles.
inline void write_recording(const Recording& rec, const std::filesystem::path& csv_path,
                            const std::filesystem::path& annot_path) {
  detail::write_atomic(csv_path, samples_csv(rec));
  detail::write_atomic(annot_path, events_csv(rec));
}

// ---------------------------------------------------------------------------
// Conversion of index-annotated datasets (e.g. the public Pedometer recordings)
//
// Input: a sensor file with one sample per line and six numeric columns
// (ax, ay, az in g; gx, gy, gz in deg/s), no timestamps, an optional non-numeric
// header line; and a step file with one zero-based sample index per line,
// optionally followed by ",L" or ",R". Sample k is stamped k / rate_hz. Steps
// without a foot column alternate starting from `first_foot`.

inline Recording convert_indexed(const std::filesystem::path& sensor_path,
                                 const std::filesystem::path& steps_path, double rate_hz,
                                 std::string subject_id, std::string device, Foot first_foot = Foot::Left,
                                 std::vector<std::string>* warnings = nullptr) {
  if (!(rate_hz > 0.0)) throw ConfigError("rate_hz must be > 0");
  auto is_header = [](std::string_view line) {
    const auto f = detail::trim(line);
    return !f.empty() && !(std::isdigit(static_cast<unsigned char>(f.front())) || f.front() == '-' ||
                           f.front() == '+' || f.front() == '.');
  };
  Recording rec;
  rec.subject_id = std::move(subject_id);
  rec.device = std::move(device);
  rec.native_rate_hz = rate_hz;

  const auto lines = detail::read_lines(sensor_path);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (detail::trim(lines[i]).empty() || (i == 0 && is_header(lines[i]))) continue;
    const auto fields = detail::split(lines[i]);
    if (fields.size() != 6) throw ParseError("expected 6 sensor columns", i + 1);
    SensorSample s;
    s.t = static_cast<double>(rec.samples.size()) / rate_hz;
    for (int c = 0; c < kChannels; ++c) s.set_channel(c, detail::parse_double(fields[c], i + 1));
    rec.samples.push_back(s);
  }
  if (rec.samples.size() < 2) throw DataError("need at least 2 samples in " + sensor_path.string());

  const auto step_lines = detail::read_lines(steps_path);
  Foot next = first_foot;
  for (std::size_t i = 0; i < step_lines.size(); ++i) {
    if (detail::trim(step_lines[i]).empty() || (i == 0 && is_header(step_lines[i]))) continue;
    const auto fields = detail::split(step_lines[i]);
    if (fields.empty() || fields.size() > 2) throw ParseError("expected 'index[,foot]'", i + 1);
    const double idx = detail::parse_double(fields[0], i + 1);
    if (idx < 0 || idx != std::floor(idx)) throw ParseError("step index must be a non-negative integer", i + 1);
    if (idx >= static_cast<double>(rec.samples.size())) throw DataError("step index beyond the last sample");
    Foot foot = next;
    if (fields.size() == 2) {
      if (fields[1] == "L") {
        foot = Foot::Left;
      } else if (fields[1] == "R") {
        foot = Foot::Right;
      } else {
        throw ParseError("foot must be L or R", i + 1);
      }
    }
    const double t = idx / rate_hz;
    if (!rec.events.empty()) {
      if (!(t > rec.events.back().t)) throw ParseError("step indices must be strictly increasing", i + 1);
      if (foot == rec.events.back().foot && warnings) {
        warnings->push_back("line " + std::to_string(i + 1) + ": consecutive steps with the same foot");
      }
    }
    rec.events.push_back({t, foot});
    next = other(foot);
  }
  validate(rec);
  return rec;
}

// ---------------------------------------------------------------------------
// Synthetic gait

struct SynthConfig {
  std::string subject_id = "synthetic";
  std::string device = "synthetic";
  double cadence_spm = 120.0;
  double duration_s = 60.0;
  double accel_amp = 0.3;   // g
  double gyro_amp = 40.0;   // deg/s
  double noise_sd = 0.05;   // fraction of amplitude
  double axis_rotation_deg = 0.0;
  double scale = 1.0;
  double sample_rate_hz = 100.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(cadence_spm > 0.0)) throw ConfigError("cadence_spm must be > 0");
    if (!(duration_s > 0.0)) throw ConfigError("duration_s must be > 0");
    if (!(sample_rate_hz >= 15.0)) throw ConfigError("sample_rate_hz must be >= 15");
    if (!(scale > 0.0)) throw ConfigError("scale must be > 0");
    if (!(noise_sd >= 0.0)) throw ConfigError("noise_sd must be >= 0");
    if (!(accel_amp >= 0.0) || !(gyro_amp >= 0.0)) throw ConfigError("amplitudes must be >= 0");
    if (!std::isfinite(axis_rotation_deg)) throw ConfigError("axis_rotation_deg must be finite");
    // foot strikes sit a quarter step after each step boundary; the last one must precede
    // the final sample
    if (0.75 * 60.0 / cadence_spm < 1.0 / sample_rate_hz) {
      throw ConfigError("cadence too high for the sample rate");
    }
  }
};

/// Deterministic wrist-IMU walk.
///
/// With f the step frequency (cadence/60) and A, G the accel/gyro amplitudes, the
/// clean body-frame signals are
///   az = 1 + A sin(2 pi f t)          vertical, one cycle per step
///   ax = 0.4 A sin(4 pi f t)          forward, second harmonic
///   ay = 0.25 A sin(pi f t)           lateral sway, one cycle per stride
///   gy = G sin(pi f t)                lateral gyro, sign tells the stance foot
///   gx = 2 G sin(2 pi f t)            step-rate wrist roll
///   gz = 0.3 G sin(2 pi f t)
/// Foot strikes are the peaks of az, t_k = (k + 1/4) / f, alternating L, R, L, ...
/// Horizontal axes are then rotated about z, every channel is multiplied by `scale`,
/// and Gaussian noise with sd = noise_sd * amplitude is added.
inline Recording synthesize(const SynthConfig& cfg) {
  cfg.validate();
  const double f = cfg.cadence_spm / 60.0;
  const double two_pi = 2.0 * std::numbers::pi;
  const double rot = cfg.axis_rotation_deg * std::numbers::pi / 180.0;
  const double cr = std::cos(rot), sr = std::sin(rot);
  const double A = cfg.accel_amp, G = cfg.gyro_amp;

  Recording rec;
  rec.subject_id = cfg.subject_id;
  rec.device = cfg.device;
  rec.native_rate_hz = cfg.sample_rate_hz;

  Rng rng(cfg.seed);
  const auto n = static_cast<std::size_t>(std::floor(cfg.duration_s * cfg.sample_rate_hz)) + 1;
  rec.samples.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double t = static_cast<double>(k) / cfg.sample_rate_hz;
    const double step_phase = two_pi * f * t;
    const double stride_phase = 0.5 * step_phase;
    double ax = 0.4 * A * std::sin(2.0 * step_phase);
    double ay = 0.25 * A * std::sin(stride_phase);
    const double az = 1.0 + A * std::sin(step_phase);
    double gx = 2.0 * G * std::sin(step_phase);
    double gy = G * std::sin(stride_phase);
    const double gz = 0.3 * G * std::sin(step_phase);

    SensorSample s;
    s.t = t;
    s.ax = cr * ax - sr * ay;
    s.ay = sr * ax + cr * ay;
    s.az = az;
    s.gx = cr * gx - sr * gy;
    s.gy = sr * gx + cr * gy;
    s.gz = gz;
    for (int c = 0; c < kChannels; ++c) {
      double v = s.channel(c) * cfg.scale;
      if (cfg.noise_sd > 0.0) v += rng.normal() * cfg.noise_sd * (c < 3 ? A : G);
      s.set_channel(c, v);
    }
    rec.samples.push_back(s);
  }

  const auto steps = static_cast<std::size_t>(std::floor(cfg.cadence_spm * cfg.duration_s / 60.0));
  rec.events.reserve(steps);
  for (std::size_t k = 0; k < steps; ++k) {
    rec.events.push_back({(static_cast<double>(k) + 0.25) / f, k % 2 == 0 ? Foot::Left : Foot::Right});
  }
  return rec;
}

/// JSON text echoing a SynthConfig, written next to synthetic recordings.
inline std::string synth_meta(const SynthConfig& cfg) {
  const nlohmann::ordered_json j = {{"subject_id", cfg.subject_id},
                                    {"device", cfg.device},
                                    {"cadence_spm", cfg.cadence_spm},
                                    {"duration_s", cfg.duration_s},
                                    {"accel_amp", cfg.accel_amp},
                                    {"gyro_amp", cfg.gyro_amp},
                                    {"noise_sd", cfg.noise_sd},
                                    {"axis_rotation_deg", cfg.axis_rotation_deg},
                                    {"scale", cfg.scale},
                                    {"sample_rate_hz", cfg.sample_rate_hz},
                                    {"seed", cfg.seed}};
  return j.dump(2) + "\n";
}

inline std::uint64_t hash_id(std::string_view id) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (unsigned char ch : id) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Per-subject variation: cadence uniform in [100, 130] spm, both amplitudes scaled by a
/// factor uniform in [0.8, 1.2]. Drawn from (seed, subject id) only.
inline SynthConfig subject_config(const std::string& subject_id, std::uint64_t seed, double duration_s,
                                  const SynthConfig& base = {}) {
  Rng rng(derive_seed(seed, hash_id(subject_id)));
  SynthConfig c = base;
  c.subject_id = subject_id;
  c.duration_s = duration_s;
  c.cadence_spm = rng.uniform(100.0, 130.0);
  c.accel_amp = base.accel_amp * rng.uniform(0.8, 1.2);
  c.gyro_amp = base.gyro_amp * rng.uniform(0.8, 1.2);
  c.seed = rng.next();
  return c;
}

/// A different device on the wrist: rotated about the vertical axis, rescaled, noisier.
struct DomainShift {
  double scale = 1.3;
  double rotation_deg = 20.0;
  double noise_factor = 2.0;
};

inline SynthConfig shifted(SynthConfig cfg, const DomainShift& shift = {}) {
  cfg.scale *= shift.scale;
  cfg.axis_rotation_deg += shift.rotation_deg;
  cfg.noise_sd *= shift.noise_factor;
  cfg.device = "shifted";
  return cfg;
}

}  // namespace stepnet
