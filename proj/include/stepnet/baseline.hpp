#pragma once

// PAA + merge step counter on the raw acceleration magnitude.

#include <cmath>
#include <span>
#include <vector>

#include "stepnet/error.hpp"
#include "stepnet/ingest.hpp"
#include "stepnet/signal.hpp"

namespace stepnet {

struct PaaConfig {
  int frame = 3;                // samples per PAA segment
  double peak_threshold = 0.05; // g above the global mean
  double merge_window_s = 0.25;

  void validate() const {
    if (frame < 1) throw ConfigError("PAA frame must be >= 1");
    if (!(merge_window_s >= 0.0)) throw ConfigError("merge window must be >= 0");
    if (!std::isfinite(peak_threshold)) throw ConfigError("peak threshold must be finite");
  }
};

/// Segment means over consecutive frames; a trailing partial frame is averaged over its own length.
inline std::vector<double> paa(std::span<const double> series, int frame) {
  if (series.empty()) throw DataError("PAA of an empty series");
  if (frame < 1) throw ConfigError("PAA frame must be >= 1");
  const auto f = static_cast<std::size_t>(frame);
  std::vector<double> out;
  out.reserve((series.size() + f - 1) / f);
  for (std::size_t i = 0; i < series.size(); i += f) {
    const std::size_t end = std::min(series.size(), i + f);
    double sum = 0.0;
    for (std::size_t j = i; j < end; ++j) sum += series[j];
    out.push_back(sum / static_cast<double>(end - i));
  }
  return out;
}

struct Peak {
  double t = 0.0;
  double value = 0.0;
  bool operator==(const Peak&) const = default;
};

/// Peaks closer than `window_s` to the last kept peak collapse into the larger one. Input sorted by t.
inline std::vector<Peak> merge_peaks(std::span<const Peak> peaks, double window_s) {
  std::vector<Peak> kept;
  for (const Peak& p : peaks) {
    if (!kept.empty() && p.t - kept.back().t < window_s) {
      if (p.value > kept.back().value) kept.back() = p;
    } else {
      kept.push_back(p);
    }
  }
  return kept;
}

/// Strict local maxima of `series` above mean(series) + threshold. Segment i is stamped at
/// its center time t0 + (i * frame + (frame - 1) / 2) * dt.
inline std::vector<Peak> find_peaks(std::span<const double> series, double threshold, double t0, double dt,
                                    int frame) {
  std::vector<Peak> peaks;
  if (series.size() < 3) return peaks;
  double mean = 0.0;
  for (double v : series) mean += v;
  mean /= static_cast<double>(series.size());
  const double level = mean + threshold;
  for (std::size_t i = 1; i + 1 < series.size(); ++i) {
    if (series[i] > series[i - 1] && series[i] > series[i + 1] && series[i] > level) {
      const double t = t0 + (static_cast<double>(i * static_cast<std::size_t>(frame)) + 0.5 * (frame - 1)) * dt;
      peaks.push_back({t, series[i]});
    }
  }
  return peaks;
}

inline std::vector<double> accel_magnitude(const Recording& rec) {
  std::vector<double> mag;
  mag.reserve(rec.samples.size());
  for (const auto& s : rec.samples) mag.push_back(std::sqrt(s.ax * s.ax + s.ay * s.ay + s.az * s.az));
  return mag;
}

/// magnitude -> PAA -> thresholded local maxima -> temporal merge -> count.
inline std::size_t baseline_count(const Recording& rec15, const PaaConfig& cfg = {}) {
  cfg.validate();
  if (rec15.samples.size() < 2) throw DataError("baseline needs a resampled recording");
  const double dt = 1.0 / kTargetRateHz;
  for (std::size_t i = 1; i < rec15.samples.size(); ++i) {
    if (std::abs((rec15.samples[i].t - rec15.samples[i - 1].t) - dt) > 1e-6) {
      throw DataError("baseline expects a uniform 15 Hz recording");
    }
  }
  const auto series = paa(accel_magnitude(rec15), cfg.frame);
  const auto peaks = find_peaks(series, cfg.peak_threshold, rec15.t_first(), dt, cfg.frame);
  return merge_peaks(peaks, cfg.merge_window_s).size();
}

}  // namespace stepnet
