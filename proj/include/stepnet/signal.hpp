#pragma once

// Resampling to 15 Hz, 7-sample windowing and stance-foot labeling.

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "stepnet/error.hpp"
#include "stepnet/ingest.hpp"

namespace stepnet {

inline constexpr double kTargetRateHz = 15.0;
/// 0.4667 s at 15 Hz.
inline constexpr int kWindowLength = 7;
static_assert(kWindowLength == 7, "window length is fixed by 7/15 s at 15 Hz");

/// 7 rows (time steps) x 6 columns (ax, ay, az, gx, gy, gz).
struct Window {
  std::array<std::array<double, kChannels>, kWindowLength> x{};
  Foot label = Foot::Left;
  double t_center = 0.0;

  double operator()(int row, int col) const { return x[row][col]; }
};

struct WindowSet {
  std::string subject_id;
  std::vector<Window> windows;
  /// Step events inside [t_start, t_end); ground_truth_steps == events.size().
  std::vector<StepEvent> events;
  std::size_t ground_truth_steps = 0;
  double t_start = 0.0;
  double t_end = 0.0;
};

/// Linear-interpolation resample onto t_first + k / target_hz, k = 0, 1, ...
inline Recording resample(const Recording& rec, double target_hz = kTargetRateHz) {
  if (rec.samples.size() < 2) throw DataError("resample needs at least 2 samples");
  if (!(target_hz > 0.0)) throw ConfigError("target_hz must be > 0");
  const auto& src = rec.samples;
  const double t0 = src.front().t;
  const double span = src.back().t - t0;
  const double dt = 1.0 / target_hz;
  // relative slack so that k = span * hz lands on the last sample despite rounding
  auto count = static_cast<std::size_t>(std::floor(span * target_hz * (1.0 + 1e-12))) + 1;

  Recording out;
  out.subject_id = rec.subject_id;
  out.device = rec.device;
  out.events = rec.events;
  out.native_rate_hz = target_hz;
  out.samples.reserve(count);

  std::size_t j = 0;
  for (std::size_t k = 0; k < count; ++k) {
    const double t = t0 + static_cast<double>(k) * dt;
    while (j + 2 < src.size() && src[j + 1].t <= t) ++j;
    const auto& a = src[j];
    const auto& b = src[j + 1];
    double w = (t - a.t) / (b.t - a.t);
    w = std::clamp(w, 0.0, 1.0);
    SensorSample s;
    s.t = t;
    for (int c = 0; c < kChannels; ++c) {
      const double va = a.channel(c), vb = b.channel(c);
      s.set_channel(c, va == vb ? va : va + w * (vb - va));
    }
    out.samples.push_back(s);
  }
  return out;
}

/// Foot of the last event at or before t_center; the first event's foot if t_center precedes them all.
inline Foot label_window(std::span<const StepEvent> events, double t_center) {
  if (events.empty()) throw DataError("cannot label a window without step events");
  const auto it = std::upper_bound(events.begin(), events.end(), t_center,
                                   [](double t, const StepEvent& e) { return t < e.t; });
  if (it == events.begin()) return events.front().foot;
  return std::prev(it)->foot;
}

/// Non-overlapping 7-sample windows over a 15 Hz recording; the trailing remainder is dropped.
/// A recording without step events gives unlabeled windows (all Left, zero ground truth).
inline WindowSet make_windows(const Recording& rec15) {
  const auto& s = rec15.samples;
  if (s.size() < static_cast<std::size_t>(kWindowLength)) {
    throw DataError("need at least " + std::to_string(kWindowLength) + " samples to window");
  }
  const double dt = 1.0 / kTargetRateHz;
  for (std::size_t i = 1; i < s.size(); ++i) {
    if (std::abs((s[i].t - s[i - 1].t) - dt) > 1e-6) {
      throw DataError("make_windows expects a uniform 15 Hz recording");
    }
  }

  WindowSet ws;
  ws.subject_id = rec15.subject_id;
  const std::size_t n_windows = s.size() / kWindowLength;
  ws.windows.reserve(n_windows);
  for (std::size_t w = 0; w < n_windows; ++w) {
    Window win;
    const std::size_t base = w * kWindowLength;
    for (int r = 0; r < kWindowLength; ++r) {
      for (int c = 0; c < kChannels; ++c) win.x[r][c] = s[base + r].channel(c);
    }
    win.t_center = s[base + kWindowLength / 2].t;
    win.label = rec15.events.empty() ? Foot::Left : label_window(rec15.events, win.t_center);
    ws.windows.push_back(win);
  }
  ws.t_start = s.front().t;
  ws.t_end = s[n_windows * kWindowLength - 1].t + dt;
  for (const auto& e : rec15.events) {
    if (e.t >= ws.t_start && e.t < ws.t_end) ws.events.push_back(e);
  }
  ws.ground_truth_steps = ws.events.size();
  return ws;
}

/// resample + make_windows.
inline WindowSet prepare(const Recording& rec) { return make_windows(resample(rec)); }

}  // namespace stepnet
