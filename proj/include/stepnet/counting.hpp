#pragma once

// Step counting by label transitions, class/step accuracy, and per-subject evaluation.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "stepnet/error.hpp"
#include "stepnet/ingest.hpp"
#include "stepnet/signal.hpp"

namespace stepnet {

/// Number of adjacent label changes.
inline std::size_t count_steps(std::span<const Foot> labels) {
  std::size_t n = 0;
  for (std::size_t i = 1; i < labels.size(); ++i) n += labels[i] != labels[i - 1];
  return n;
}

struct ClassTally {
  std::size_t n_right_correct = 0;
  std::size_t n_left_correct = 0;
  std::size_t n_total = 0;

  double accuracy() const {
    return static_cast<double>(n_right_correct + n_left_correct) / static_cast<double>(n_total) * 100.0;
  }
};

inline ClassTally tally(std::span<const Foot> pred, std::span<const Foot> truth) {
  if (pred.size() != truth.size()) throw DataError("prediction and truth lengths differ");
  if (pred.empty()) throw DataError("cannot score an empty label sequence");
  ClassTally t;
  t.n_total = pred.size();
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] != truth[i]) continue;
    if (truth[i] == Foot::Right) {
      ++t.n_right_correct;
    } else {
      ++t.n_left_correct;
    }
  }
  return t;
}

/// (N_R + N_L) / N_T * 100.
inline double accuracy_class(std::span<const Foot> pred, std::span<const Foot> truth) {
  return tally(pred, truth).accuracy();
}

/// (1 - |predicted - truth| / truth) * 100. Not clamped; negative once predicted > 2 * truth.
inline double accuracy_steps(std::int64_t predicted, std::int64_t ground_truth) {
  if (ground_truth <= 0) throw DataError("ground-truth step count must be >= 1");
  if (predicted < 0) throw DataError("predicted step count must be >= 0");
  const double diff = std::abs(static_cast<double>(predicted - ground_truth));
  return (1.0 - diff / static_cast<double>(ground_truth)) * 100.0;
}

struct MetricsReport {
  std::string subject_id;
  std::size_t n_right_correct = 0;
  std::size_t n_left_correct = 0;
  std::size_t n_total = 0;
  std::size_t steps_predicted = 0;
  std::size_t steps_ground_truth = 0;
  double accuracy_class = 0.0;
  double accuracy_steps = 0.0;
};

/// Builds a report from predicted labels over `ws` (same order as ws.windows).
inline MetricsReport score(const WindowSet& ws, std::span<const Foot> predicted) {
  if (ws.windows.empty()) throw DataError("cannot evaluate an empty window set");
  std::vector<Foot> truth;
  truth.reserve(ws.windows.size());
  for (const auto& w : ws.windows) truth.push_back(w.label);
  const ClassTally t = tally(predicted, truth);

  MetricsReport r;
  r.subject_id = ws.subject_id;
  r.n_right_correct = t.n_right_correct;
  r.n_left_correct = t.n_left_correct;
  r.n_total = t.n_total;
  r.accuracy_class = t.accuracy();
  r.steps_predicted = count_steps(predicted);
  r.steps_ground_truth = ws.ground_truth_steps;
  r.accuracy_steps = accuracy_steps(static_cast<std::int64_t>(r.steps_predicted),
                                    static_cast<std::int64_t>(r.steps_ground_truth));
  return r;
}

/// Anything that maps a time-ordered run of windows to one label per window.
template <class C>
concept WindowClassifier = requires(const C& c, std::span<const Window> w) {
  { c.predict(w) } -> std::convertible_to<std::vector<Foot>>;
};

/// Inference over the windows of one subject in time order.
template <WindowClassifier C>
MetricsReport evaluate(const C& net, const WindowSet& ws) {
  if (ws.windows.empty()) throw DataError("cannot evaluate an empty window set");
  for (std::size_t i = 1; i < ws.windows.size(); ++i) {
    if (!(ws.windows[i].t_center > ws.windows[i - 1].t_center)) {
      throw DataError("windows must be in time order");
    }
  }
  const std::vector<Foot> pred = net.predict(std::span<const Window>(ws.windows));
  return score(ws, pred);
}

/// Median; the mean of the two middle values for even sizes.
inline double median(std::vector<double> v) {
  if (v.empty()) throw DataError("median of empty set");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline double mean(std::span<const double> v) {
  if (v.empty()) throw DataError("mean of empty set");
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace stepnet
