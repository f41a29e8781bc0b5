#pragma once

// StepNet: LSTM(256) -> dense 512 (ReLU, dropout) -> dense 256 (ReLU, dropout) -> dense 2 -> softmax.
// Training, leave-two-subject-out cross-validation, two-step adaptation and model files.

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <future>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "stepnet/counting.hpp"
#include "stepnet/error.hpp"
#include "stepnet/ingest.hpp"
#include "stepnet/nn.hpp"
#include "stepnet/random.hpp"
#include "stepnet/signal.hpp"

namespace stepnet {

struct NetShape {
  int input = kChannels;
  int hidden = 256;
  int fc1 = 512;
  int fc2 = 256;
  int classes = 2;

  bool operator==(const NetShape&) const = default;
  std::string str() const {
    return std::to_string(input) + "-" + std::to_string(hidden) + "-" + std::to_string(fc1) + "-" +
           std::to_string(fc2) + "-" + std::to_string(classes);
  }
};

inline constexpr double kDefaultDropout = 0.3;

/// Parameter gradients mirroring StepNet's parameter arrays.
struct GradientTape {
  LstmParams lstm;
  DenseParams fc1, fc2, head;

  template <class F>
  void visit(F&& f) {
    lstm.visit(f);
    fc1.visit("fc1", f);
    fc2.visit("fc2", f);
    head.visit("head", f);
  }
  template <class F>
  void visit(F&& f) const {
    lstm.visit(f);
    fc1.visit("fc1", f);
    fc2.visit("fc2", f);
    head.visit("head", f);
  }
};

/// Dense layers only, used while the LSTM is frozen.
struct DenseView {
  DenseParams* fc1;
  DenseParams* fc2;
  DenseParams* head;

  template <class F>
  void visit(F&& f) {
    fc1->visit("fc1", f);
    fc2->visit("fc2", f);
    head->visit("head", f);
  }
  template <class F>
  void visit(F&& f) const {
    const_cast<DenseView*>(this)->visit([&](std::string_view name, std::span<double> s) {
      f(name, std::span<const double>(s));
    });
  }
};

struct ForwardCache {
  LstmCache lstm;
  Matrix h;             // hidden x B
  Matrix a1, mask1, d1; // fc1 output, dropout mask, dropped output
  Matrix a2, mask2, d2;
  Matrix probs;         // classes x B
};

struct StepNet {
  NetShape shape;
  LstmParams lstm;
  DenseParams fc1, fc2, head;
  double dropout_rate = kDefaultDropout;
  std::uint64_t seed = 0;
  std::string lineage = "init";

  static StepNet zeros(const NetShape& shape = {}, double dropout_rate = kDefaultDropout) {
    StepNet n;
    n.shape = shape;
    n.lstm = LstmParams::zeros(shape.input, shape.hidden);
    n.fc1 = DenseParams::zeros(shape.hidden, shape.fc1);
    n.fc2 = DenseParams::zeros(shape.fc1, shape.fc2);
    n.head = DenseParams::zeros(shape.fc2, shape.classes);
    n.dropout_rate = dropout_rate;
    return n;
  }

  static StepNet init(std::uint64_t seed, const NetShape& shape = {}, double dropout_rate = kDefaultDropout) {
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ConfigError("dropout rate must lie in [0, 1)");
    Rng rng(seed);
    StepNet n;
    n.shape = shape;
    n.lstm = LstmParams::init(shape.input, shape.hidden, rng);
    n.fc1 = DenseParams::init(shape.hidden, shape.fc1, rng);
    n.fc2 = DenseParams::init(shape.fc1, shape.fc2, rng);
    n.head = DenseParams::init(shape.fc2, shape.classes, rng);
    n.dropout_rate = dropout_rate;
    n.seed = seed;
    n.lineage = "init(seed=" + std::to_string(seed) + ")";
    return n;
  }

  template <class F>
  void visit(F&& f) {
    lstm.visit(f);
    fc1.visit("fc1", f);
    fc2.visit("fc2", f);
    head.visit("head", f);
  }
  template <class F>
  void visit(F&& f) const {
    lstm.visit(f);
    fc1.visit("fc1", f);
    fc2.visit("fc2", f);
    head.visit("head", f);
  }

  DenseView dense() { return {&fc1, &fc2, &head}; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    visit([&](std::string_view, std::span<const double> s) { n += s.size(); });
    return n;
  }

  void check() const {
    lstm.check_shapes(shape.input, shape.hidden);
    detail::require_shape(fc1.W, shape.fc1, shape.hidden, "fc1.W");
    detail::require_shape(fc2.W, shape.fc2, shape.fc1, "fc2.W");
    detail::require_shape(head.W, shape.classes, shape.fc2, "head.W");
    if (fc1.b.size() != shape.fc1 || fc2.b.size() != shape.fc2 || head.b.size() != shape.classes) {
      throw ShapeError("dense bias size mismatch");
    }
  }

  /// Parameters only; seed and lineage are metadata.
  bool same_parameters(const StepNet& o) const {
    return shape == o.shape && lstm == o.lstm && fc1 == o.fc1 && fc2 == o.fc2 && head == o.head &&
           dropout_rate == o.dropout_rate;
  }

  std::vector<Foot> predict(std::span<const Window> windows) const;
};

// ---------------------------------------------------------------------------
// Forward / backward

/// Column b of step t holds row t of window b.
inline std::vector<Matrix> window_steps(std::span<const Window* const> batch) {
  std::vector<Matrix> steps(kWindowLength, Matrix(kChannels, static_cast<Eigen::Index>(batch.size())));
  for (std::size_t b = 0; b < batch.size(); ++b) {
    for (int t = 0; t < kWindowLength; ++t) {
      for (int c = 0; c < kChannels; ++c) steps[t](c, static_cast<Eigen::Index>(b)) = batch[b]->x[t][c];
    }
  }
  return steps;
}

inline Matrix softmax_columns(const Matrix& logits) {
  Matrix p(logits.rows(), logits.cols());
  for (Eigen::Index b = 0; b < logits.cols(); ++b) {
    const double zmax = logits.col(b).maxCoeff();
    Vector e = (logits.col(b).array() - zmax).exp().matrix();
    p.col(b) = e / e.sum();
  }
  return p;
}

/// Forward pass over a sequence of input steps (input x B each); returns class probabilities (classes x B).
inline Matrix forward_steps(const StepNet& net, std::span<const Matrix> steps, bool training, Rng& rng,
                            ForwardCache* cache = nullptr) {
  if (steps.empty()) throw ShapeError("forward needs at least one time step");
  const Eigen::Index B = steps.front().cols();
  const Matrix zero = Matrix::Zero(net.shape.hidden, B);
  ForwardCache local;
  ForwardCache& fc = cache ? *cache : local;
  fc.h = lstm_forward(net.lstm, steps, zero, zero, cache ? &fc.lstm : nullptr);
  fc.a1 = dense_forward(net.fc1, fc.h, Activation::Relu);
  fc.d1 = dropout(fc.a1, net.dropout_rate, rng, training, &fc.mask1);
  fc.a2 = dense_forward(net.fc2, fc.d1, Activation::Relu);
  fc.d2 = dropout(fc.a2, net.dropout_rate, rng, training, &fc.mask2);
  const Matrix logits = dense_forward(net.head, fc.d2, Activation::None);
  fc.probs = softmax_columns(logits);
  detail::require_finite(fc.probs, "class probabilities");
  return fc.probs;
}

/// Batch of windows; returns class probabilities (classes x B).
inline Matrix forward_batch(const StepNet& net, std::span<const Window* const> batch, bool training, Rng& rng,
                            ForwardCache* cache = nullptr) {
  if (net.shape.input != kChannels) throw ShapeError("network input width must be 6 to consume windows");
  const std::vector<Matrix> steps = window_steps(batch);
  return forward_steps(net, steps, training, rng, cache);
}

struct ForwardResult {
  Vector probs;
  ForwardCache cache;
};

/// Single window.
inline ForwardResult forward(const StepNet& net, const Window& w, bool training, Rng& rng) {
  const Window* p = &w;
  ForwardResult r;
  r.probs = forward_batch(net, std::span<const Window* const>(&p, 1), training, rng, &r.cache).col(0);
  return r;
}

inline int class_index(Foot f) { return f == Foot::Left ? 0 : 1; }

/// Ties go to Left.
inline Foot argmax_foot(double p_left, double p_right) { return p_right > p_left ? Foot::Right : Foot::Left; }

struct BackwardResult {
  GradientTape tape;
  double loss_sum = 0.0;  // summed cross-entropy over the batch
};

/// Gradients of the summed cross-entropy over the batch. With `lstm_grads` false the LSTM
/// part of the tape is left zero and BPTT is skipped.
inline BackwardResult backward(const StepNet& net, const ForwardCache& fc, std::span<const int> labels,
                               bool lstm_grads = true) {
  const Eigen::Index B = fc.probs.cols();
  if (static_cast<Eigen::Index>(labels.size()) != B) throw ShapeError("label count does not match batch");
  BackwardResult out;
  Matrix dlogits = fc.probs;
  for (Eigen::Index b = 0; b < B; ++b) {
    const int y = labels[static_cast<std::size_t>(b)];
    if (y < 0 || y >= net.shape.classes) throw ShapeError("label out of range");
    out.loss_sum -= std::log(std::max(fc.probs(y, b), 1e-300));
    dlogits(y, b) -= 1.0;
  }
  // the head has no activation, so its own output is not needed
  DenseGradients gh;
  gh.params.W = dlogits * fc.d2.transpose();
  gh.params.b = dlogits.rowwise().sum();
  gh.dx = net.head.W.transpose() * dlogits;
  DenseGradients g2 = dense_backward(net.fc2, fc.d1, fc.a2, gh.dx.cwiseProduct(fc.mask2), Activation::Relu);
  DenseGradients g1 = dense_backward(net.fc1, fc.h, fc.a1, g2.dx.cwiseProduct(fc.mask1), Activation::Relu);

  out.tape.fc1 = std::move(g1.params);
  out.tape.fc2 = std::move(g2.params);
  out.tape.head = std::move(gh.params);
  if (lstm_grads) {
    out.tape.lstm = lstm_backward(net.lstm, fc.lstm, g1.dx, /*want_input_grad=*/false).params;
  } else {
    out.tape.lstm = LstmParams::zeros(net.shape.input, net.shape.hidden);
  }
  return out;
}

inline constexpr std::size_t kInferenceBatch = 256;

inline std::vector<Foot> StepNet::predict(std::span<const Window> windows) const {
  std::vector<Foot> out;
  out.reserve(windows.size());
  Rng unused(0);
  std::vector<const Window*> ptrs;
  for (std::size_t start = 0; start < windows.size(); start += kInferenceBatch) {
    const std::size_t end = std::min(windows.size(), start + kInferenceBatch);
    ptrs.clear();
    for (std::size_t i = start; i < end; ++i) ptrs.push_back(&windows[i]);
    const Matrix probs = forward_batch(*this, ptrs, false, unused);
    for (Eigen::Index b = 0; b < probs.cols(); ++b) out.push_back(argmax_foot(probs(0, b), probs(1, b)));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Training

struct TrainConfig {
  int epochs = 12;
  double lr = 0.05;
  int batch_size = 16;
  std::uint64_t seed = 1;
  double clip = 5.0;
  double dropout_rate = kDefaultDropout;

  void validate() const {
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (!(lr > 0.0)) throw ConfigError("lr must be > 0");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!(clip > 0.0)) throw ConfigError("clip must be > 0");
  }
};

struct LabeledWindow {
  const Window* window;
  int label;
};

inline std::vector<LabeledWindow> pool(std::span<const WindowSet> sets) {
  std::vector<LabeledWindow> out;
  for (const auto& ws : sets) {
    for (const auto& w : ws.windows) out.push_back({&w, class_index(w.label)});
  }
  return out;
}

/// Mini-batch SGD on mean cross-entropy with global-norm clipping. Returns the mean loss per
/// epoch. With `freeze_lstm` only the dense layers move.
inline std::vector<double> fit(StepNet& net, std::vector<LabeledWindow> data, int epochs, double lr,
                               int batch_size, double clip, Rng& rng, bool freeze_lstm = false) {
  if (data.empty()) throw DataError("no training windows");
  if (!(lr > 0.0)) throw ConfigError("lr must be > 0");
  std::vector<double> losses;
  std::vector<const Window*> batch;
  std::vector<int> labels;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    rng.shuffle(std::span<LabeledWindow>(data));
    double loss = 0.0;
    for (std::size_t start = 0; start < data.size(); start += static_cast<std::size_t>(batch_size)) {
      const std::size_t end = std::min(data.size(), start + static_cast<std::size_t>(batch_size));
      batch.clear();
      labels.clear();
      for (std::size_t i = start; i < end; ++i) {
        batch.push_back(data[i].window);
        labels.push_back(data[i].label);
      }
      ForwardCache cache;
      forward_batch(net, batch, true, rng, &cache);
      BackwardResult br = backward(net, cache, labels, !freeze_lstm);
      loss += br.loss_sum;
      const double inv = 1.0 / static_cast<double>(batch.size());
      if (freeze_lstm) {
        DenseView grads{&br.tape.fc1, &br.tape.fc2, &br.tape.head};
        scale_all(grads, inv);
        clip_global_norm(grads, clip);
        DenseView params = net.dense();
        sgd_step(params, grads, lr);
      } else {
        scale_all(br.tape, inv);
        clip_global_norm(br.tape, clip);
        sgd_step(net, br.tape, lr);
      }
    }
    losses.push_back(loss / static_cast<double>(data.size()));
  }
  return losses;
}

struct TrainResult {
  StepNet net;
  std::vector<double> epoch_loss;
};

using LossLogger = std::function<void(int epoch, double mean_loss)>;

/// Trains a fresh network on the pooled windows of all given subjects.
inline TrainResult train_general(std::span<const WindowSet> data, const TrainConfig& cfg,
                                 const NetShape& shape = {}, const LossLogger& log = {}) {
  cfg.validate();
  if (data.empty()) throw DataError("train_general needs at least one subject");
  TrainResult r{StepNet::init(cfg.seed, shape, cfg.dropout_rate), {}};
  Rng rng(derive_seed(cfg.seed, 1));
  r.epoch_loss = fit(r.net, pool(data), cfg.epochs, cfg.lr, cfg.batch_size, cfg.clip, rng);
  if (log) {
    for (std::size_t e = 0; e < r.epoch_loss.size(); ++e) log(static_cast<int>(e), r.epoch_loss[e]);
  }
  r.net.lineage = "general(seed=" + std::to_string(cfg.seed) + ",subjects=" + std::to_string(data.size()) + ")";
  return r;
}

// ---------------------------------------------------------------------------
// Cross-validation

struct FoldResult {
  std::vector<std::string> test_subjects;
  std::vector<std::string> train_subjects;
  std::vector<MetricsReport> reports;
  double median_accuracy_class = 0.0;
  double median_accuracy_steps = 0.0;
  std::vector<double> epoch_loss;
};

struct CVReport {
  std::vector<FoldResult> folds;
  double mean_of_medians_class = 0.0;
  double mean_of_medians_steps = 0.0;
  std::size_t best_fold = 0;
  StepNet best_model;

  std::vector<MetricsReport> per_subject() const {
    std::vector<MetricsReport> out;
    for (const auto& f : folds) out.insert(out.end(), f.reports.begin(), f.reports.end());
    return out;
  }
};

/// Subjects sorted by id and cut into consecutive groups of `fold_size`; the last group keeps the remainder.
inline std::vector<std::vector<std::size_t>> make_folds(std::span<const WindowSet> data, std::size_t fold_size) {
  if (fold_size < 1) throw ConfigError("fold_size must be >= 1");
  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return data[a].subject_id < data[b].subject_id; });
  for (std::size_t i = 1; i < order.size(); ++i) {
    if (data[order[i]].subject_id == data[order[i - 1]].subject_id) {
      throw DataError("duplicate subject id '" + data[order[i]].subject_id + "'");
    }
  }
  std::vector<std::vector<std::size_t>> folds;
  for (std::size_t i = 0; i < order.size(); i += fold_size) {
    folds.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                       order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), i + fold_size)));
  }
  return folds;
}

/// Worker threads: STEPNET_THREADS if set, else the hardware concurrency.
inline unsigned thread_budget() {
  if (const char* env = std::getenv("STEPNET_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v >= 1) return static_cast<unsigned>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Leave-`fold_size`-subjects-out CV. The best fold is the one with the highest median
/// accuracy_steps (first wins ties); its model is returned.
inline CVReport cross_validate(std::span<const WindowSet> data, const TrainConfig& cfg, std::size_t fold_size = 2,
                               const NetShape& shape = {}) {
  cfg.validate();
  if (data.size() < 4) throw DataError("cross-validation needs at least 4 subjects");
  const auto folds = make_folds(data, fold_size);
  if (folds.size() < 2) throw DataError("cross-validation needs at least 2 folds");

  struct Outcome {
    FoldResult result;
    StepNet model;
  };
  auto run_fold = [&](std::size_t k) {
    Outcome out;
    std::vector<WindowSet> train;
    for (std::size_t j = 0; j < folds.size(); ++j) {
      if (j == k) continue;
      for (std::size_t idx : folds[j]) {
        train.push_back(data[idx]);
        out.result.train_subjects.push_back(data[idx].subject_id);
      }
    }
    TrainConfig fold_cfg = cfg;
    fold_cfg.seed = derive_seed(cfg.seed, k);
    TrainResult tr = train_general(train, fold_cfg, shape);
    out.result.epoch_loss = tr.epoch_loss;
    std::vector<double> acc_c, acc_s;
    for (std::size_t idx : folds[k]) {
      out.result.test_subjects.push_back(data[idx].subject_id);
      out.result.reports.push_back(evaluate(tr.net, data[idx]));
      acc_c.push_back(out.result.reports.back().accuracy_class);
      acc_s.push_back(out.result.reports.back().accuracy_steps);
    }
    out.result.median_accuracy_class = median(acc_c);
    out.result.median_accuracy_steps = median(acc_s);
    tr.net.lineage += ",cv_fold=" + std::to_string(k);
    out.model = std::move(tr.net);
    return out;
  };

  std::vector<Outcome> outcomes(folds.size());
  const unsigned threads = std::min<unsigned>(thread_budget(), static_cast<unsigned>(folds.size()));
  if (threads <= 1) {
    for (std::size_t k = 0; k < folds.size(); ++k) outcomes[k] = run_fold(k);
  } else {
    for (std::size_t start = 0; start < folds.size(); start += threads) {
      std::vector<std::future<Outcome>> running;
      for (std::size_t k = start; k < std::min(folds.size(), start + threads); ++k) {
        running.push_back(std::async(std::launch::async, run_fold, k));
      }
      for (std::size_t j = 0; j < running.size(); ++j) outcomes[start + j] = running[j].get();
    }
  }

  CVReport report;
  std::vector<double> med_c, med_s;
  for (std::size_t k = 0; k < outcomes.size(); ++k) {
    med_c.push_back(outcomes[k].result.median_accuracy_class);
    med_s.push_back(outcomes[k].result.median_accuracy_steps);
    if (med_s.back() > med_s[report.best_fold]) report.best_fold = k;
    report.folds.push_back(std::move(outcomes[k].result));
  }
  report.mean_of_medians_class = mean(med_c);
  report.mean_of_medians_steps = mean(med_s);
  report.best_model = std::move(outcomes[report.best_fold].model);
  return report;
}

// ---------------------------------------------------------------------------
// Two-step adaptation

struct AdaptConfig {
  double budget_s = 30.0;
  int epochs_head = 20;
  double lr_head = 0.01;
  int epochs_full = 10;
  double lr_full = 0.001;
  int batch_size = 16;
  double clip = 5.0;
  std::uint64_t seed = 1;

  void validate() const {
    if (!(budget_s > 0.0)) throw ConfigError("budget_s must be > 0");
    if (epochs_head < 0 || epochs_full < 0) throw ConfigError("epoch counts must be >= 0");
    if (!(lr_head > 0.0) || !(lr_full > 0.0)) throw ConfigError("learning rates must be > 0");
    if (!(lr_full < lr_head)) throw ConfigError("lr_full must be smaller than lr_head");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!(clip > 0.0)) throw ConfigError("clip must be > 0");
  }
};

struct AdaptationSplit {
  WindowSet adapt;  // windows lying entirely inside the first budget_s seconds
  WindowSet test;   // everything after
};

inline constexpr double kWindowDuration = kWindowLength / kTargetRateHz;

/// Splits a subject's windows by time: the leading budget_s seconds for adaptation, the rest for testing.
inline AdaptationSplit split_for_adaptation(const WindowSet& ws, double budget_s) {
  if (!(budget_s > 0.0)) throw ConfigError("budget_s must be > 0");
  if (ws.windows.empty()) throw DataError("empty window set");
  if (ws.t_end - ws.t_start < budget_s) {
    throw DataError("subject '" + ws.subject_id + "' has " + std::to_string(ws.t_end - ws.t_start) +
                    " s of windows, less than the " + std::to_string(budget_s) + " s adaptation budget");
  }
  const double half = (kWindowLength / 2) / kTargetRateHz;
  const double cut = ws.t_start + budget_s;
  AdaptationSplit s;
  s.adapt.subject_id = ws.subject_id;
  s.test.subject_id = ws.subject_id;
  for (const auto& w : ws.windows) {
    const double w_end = w.t_center - half + kWindowDuration;
    (w_end <= cut + 1e-9 ? s.adapt : s.test).windows.push_back(w);
  }
  if (s.adapt.windows.empty()) throw DataError("adaptation budget shorter than one window");
  s.adapt.t_start = ws.t_start;
  s.adapt.t_end = s.test.windows.empty() ? ws.t_end : s.test.windows.front().t_center - half;
  s.test.t_start = s.adapt.t_end;
  s.test.t_end = ws.t_end;
  for (const auto& e : ws.events) {
    (e.t < s.adapt.t_end ? s.adapt : s.test).events.push_back(e);
  }
  s.adapt.ground_truth_steps = s.adapt.events.size();
  s.test.ground_truth_steps = s.test.events.size();
  return s;
}

/// Step 1 trains the dense layers with the LSTM frozen; step 2 fine-tunes everything at a
/// lower rate. Only the first budget_s seconds of `target` are used. `net` is not modified.
inline StepNet adapt(const StepNet& net, const WindowSet& target, const AdaptConfig& cfg,
                     StepNet* after_step1 = nullptr) {
  cfg.validate();
  const AdaptationSplit split = split_for_adaptation(target, cfg.budget_s);
  StepNet out = net;
  if (cfg.epochs_head == 0 && cfg.epochs_full == 0) {
    if (after_step1) *after_step1 = out;
    return out;
  }
  const std::vector<LabeledWindow> data = pool(std::span<const WindowSet>(&split.adapt, 1));
  Rng rng(cfg.seed);
  if (cfg.epochs_head > 0) fit(out, data, cfg.epochs_head, cfg.lr_head, cfg.batch_size, cfg.clip, rng, true);
  if (after_step1) *after_step1 = out;
  if (cfg.epochs_full > 0) fit(out, data, cfg.epochs_full, cfg.lr_full, cfg.batch_size, cfg.clip, rng, false);
  std::ostringstream lin;
  lin << net.lineage << ",adapt(subject=" << target.subject_id << ",budget_s=" << cfg.budget_s
      << ",seed=" << cfg.seed << ")";
  out.lineage = lin.str();
  return out;
}

// ---------------------------------------------------------------------------
// Model files
//
// Text header, one "key value" per line, closed by "end":
//   STEPNET v1
//   input 6 / hidden 256 / fc1 512 / fc2 256 / classes 2
//   dropout_rate <decimal> / seed <uint64> / lineage <text> / params <count>
//   end
// followed by <count> little-endian IEEE-754 doubles: for each LSTM gate i, f, g, o the
// W (hidden x input), U (hidden x hidden) and b arrays, then fc1 W, b, fc2 W, b, head W, b.
// Matrices are row-major.

inline constexpr std::string_view kModelMagic = "STEPNET v1";

inline std::string serialize_model(const StepNet& net) {
  net.check();
  std::ostringstream os;
  os << kModelMagic << '\n'
     << "input " << net.shape.input << '\n'
     << "hidden " << net.shape.hidden << '\n'
     << "fc1 " << net.shape.fc1 << '\n'
     << "fc2 " << net.shape.fc2 << '\n'
     << "classes " << net.shape.classes << '\n'
     << "dropout_rate " << detail::format_double(net.dropout_rate) << '\n'
     << "seed " << net.seed << '\n'
     << "lineage " << net.lineage << '\n'
     << "params " << net.parameter_count() << '\n'
     << "end\n";
  std::string out = os.str();
  net.visit([&](std::string_view, std::span<const double> s) {
    for (double v : s) {
      const auto bits = std::bit_cast<std::uint64_t>(v);
      for (int k = 0; k < 8; ++k) out.push_back(static_cast<char>((bits >> (8 * k)) & 0xFF));
    }
  });
  return out;
}

inline void save_model(const StepNet& net, const std::filesystem::path& path) {
  detail::write_atomic(path, serialize_model(net));
}

/// Parses a model file image. If `expected` is given the stored shape must match it.
inline StepNet deserialize_model(const std::string& bytes, const std::optional<NetShape>& expected = NetShape{}) {
  std::size_t pos = 0;
  auto next_line = [&]() -> std::string {
    const auto nl = bytes.find('\n', pos);
    if (nl == std::string::npos) throw DataError("model file truncated in header");
    std::string line = bytes.substr(pos, nl - pos);
    pos = nl + 1;
    return line;
  };
  if (next_line() != kModelMagic) throw DataError("not a STEPNET v1 model file");
  std::map<std::string, std::string> kv;
  for (std::string line = next_line(); line != "end"; line = next_line()) {
    const auto sp = line.find(' ');
    if (sp == std::string::npos) throw DataError("malformed model header line '" + line + "'");
    kv[line.substr(0, sp)] = line.substr(sp + 1);
  }
  auto get_int = [&](const std::string& key) -> long long {
    const auto it = kv.find(key);
    if (it == kv.end()) throw DataError("model header missing '" + key + "'");
    try {
      std::size_t used = 0;
      const long long v = std::stoll(it->second, &used);
      if (used != it->second.size()) throw DataError("bad value for '" + key + "'");
      return v;
    } catch (const std::logic_error&) {
      throw DataError("bad value for '" + key + "'");
    }
  };
  NetShape shape;
  shape.input = static_cast<int>(get_int("input"));
  shape.hidden = static_cast<int>(get_int("hidden"));
  shape.fc1 = static_cast<int>(get_int("fc1"));
  shape.fc2 = static_cast<int>(get_int("fc2"));
  shape.classes = static_cast<int>(get_int("classes"));
  if (shape.input < 1 || shape.hidden < 1 || shape.fc1 < 1 || shape.fc2 < 1 || shape.classes < 1) {
    throw ShapeError("model header has a non-positive dimension");
  }
  if (expected && !(shape == *expected)) {
    throw ShapeError("model shape " + shape.str() + " does not match expected " + expected->str());
  }
  StepNet net = StepNet::zeros(shape);
  if (!kv.contains("dropout_rate")) throw DataError("model header missing 'dropout_rate'");
  net.dropout_rate = detail::parse_double(kv["dropout_rate"], 0);
  if (!(net.dropout_rate >= 0.0 && net.dropout_rate < 1.0)) throw DataError("model dropout_rate out of range");
  net.seed = static_cast<std::uint64_t>(std::stoull(kv.contains("seed") ? kv["seed"] : "0"));
  net.lineage = kv.contains("lineage") ? kv["lineage"] : "";
  const auto count = static_cast<std::size_t>(get_int("params"));
  if (count != net.parameter_count()) {
    throw ShapeError("model declares " + std::to_string(count) + " parameters, shape implies " +
                     std::to_string(net.parameter_count()));
  }
  if (bytes.size() - pos != count * 8) {
    throw DataError("model file has " + std::to_string(bytes.size() - pos) + " payload bytes, expected " +
                    std::to_string(count * 8));
  }
  net.visit([&](std::string_view name, std::span<double> s) {
    for (double& v : s) {
      std::uint64_t bits = 0;
      for (int k = 0; k < 8; ++k) bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[pos + k])) << (8 * k);
      pos += 8;
      v = std::bit_cast<double>(bits);
      if (!std::isfinite(v)) throw DataError("non-finite parameter in " + std::string(name));
    }
  });
  return net;
}

inline StepNet load_model(const std::filesystem::path& path, const std::optional<NetShape>& expected = NetShape{}) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open model " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize_model(ss.str(), expected);
}

}  // namespace stepnet
