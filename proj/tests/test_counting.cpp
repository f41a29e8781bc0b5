#include <gtest/gtest.h>

#include <algorithm>

#include "stepnet/counting.hpp"
#include "stepnet/model.hpp"
#include "stepnet/signal.hpp"

namespace stepnet {
namespace {

constexpr Foot L = Foot::Left;
constexpr Foot R = Foot::Right;

std::vector<Foot> random_labels(Rng& rng, std::size_t n) {
  std::vector<Foot> v(n);
  for (auto& f : v) f = rng.below(2) ? R : L;
  return v;
}

std::size_t pairwise_scan(const std::vector<Foot>& v) {
  std::size_t n = 0;
  for (std::size_t i = 0; i + 1 < v.size(); ++i) {
    if (v[i] != v[i + 1]) ++n;
  }
  return n;
}

TEST(CountSteps, Transitions) {
  EXPECT_EQ(count_steps(std::vector<Foot>{L, R, L, R}), 3u);
  EXPECT_EQ(count_steps(std::vector<Foot>{L, L, L}), 0u);
  EXPECT_EQ(count_steps(std::vector<Foot>{}), 0u);
  EXPECT_EQ(count_steps(std::vector<Foot>{L}), 0u);
}

TEST(CountSteps, PairwiseScanAndReversal) {
  Rng rng(2);
  for (int trial = 0; trial < 1000; ++trial) {
    auto v = random_labels(rng, rng.below(200));
    const std::size_t n = count_steps(v);
    ASSERT_EQ(n, pairwise_scan(v));
    std::reverse(v.begin(), v.end());
    ASSERT_EQ(count_steps(v), n);
  }
}

TEST(CountSteps, MisclassifiedRunCostsOneTransitionPerBoundary) {
  // alternating truth; flipping a contiguous run keeps its interior transitions and removes
  // the one at each boundary it shares with correctly labeled neighbours
  std::vector<Foot> truth(60);
  for (std::size_t i = 0; i < truth.size(); ++i) truth[i] = i % 2 ? R : L;
  const std::size_t base = count_steps(truth);
  for (std::size_t start = 0; start < 60; ++start) {
    for (std::size_t len = 1; start + len <= 60; ++len) {
      auto pred = truth;
      for (std::size_t i = start; i < start + len; ++i) pred[i] = other(pred[i]);
      const std::size_t boundaries = (start > 0) + (start + len < 60);
      ASSERT_EQ(base - count_steps(pred), boundaries) << start << "/" << len;
    }
  }
}

TEST(AccuracyClass, Basics) {
  const std::vector<Foot> t = {L, R, L, R};
  EXPECT_DOUBLE_EQ(accuracy_class(t, t), 100.0);
  EXPECT_THROW(accuracy_class(std::vector<Foot>{L}, t), DataError);
  EXPECT_THROW(accuracy_class(std::vector<Foot>{}, std::vector<Foot>{}), DataError);
}

TEST(AccuracyClass, FortyRightFortyFiveLeftOfHundred) {
  std::vector<Foot> truth, pred;
  for (int i = 0; i < 50; ++i) truth.push_back(R);
  for (int i = 0; i < 50; ++i) truth.push_back(L);
  pred = truth;
  std::fill(pred.begin() + 40, pred.begin() + 50, L);   // 40 right correct
  std::fill(pred.begin() + 95, pred.begin() + 100, R);  // 45 left correct
  const ClassTally t = tally(pred, truth);
  EXPECT_EQ(t.n_right_correct, 40u);
  EXPECT_EQ(t.n_left_correct, 45u);
  EXPECT_EQ(t.n_total, 100u);
  EXPECT_DOUBLE_EQ(accuracy_class(pred, truth), 85.0);
}

TEST(AccuracyClass, BruteForceAndRelabelInvariance) {
  Rng rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    const auto truth = random_labels(rng, 1000);
    const auto pred = random_labels(rng, 1000);
    std::size_t agree = 0;
    for (std::size_t i = 0; i < 1000; ++i) agree += pred[i] == truth[i];
    ASSERT_EQ(accuracy_class(pred, truth), static_cast<double>(agree) / 1000.0 * 100.0);
    std::vector<Foot> pf = pred, tf = truth;
    for (auto& f : pf) f = other(f);
    for (auto& f : tf) f = other(f);
    ASSERT_EQ(accuracy_class(pf, tf), accuracy_class(pred, truth));
  }
}

TEST(AccuracySteps, Formula) {
  EXPECT_DOUBLE_EQ(accuracy_steps(500, 500), 100.0);
  EXPECT_DOUBLE_EQ(accuracy_steps(490, 500), 98.0);
  EXPECT_DOUBLE_EQ(accuracy_steps(510, 500), 98.0);
  EXPECT_DOUBLE_EQ(accuracy_steps(0, 500), 0.0);
  EXPECT_DOUBLE_EQ(accuracy_steps(1500, 500), -100.0);  // unclamped
  EXPECT_THROW(accuracy_steps(10, 0), DataError);
}

struct TruthStub {
  std::vector<Foot> predict(std::span<const Window> w) const {
    std::vector<Foot> out;
    for (const auto& x : w) out.push_back(x.label);
    return out;
  }
};

WindowSet noiseless_subject(double duration_s = 120.0) {
  SynthConfig cfg;
  cfg.noise_sd = 0.0;
  cfg.duration_s = duration_s;
  cfg.subject_id = "clean";
  return prepare(synthesize(cfg));
}

TEST(Evaluate, TruthStubGivesPerfectClassesAndBoundaryLimitedSteps) {
  const WindowSet ws = noiseless_subject();
  const MetricsReport r = evaluate(TruthStub{}, ws);
  EXPECT_DOUBLE_EQ(r.accuracy_class, 100.0);
  EXPECT_EQ(r.n_total, ws.windows.size());
  EXPECT_EQ(r.n_left_correct + r.n_right_correct, r.n_total);
  std::vector<Foot> labels;
  for (const auto& w : ws.windows) labels.push_back(w.label);
  EXPECT_EQ(r.steps_predicted, count_steps(labels));
  EXPECT_DOUBLE_EQ(r.accuracy_steps, accuracy_steps(static_cast<std::int64_t>(count_steps(labels)),
                                                    static_cast<std::int64_t>(ws.ground_truth_steps)));
  // boundary windows cost at most two steps
  EXPECT_GE(r.accuracy_steps, 100.0 - 2.0 / static_cast<double>(ws.ground_truth_steps) * 100.0);
}

TEST(Evaluate, ZeroNetIsChanceLevelWithLeftTies) {
  const WindowSet ws = noiseless_subject();
  const StepNet zero = StepNet::zeros(NetShape{6, 8, 8, 8, 2});
  const MetricsReport r = evaluate(zero, ws);
  std::size_t left = 0;
  for (const auto& w : ws.windows) left += w.label == Foot::Left;
  EXPECT_EQ(r.n_right_correct, 0u);
  EXPECT_EQ(r.n_left_correct, left);
  EXPECT_EQ(r.steps_predicted, 0u);
  EXPECT_DOUBLE_EQ(r.accuracy_class, static_cast<double>(left) / static_cast<double>(ws.windows.size()) * 100.0);
  EXPECT_NEAR(r.accuracy_class, 50.0, 5.0);
}

TEST(Evaluate, RejectsEmptyAndUnorderedSets) {
  WindowSet empty;
  EXPECT_THROW(evaluate(TruthStub{}, empty), DataError);
  WindowSet ws = noiseless_subject(10.0);
  std::swap(ws.windows[0], ws.windows[1]);
  EXPECT_THROW(evaluate(TruthStub{}, ws), DataError);
}

TEST(Aggregates, MedianAndMean) {
  EXPECT_DOUBLE_EQ(median({97.0, 99.0}), 98.0);
  EXPECT_DOUBLE_EQ(median({3.0, 1.0, 2.0}), 2.0);
  EXPECT_THROW(median({}), DataError);
  const std::vector<double> v = {1.0, 2.0, 6.0};
  EXPECT_DOUBLE_EQ(mean(v), 3.0);
}

}  // namespace
}  // namespace stepnet
