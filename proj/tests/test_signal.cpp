#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "stepnet/counting.hpp"
#include "stepnet/signal.hpp"

namespace stepnet {
namespace {

Recording uniform_recording(std::size_t n, double rate, double (*fn)(double) = nullptr) {
  Recording rec;
  rec.subject_id = "u";
  rec.native_rate_hz = rate;
  for (std::size_t k = 0; k < n; ++k) {
    SensorSample s;
    s.t = static_cast<double>(k) / rate;
    s.ax = fn ? fn(s.t) : 0.5;
    s.ay = s.az = s.gx = s.gy = s.gz = 0.5;
    rec.samples.push_back(s);
  }
  rec.events = {{0.0, Foot::Left}};
  return rec;
}

TEST(Resample, ConstantIsPreservedExactly) {
  const Recording rec = uniform_recording(501, 50.0);
  const Recording out = resample(rec);
  ASSERT_GT(out.samples.size(), 100u);
  for (const auto& s : out.samples) {
    for (int c = 0; c < kChannels; ++c) EXPECT_EQ(s.channel(c), 0.5);
  }
  EXPECT_DOUBLE_EQ(out.native_rate_hz, 15.0);
  EXPECT_EQ(out.events, rec.events);
}

TEST(Resample, LinearInterpolationBetweenTwoSamples) {
  Recording rec;
  rec.native_rate_hz = 1.0;
  rec.samples = {SensorSample{0.0, 0.0, 0, 0, 0, 0, 0}, SensorSample{1.0, 1.0, 0, 0, 0, 0, 0}};
  const Recording out = resample(rec, 15.0);
  ASSERT_EQ(out.samples.size(), 16u);
  EXPECT_DOUBLE_EQ(out.samples[1].ax, 1.0 / 15.0);
  EXPECT_DOUBLE_EQ(out.samples.back().t, 1.0);
  EXPECT_DOUBLE_EQ(out.samples.back().ax, 1.0);
}

TEST(Resample, TimestampsAreExactlyArithmetic) {
  Recording rec = uniform_recording(1000, 97.3);
  for (auto& s : rec.samples) s.t += 3.25;
  const Recording out = resample(rec);
  const double dt = 1.0 / 15.0;
  for (std::size_t k = 0; k < out.samples.size(); ++k) {
    EXPECT_EQ(out.samples[k].t, 3.25 + static_cast<double>(k) * dt);
  }
  EXPECT_LE(out.samples.back().t, rec.samples.back().t + 1e-9);
  EXPECT_GT(out.samples.back().t + dt, rec.samples.back().t);
}

TEST(Resample, SinusoidFidelity) {
  // 120 spm step signal = 2 Hz, sampled at 100 Hz
  const double amp = 0.7;
  Recording rec;
  rec.native_rate_hz = 100.0;
  for (int k = 0; k <= 6000; ++k) {
    SensorSample s;
    s.t = k / 100.0;
    s.az = amp * std::sin(2.0 * std::numbers::pi * 2.0 * s.t);
    rec.samples.push_back(s);
  }
  const Recording out = resample(rec);
  double sq = 0.0;
  for (const auto& s : out.samples) {
    const double d = s.az - amp * std::sin(2.0 * std::numbers::pi * 2.0 * s.t);
    sq += d * d;
  }
  const double rms = std::sqrt(sq / static_cast<double>(out.samples.size()));
  EXPECT_LT(rms, 0.01 * amp);
}

TEST(Resample, NeedsTwoSamples) {
  Recording rec = uniform_recording(1, 50.0);
  EXPECT_THROW(resample(rec), DataError);
}

TEST(MakeWindows, CountsAndRemainder) {
  EXPECT_EQ(make_windows(uniform_recording(70, 15.0)).windows.size(), 10u);
  const WindowSet ws = make_windows(uniform_recording(69, 15.0));
  EXPECT_EQ(ws.windows.size(), 9u);
  EXPECT_NEAR(ws.t_end, 63.0 / 15.0, 1e-12);
  EXPECT_THROW(make_windows(uniform_recording(6, 15.0)), DataError);
}

TEST(MakeWindows, FloorProperty) {
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const auto n = static_cast<std::size_t>(7 + rng.below(500));
    EXPECT_EQ(make_windows(uniform_recording(n, 15.0)).windows.size(), n / 7);
  }
}

TEST(MakeWindows, SixtySecondSynthetic) {
  SynthConfig cfg;
  cfg.duration_s = 60.0;
  cfg.sample_rate_hz = 15.0;
  cfg.noise_sd = 0.0;
  const Recording rec = synthesize(cfg);
  EXPECT_EQ(rec.samples.size(), 901u);
  const WindowSet ws = make_windows(rec);
  EXPECT_EQ(ws.windows.size(), 128u);
}

TEST(MakeWindows, RejectsNonUniformInput) {
  Recording rec = uniform_recording(20, 15.0);
  rec.samples[5].t += 0.01;
  EXPECT_THROW(make_windows(rec), DataError);
}

TEST(MakeWindows, WindowContentCenterAndGroundTruth) {
  SynthConfig cfg;
  cfg.duration_s = 30.0;
  cfg.noise_sd = 0.1;
  const Recording rec15 = resample(synthesize(cfg));
  const WindowSet ws = make_windows(rec15);
  for (std::size_t w = 0; w < ws.windows.size(); ++w) {
    const auto& win = ws.windows[w];
    for (int r = 0; r < kWindowLength; ++r) {
      for (int c = 0; c < kChannels; ++c) EXPECT_EQ(win(r, c), rec15.samples[w * 7 + r].channel(c));
    }
    EXPECT_EQ(win.t_center, rec15.samples[w * 7 + 3].t);
  }
  std::size_t expected = 0;
  for (const auto& e : rec15.events) expected += (e.t >= ws.t_start && e.t < ws.t_end);
  EXPECT_EQ(ws.ground_truth_steps, expected);
  EXPECT_EQ(ws.events.size(), expected);
}

TEST(LabelWindow, LastEventAtOrBeforeCenter) {
  const std::vector<StepEvent> ev = {{1.0, Foot::Left}, {1.5, Foot::Right}};
  EXPECT_EQ(label_window(ev, 1.2), Foot::Left);
  EXPECT_EQ(label_window(ev, 1.5), Foot::Right);
  EXPECT_EQ(label_window(ev, 9.0), Foot::Right);
  const std::vector<StepEvent> single = {{1.0, Foot::Left}};
  EXPECT_EQ(label_window(single, 0.2), Foot::Left);
  EXPECT_THROW(label_window(std::vector<StepEvent>{}, 0.0), DataError);
}

TEST(LabelWindow, MatchesLinearScanOracle) {
  std::vector<StepEvent> ev;
  for (int k = 0; k < 40; ++k) ev.push_back({0.25 + 0.5 * k, k % 2 ? Foot::Right : Foot::Left});
  Rng rng(3);
  for (int trial = 0; trial < 2000; ++trial) {
    const double t = rng.uniform(-1.0, 22.0);
    Foot oracle = ev.front().foot;
    for (const auto& e : ev) {
      if (e.t <= t) oracle = e.foot;
    }
    ASSERT_EQ(label_window(ev, t), oracle) << "t=" << t;
  }
  // sampled once per step period (offset into each stance) the labels alternate
  for (int k = 0; k < 39; ++k) {
    EXPECT_NE(label_window(ev, 0.5 + 0.5 * k), label_window(ev, 1.0 + 0.5 * k));
  }
}

TEST(SignalChain, NoiselessLabelsReconstructStepCount) {
  // labels read through label_window, counted by transitions, match the events crossed
  SynthConfig cfg;
  cfg.noise_sd = 0.0;
  cfg.cadence_spm = 110.0;
  cfg.duration_s = 120.0;
  const WindowSet ws = prepare(synthesize(cfg));
  std::vector<Foot> labels;
  for (const auto& w : ws.windows) labels.push_back(w.label);
  std::size_t crossed = 0;
  for (const auto& e : ws.events) {
    crossed += e.t > ws.windows.front().t_center && e.t <= ws.windows.back().t_center;
  }
  // window period 7/15 s is shorter than the step period, so every strike flips the label once
  EXPECT_EQ(count_steps(labels), crossed);
  EXPECT_LE(ws.ground_truth_steps - crossed, 2u);
}

}  // namespace
}  // namespace stepnet
