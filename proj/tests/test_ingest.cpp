#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "stepnet/ingest.hpp"
#include "test_helpers.hpp"

namespace stepnet {
namespace {

using test::TempDir;
using test::write_file;

TEST(LoadRecording, TwoRowsGiveFiftyHertz) {
  TempDir dir;
  write_file(dir / "s.csv", "t,ax,ay,az,gx,gy,gz\n0.0,0,0,1,0,0,0\n0.02,0.1,0,1,0,0,0\n");
  write_file(dir / "a.csv", "t,foot\n0.01,L\n");
  const Recording rec = load_recording(dir / "s.csv", dir / "a.csv", "s1", "dev");
  EXPECT_EQ(rec.samples.size(), 2u);
  EXPECT_DOUBLE_EQ(rec.native_rate_hz, 50.0);
  EXPECT_EQ(rec.subject_id, "s1");
  EXPECT_EQ(rec.device, "dev");
  ASSERT_EQ(rec.events.size(), 1u);
  EXPECT_EQ(rec.events[0].foot, Foot::Left);
}

TEST(LoadRecording, EventOutsideSampleSpanIsRejected) {
  TempDir dir;
  write_file(dir / "s.csv", "t,ax,ay,az,gx,gy,gz\n0.0,0,0,1,0,0,0\n0.02,0,0,1,0,0,0\n");
  write_file(dir / "a.csv", "t,foot\n0.5,L\n");
  EXPECT_THROW(load_recording(dir / "s.csv", dir / "a.csv", "s", "d"), DataError);
}

TEST(LoadRecording, MalformedRowReportsLineNumber) {
  TempDir dir;
  write_file(dir / "s.csv", "t,ax,ay,az,gx,gy,gz\n0.0,0,0,1,0,0,0\n0.02,0,zz,1,0,0,0\n");
  write_file(dir / "a.csv", "t,foot\n");
  try {
    load_recording(dir / "s.csv", dir / "a.csv", "s", "d");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
  }
}

TEST(LoadRecording, WrongFieldCountAndHeader) {
  TempDir dir;
  write_file(dir / "a.csv", "t,foot\n");
  write_file(dir / "s.csv", "t,ax,ay,az,gx,gy,gz\n0.0,0,0,1,0,0\n");
  EXPECT_THROW(load_recording(dir / "s.csv", dir / "a.csv", "s", "d"), ParseError);
  write_file(dir / "s.csv", "time,x\n0,0\n");
  EXPECT_THROW(load_recording(dir / "s.csv", dir / "a.csv", "s", "d"), ParseError);
  write_file(dir / "s.csv", "t,ax,ay,az,gx,gy,gz\n0.0,0,0,1,0,0,0\n0.1,0,0,1,0,0,0\n");
  write_file(dir / "a.csv", "t,foot\n0.05,X\n");
  EXPECT_THROW(load_recording(dir / "s.csv", dir / "a.csv", "s", "d"), ParseError);
}

TEST(LoadRecording, EmptyFilesAreErrors) {
  TempDir dir;
  write_file(dir / "s.csv", "");
  write_file(dir / "a.csv", "t,foot\n");
  EXPECT_THROW(load_recording(dir / "s.csv", dir / "a.csv", "s", "d"), DataError);
  write_file(dir / "s.csv", "t,ax,ay,az,gx,gy,gz\n");
  EXPECT_THROW(load_recording(dir / "s.csv", dir / "a.csv", "s", "d"), DataError);
  EXPECT_THROW(load_recording(dir / "missing.csv", dir / "a.csv", "s", "d"), DataError);
}

TEST(LoadRecording, SortsSamplesAndRejectsDuplicateTimes) {
  TempDir dir;
  write_file(dir / "a.csv", "t,foot\n");
  write_file(dir / "s.csv", "t,ax,ay,az,gx,gy,gz\n0.2,2,0,1,0,0,0\n0.0,0,0,1,0,0,0\n0.1,1,0,1,0,0,0\n");
  const Recording rec = load_recording(dir / "s.csv", dir / "a.csv", "s", "d");
  ASSERT_EQ(rec.samples.size(), 3u);
  for (int i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(rec.samples[i].ax, i);
  EXPECT_DOUBLE_EQ(rec.native_rate_hz, 10.0);

  write_file(dir / "s.csv", "t,ax,ay,az,gx,gy,gz\n0.0,0,0,1,0,0,0\n0.1,1,0,1,0,0,0\n0.1,2,0,1,0,0,0\n");
  EXPECT_THROW(load_recording(dir / "s.csv", dir / "a.csv", "s", "d"), DataError);
}

TEST(LoadRecording, NonIncreasingEventsErrorRepeatedFootWarns) {
  TempDir dir;
  write_file(dir / "s.csv", "t,ax,ay,az,gx,gy,gz\n0.0,0,0,1,0,0,0\n1.0,0,0,1,0,0,0\n");
  write_file(dir / "a.csv", "t,foot\n0.5,L\n0.4,R\n");
  EXPECT_THROW(load_recording(dir / "s.csv", dir / "a.csv", "s", "d"), ParseError);

  write_file(dir / "a.csv", "t,foot\n0.2,L\n0.4,L\n0.6,R\n");
  std::vector<std::string> warnings;
  const Recording rec = load_recording(dir / "s.csv", dir / "a.csv", "s", "d", &warnings);
  EXPECT_EQ(rec.events.size(), 3u);
  ASSERT_EQ(warnings.size(), 1u);
  EXPECT_NE(warnings[0].find("line 3"), std::string::npos);
}

TEST(WriteRecording, RoundTripIsExact) {
  TempDir dir;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    SynthConfig cfg;
    cfg.duration_s = 5.0;
    cfg.noise_sd = 0.3;
    cfg.axis_rotation_deg = 13.0;
    cfg.scale = 1.1;
    cfg.seed = seed;
    cfg.subject_id = "rt";
    const Recording rec = synthesize(cfg);
    write_recording(rec, dir / "r.csv", dir / "r_steps.csv");
    const Recording back = load_recording(dir / "r.csv", dir / "r_steps.csv", "rt", "synthetic");
    ASSERT_EQ(back.samples.size(), rec.samples.size());
    EXPECT_EQ(back.samples, rec.samples);
    EXPECT_EQ(back.events, rec.events);
    // a second write of the loaded data is byte-identical
    EXPECT_EQ(samples_csv(back), samples_csv(rec));
  }
}

TEST(Synthesize, StepCountFollowsCadence) {
  SynthConfig cfg;
  cfg.cadence_spm = 120.0;
  cfg.duration_s = 60.0;
  const Recording rec = synthesize(cfg);
  ASSERT_EQ(rec.events.size(), 120u);
  for (std::size_t i = 0; i < rec.events.size(); ++i) {
    EXPECT_EQ(rec.events[i].foot, i % 2 == 0 ? Foot::Left : Foot::Right);
  }
  EXPECT_NO_THROW(validate(rec));
}

TEST(Synthesize, EventCountIsFloorOfCadenceTimesDuration) {
  Rng rng(99);
  for (int trial = 0; trial < 200; ++trial) {
    SynthConfig cfg;
    cfg.cadence_spm = rng.uniform(60.0, 180.0);
    cfg.duration_s = rng.uniform(1.0, 40.0);
    cfg.sample_rate_hz = rng.uniform(15.0, 120.0);
    cfg.seed = rng.next();
    const Recording rec = synthesize(cfg);
    EXPECT_EQ(rec.events.size(),
              static_cast<std::size_t>(std::floor(cfg.cadence_spm * cfg.duration_s / 60.0)));
    EXPECT_NO_THROW(validate(rec));
  }
}

TEST(Synthesize, FootStrikesSitOnVerticalPeaks) {
  SynthConfig cfg;
  cfg.noise_sd = 0.0;
  cfg.sample_rate_hz = 1000.0;
  cfg.cadence_spm = 100.0;
  cfg.duration_s = 10.0;
  const Recording rec = synthesize(cfg);
  for (const auto& e : rec.events) {
    const auto k = static_cast<std::size_t>(std::lround(e.t * cfg.sample_rate_hz));
    ASSERT_LT(k + 1, rec.samples.size());
    EXPECT_GE(rec.samples[k].az, rec.samples[k - 1].az - 1e-9);
    EXPECT_GE(rec.samples[k].az, rec.samples[k + 1].az - 1e-9);
    EXPECT_NEAR(rec.samples[k].az, 1.0 + cfg.accel_amp, 1e-4);
  }
}

TEST(Synthesize, ScaleIsExactlyLinearWithoutNoise) {
  SynthConfig a;
  a.noise_sd = 0.0;
  a.duration_s = 10.0;
  SynthConfig b = a;
  b.scale = 2.0;
  const Recording ra = synthesize(a), rb = synthesize(b);
  ASSERT_EQ(ra.samples.size(), rb.samples.size());
  for (std::size_t i = 0; i < ra.samples.size(); ++i) {
    for (int c = 0; c < kChannels; ++c) {
      EXPECT_EQ(rb.samples[i].channel(c), 2.0 * ra.samples[i].channel(c));
    }
  }
  EXPECT_EQ(ra.events, rb.events);
}

TEST(Synthesize, RotationPreservesHorizontalNorm) {
  SynthConfig a;
  a.noise_sd = 0.0;
  a.duration_s = 3.0;
  SynthConfig b = a;
  b.axis_rotation_deg = 37.0;
  const Recording ra = synthesize(a), rb = synthesize(b);
  for (std::size_t i = 0; i < ra.samples.size(); ++i) {
    const auto& p = ra.samples[i];
    const auto& q = rb.samples[i];
    EXPECT_NEAR(std::hypot(p.ax, p.ay), std::hypot(q.ax, q.ay), 1e-12);
    EXPECT_NEAR(std::hypot(p.gx, p.gy), std::hypot(q.gx, q.gy), 1e-9);
    EXPECT_EQ(p.az, q.az);
    EXPECT_EQ(p.gz, q.gz);
  }
}

TEST(Synthesize, SameSeedIsBitIdenticalOtherSeedDiffers) {
  SynthConfig cfg;
  cfg.noise_sd = 0.2;
  cfg.duration_s = 20.0;
  cfg.seed = 77;
  EXPECT_EQ(synthesize(cfg), synthesize(cfg));
  EXPECT_EQ(samples_csv(synthesize(cfg)), samples_csv(synthesize(cfg)));
  SynthConfig other = cfg;
  other.seed = 78;
  EXPECT_NE(synthesize(cfg).samples, synthesize(other).samples);
}

TEST(Synthesize, InvalidConfigsThrow) {
  auto bad = [](auto mutate) {
    SynthConfig c;
    mutate(c);
    return c;
  };
  EXPECT_THROW(synthesize(bad([](SynthConfig& c) { c.cadence_spm = 0; })), ConfigError);
  EXPECT_THROW(synthesize(bad([](SynthConfig& c) { c.duration_s = -1; })), ConfigError);
  EXPECT_THROW(synthesize(bad([](SynthConfig& c) { c.sample_rate_hz = 14.9; })), ConfigError);
  EXPECT_THROW(synthesize(bad([](SynthConfig& c) { c.scale = 0; })), ConfigError);
  EXPECT_THROW(synthesize(bad([](SynthConfig& c) { c.noise_sd = -0.1; })), ConfigError);
}

TEST(SubjectConfig, JitterStaysInRangeAndDependsOnId) {
  const SynthConfig a = subject_config("S01", 7, 60.0);
  const SynthConfig b = subject_config("S01", 7, 60.0);
  const SynthConfig c = subject_config("S02", 7, 60.0);
  EXPECT_EQ(a.cadence_spm, b.cadence_spm);
  EXPECT_EQ(a.seed, b.seed);
  EXPECT_NE(a.cadence_spm, c.cadence_spm);
  for (int i = 0; i < 50; ++i) {
    const SynthConfig s = subject_config("S" + std::to_string(i), 3, 60.0);
    EXPECT_GE(s.cadence_spm, 100.0);
    EXPECT_LE(s.cadence_spm, 130.0);
    EXPECT_GE(s.accel_amp, 0.8 * SynthConfig{}.accel_amp);
    EXPECT_LE(s.gyro_amp, 1.2 * SynthConfig{}.gyro_amp);
  }
  const SynthConfig t = shifted(a);
  EXPECT_DOUBLE_EQ(t.scale, 1.3);
  EXPECT_DOUBLE_EQ(t.axis_rotation_deg, 20.0);
  EXPECT_DOUBLE_EQ(t.noise_sd, 2.0 * a.noise_sd);
}

TEST(ConvertIndexed, BuildsTimestampsAndAlternatingFeet) {
  TempDir dir;
  write_file(dir / "raw.csv",
             "accX,accY,accZ,gyrX,gyrY,gyrZ\n"
             "0,0,1,0,0,0\n0.1,0,1,0,0,0\n0.2,0,1,0,0,0\n0.3,0,1,0,0,0\n0.4,0,1,0,0,0\n");
  write_file(dir / "steps.txt", "1\n2\n4\n");
  const Recording rec = convert_indexed(dir / "raw.csv", dir / "steps.txt", 15.0, "p1", "shimmer3", Foot::Right);
  ASSERT_EQ(rec.samples.size(), 5u);
  EXPECT_DOUBLE_EQ(rec.samples[3].t, 3.0 / 15.0);
  EXPECT_DOUBLE_EQ(rec.samples[4].ax, 0.4);
  EXPECT_DOUBLE_EQ(rec.native_rate_hz, 15.0);
  ASSERT_EQ(rec.events.size(), 3u);
  EXPECT_EQ(rec.events[0].foot, Foot::Right);
  EXPECT_EQ(rec.events[1].foot, Foot::Left);
  EXPECT_EQ(rec.events[2].foot, Foot::Right);
  EXPECT_DOUBLE_EQ(rec.events[2].t, 4.0 / 15.0);

  write_file(dir / "steps.txt", "1,L\n3,L\n");
  std::vector<std::string> warnings;
  const Recording explicit_feet = convert_indexed(dir / "raw.csv", dir / "steps.txt", 15.0, "p1", "d",
                                                  Foot::Left, &warnings);
  EXPECT_EQ(explicit_feet.events[1].foot, Foot::Left);
  EXPECT_EQ(warnings.size(), 1u);

  write_file(dir / "steps.txt", "9\n");
  EXPECT_THROW(convert_indexed(dir / "raw.csv", dir / "steps.txt", 15.0, "p1", "d"), DataError);
}

}  // namespace
}  // namespace stepnet
