#include "neurochat/engine/engine.hpp"
#include "neurochat/ingest/synth.hpp"

#include <gtest/gtest.h>

#include <functional>
#include <random>

using namespace neurochat;

namespace {

EpochScore valid_epoch(double start_ms, double raw_e) {
  EpochScore e;
  e.start_ms = start_ms;
  e.raw_e = raw_e;
  e.bands = {1.0, 1.0, 2.0 * raw_e, start_ms};
  return e;
}

EpochScore flagged_epoch(double start_ms, std::uint32_t flags = kEpochArtifact) {
  auto e = valid_epoch(start_ms, 0.0);
  e.flags = flags;
  return e;
}

// Feeds one epoch per 250 ms (start = completion time - 1 s) and ticks on
// every whole second, like the stream processor does.
struct Driver {
  EngagementEngine engine;
  double t_ms = 0.0;
  std::vector<EngagementSample> samples;

  explicit Driver(EngineConfig cfg = {}) : engine(cfg) {}

  void run(double seconds, const std::function<EpochScore(double)>& make) {
    const int steps = static_cast<int>(std::llround(seconds * 4.0));
    for (int i = 0; i < steps; ++i) {
      t_ms += 250.0;
      engine.push_epoch(make(t_ms - 1000.0));
      if (std::fmod(t_ms, 1000.0) == 0.0) {
        if (auto s = engine.tick(t_ms)) samples.push_back(*s);
      }
    }
  }

  void constant(double seconds, double raw_e) {
    run(seconds, [&](double s) { return valid_epoch(s, raw_e); });
  }
};

bool has_event(const std::vector<EngineEvent>& events, EngineEvent::Kind kind) {
  for (const auto& e : events)
    if (e.kind == kind) return true;
  return false;
}

}  // namespace

// ---- artifact gate ----------------------------------------------------------------

TEST(ArtifactGate, Examples) {
  Epoch e;
  for (auto& ch : e.samples) ch.assign(256, 10.0);
  EXPECT_EQ(artifact_gate(e), kEpochOk);
  e.samples[2][100] = -50.0;
  EXPECT_EQ(artifact_gate(e), kEpochOk);
  e.samples[1][5] = 500.0;
  EXPECT_TRUE(artifact_gate(e) & kEpochArtifact);
  for (auto& ch : e.samples) ch.assign(256, 1.0);
  e.flags = kEpochDiscontinuous;
  EXPECT_TRUE(artifact_gate(e) & kEpochDiscontinuous);
}

TEST(ArtifactGate, FlaggedEpochsExcludedFromMeans) {
  std::deque<EpochScore> d;
  for (int k = 0; k < 60; ++k) d.push_back(k % 2 ? flagged_epoch(k * 250.0) : valid_epoch(k * 250.0, 1.0));
  const auto w = window_stats(d, 15.0, 14000.0, 0.5);
  ASSERT_TRUE(w.mean);
  EXPECT_DOUBLE_EQ(*w.mean, 1.0);
  EXPECT_NEAR(w.quality, 0.5, 0.02);
}

// ---- tick ----------------------------------------------------------------------------

TEST(Tick, NoNormalizedScoreBeforeCalibration) {
  Driver d;
  d.constant(20.0, 0.5);
  ASSERT_EQ(d.samples.size(), 20u);
  for (const auto& s : d.samples) EXPECT_FALSE(s.e_norm);
  EXPECT_NEAR(*d.samples.back().e_window, 0.5, 1e-12);
  // Freezing without a calibration falls back to the default.
  const auto f = d.engine.on_typing_started(d.t_ms);
  EXPECT_TRUE(f.default_flag);
  EXPECT_EQ(f.frozen_score, 0.5);
}

TEST(Tick, TwentySecondsValidGivesFullQuality) {
  Driver d;
  d.engine.restore_calibration({0.0, 1.0});
  d.constant(20.0, 0.6);
  ASSERT_FALSE(d.samples.empty());
  const auto& s = d.samples.back();
  EXPECT_DOUBLE_EQ(s.quality, 1.0);
  EXPECT_DOUBLE_EQ(s.coverage, 1.0);
  EXPECT_FALSE(s.stale);
  EXPECT_NEAR(*s.e_norm, 0.6, 1e-12);
}

TEST(Tick, EightSecondsOfArtifactIsStale) {
  Driver d;
  d.engine.restore_calibration({0.0, 1.0});
  d.constant(7.0, 0.6);
  d.run(8.0, [](double s) { return flagged_epoch(s); });
  const auto& s = d.samples.back();
  EXPECT_NEAR(s.quality, 0.47, 0.05);
  EXPECT_TRUE(s.stale);
}

TEST(Tick, StaleWheneverQualityBelowHalf) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    Driver d;
    d.engine.restore_calibration({0.2, 1.4});
    std::bernoulli_distribution good(std::uniform_real_distribution<double>(0.1, 1.0)(rng));
    std::uniform_real_distribution<double> val(0.0, 3.0);
    d.run(40.0, [&](double s) { return good(rng) ? valid_epoch(s, val(rng)) : flagged_epoch(s); });
    for (const auto& s : d.samples) {
      if (s.quality < 0.5) EXPECT_TRUE(s.stale);
      if (s.e_norm) {
        EXPECT_GE(*s.e_norm, 0.0);
        EXPECT_LE(*s.e_norm, 1.0);
      }
    }
  }
}

TEST(Tick, OneSamplePerSecondFromStreamProcessor) {
  StreamProcessor proc;
  proc.engine().restore_calibration({0.0, 5.0});
  SynthSpec spec;
  spec.alpha.amplitude_uv = 10.0;
  spec.beta.amplitude_uv = 5.0;
  spec.noise_std_uv = 2.0;
  spec.duration_s = 90.0;
  spec.start_ms = 500.0;
  std::size_t in_minute = 0;
  for (const auto& f : synth_generate(spec)) {
    for (const auto& s : proc.push(f).samples)
      if (s.t_ms > 20000.0 && s.t_ms <= 80000.0) ++in_minute;
  }
  EXPECT_GE(in_minute, 59u);
  EXPECT_LE(in_minute, 61u);
}

// ---- freeze --------------------------------------------------------------------------

TEST(Freeze, CapturesCurrentScore) {
  Driver d;
  d.engine.restore_calibration({0.0, 1.0});
  d.constant(20.0, 0.7);
  const auto f = d.engine.on_typing_started(d.t_ms);
  EXPECT_TRUE(f.frozen);
  EXPECT_NEAR(f.frozen_score, 0.7, 1e-12);
  EXPECT_FALSE(f.default_flag);
}

TEST(Freeze, IdempotentWhileFrozen) {
  Driver d;
  d.engine.restore_calibration({0.0, 1.0});
  d.constant(20.0, 0.3);
  const auto first = d.engine.on_typing_started(d.t_ms);
  d.constant(5.0, 0.9);
  const auto second = d.engine.on_typing_started(d.t_ms);
  EXPECT_EQ(first.frozen_score, second.frozen_score);
  EXPECT_EQ(first.frozen_at_ms, second.frozen_at_ms);
}

TEST(Freeze, DefaultWhenNoScoreYet) {
  EngagementEngine e;
  const auto f = e.on_typing_started(1000.0);
  EXPECT_EQ(f.frozen_score, 0.5);
  EXPECT_TRUE(f.default_flag);
  EXPECT_TRUE(e.injectable_score().default_flag);
}

TEST(Freeze, FallsBackToLastNonStaleScore) {
  Driver d;
  d.engine.restore_calibration({0.0, 1.0});
  d.constant(20.0, 0.35);
  d.run(20.0, [](double s) { return flagged_epoch(s); });
  ASSERT_TRUE(d.samples.back().stale);
  const auto f = d.engine.on_typing_started(d.t_ms);
  EXPECT_NEAR(f.frozen_score, 0.35, 1e-12);
  EXPECT_FALSE(f.default_flag);
}

TEST(Freeze, HighBetaWhileTypingDoesNotMoveInjectedScore) {
  Driver d;
  d.engine.restore_calibration({0.0, 1.0});
  d.constant(20.0, 0.42);
  d.engine.on_typing_started(d.t_ms);
  for (int i = 0; i < 10; ++i) {
    d.constant(1.0, 0.95);
    EXPECT_NEAR(d.engine.injectable_score().score, 0.42, 1e-12);
  }
  EXPECT_EQ(std::round(d.engine.injectable_score().score * 100.0), 42.0);
}

TEST(Freeze, TypingEpochsNeverEnterWindow) {
  // Sentinel epochs pushed while typing would dominate any mean they touch.
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    Driver d;
    d.engine.restore_calibration({0.0, 1.0});
    std::uniform_real_distribution<double> val(0.1, 0.9);
    std::uniform_real_distribution<double> dur(1.0, 20.0);
    for (int turn = 0; turn < 5; ++turn) {
      d.run(std::round(dur(rng)), [&](double s) { return valid_epoch(s, val(rng)); });
      const double typing_at = d.t_ms;
      d.engine.on_typing_started(typing_at);
      d.run(std::round(dur(rng)),
            [&](double s) { return s >= typing_at ? valid_epoch(s, 1e6) : valid_epoch(s, val(rng)); });
      d.engine.on_response_delivered(d.t_ms);
    }
    for (const auto& s : d.samples)
      if (s.e_window) EXPECT_LT(*s.e_window, 1.0);
  }
}

TEST(Freeze, DeliveryRestartsWindow) {
  Driver d;
  d.engine.restore_calibration({0.0, 1.0});
  d.constant(20.0, 0.2);
  d.engine.on_typing_started(d.t_ms);
  d.constant(3.0, 0.2);
  const double delivered = d.t_ms;
  d.engine.on_response_delivered(delivered);
  d.constant(5.0, 0.8);
  const auto& s = d.samples.back();
  ASSERT_TRUE(s.e_window);
  // Only post-delivery epochs contribute.
  EXPECT_NEAR(*s.e_window, 0.8, 1e-12);
  EXPECT_FALSE(d.engine.freeze_state().frozen);
}

TEST(Freeze, DeliverWithoutFreezeIsNoop) {
  Driver d;
  d.engine.restore_calibration({0.0, 1.0});
  d.constant(20.0, 0.2);
  d.engine.on_response_delivered(d.t_ms);
  d.constant(1.0, 0.2);
  EXPECT_NEAR(d.samples.back().quality, 1.0, 1e-12);
  EXPECT_DOUBLE_EQ(d.samples.back().coverage, 1.0);
  EXPECT_FALSE(has_event(d.engine.drain_events(), EngineEvent::Kind::kUnfreeze));
}

TEST(Freeze, SecondFreezeCapturesFreshScore) {
  Driver d;
  d.engine.restore_calibration({0.0, 1.0});
  d.constant(20.0, 0.2);
  EXPECT_NEAR(d.engine.on_typing_started(d.t_ms).frozen_score, 0.2, 1e-12);
  d.engine.on_response_delivered(d.t_ms);
  d.constant(20.0, 0.9);
  EXPECT_NEAR(d.engine.on_typing_started(d.t_ms).frozen_score, 0.9, 1e-12);
}

TEST(Freeze, ImmutableAcrossReadsProperty) {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 30; ++trial) {
    Driver d;
    d.engine.restore_calibration({0.0, 1.0});
    std::uniform_real_distribution<double> val(0.0, 1.0);
    d.constant(20.0, val(rng));
    const auto frozen = d.engine.on_typing_started(d.t_ms);
    for (int i = 0; i < 30; ++i) {
      d.run(1.0, [&](double s) { return valid_epoch(s, val(rng)); });
      d.engine.on_typing_started(d.t_ms);
      ASSERT_EQ(d.engine.injectable_score().score, frozen.frozen_score);
    }
  }
}

// ---- calibration state machine --------------------------------------------------------

namespace {

// Runs probe + both tasks with per-phase epoch generators.
void calibrate(Driver& d, double relax_e, double word_e) {
  d.engine.start_calibration(d.t_ms);
  d.run(6.0, [&](double s) { return valid_epoch(s, relax_e); });
  ASSERT_EQ(d.engine.calibration_status().phase, CalibrationPhase::kRelaxation);
  d.run(120.0, [&](double s) { return valid_epoch(s, relax_e); });
  ASSERT_EQ(d.engine.calibration_status().phase, CalibrationPhase::kWordAssociation);
  d.run(120.0, [&](double s) { return valid_epoch(s, word_e); });
}

}  // namespace

TEST(Calibration, CompletesWithPooledMinMax) {
  Driver d;
  d.t_ms = 10000.0;
  calibrate(d, 0.3, 1.2);
  const auto& st = d.engine.calibration_status();
  ASSERT_EQ(st.phase, CalibrationPhase::kComplete);
  ASSERT_TRUE(d.engine.calibration());
  EXPECT_NEAR(d.engine.calibration()->e_min, 0.3, 1e-12);
  EXPECT_NEAR(d.engine.calibration()->e_max, 1.2, 1e-12);
  EXPECT_GE(st.relaxation_windows, 30u);
  EXPECT_GE(st.word_windows, 30u);
  const auto events = d.engine.drain_events();
  EXPECT_TRUE(has_event(events, EngineEvent::Kind::kCalibrationComplete));
}

TEST(Calibration, TaskLastsOneHundredTwentySeconds) {
  Driver d;
  d.engine.start_calibration(0.0);
  double relax_at = -1, word_at = -1, done_at = -1;
  for (int i = 0; i < 300 * 4; ++i) {
    d.constant(0.25, i < 600 ? 0.3 : 0.9);
    for (const auto& e : d.engine.drain_events()) {
      if (e.kind == EngineEvent::Kind::kPhase && e.phase == CalibrationPhase::kRelaxation) relax_at = e.t_ms;
      if (e.kind == EngineEvent::Kind::kPhase && e.phase == CalibrationPhase::kWordAssociation) word_at = e.t_ms;
      if (e.kind == EngineEvent::Kind::kCalibrationComplete) done_at = e.t_ms;
    }
  }
  ASSERT_GE(relax_at, 0.0);
  EXPECT_DOUBLE_EQ(word_at - relax_at, 120000.0);
  EXPECT_DOUBLE_EQ(done_at - word_at, 120000.0);
}

TEST(Calibration, ProbeNeedsEightyPercentValid) {
  Driver d;
  d.engine.start_calibration(0.0);
  int k = 0;
  d.run(6.0, [&](double s) { return (k++ % 3 == 0) ? flagged_epoch(s) : valid_epoch(s, 1.0); });
  const auto& st = d.engine.calibration_status();
  EXPECT_EQ(st.phase, CalibrationPhase::kFailed);
  EXPECT_EQ(st.failure, CalibrationFailure::kQuality);
  ASSERT_TRUE(st.resume_phase);
  EXPECT_EQ(*st.resume_phase, CalibrationPhase::kRelaxation);
}

TEST(Calibration, ProbeWaitsForSignal) {
  Driver d;
  d.engine.start_calibration(0.0);
  d.t_ms = 0.0;
  for (int s = 1; s <= 3; ++s) d.engine.tick(s * 1000.0);
  EXPECT_EQ(d.engine.calibration_status().phase, CalibrationPhase::kIdle);
  EXPECT_TRUE(d.engine.calibration_status().armed);
}

TEST(Calibration, IdenticalTasksAreDegenerate) {
  Driver d;
  calibrate(d, 0.5, 0.5);
  const auto& st = d.engine.calibration_status();
  EXPECT_EQ(st.phase, CalibrationPhase::kFailed);
  EXPECT_EQ(st.failure, CalibrationFailure::kDegenerate);
  EXPECT_FALSE(d.engine.calibration());
}

TEST(Calibration, TooFewValidWindowsIsQualityFailure) {
  Driver d;
  d.engine.start_calibration(0.0);
  d.constant(6.0, 0.4);
  ASSERT_EQ(d.engine.calibration_status().phase, CalibrationPhase::kRelaxation);
  d.run(120.0, [](double s) { return flagged_epoch(s); });
  const auto& st = d.engine.calibration_status();
  EXPECT_EQ(st.phase, CalibrationPhase::kFailed);
  EXPECT_EQ(st.failure, CalibrationFailure::kQuality);
  EXPECT_FALSE(d.engine.calibration());
}

TEST(Calibration, DisconnectAfterThirtySecondsIsResumable) {
  Driver d;
  d.engine.start_calibration(0.0);
  d.constant(30.0, 0.4);
  d.engine.on_stream_lost(d.t_ms);
  const auto& st = d.engine.calibration_status();
  EXPECT_EQ(st.phase, CalibrationPhase::kFailed);
  EXPECT_EQ(st.failure, CalibrationFailure::kStreamLost);
  EXPECT_FALSE(st.result);
  EXPECT_FALSE(d.engine.calibration());
  ASSERT_TRUE(st.resume_phase);
  EXPECT_EQ(*st.resume_phase, CalibrationPhase::kRelaxation);

  d.engine.resume_calibration(d.t_ms);
  d.constant(6.0, 0.4);
  EXPECT_EQ(d.engine.calibration_status().phase, CalibrationPhase::kRelaxation);
  d.constant(120.0, 0.4);
  d.constant(120.0, 1.0);
  EXPECT_EQ(d.engine.calibration_status().phase, CalibrationPhase::kComplete);
}

TEST(Calibration, GapInWordTaskKeepsRelaxation) {
  Driver d;
  d.engine.start_calibration(0.0);
  d.constant(126.0, 0.4);
  ASSERT_EQ(d.engine.calibration_status().phase, CalibrationPhase::kWordAssociation);
  const auto relax_windows = d.engine.calibration_status().relaxation_windows;
  d.constant(20.0, 1.0);
  d.run(0.25, [](double s) { return flagged_epoch(s, kEpochDiscontinuous); });
  auto st = d.engine.calibration_status();
  EXPECT_EQ(st.phase, CalibrationPhase::kFailed);
  EXPECT_EQ(st.failure, CalibrationFailure::kStreamLost);
  EXPECT_EQ(*st.resume_phase, CalibrationPhase::kWordAssociation);
  EXPECT_EQ(st.relaxation_windows, relax_windows);

  d.engine.resume_calibration(d.t_ms);
  d.constant(6.0, 1.0);
  EXPECT_EQ(d.engine.calibration_status().phase, CalibrationPhase::kWordAssociation);
  d.constant(120.0, 1.0);
  ASSERT_EQ(d.engine.calibration_status().phase, CalibrationPhase::kComplete);
  EXPECT_NEAR(d.engine.calibration()->e_min, 0.4, 1e-12);
  EXPECT_NEAR(d.engine.calibration()->e_max, 1.0, 1e-12);
}

TEST(Calibration, ResumeRequiresFailure) {
  EngagementEngine e;
  EXPECT_THROW(e.resume_calibration(0.0), CalibrationError);
}

TEST(Calibration, PoolingBoundsEveryWindowProperty) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 10; ++trial) {
    Driver d;
    std::uniform_real_distribution<double> val(0.05, 3.0);
    std::bernoulli_distribution artifact(0.1);
    d.engine.start_calibration(0.0);
    d.constant(6.0, 1.0);
    d.run(240.0, [&](double s) { return artifact(rng) ? flagged_epoch(s) : valid_epoch(s, val(rng)); });
    ASSERT_EQ(d.engine.calibration_status().phase, CalibrationPhase::kComplete) << trial;
    const auto cal = *d.engine.calibration();
    const auto windows = d.engine.calibration_windows();
    ASSERT_FALSE(windows.empty());
    for (double w : windows) {
      EXPECT_LE(cal.e_min, w);
      EXPECT_GE(cal.e_max, w);
    }
  }
}

TEST(Calibration, NoResultWithoutTwoCompletedTasksProperty) {
  std::mt19937_64 rng(2024);
  int completed = 0;
  for (int trial = 0; trial < 60; ++trial) {
    Driver d;
    std::uniform_real_distribution<double> val(0.05, 3.0);
    std::discrete_distribution<int> action({60, 10, 3, 3, 8, 8, 8});
    bool relax_done = false, word_done = false;
    for (int step = 0; step < 120 && !d.engine.calibration(); ++step) {
      switch (action(rng)) {
        case 0: d.run(10.0, [&](double s) { return valid_epoch(s, val(rng)); }); break;
        case 1: d.run(10.0, [](double s) { return flagged_epoch(s); }); break;
        case 2: d.run(0.25, [](double s) { return flagged_epoch(s, kEpochDiscontinuous); }); break;
        case 3: d.engine.on_stream_lost(d.t_ms); break;
        case 4:
          try {
            d.engine.start_calibration(d.t_ms);
          } catch (const CalibrationError&) {
          }
          break;
        case 5:
          try {
            d.engine.resume_calibration(d.t_ms);
          } catch (const CalibrationError&) {
          }
          break;
        case 6: d.engine.on_typing_started(d.t_ms); break;
      }
      // Track completed task phases from the event log.
      for (const auto& e : d.engine.drain_events()) {
        if (e.kind == EngineEvent::Kind::kPhase && e.phase == CalibrationPhase::kWordAssociation) relax_done = true;
        if (e.kind == EngineEvent::Kind::kPhase && e.phase == CalibrationPhase::kRelaxation) relax_done = false;
        if (e.kind == EngineEvent::Kind::kCalibrationComplete) word_done = true;
      }
      if (d.engine.calibration()) {
        ++completed;
        EXPECT_TRUE(relax_done && word_done);
        const auto& st = d.engine.calibration_status();
        EXPECT_GE(st.relaxation_windows, 30u);
        EXPECT_GE(st.word_windows, 30u);
      }
    }
  }
  EXPECT_GT(completed, 0);
}

// ---- run_calibration on synthetic streams ------------------------------------------------

namespace {
SynthSpec low_beta(double duration_s, std::uint64_t seed) {
  SynthSpec s;
  s.theta = {10.0, 5.0};
  s.alpha = {20.0, 10.0};
  s.beta = {3.0, 15.0};
  s.noise_std_uv = 2.0;
  s.duration_s = duration_s;
  s.seed = seed;
  return s;
}
SynthSpec high_beta(double duration_s, std::uint64_t seed) {
  SynthSpec s;
  s.theta = {5.0, 5.0};
  s.alpha = {5.0, 10.0};
  s.beta = {20.0, 15.0};
  s.noise_std_uv = 2.0;
  s.duration_s = duration_s;
  s.seed = seed;
  return s;
}
}  // namespace

TEST(RunCalibration, LowAndHighBetaPair) {
  const auto relax = synth_generate(low_beta(300.0, 1));
  const auto word = synth_generate(high_beta(300.0, 2));
  const auto cal = run_calibration(relax, word);
  EXPECT_LT(cal.e_min, cal.e_max);

  StreamProcessor proc;
  proc.engine().restore_calibration(cal);
  std::size_t total = 0, low = 0;
  for (const auto& f : synth_generate(low_beta(120.0, 3))) {
    for (const auto& s : proc.push(f).samples) {
      if (s.stale) continue;
      ++total;
      if (*s.e_norm <= 0.2) ++low;
    }
  }
  ASSERT_GT(total, 90u);
  EXPECT_GE(static_cast<double>(low) / total, 0.9);
}

TEST(RunCalibration, IdenticalNoiselessStreamIsDegenerate) {
  auto spec = low_beta(300.0, 1);
  spec.noise_std_uv = 0.0;
  const auto stream = synth_generate(spec);
  EXPECT_THROW(run_calibration(stream, stream), DegenerateCalibration);
}

TEST(RunCalibration, ShortStreamsDoNotComplete) {
  const auto relax = synth_generate(low_beta(30.0, 1));
  EXPECT_THROW(run_calibration(relax, relax), CalibrationError);
}

TEST(RunCalibration, ArtifactStreamIsQualityError) {
  auto spec = low_beta(300.0, 1);
  spec.noise_std_uv = 300.0;
  const auto noisy = synth_generate(spec);
  EXPECT_THROW(run_calibration(noisy, noisy), QualityError);
}
