#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "paec/evaluation.hpp"
#include "paec/metrics.hpp"
#include "test_support.hpp"

using namespace paec;

namespace {

Waveform rnd(std::size_t n, std::uint64_t seed, double scale = 1.0) {
  return Waveform(oracle::random_signal(n, seed, scale));
}

Waveform scaled(const Waveform& w, double g) {
  Waveform out = w;
  for (auto& v : out.samples) v *= g;
  return out;
}

std::vector<SceneSpec> scenes(Scenario sc, TalkCondition cond, std::size_t n, std::uint64_t seed0) {
  const auto& pool = testing_support::shared_pool();
  std::vector<SceneSpec> out;
  for (std::size_t i = 0; i < n; ++i) {
    auto spec = sample_scene(sc, pool.sources, seed0 + i, {cond, 1.0});
    spec.scene_id = "s" + std::to_string(i);
    out.push_back(spec);
  }
  return out;
}

}  // namespace

TEST(Erle, Examples) {
  const auto y = rnd(8000, 1);
  EXPECT_EQ(erle(y, y), 0.0);
  EXPECT_NEAR(erle(y, scaled(y, 0.1)), 20.0, 1e-12);
  EXPECT_EQ(erle(y, Waveform(8000)), kInf);
  EXPECT_THROW(erle(y, Waveform(10)), Error);
}

TEST(Erle, MatchesOracle) {
  for (std::uint64_t k = 0; k < 20; ++k) {
    const auto y = rnd(4000, 100 + k), s = rnd(4000, 200 + k, 0.3);
    EXPECT_NEAR(erle(y, s), oracle::erle(y.samples, s.samples), 1e-9);
  }
}

TEST(SiSdr, Examples) {
  const auto s = rnd(8000, 2);
  EXPECT_EQ(si_sdr(s, s), kInf);
  EXPECT_EQ(si_sdr(s, scaled(s, 2.0)), kInf);
  // Orthogonal noise with the reference's energy gives exactly 0 dB.
  auto n = rnd(8000, 3);
  const double proj = [&] {
    long double a = 0, b = 0;
    for (std::size_t i = 0; i < 8000; ++i) {
      a += s[i] * n[i];
      b += s[i] * s[i];
    }
    return static_cast<double>(a / b);
  }();
  for (std::size_t i = 0; i < 8000; ++i) n[i] -= proj * s[i];
  n = scaled(n, std::sqrt(energy(s.samples) / energy(n.samples)));
  Waveform e(8000);
  for (std::size_t i = 0; i < 8000; ++i) e[i] = s[i] + n[i];
  EXPECT_NEAR(si_sdr(s, e), 0.0, 1e-9);
  EXPECT_THROW(si_sdr(Waveform(8000), e), Error);
  EXPECT_THROW(si_sdr(s, Waveform(10)), Error);
}

TEST(SiSdr, ScaleInvariantAndMatchesOracle) {
  for (std::uint64_t k = 0; k < 20; ++k) {
    const auto s = rnd(4000, 300 + k), e = rnd(4000, 400 + k);
    const double v = si_sdr(s, e);
    EXPECT_NEAR(v, si_sdr(s, scaled(e, 2.0)), 1e-9);
    EXPECT_NEAR(v, oracle::si_sdr(s.samples, e.samples), 1e-9);
  }
}

TEST(Lsd, Examples) {
  const auto s = rnd(8000, 4);
  EXPECT_EQ(lsd(s, s), 0.0);
  const double silent = lsd(s, Waveform(8000));
  EXPECT_GT(silent, 100.0);
  EXPECT_NEAR(silent, oracle::lsd(s.samples, std::vector<double>(8000, 0.0)), 1e-9);
  EXPECT_THROW(lsd(s, Waveform(7999)), Error);
  for (std::uint64_t k = 0; k < 10; ++k) {
    const auto a = rnd(3200, 500 + k), b = rnd(3200, 600 + k);
    EXPECT_NEAR(lsd(a, b), oracle::lsd(a.samples, b.samples), 1e-9);
  }
}

TEST(MeasureRatios, Examples) {
  const auto s = rnd(4000, 5);
  SceneSpec spec;
  spec.sir = 0.0;
  spec.ser = 7.5;
  spec.snr = kInf;
  const auto rec = mix_at_ratios(s, rnd(4000, 6), rnd(4000, 7), rnd(4000, 8), spec);
  const auto r = measure_ratios(rec);
  EXPECT_NEAR(r.sir, 0.0, 1e-9);
  EXPECT_NEAR(r.ser, 7.5, 1e-9);
  EXPECT_EQ(r.snr, kInf);
  auto silent = rec;
  silent.s = Waveform(4000);
  EXPECT_THROW(measure_ratios(silent), Error);
}

TEST(MeasureRatios, RenderedD3WithinSpec) {
  for (const auto& spec : scenes(Scenario::kD3, TalkCondition::kDoubleTalk, 3, 50)) {
    const auto r = measure_ratios(render_scene(spec));
    EXPECT_GE(r.snr, 15.0 - 0.01);
    EXPECT_LE(r.snr, 45.0 + 0.01);
    EXPECT_NEAR(r.snr, spec.snr, 0.01);
    EXPECT_NEAR(r.sir, spec.sir, 0.01);
    EXPECT_NEAR(r.ser, spec.ser, 0.01);
  }
}

TEST(Evaluate, EmptyManifestGivesEmptyReport) {
  const auto report = evaluate_scenes({}, baseline_enhancer("input"), "input");
  EXPECT_TRUE(report.scenes.empty());
  EXPECT_TRUE(report.summaries().empty());
  EXPECT_NE(report.to_json().find("\"scenes\": []"), std::string::npos);
}

TEST(Evaluate, IdentityHasZeroImprovement) {
  const auto report =
      evaluate_scenes(scenes(Scenario::kD2, TalkCondition::kDoubleTalk, 3, 60), baseline_enhancer("input"), "input");
  ASSERT_EQ(report.scenes.size(), 3u);
  for (const auto& row : report.scenes) {
    ASSERT_TRUE(row.si_sdr_improvement);
    EXPECT_EQ(*row.si_sdr_improvement, 0.0);
    EXPECT_TRUE(row.lsd);
    EXPECT_FALSE(row.erle);
  }
  EXPECT_EQ(report.summaries().at("DT").at("si_sdr_improvement").count, 3u);
}

TEST(Evaluate, SilentOutputOnFarEndSingleTalkIsInfinite) {
  const auto report = evaluate_scenes(scenes(Scenario::kD1, TalkCondition::kFarEndSingleTalk, 2, 70),
                                      baseline_enhancer("zero"), "zero");
  for (const auto& row : report.scenes) {
    ASSERT_TRUE(row.erle);
    EXPECT_EQ(*row.erle, kInf);
    EXPECT_FALSE(row.si_sdr);
  }
  const auto json = report.to_json();
  EXPECT_NE(json.find("\"erle_db\": \"inf\""), std::string::npos);
  const auto input = evaluate_scenes(scenes(Scenario::kD1, TalkCondition::kFarEndSingleTalk, 2, 70),
                                     baseline_enhancer("input"), "input");
  for (const auto& row : input.scenes) EXPECT_EQ(*row.erle, 0.0);
}

TEST(Evaluate, ThreadCountDoesNotChangeReport) {
  const auto specs = scenes(Scenario::kD3, TalkCondition::kNearEndSingleTalk, 4, 80);
  const auto a = evaluate_scenes(specs, baseline_enhancer("input"), "input", 1).to_json();
  const auto b = evaluate_scenes(specs, baseline_enhancer("input"), "input", 3).to_json();
  EXPECT_EQ(a, b);
  EXPECT_THROW(baseline_enhancer("oracle"), Error);
}

TEST(Evaluate, SummaryStatistics) {
  EvalReport r;
  for (double v : {1.0, 3.0, 8.0, kInf}) {
    SceneResult row;
    row.condition = TalkCondition::kFarEndSingleTalk;
    row.erle = v;
    r.scenes.push_back(row);
  }
  const auto s = r.summaries().at("ST-FE").at("erle");
  EXPECT_EQ(s.count, 4u);
  EXPECT_EQ(s.mean, kInf);
  EXPECT_EQ(s.median, 5.5);
}
