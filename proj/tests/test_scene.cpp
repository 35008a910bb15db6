#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "oracles.hpp"
#include "paec/manifest.hpp"
#include "paec/rir.hpp"
#include "paec/scene.hpp"
#include "paec/wav.hpp"
#include "test_support.hpp"

using namespace paec;

namespace {

double ratio_db(const Waveform& a, const Waveform& b) {
  return 10.0 * std::log10(oracle::energy(a.samples) / oracle::energy(b.samples));
}

std::string file_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST(Rir, AnechoicLimitIsSingleDirectImpulse) {
  RoomSpec room;
  RirOptions opts;
  opts.max_order = 0;
  opts.absorption = 1.0;
  const auto h = simulate_rir(room, opts);
  double dist = 0.0;
  for (int a = 0; a < 3; ++a) dist += std::pow(room.source_pos[a] - room.mic_pos[a], 2);
  dist = std::sqrt(dist);
  const auto n = static_cast<std::size_t>(std::llround(dist / kSpeedOfSound * 16000.0));
  for (std::size_t i = 0; i < h.size(); ++i) {
    if (i == n) EXPECT_NEAR(h[i], 1.0 / dist, 1e-12);
    else EXPECT_EQ(h[i], 0.0) << i;
  }
}

TEST(Rir, DefaultRoomDecayTime) {
  RoomSpec room;  // 6 x 3.5 x 4, rt60 0.4
  const auto h = simulate_rir(room);
  EXPECT_GE(h.size(), static_cast<std::size_t>(0.4 * 16000));
  const double rt = oracle::schroeder_rt60(h.samples, 16000.0);
  EXPECT_GE(rt, 0.32);
  EXPECT_LE(rt, 0.48);
  EXPECT_NEAR(estimate_rt60(h), rt, 1e-3);
}

TEST(Rir, DeterministicAndFinite) {
  const auto room = sample_room(77);
  const auto a = simulate_rir(room);
  const auto b = simulate_rir(room);
  EXPECT_EQ(a.samples, b.samples);
  require_finite(a.view(), "rir");
}

TEST(Rir, SchroederCurveIsNonIncreasing) {
  const auto h = simulate_rir(sample_room(3));
  const auto edc = schroeder_decay_db(h);
  EXPECT_DOUBLE_EQ(edc.front(), 0.0);
  for (std::size_t i = 1; i < edc.size(); ++i) EXPECT_LE(edc[i], edc[i - 1] + 1e-12);
}

TEST(Rir, GeometryViolationsThrow) {
  RoomSpec room;
  room.mic_pos = {0.05, 1.0, 1.0};
  EXPECT_THROW(simulate_rir(room), Error);
  room = RoomSpec{};
  room.width = -1.0;
  EXPECT_THROW(simulate_rir(room), Error);
  room = RoomSpec{};
  room.rt60 = 0.0;
  EXPECT_THROW(simulate_rir(room), Error);
}

TEST(Rir, SampledRoomsRespectRanges) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto r = sample_room(seed);
    EXPECT_GE(r.width, 5.0);
    EXPECT_LE(r.width, 8.0);
    EXPECT_GE(r.height, 3.0);
    EXPECT_LE(r.height, 4.0);
    EXPECT_GE(r.depth, 3.0);
    EXPECT_LE(r.depth, 5.0);
    EXPECT_GE(r.rt60, 0.2);
    EXPECT_LE(r.rt60, 0.7);
    EXPECT_NO_THROW(validate_room(r));
  }
}

TEST(RenderEcho, UnitImpulse) {
  const Waveform x(oracle::random_signal(4000, 1));
  const Waveform h(std::vector<double>{1.0});
  const auto d0 = render_echo(x, h, 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(d0[i], x[i], 1e-12);
  const auto d100 = render_echo(x, h, 100.0);
  for (std::size_t i = 0; i < 1600; ++i) EXPECT_EQ(d100[i], 0.0);
  for (std::size_t i = 1600; i < x.size(); ++i) EXPECT_NEAR(d100[i], x[i - 1600], 1e-12);
}

TEST(RenderEcho, MatchesDirectConvolutionAtMaxDelay) {
  const auto x = oracle::random_signal(12000, 2);
  const auto h = oracle::random_signal(300, 3, 0.1);
  const auto d = render_echo(Waveform(x), Waveform(h), 512.0);
  ASSERT_EQ(d.size(), x.size());
  for (std::size_t n = 0; n < x.size(); ++n) {
    double want = 0.0;
    if (n >= 8192) {
      const std::size_t m = n - 8192;
      for (std::size_t k = 0; k < h.size() && k <= m; ++k) want += h[k] * x[m - k];
    }
    EXPECT_NEAR(d[n], want, 1e-9) << n;
  }
}

TEST(RenderEcho, DelayBounds) {
  const Waveform x(100), h(std::vector<double>{1.0});
  EXPECT_THROW(render_echo(x, h, -1.0), Error);
  EXPECT_THROW(render_echo(x, h, 513.0), Error);
}

TEST(Mix, EqualEnergyZeroDbLeavesInterfererUnscaled) {
  const Waveform s(std::vector<double>{1.0, -1.0, 1.0, -1.0});
  const Waveform z(std::vector<double>{-1.0, 1.0, 1.0, -1.0});
  const Waveform zero(4);
  SceneSpec spec;
  spec.sir = 0.0;
  spec.ser = kInf;
  spec.snr = kInf;
  const auto rec = mix_at_ratios(s, z, zero, zero, spec);
  EXPECT_EQ(rec.z.samples, z.samples);
  EXPECT_DOUBLE_EQ(ratio_gain(4.0, 4.0, 0.0), 1.0);
}

TEST(Mix, TwentyDbIsAmplitudeTenth) {
  const Waveform s(oracle::random_signal(1000, 4));
  std::vector<double> zz = s.samples;
  std::reverse(zz.begin(), zz.end());
  const Waveform z(zz);
  SceneSpec spec;
  spec.sir = 20.0;
  spec.ser = kInf;
  spec.snr = kInf;
  const auto rec = mix_at_ratios(s, z, Waveform(1000), Waveform(1000), spec);
  for (std::size_t i = 0; i < z.size(); ++i) EXPECT_NEAR(rec.z[i], 0.1 * z[i], 1e-12);
  EXPECT_NEAR(ratio_db(rec.s, rec.z), 20.0, 1e-9);
}

TEST(Mix, InfiniteSirZeroesInterferer) {
  const Waveform s(oracle::random_signal(500, 5));
  const Waveform d(oracle::random_signal(500, 6));
  const Waveform v(oracle::random_signal(500, 7));
  SceneSpec spec;
  spec.sir = kInf;
  spec.ser = 3.0;
  spec.snr = 10.0;
  const auto rec = mix_at_ratios(s, Waveform(oracle::random_signal(500, 8)), d, v, spec);
  for (std::size_t i = 0; i < 500; ++i) {
    EXPECT_EQ(rec.z[i], 0.0);
    EXPECT_NEAR(rec.y[i], rec.s[i] + rec.d[i] + rec.v[i], 1e-12);
  }
  EXPECT_TRUE(std::isinf(rec.sir));
}

TEST(Mix, ZeroEnergyComponentWithFiniteRatioThrows) {
  SceneSpec spec;
  spec.sir = 5.0;
  spec.ser = kInf;
  spec.snr = kInf;
  const Waveform s(oracle::random_signal(10, 1));
  EXPECT_THROW(mix_at_ratios(s, Waveform(10), Waveform(10), Waveform(10), spec), Error);
  EXPECT_THROW(mix_at_ratios(Waveform(10), s, Waveform(10), Waveform(10), spec), Error);
}

TEST(Scene, RenderedScenesAreExactAndPreserveTarget) {
  const auto& pool = testing_support::shared_pool();
  for (auto scenario : {Scenario::kD1, Scenario::kD2, Scenario::kD3}) {
    const auto scenes = build_scenes(4, scenario, pool.sources, 11, {.duration_s = 1.5});
    for (const auto& spec : scenes) {
      const auto rec = render_scene(spec);
      const auto source = fit_length(read_wav(spec.near_end.path), rec.y.size());
      EXPECT_EQ(rec.s.samples, source.samples);
      for (std::size_t i = 0; i < rec.y.size(); ++i) {
        ASSERT_NEAR(rec.y[i], rec.s[i] + rec.z[i] + rec.d[i] + rec.v[i], 1e-9);
      }
      if (std::isinf(spec.sir)) {
        EXPECT_EQ(oracle::energy(rec.z.samples), 0.0);
      } else {
        EXPECT_NEAR(ratio_db(rec.s, rec.z), spec.sir, 0.01);
      }
      EXPECT_NEAR(ratio_db(rec.s, rec.d), spec.ser, 0.01);
      EXPECT_NEAR(ratio_db(rec.s, rec.v), spec.snr, 0.01);
    }
  }
}

TEST(Scene, SamplerRangesAndDistinctSpeakers) {
  const auto& pool = testing_support::shared_pool();
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const auto d1 = sample_scene(Scenario::kD1, pool.sources, seed);
    EXPECT_TRUE(std::isinf(d1.sir));
    EXPECT_FALSE(d1.interferer.has_value());
    EXPECT_NE(d1.near_end.speaker, d1.far_end.speaker);
    EXPECT_GE(d1.snr, -5.0);
    EXPECT_LE(d1.snr, 40.0);
    const auto d2 = sample_scene(Scenario::kD2, pool.sources, seed);
    EXPECT_GE(d2.sir, 0.0);
    EXPECT_LE(d2.sir, 20.0);
    const auto d3 = sample_scene(Scenario::kD3, pool.sources, seed);
    EXPECT_GE(d3.snr, 15.0);
    EXPECT_LE(d3.snr, 45.0);
    EXPECT_GE(d3.ser, -10.0);
    EXPECT_LE(d3.ser, 20.0);
    EXPECT_GE(d3.echo_delay_ms, 0.0);
    EXPECT_LE(d3.echo_delay_ms, 512.0);
    ASSERT_TRUE(d3.interferer.has_value());
    EXPECT_NE(d3.interferer->speaker, d3.near_end.speaker);
    EXPECT_NE(d3.interferer->speaker, d3.far_end.speaker);
    EXPECT_NE(d3.near_end.speaker, d3.far_end.speaker);
    EXPECT_EQ(sample_scene(Scenario::kD3, pool.sources, seed), d3);
  }
}

TEST(Scene, PoolTooSmallThrows) {
  SourcePool pool;
  pool.speech = {{"a", "a.wav"}, {"b", "b.wav"}};
  EXPECT_THROW(sample_scene(Scenario::kD2, pool, 1), Error);
  EXPECT_NO_THROW(sample_scene(Scenario::kD1, pool, 1));
}

TEST(Scene, TalkConditions) {
  const auto& pool = testing_support::shared_pool();
  const auto ne = build_scenes(1, Scenario::kD1, pool.sources, 3,
                               {.condition = TalkCondition::kNearEndSingleTalk, .duration_s = 1.0})[0];
  EXPECT_TRUE(std::isinf(ne.ser));
  const auto ne_rec = render_scene(ne);
  EXPECT_EQ(oracle::energy(ne_rec.x.samples), 0.0);
  EXPECT_EQ(oracle::energy(ne_rec.d.samples), 0.0);

  const auto fe = build_scenes(1, Scenario::kD1, pool.sources, 3,
                               {.condition = TalkCondition::kFarEndSingleTalk, .duration_s = 1.0})[0];
  const auto fe_rec = render_scene(fe);
  EXPECT_EQ(oracle::energy(fe_rec.s.samples), 0.0);
  EXPECT_GT(oracle::energy(fe_rec.d.samples), 0.0);
  for (std::size_t i = 0; i < fe_rec.y.size(); ++i) {
    EXPECT_NEAR(fe_rec.y[i], fe_rec.z[i] + fe_rec.d[i] + fe_rec.v[i], 1e-12);
  }
  EXPECT_NEAR(fe_rec.ser, fe.ser, 0.01);
}

TEST(Manifest, EmptyAndDeterministic) {
  const auto& pool = testing_support::shared_pool();
  const auto dir = pool.root / "manifests";
  std::filesystem::create_directories(dir);
  build_manifest(dir / "empty.jsonl", 0, Scenario::kD2, pool.sources, 7);
  EXPECT_TRUE(read_manifest(dir / "empty.jsonl").empty());
  build_manifest(dir / "a.jsonl", 10, Scenario::kD2, pool.sources, 7);
  build_manifest(dir / "b.jsonl", 10, Scenario::kD2, pool.sources, 7);
  EXPECT_EQ(file_bytes(dir / "a.jsonl"), file_bytes(dir / "b.jsonl"));
  const auto scenes = read_manifest(dir / "a.jsonl");
  ASSERT_EQ(scenes.size(), 10u);
  for (const auto& s : scenes) {
    EXPECT_GE(s.sir, 0.0);
    EXPECT_LE(s.sir, 20.0);
  }
}

TEST(Manifest, JsonLineRoundTripIncludingInfinity) {
  const auto& pool = testing_support::shared_pool();
  for (auto scenario : {Scenario::kD1, Scenario::kD3}) {
    const auto spec = build_scenes(1, scenario, pool.sources, 99)[0];
    const auto line = scene_to_json_line(spec);
    EXPECT_EQ(line.find('\n'), std::string::npos);
    EXPECT_EQ(scene_from_json_line(line), spec);
    if (scenario == Scenario::kD1) EXPECT_NE(line.find("\"inf\""), std::string::npos);
    EXPECT_NE(line.find("\"format_version\":1"), std::string::npos);
  }
  EXPECT_THROW(scene_from_json_line("{not json"), Error);
}

TEST(Manifest, RenderingIsReproducibleFromManifest) {
  const auto& pool = testing_support::shared_pool();
  const auto spec = build_scenes(1, Scenario::kD3, pool.sources, 5, {.duration_s = 1.0})[0];
  const auto a = render_scene(spec);
  const auto b = render_scene(scene_from_json_line(scene_to_json_line(spec)));
  EXPECT_EQ(a.y.samples, b.y.samples);
}

TEST(Source, FitLengthLoopsAndTruncates) {
  const Waveform w(std::vector<double>{1, 2, 3});
  EXPECT_EQ(fit_length(w, 7).samples, (std::vector<double>{1, 2, 3, 1, 2, 3, 1}));
  EXPECT_EQ(fit_length(w, 2).samples, (std::vector<double>{1, 2}));
  EXPECT_EQ(white_noise(64, 3).samples, white_noise(64, 3).samples);
  EXPECT_NE(white_noise(64, 3).samples, white_noise(64, 4).samples);
}

TEST(Scenario, Parsing) {
  EXPECT_EQ(parse_scenario("D2"), Scenario::kD2);
  EXPECT_EQ(parse_condition("ST-FE"), TalkCondition::kFarEndSingleTalk);
  EXPECT_EQ(to_string(TalkCondition::kNearEndSingleTalk), "ST-NE");
  EXPECT_THROW(parse_scenario("D4"), Error);
}
