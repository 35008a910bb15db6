#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "oracles.hpp"
#include "paec/checkpoint.hpp"
#include "paec/trainer.hpp"
#include "test_support.hpp"

using namespace paec;

namespace {

TrainConfig tiny_config() {
  TrainConfig c;
  c.model.channels = 4;
  c.model.gtcn_hidden = 8;
  c.model.n_blocks = 1;
  c.max_epochs = 3;
  c.lr = 1e-3;
  c.seed = 9;
  return c;
}

TrainingExample random_example(std::uint64_t seed, std::size_t n = 1600) {
  return make_example("r" + std::to_string(seed), Waveform(oracle::random_signal(n, seed, 0.1)),
                      Waveform(oracle::random_signal(n, seed + 1, 0.1)),
                      Waveform(oracle::random_signal(n, seed + 2, 0.05)));
}

std::vector<char> read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST(PlateauScheduler, HalvesAfterPatienceEpochsWithoutDecrease) {
  PlateauScheduler s(2, 0.5);
  double lr = 1e-4;
  lr = s.observe(1.0, lr);
  EXPECT_TRUE(s.improved());
  EXPECT_EQ(lr, 1e-4);
  lr = s.observe(1.0, lr);  // equal is not a decrease
  EXPECT_FALSE(s.improved());
  EXPECT_EQ(lr, 1e-4);
  lr = s.observe(1.5, lr);
  EXPECT_EQ(lr, 5e-5);
  lr = s.observe(2.0, lr);  // counter restarted after the cut
  EXPECT_EQ(lr, 5e-5);
  lr = s.observe(0.5, lr);
  EXPECT_TRUE(s.improved());
  EXPECT_EQ(s.best(), 0.5);
  lr = s.observe(0.6, lr);
  EXPECT_EQ(lr, 5e-5);
  lr = s.observe(0.7, lr);
  EXPECT_EQ(lr, 2.5e-5);
}

TEST(Trainer, ConstructedPlateauHalvesLearningRate) {
  // All-zero audio with zero biases gives zero loss and zero gradients, so
  // validation stays flat from the first epoch on.
  auto cfg = tiny_config();
  cfg.lr = 1e-4;
  cfg.max_epochs = 4;
  const auto ex = make_example("z", Waveform(1600), Waveform(1600), Waveform(1600));
  Trainer trainer(cfg);
  const auto run = trainer.fit({ex}, {});
  ASSERT_EQ(run.epochs.size(), 4u);
  EXPECT_EQ(run.epochs[0].lr, 1e-4);
  EXPECT_EQ(run.epochs[1].lr, 1e-4);
  EXPECT_EQ(run.epochs[2].lr, 1e-4);
  EXPECT_EQ(run.epochs[3].lr, 5e-5);
  for (const auto& e : run.epochs) EXPECT_EQ(e.val_loss, 0.0);
  EXPECT_EQ(run.best_epoch, 1u);
}

TEST(Trainer, LossDecreasesOnTinyProblem) {
  auto cfg = tiny_config();
  cfg.max_epochs = 15;
  Trainer trainer(cfg);
  const auto run = trainer.fit({random_example(1)}, {});
  EXPECT_LT(run.final_train_loss, run.initial_train_loss);
  EXPECT_LE(run.final_train_loss, run.best_val_loss + 1e-12);
  EXPECT_EQ(trainer.evaluate_loss({random_example(1)}), run.final_train_loss);
}

TEST(Trainer, RunsAreBitIdentical) {
  const auto dir = std::filesystem::temp_directory_path() / ("paec_trainer_" + std::to_string(::getpid()));
  std::filesystem::create_directories(dir);
  auto cfg = tiny_config();
  cfg.batch_size = 2;
  cfg.shuffle = true;
  const std::vector<TrainingExample> train{random_example(10), random_example(20), random_example(30)};
  auto run_once = [&](const std::string& name) {
    Trainer t(cfg);
    auto r = t.fit(train, {random_example(40)}, dir / name);
    std::vector<double> trace;
    for (const auto& e : r.epochs) trace.insert(trace.end(), {e.train_loss, e.val_loss, e.lr});
    return trace;
  };
  EXPECT_EQ(run_once("a.ckpt"), run_once("b.ckpt"));
  EXPECT_EQ(read_bytes(dir / "a.ckpt"), read_bytes(dir / "b.ckpt"));
  const auto loaded = load_checkpoint(dir / "a.ckpt");
  EXPECT_NE(loaded.meta_json.find("\"epoch\""), std::string::npos);
  std::filesystem::remove_all(dir);
}

TEST(Trainer, BatchAccumulationAveragesGradients) {
  // One update on a batch of two identical examples equals one update on
  // either example alone.
  auto cfg = tiny_config();
  cfg.max_epochs = 1;
  const auto ex = random_example(50);
  cfg.batch_size = 2;
  Trainer a(cfg);
  a.fit({ex, ex}, {ex});
  cfg.batch_size = 1;
  Trainer b(cfg);
  b.fit({ex}, {ex});
  const auto& pa = a.model().params().items();
  const auto& pb = b.model().params().items();
  for (std::size_t i = 0; i < pa.size(); ++i) {
    const auto x = pa[i].tensor.data();
    const auto y = pb[i].tensor.data();
    for (std::size_t k = 0; k < x.size(); ++k) ASSERT_NEAR(x[k], y[k], 1e-6) << pa[i].name;
  }
}

TEST(Trainer, RejectsEmptyTrainingSet) {
  Trainer t(tiny_config());
  EXPECT_THROW(t.fit({}, {}), Error);
}

TEST(TrainConfig, JsonRoundTripAndValidation) {
  auto c = tiny_config();
  c.scenario = Scenario::kD3;
  c.model.selection = Selection::kEs;
  c.shuffle = true;
  const auto back = TrainConfig::from_json(c.to_json());
  EXPECT_EQ(back.to_json(), c.to_json());
  const auto partial = TrainConfig::from_json(R"({"lr": 0.01})", c);
  EXPECT_EQ(partial.lr, 0.01);
  EXPECT_EQ(partial.max_epochs, c.max_epochs);
  auto bad = c;
  bad.lr = -1.0;
  EXPECT_THROW(bad.validate(), Error);
  bad = c;
  bad.batch_size = 0;
  EXPECT_THROW(bad.validate(), Error);
  EXPECT_THROW(TrainConfig::from_json("[]"), Error);
}

TEST(SplitValidation, SeededAndDisjoint) {
  std::vector<SceneSpec> scenes(20);
  for (std::size_t i = 0; i < scenes.size(); ++i) scenes[i].scene_id = "s" + std::to_string(i);
  const auto [train, val] = split_validation(scenes, 0.1, 3);
  EXPECT_EQ(val.size(), 2u);
  EXPECT_EQ(train.size(), 18u);
  std::set<std::string> ids;
  for (const auto& s : train) ids.insert(s.scene_id);
  for (const auto& s : val) EXPECT_TRUE(ids.insert(s.scene_id).second);
  const auto again = split_validation(scenes, 0.1, 3);
  EXPECT_EQ(again.second, val);
  EXPECT_EQ(split_validation(std::vector<SceneSpec>(3), 0.0, 1).second.size(), 0u);
  EXPECT_EQ(split_validation(std::vector<SceneSpec>(3), 0.01, 1).second.size(), 1u);
  EXPECT_EQ(split_validation(std::vector<SceneSpec>(1), 0.5, 1).second.size(), 0u);
}

TEST(PrepareExamples, SegmentsAndEmbeddings) {
  const auto& pool = testing_support::shared_pool();
  auto cfg = tiny_config();
  cfg.segment_s = 0.5;
  cfg.model.selection = Selection::kEmix;
  std::vector<SceneSpec> scenes;
  for (std::uint64_t s = 0; s < 2; ++s) {
    auto spec = sample_scene(Scenario::kD2, pool.sources, s, {TalkCondition::kDoubleTalk, 1.2});
    spec.scene_id = "p" + std::to_string(s);
    scenes.push_back(spec);
  }
  EXPECT_THROW(prepare_examples(scenes, cfg, nullptr, nullptr), Error);
  const auto reg = EnrollmentRegistry::load(pool.paths.registry);
  EmbeddingCache cache(std::make_shared<StatisticsEmbeddingProvider>());
  const auto ex = prepare_examples(scenes, cfg, &reg, &cache);
  ASSERT_EQ(ex.size(), 4u);
  for (const auto& e : ex) {
    EXPECT_EQ(e.mic.size(), 8000u);
    EXPECT_TRUE(e.raw_near && e.raw_far);
    EXPECT_EQ(e.features.dim(1), frame_count(8000));
  }
  EXPECT_EQ(*ex[0].raw_near, cache.get(scenes[0].near_end.speaker, ""));
}
