#include "voxgan/config.hpp"
#include "voxgan/container.hpp"
#include "voxgan/trainer.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

using namespace voxgan;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "voxgan_test_trainer";
  fs::create_directories(dir);
  return dir / name;
}

RunConfig small_config(TrainMode mode = TrainMode::IWGan) {
  RunConfig c;
  c.train.mode = mode;
  c.train.batch_size = 2;
  c.train.seed = 11;
  c.model.resolution = 8;
  c.model.latent_dim = 4;
  c.model.width = 2;
  return c;
}

TrainingSet toy_set(std::int64_t shapes, bool paired) {
  Rng rng(5);
  auto grids = toy_dataset(ToyKind::Boxes, 8, shapes, 1, rng);
  if (!paired) return TrainingSet::unconditional(grids);
  return TrainingSet::shells(make_completion_task(grids).train);
}

}  // namespace

// ---------------------------------------------------------------------------
// Schedule
// ---------------------------------------------------------------------------

TEST(Schedule, IwganCounts) {
  RunConfig c = small_config();
  TrainingSet data = toy_set(4, false);
  TrainState s = init_state(c);
  Trainer t(s, data);
  t.run_batches(10);
  EXPECT_EQ(s.disc_steps, 10);
  EXPECT_EQ(s.gen_steps, 2);
  EXPECT_EQ(s.enc_steps, 0);
  EXPECT_EQ(s.opt_discriminator.steps(), 10);
  EXPECT_EQ(s.opt_generator.steps(), 2);
  // g_loss appears exactly on the 5th and 10th batches
  for (const auto& r : s.history) EXPECT_EQ(r.g_loss.has_value(), r.step % 5 == 0);
}

TEST(Schedule, IntervalOneIsLockstep) {
  RunConfig c = small_config();
  c.train.gen_interval = 1;
  TrainingSet data = toy_set(4, false);
  TrainState s = init_state(c);
  Trainer(s, data).run_batches(7);
  EXPECT_EQ(s.disc_steps, s.gen_steps);
}

TEST(Schedule, FloorOfBatchesOverInterval) {
  for (std::int64_t interval : {1, 2, 3, 7}) {
    RunConfig c = small_config();
    c.train.gen_interval = interval;
    TrainingSet data = toy_set(2, false);
    TrainState s = init_state(c);
    Trainer(s, data).run_batches(9);
    EXPECT_EQ(s.disc_steps, 9);
    EXPECT_EQ(s.gen_steps, 9 / interval);
  }
}

TEST(Schedule, VaeCounts) {
  RunConfig c = small_config(TrainMode::VaeIWGan);
  TrainingSet data = toy_set(2, true);
  TrainState s = init_state(c);
  Trainer(s, data).run_batches(10);
  EXPECT_EQ(s.disc_steps, 10);
  EXPECT_EQ(s.enc_steps, 10);
  EXPECT_EQ(s.gen_steps, 2);
  for (const auto& r : s.history) EXPECT_TRUE(r.e_loss.has_value());
}

TEST(Schedule, EpochsDropIncompleteBatch) {
  RunConfig c = small_config();
  c.train.batch_size = 3;
  TrainingSet data = toy_set(7, false);  // 7 samples: two batches of 3 per epoch
  TrainState s = init_state(c);
  Trainer t(s, data);
  EXPECT_EQ(t.batches_per_epoch(), 2);
  t.run_until_epoch(3);
  EXPECT_EQ(s.step, 6);
  EXPECT_EQ(s.epoch, 3);
  EXPECT_EQ(s.epoch_disc_loss().size(), 3u);
  std::int64_t last = 0;
  for (const auto& r : s.history) {
    EXPECT_GT(r.step, last);
    last = r.step;
    EXPECT_TRUE(std::isfinite(r.d_loss));
  }
}

TEST(Schedule, Preconditions) {
  RunConfig c = small_config();
  TrainState s = init_state(c);
  TrainingSet empty;
  EXPECT_THROW(Trainer(s, empty), DataError);
  TrainingSet one = toy_set(1, false);
  EXPECT_THROW(Trainer(s, one), DataError);  // smaller than a batch
  Rng rng(1);
  auto wrong = toy_dataset(ToyKind::Boxes, 16, 2, 1, rng);
  TrainingSet w = TrainingSet::unconditional(wrong);
  EXPECT_THROW(Trainer(s, w), DataError);
  RunConfig v = small_config(TrainMode::VaeIWGan);
  v.encoder = NetworkBase::ImageEncoder;
  TrainState vs = init_state(v);
  TrainingSet shells = toy_set(2, true);
  EXPECT_THROW(Trainer(vs, shells), DataError);
  c.train.batch_size = 1;
  EXPECT_THROW(init_state(c), ConfigError);
  c.train.batch_size = 2;
  c.train.gen_interval = 0;
  EXPECT_THROW(init_state(c), ConfigError);
}

TEST(Schedule, ImageEncoderRuns) {
  RunConfig c = small_config(TrainMode::VaeIWGan);
  c.encoder = NetworkBase::ImageEncoder;
  Rng rng(5);
  auto grids = toy_dataset(ToyKind::Boxes, 8, 2, 1, rng);
  TrainingSet data = TrainingSet::images(make_completion_task(grids).train);
  TrainState s = init_state(c);
  Trainer(s, data).run_batches(2);
  EXPECT_EQ(s.enc_steps, 2);
}

TEST(Schedule, VanillaBaselineRuns) {
  RunConfig c = small_config(TrainMode::VanillaGan);
  TrainingSet data = toy_set(2, false);
  TrainState s = init_state(c);
  Trainer(s, data).run_batches(5);
  EXPECT_EQ(s.gen_steps, 1);
  EXPECT_GT(s.history[0].d_loss, 0);  // cross-entropy is positive
}

TEST(Guard, NonFiniteLossAborts) {
  RunConfig c = small_config();
  TrainingSet data = toy_set(2, false);
  data.targets[0][0] = std::nan("");
  TrainState s = init_state(c);
  Trainer t(s, data);
  EXPECT_THROW(t.run_batches(2), NumericGuard);
  EXPECT_TRUE(s.history.empty());
}

TEST(Telemetry, CsvFormat) {
  std::vector<TelemetryRow> rows{{1, 0, 0.5, std::nullopt, 0.25, 1.0, std::nullopt}, {2, 0, -1, 2.0, 0, 1, 3.0}};
  EXPECT_EQ(telemetry_csv(rows),
            "step,epoch,d_loss,g_loss,gp_term,grad_norm_mean,e_loss\n1,0,0.5,,0.25,1,\n2,0,-1,2,0,1,3\n");
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

TEST(Checkpoint, SaveLoadSaveIsByteIdentical) {
  for (auto mode : {TrainMode::IWGan, TrainMode::VaeIWGan}) {
    RunConfig c = small_config(mode);
    TrainingSet data = toy_set(3, mode == TrainMode::VaeIWGan);
    TrainState s = init_state(c);
    Trainer(s, data).run_batches(6);
    const std::string a = checkpoint_encode(s);
    const std::string b = checkpoint_encode(checkpoint_decode(a));
    EXPECT_EQ(a, b) << mode_name(mode);
    checkpoint_save(s, scratch("a.ckpt"));
    EXPECT_EQ(read_all(scratch("a.ckpt")), a);
  }
}

TEST(Checkpoint, ResumeIsBitIdentical) {
  for (auto mode : {TrainMode::IWGan, TrainMode::VaeIWGan}) {
    RunConfig c = small_config(mode);
    TrainingSet data = toy_set(3, mode == TrainMode::VaeIWGan);
    TrainState full = init_state(c);
    Trainer(full, data).run_batches(12);

    TrainState part = init_state(c);
    Trainer(part, data).run_batches(7);
    TrainState resumed = checkpoint_decode(checkpoint_encode(part));
    Trainer(resumed, data).run_batches(5);
    EXPECT_EQ(checkpoint_encode(resumed), checkpoint_encode(full)) << mode_name(mode);
  }
}

TEST(Checkpoint, IntegrityErrors) {
  RunConfig c = small_config();
  std::string bytes = checkpoint_encode(init_state(c));
  std::string flipped = bytes;
  flipped[bytes.size() / 2] ^= 0x40;
  EXPECT_THROW(checkpoint_decode(flipped), container::ChecksumError);
  EXPECT_THROW(checkpoint_decode(bytes.substr(0, bytes.size() - 9)), container::FormatError);
  std::string version = bytes;
  version[4] = 9;
  EXPECT_THROW(checkpoint_decode(version), container::FormatError);
  EXPECT_THROW(checkpoint_decode("NOPE"), container::FormatError);
}

TEST(Checkpoint, SameSeedSameBytes) {
  RunConfig c = small_config();
  TrainingSet data = toy_set(3, false);
  TrainState a = init_state(c), b = init_state(c);
  Trainer(a, data).run_batches(4);
  Trainer(b, data).run_batches(4);
  EXPECT_EQ(checkpoint_encode(a), checkpoint_encode(b));
  c.train.seed = 12;
  TrainState d = init_state(c);
  Trainer(d, data).run_batches(4);
  EXPECT_NE(checkpoint_encode(a), checkpoint_encode(d));
}

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

TEST(Config, ParseAndSerialize) {
  RunConfig c = parse_config("# comment\nmode = vae-iwgan\nres=16\n\nlambda = 2.5  # trailing\nseed = 9\n");
  EXPECT_EQ(c.train.mode, TrainMode::VaeIWGan);
  EXPECT_EQ(c.model.resolution, 16);
  EXPECT_DOUBLE_EQ(c.train.lambda, 2.5);
  EXPECT_EQ(c.train.seed, 9u);
  RunConfig back = parse_config(c.serialize());
  EXPECT_EQ(back.serialize(), c.serialize());
  c.train.lr_generator = Real(0.1) + Real(0.2);
  EXPECT_EQ(parse_config(c.serialize()).train.lr_generator, c.train.lr_generator);
}

TEST(Config, ErrorsNameFileAndLine) {
  try {
    parse_config("res = 8\nbatchsize = 4\n", "run.cfg");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("run.cfg:2"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("batchsize"), std::string::npos);
  }
  EXPECT_THROW(parse_config("res 8\n"), ConfigError);
  EXPECT_THROW(parse_config("res = eight\n"), ConfigError);
  EXPECT_THROW(parse_config("mode = gan\n"), ConfigError);
  EXPECT_THROW(parse_config("lambda = 1x\n"), ConfigError);
  EXPECT_THROW(load_config(scratch("missing.cfg")), ConfigError);
}

TEST(Container, BlocksRoundTrip) {
  container::File f;
  f.metadata = "hello";
  f.blocks.push_back(container::Block::from_tensor("t", Tensor({2, 2}, {1, 2, 3, 4})));
  std::vector<std::int64_t> ints{-1, 5};
  f.blocks.push_back(container::Block::from_i64("i", ints));
  const std::string bytes = container::encode(f);
  EXPECT_EQ(bytes.substr(0, 4), "VXGN");
  container::File g = container::decode(bytes);
  EXPECT_EQ(g.metadata, "hello");
  EXPECT_EQ(g.block("t").to_tensor(), Tensor({2, 2}, {1, 2, 3, 4}));
  EXPECT_EQ(g.block("i").to_i64(), ints);
  EXPECT_EQ(g.find("x"), nullptr);
  EXPECT_THROW(g.block("x"), container::FormatError);
  EXPECT_EQ(container::crc32("123456789"), 0xCBF43926u);
}
