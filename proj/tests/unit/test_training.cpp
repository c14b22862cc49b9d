#include <gtest/gtest.h>

#include <opencv2/imgcodecs.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "canvasinfill/checkpoint.hpp"
#include "canvasinfill/config.hpp"
#include "canvasinfill/dataset.hpp"
#include "canvasinfill/errors.hpp"
#include "canvasinfill/image_io.hpp"
#include "canvasinfill/training.hpp"
#include "oracles.hpp"

using namespace canvasinfill;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("canvasinfill_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_png(const fs::path& path, int rows, int cols, int seed) {
  cv::Mat img(rows, cols, CV_8UC3);
  cv::randu(img, cv::Scalar::all(seed % 50), cv::Scalar::all(200 + seed % 50));
  cv::imwrite(path.string(), img);
}

TrainConfig tiny_config() {
  TrainConfig c;
  c.image_size = 32;
  c.seed = 3;
  c.pretrain_steps = 3;
  c.pretrain_batch = 4;
  c.contrastive.queue_capacity = 16;
  c.contrastive.repr_dim = 16;
  c.joint_steps = 3;
  c.joint_batch = 2;
  c.disc_base_width = 8;
  c.use_contrastive_init = false;
  c.mask_mode = MaskMode::kBoth;
  return c;
}

ImageDataset tiny_dataset(int64_t n = 6, int64_t size = 32) {
  return ImageDataset::from_tensors(oracle::synthetic_images(n, size, 5));
}

}  // namespace

TEST(Config, DefaultsRoundTrip) {
  const Config d = Config::defaults();
  EXPECT_EQ(Config::parse(d.serialize()), d);
  EXPECT_EQ(Config::parse(Config::parse(d.serialize()).serialize()), d);
  for (const auto& key : config_keys()) {
    EXPECT_FALSE(key.doc.empty()) << key.name;
    EXPECT_NO_THROW(d.get(key.name));
  }
}

TEST(Config, TypedRoundTrip) {
  auto c = Config::parse("tau = 0.2\nimage_size = 96\nmask_kind = both\n# comment\n\ntexture_scales = 1,2\n");
  auto typed = to_train_config(c);
  EXPECT_DOUBLE_EQ(typed.contrastive.tau, 0.2);
  EXPECT_EQ(typed.image_size, 96);
  EXPECT_EQ(typed.mask_mode, MaskMode::kBoth);
  EXPECT_EQ(typed.loss.texture_scales, (std::vector<int>{1, 2}));
  auto back = to_train_config(Config::parse(to_config(typed).serialize()));
  EXPECT_EQ(to_config(back), to_config(typed));
}

TEST(Config, DefaultHyperparameters) {
  TrainConfig d = to_train_config(Config::defaults());
  EXPECT_DOUBLE_EQ(d.contrastive.tau, 0.07);
  EXPECT_DOUBLE_EQ(d.contrastive.momentum, 0.9);
  EXPECT_DOUBLE_EQ(d.contrastive.lr, 0.015);
  EXPECT_DOUBLE_EQ(d.joint_lr, 1e-4);
  EXPECT_DOUBLE_EQ(d.loss.rec, 6.0);
  EXPECT_DOUBLE_EQ(d.loss.per, 0.1);
  EXPECT_DOUBLE_EQ(d.loss.style, 240.0);
  EXPECT_DOUBLE_EQ(d.loss.tv, 0.1);
  EXPECT_DOUBLE_EQ(d.loss.adv, 0.001);
  EXPECT_DOUBLE_EQ(d.loss.gp, 10.0);
  EXPECT_EQ(d.loss.structure_scales, (std::vector<int>{1, 2, 3, 4, 5, 6}));
  EXPECT_EQ(d.loss.texture_scales, (std::vector<int>{1, 2, 3}));
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  EXPECT_THROW(Config::parse("no_such_key = 1"), ConfigError);
  EXPECT_THROW(Config::parse("tau = abc"), ConfigError);
  EXPECT_THROW(Config::parse("just a line"), ConfigError);
  EXPECT_THROW(to_train_config(Config::parse("image_size = 40")), ConfigError);
  EXPECT_THROW(to_train_config(Config::parse("tau = 0")), ConfigError);
  EXPECT_THROW(Config::load("/nonexistent/config.txt"), ConfigError);
}

TEST(Config, EnvironmentOverrides) {
  ::setenv("CANVASINFILL_TEST_JOINT_STEPS", "77", 1);
  Config c = Config::defaults();
  c.apply_environment("CANVASINFILL_TEST_");
  ::unsetenv("CANVASINFILL_TEST_JOINT_STEPS");
  EXPECT_EQ(c.get("joint_steps"), "77");
}

TEST(FormatDouble, ShortestRoundTrip) {
  for (double v : {0.1, 1e-4, 240.0, 0.015, 1.0 / 3.0}) EXPECT_EQ(std::stod(format_double(v)), v);
  EXPECT_EQ(format_double(0.1), "0.1");
}

TEST(Dataset, TenImagesSplitEightTwoDeterministically) {
  auto dir = fresh_dir("split");
  for (int i = 0; i < 10; ++i) write_png(dir / ("img" + std::to_string(i) + ".png"), 40, 40, i);
  auto a = ingest_dataset(dir.string(), 32, 0.2, 9);
  auto b = ingest_dataset(dir.string(), 32, 0.2, 9);
  ASSERT_EQ(a.train.size(), 8u);
  ASSERT_EQ(a.val.size(), 2u);
  std::set<std::string> train_names, val_names;
  for (size_t i = 0; i < 8; ++i) train_names.insert(a.train.name(i));
  for (size_t i = 0; i < 2; ++i) val_names.insert(a.val.name(i));
  for (const auto& n : val_names) EXPECT_EQ(train_names.count(n), 0u);
  for (size_t i = 0; i < 2; ++i) EXPECT_EQ(a.val.name(i), b.val.name(i));
  for (size_t i = 0; i < 8; ++i) EXPECT_EQ(a.train.name(i), b.train.name(i));
}

TEST(Dataset, NonSquareImageIsSquashed) {
  auto dir = fresh_dir("squash");
  write_png(dir / "wide.png", 50, 100, 1);
  auto data = ingest_directory(dir.string(), 32);
  auto img = data.get(0);
  EXPECT_EQ(img.sizes(), (std::vector<int64_t>{3, 32, 32}));
  EXPECT_GE(img.min().item<double>(), 0.0);
  EXPECT_LE(img.max().item<double>(), 1.0);
}

TEST(Dataset, SkipsUndecodableFilesAndRejectsEmptyFolders) {
  auto dir = fresh_dir("corrupt");
  write_png(dir / "good.png", 32, 32, 2);
  std::ofstream(dir / "notes.txt") << "not an image";
  auto data = ingest_directory(dir.string(), 32);
  EXPECT_EQ(data.size(), 1u);
  EXPECT_EQ(data.skipped(), 1u);

  auto empty = fresh_dir("empty");
  EXPECT_THROW(ingest_directory(empty.string(), 32), IngestError);
  EXPECT_THROW(ingest_directory((empty / "missing").string(), 32), IngestError);
}

TEST(Dataset, TruncatedPngReportsPath) {
  auto dir = fresh_dir("truncated");
  write_png(dir / "bad.png", 32, 32, 3);
  fs::resize_file(dir / "bad.png", 40);
  auto data = ingest_directory(dir.string(), 32);
  ASSERT_EQ(data.size(), 1u);
  try {
    data.get(0);
    FAIL() << "expected IngestError";
  } catch (const IngestError& e) {
    EXPECT_NE(std::string(e.what()).find("bad.png"), std::string::npos);
  }
}

TEST(ImageIo, PngRoundTripWithinQuantization) {
  auto dir = fresh_dir("io");
  auto img = torch::rand({3, 16, 16});
  write_image((dir / "x.png").string(), img);
  auto back = read_image((dir / "x.png").string());
  EXPECT_LE((back - img).abs().max().item<double>(), 0.5 / 255.0 + 1e-6);

  auto m = torch::zeros({16, 16});
  m.slice(0, 2, 9).fill_(1.0);
  write_mask((dir / "m.png").string(), Mask(m));
  EXPECT_TRUE(torch::equal(read_mask((dir / "m.png").string()).data(), m));
}

TEST(StepRecord, LineRoundTrip) {
  StepRecord r{"joint", 12, {{"total", 0.1}, {"gp", 1.0 / 3.0}}};
  auto parsed = StepRecord::parse(r.to_line());
  EXPECT_EQ(parsed.stage, "joint");
  EXPECT_EQ(parsed.step, 12);
  EXPECT_EQ(parsed.at("gp"), 1.0 / 3.0);
  EXPECT_THROW(parsed.at("missing"), std::out_of_range);
}

TEST(BatchIndices, EpochsArePermutations) {
  const size_t n = 10;
  std::vector<size_t> all;
  for (int64_t step = 0; step < 5; ++step) {
    auto b = batch_indices(4, step, 4, n);
    all.insert(all.end(), b.begin(), b.end());
  }
  std::set<size_t> first(all.begin(), all.begin() + 10), second(all.begin() + 10, all.begin() + 20);
  EXPECT_EQ(first.size(), n);
  EXPECT_EQ(second.size(), n);
  EXPECT_EQ(batch_indices(4, 3, 4, n), batch_indices(4, 3, 4, n));
}

TEST(Pretrain, BudgetOfOneRecordsOneStep) {
  auto cfg = tiny_config();
  cfg.pretrain_steps = 1;
  auto dir = fresh_dir("pretrain1");
  RunLog log;
  auto result = run_pretrain(cfg, tiny_dataset(), log, (dir / "p.ckpt").string());
  EXPECT_EQ(result.losses.size(), 1u);
  EXPECT_EQ(log.stage("pretrain").size(), 1u);
  CheckpointReader r((dir / "p.ckpt").string());
  EXPECT_EQ(r.get_int("step"), 1);
  EXPECT_EQ(r.meta("step"), "1");
  EXPECT_EQ(r.meta("stage"), "pretrain");
}

TEST(Pretrain, FixedSeedGivesIdenticalCurves) {
  auto cfg = tiny_config();
  RunLog a_log, b_log;
  auto a = run_pretrain(cfg, tiny_dataset(), a_log);
  auto b = run_pretrain(cfg, tiny_dataset(), b_log);
  EXPECT_EQ(a.losses, b.losses);
  ASSERT_EQ(a_log.records().size(), b_log.records().size());
  for (size_t i = 0; i < a_log.records().size(); ++i) {
    EXPECT_EQ(a_log.records()[i].to_line(), b_log.records()[i].to_line());
  }
}

TEST(Pretrain, EmptyDatasetIsIngestError) {
  RunLog log;
  EXPECT_THROW(run_pretrain(tiny_config(), ImageDataset{}, log), IngestError);
}

TEST(Pretrain, CheckpointRestoresQueueAndContinuesIdentically) {
  auto cfg = tiny_config();
  auto data = tiny_dataset();
  MaskSpec spec = cfg.mask;
  auto run = [&](PretrainState& s) {
    auto images = data.batch(batch_indices(cfg.seed, s.step, cfg.pretrain_batch, data.size()));
    return pretrain_step(s, images, spec, cfg.contrastive, cfg.hflip).loss;
  };
  auto state = create_pretrain_state(cfg);
  run(state);
  run(state);
  auto path = (fresh_dir("pretrain_resume") / "p.ckpt").string();
  save_pretrain(path, state, cfg);
  auto restored = load_pretrain(path, cfg);
  EXPECT_TRUE(torch::equal(restored.queue.keys(), state.queue.keys()));
  EXPECT_EQ(run(restored), run(state));
}

TEST(Joint, ContrastiveInitWithoutCheckpointIsConfigError) {
  auto cfg = tiny_config();
  cfg.use_contrastive_init = true;
  RunLog log;
  EXPECT_THROW(run_joint(cfg, tiny_dataset(), {}, log, {}), ConfigError);
}

TEST(Joint, InitFromPretrainCopiesQueryEncoder) {
  auto cfg = tiny_config();
  auto path = (fresh_dir("init") / "p.ckpt").string();
  RunLog log;
  run_pretrain(cfg, tiny_dataset(), log, path);
  auto pre = load_pretrain(path, cfg);
  auto joint = JointState::create(cfg);
  init_from_pretrain(joint, path);
  auto a = pre.query->named_parameters();
  auto b = joint.generator->encoder()->named_parameters();
  for (const auto& item : a) EXPECT_TRUE(torch::equal(item.value(), b[item.key()]));
}

TEST(Joint, DafFlagDoesNotTouchContrastiveStage) {
  auto with = tiny_config();
  auto without = tiny_config();
  without.use_daf = false;
  auto a = create_pretrain_state(with);
  auto b = create_pretrain_state(without);
  auto pa = a.query->parameters();
  auto pb = b.query->parameters();
  for (size_t i = 0; i < pa.size(); ++i) EXPECT_TRUE(torch::equal(pa[i], pb[i]));
}

TEST(Joint, StepLogsEveryTermAndUpdatesBothNetworks) {
  auto cfg = tiny_config();
  auto state = JointState::create(cfg);
  auto g0 = state.generator->parameters()[0].detach().clone();
  auto d0 = state.critic->parameters()[0].detach().clone();
  auto r = joint_step(state, tiny_dataset().batch({0, 1}), cfg);
  auto rec = r.record(state.step);
  for (const char* key : {"total", "structure", "texture", "per", "style", "tv", "adv_g", "critic", "wdist", "gp"}) {
    EXPECT_TRUE(std::isfinite(rec.at(key))) << key;
  }
  EXPECT_FALSE(torch::equal(g0, state.generator->parameters()[0]));
  EXPECT_FALSE(torch::equal(d0, state.critic->parameters()[0]));
  for (const auto& p : state.critic->parameters()) EXPECT_TRUE(p.requires_grad());
}

TEST(Joint, ResumeMatchesUninterruptedRunBitwise) {
  auto cfg = tiny_config();
  auto data = tiny_dataset();
  auto dir = fresh_dir("resume");

  RunLog straight_log;
  JointRunOptions straight;
  straight.checkpoint_path = (dir / "straight.ckpt").string();
  run_joint(cfg, data, {}, straight_log, straight);

  auto first = cfg;
  first.joint_steps = 2;
  RunLog first_log;
  JointRunOptions part;
  part.checkpoint_path = (dir / "part.ckpt").string();
  run_joint(first, data, {}, first_log, part);

  RunLog second_log;
  JointRunOptions resumed;
  resumed.resume_checkpoint = part.checkpoint_path;
  resumed.checkpoint_path = (dir / "resumed.ckpt").string();
  run_joint(cfg, data, {}, second_log, resumed);

  ASSERT_EQ(second_log.records().size(), 1u);
  EXPECT_EQ(second_log.records()[0].to_line(), straight_log.records().back().to_line());

  auto a = load_generator(straight.checkpoint_path);
  auto b = load_generator(resumed.checkpoint_path);
  auto pa = a->parameters();
  auto pb = b->parameters();
  for (size_t i = 0; i < pa.size(); ++i) EXPECT_TRUE(torch::equal(pa[i], pb[i]));
}

TEST(Joint, LoadedGeneratorReproducesOutputsBitwise) {
  auto cfg = tiny_config();
  auto state = JointState::create(cfg);
  joint_step(state, tiny_dataset().batch({0, 1}), cfg);
  auto path = (fresh_dir("reload") / "j.ckpt").string();
  save_joint(path, state, cfg);
  TrainConfig loaded_cfg;
  auto g = load_generator(path, &loaded_cfg);
  EXPECT_EQ(to_config(loaded_cfg), to_config(cfg));
  auto x = torch::rand({1, 4, 32, 32});
  torch::NoGradGuard no_grad;
  auto a = state.generator->forward(x);
  auto b = g->forward(x);
  for (int k = 1; k <= kOutputScales; ++k) EXPECT_TRUE(torch::equal(a.at(k), b.at(k)));
}

TEST(Joint, SnapshotsWriteGridsAndValidationRecords) {
  auto cfg = tiny_config();
  cfg.joint_steps = 2;
  cfg.snapshot_every = 2;
  auto dir = fresh_dir("snap");
  RunLog log;
  JointRunOptions opts;
  opts.snapshot_dir = (dir / "snaps").string();
  run_joint(cfg, tiny_dataset(), tiny_dataset(2), log, opts);
  EXPECT_TRUE(fs::exists(dir / "snaps" / "step_000002.png"));
  auto val = log.stage("val");
  ASSERT_EQ(val.size(), 1u);
  EXPECT_GT(val[0].at("psnr"), 0.0);
}

TEST(Checkpoint, MissingFileNamesPath) {
  try {
    CheckpointReader r("/definitely/not/here.ckpt");
    FAIL();
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("/definitely/not/here.ckpt"), std::string::npos);
  }
}
