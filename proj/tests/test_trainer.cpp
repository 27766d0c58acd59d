#include "streamhl/trainer.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "streamhl/dataset_io.hpp"
#include "streamhl/synth.hpp"

namespace streamhl {
namespace {

std::string slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(is)),
                     std::istreambuf_iterator<char>());
}

// Small data and model so every test runs in well under a second.
class TrainerTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = (std::filesystem::temp_directory_path() / "streamhl_trainer_test")
               .string();
    std::filesystem::remove_all(dir_);
    std::filesystem::create_directories(dir_);
    data_cfg_.n_segments_per_window = 6;
    data_cfg_.raw_visual_dim = 4;
    data_cfg_.raw_text_dim = 4;
    data_cfg_.n_viewers = 60;
    data_cfg_.n_windows = 8;
    data_cfg_.n_streamers = 2;
    data_cfg_.seed = 11;
    dataset_path_ = dir_ + "/train.bin";
    write_dataset(generate_stream(data_cfg_), data_cfg_, dataset_path_);
  }

  // d is tiny here, so the align loss stays off: at width 4 a relu row can
  // die outright, and cosine similarity treats that as an error by design.
  TrainConfig small_config(const std::string& run) const {
    TrainConfig cfg;
    cfg.d = 8;
    cfg.d_h = 4;
    cfg.n_h = 2;
    cfg.n_perceiver_layers = 1;
    cfg.decoder_depth = 1;
    cfg.batch_size = 4;
    cfg.epochs = 2;
    cfg.seed = 3;
    cfg.negatives = 2;
    cfg.lambda1 = 0.8;
    cfg.lambda2 = 0.0;
    cfg.lambda3 = 0.2;
    cfg.delta_list = {0.0};
    cfg.train_dataset = dataset_path_;
    cfg.out_dir = dir_ + "/" + run;
    return cfg;
  }

  std::string dir_;
  std::string dataset_path_;
  StreamConfig data_cfg_;
};

TEST_F(TrainerTest, ModelConfigBridgesTrainAndDataSettings) {
  TrainConfig tc = small_config("bridge");
  tc.use_pos_emb = false;
  tc.perceiver_causal = true;
  auto mc = model_config_from(tc, data_cfg_);
  EXPECT_EQ(mc.d, 8u);
  EXPECT_EQ(mc.d_h, 4u);
  EXPECT_EQ(mc.n_h, 2u);
  EXPECT_EQ(mc.n_segments, 6u);
  EXPECT_EQ(mc.raw_visual_dim, 4u);
  EXPECT_EQ(mc.raw_text_dim, 4u);
  EXPECT_EQ(mc.n_streamers, 2u);
  EXPECT_FALSE(mc.use_pos_emb);
  EXPECT_TRUE(mc.perceiver_causal);
}

TEST_F(TrainerTest, SameSeedProducesIdenticalRuns) {
  auto a = train(small_config("det_a"));
  auto b = train(small_config("det_b"));
  ASSERT_EQ(a.rows.size(), b.rows.size());
  for (std::size_t i = 0; i < a.rows.size(); ++i)
    EXPECT_EQ(metrics_csv_row(a.rows[i]), metrics_csv_row(b.rows[i]));
  // whole artifacts match except the out_dir line in config_used.cfg
  EXPECT_EQ(slurp(dir_ + "/det_a/metrics.csv"),
            slurp(dir_ + "/det_b/metrics.csv"));
  EXPECT_EQ(slurp(a.final_checkpoint), slurp(b.final_checkpoint));
  auto c_cfg = small_config("det_c");
  c_cfg.seed = 4;
  auto c = train(c_cfg);
  EXPECT_NE(slurp(a.final_checkpoint), slurp(c.final_checkpoint));
}

TEST_F(TrainerTest, ZeroEpochsEmitsBaselineOnly) {
  auto cfg = small_config("zero");
  cfg.epochs = 0;
  auto result = train(cfg);
  ASSERT_EQ(result.rows.size(), 1u);  // one delta, train split only
  EXPECT_EQ(result.rows[0].epoch, 0u);
  EXPECT_EQ(result.rows[0].split, "train");
  EXPECT_TRUE(std::filesystem::exists(result.final_checkpoint));
  auto loaded = load_training_checkpoint(result.final_checkpoint);
  EXPECT_EQ(loaded.epoch, 0u);
  EXPECT_EQ(loaded.seed, 3u);
  // untrained parameters match a fresh init bitwise
  auto fresh = init_model(result.model_cfg, cfg.seed);
  auto got = named_parameters(loaded.params);
  auto want = named_parameters(fresh);
  ASSERT_EQ(got.size(), want.size());
  for (std::size_t i = 0; i < got.size(); ++i) {
    EXPECT_EQ(got[i].first, want[i].first);
    EXPECT_EQ(got[i].second.data(), want[i].second.data());
  }
}

TEST_F(TrainerTest, MetricsCsvHasHeaderAndOneRowPerEpochDelta) {
  auto cfg = small_config("csv");
  cfg.delta_list = {0.0, 0.2};
  auto result = train(cfg);
  std::ifstream is(cfg.out_dir + "/metrics.csv");
  std::string line;
  ASSERT_TRUE(std::getline(is, line));
  EXPECT_EQ(line, metrics_csv_header());
  std::size_t rows = 0;
  while (std::getline(is, line)) ++rows;
  EXPECT_EQ(rows, (cfg.epochs + 1) * cfg.delta_list.size());
  EXPECT_EQ(result.rows.size(), rows);
  EXPECT_EQ(result.epoch_stats.size(), cfg.epochs + 1);
  EXPECT_TRUE(std::filesystem::exists(cfg.out_dir + "/config_used.cfg"));
}

TEST_F(TrainerTest, TrainingReducesLoss) {
  auto cfg = small_config("learns");
  cfg.epochs = 10;
  auto result = train(cfg);
  const auto& stats = result.epoch_stats;
  EXPECT_LT(stats.back().mean_total, stats.front().mean_total);
}

TEST_F(TrainerTest, NonFiniteForwardAbortsNamingTheWindow) {
  auto cfg = small_config("nanrun");
  cfg.epochs = 0;
  auto result = train(cfg);
  auto blocks = read_checkpoint(result.final_checkpoint);
  // a NaN head weight reaches s = sigmoid(h . w) directly, with no relu or
  // layer norm in between to silence or reject it earlier
  for (auto& b : blocks)
    if (b.name == "head.w")
      b.data[0] = std::numeric_limits<double>::quiet_NaN();
  const std::string bad_ckpt = dir_ + "/nan.khl";
  write_checkpoint(bad_ckpt, blocks);
  auto resume_cfg = small_config("nanrun2");
  resume_cfg.epochs = 1;
  try {
    train(resume_cfg, bad_ckpt);
    FAIL() << "expected TrainAbortError";
  } catch (const TrainAbortError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("non-finite"), std::string::npos) << msg;
    EXPECT_NE(msg.find("window 0"), std::string::npos) << msg;
    EXPECT_NE(msg.find("epoch 0"), std::string::npos) << msg;
  }
}

TEST_F(TrainerTest, ResumeMatchesUninterruptedRunBitwise) {
  auto full_cfg = small_config("full");
  full_cfg.epochs = 4;
  auto full = train(full_cfg);

  auto half_cfg = small_config("half");
  half_cfg.epochs = 2;
  auto half = train(half_cfg);

  auto resumed_cfg = small_config("resumed");
  resumed_cfg.epochs = 4;
  auto resumed = train(resumed_cfg, half.final_checkpoint);

  EXPECT_EQ(slurp(full.final_checkpoint), slurp(resumed.final_checkpoint));
  // resumed rows start at the baseline for the loaded epoch
  ASSERT_FALSE(resumed.rows.empty());
  EXPECT_EQ(resumed.rows.front().epoch, 2u);
  EXPECT_EQ(resumed.rows.back().epoch, 4u);
  EXPECT_EQ(metrics_csv_row(resumed.rows.back()),
            metrics_csv_row(full.rows.back()));
}

TEST_F(TrainerTest, ResumePastConfiguredEpochsRejected) {
  auto cfg = small_config("past");
  cfg.epochs = 2;
  auto result = train(cfg);
  auto shorter = small_config("past2");
  shorter.epochs = 1;
  EXPECT_THROW(train(shorter, result.final_checkpoint), std::invalid_argument);
}

TEST_F(TrainerTest, CheckpointCadenceWritesIntermediateFiles) {
  auto cfg = small_config("cadence");
  cfg.epochs = 4;
  cfg.checkpoint_every = 2;
  train(cfg);
  EXPECT_TRUE(
      std::filesystem::exists(cfg.out_dir + "/checkpoint_epoch2.khl"));
  // the last epoch is covered by the final checkpoint, not a duplicate
  EXPECT_FALSE(
      std::filesystem::exists(cfg.out_dir + "/checkpoint_epoch4.khl"));
  EXPECT_TRUE(
      std::filesystem::exists(cfg.out_dir + "/checkpoint_final.khl"));
  auto mid = load_training_checkpoint(cfg.out_dir + "/checkpoint_epoch2.khl");
  EXPECT_EQ(mid.epoch, 2u);
}

TEST_F(TrainerTest, MaskedFinalSegmentLabelCannotAffectTheLoss) {
  auto [windows, dcfg] = read_dataset(dataset_path_);
  auto cfg = small_config("mask");
  auto mcfg = model_config_from(cfg, dcfg);
  auto params = init_model(mcfg, 5);
  auto lcfg = cfg.loss_config();
  auto acfg = cfg.align_config();

  SampleWindow tweaked = windows[0];
  ASSERT_TRUE(tweaked.label_shift_applied);
  tweaked.segments.back().y = 0.987;
  tweaked.segments.back().y_binary = 1;

  Tape t1, t2;
  Rng r1(77), r2(77);
  auto a = window_loss(t1, windows[0], params, mcfg, lcfg, acfg, r1);
  auto b = window_loss(t2, tweaked, params, mcfg, lcfg, acfg, r2);
  EXPECT_EQ(a.combined.total.value(), b.combined.total.value());
  EXPECT_EQ(a.regions.total(), b.regions.total());
}

TEST_F(TrainerTest, EvaluateCheckpointIsDeterministicAndFiltersByDelta) {
  auto cfg = small_config("evalrun");
  auto result = train(cfg);

  auto eval_cfg = cfg;
  eval_cfg.delta_list = {0.0, 0.99};
  auto rows1 =
      evaluate_checkpoint(result.final_checkpoint, dataset_path_, eval_cfg);
  auto rows2 =
      evaluate_checkpoint(result.final_checkpoint, dataset_path_, eval_cfg);
  ASSERT_EQ(rows1.size(), 2u);
  ASSERT_EQ(rows2.size(), 2u);
  for (std::size_t i = 0; i < rows1.size(); ++i)
    EXPECT_EQ(metrics_csv_row(rows1[i]), metrics_csv_row(rows2[i]));

  // y gaps never exceed 0.99, so every window is skipped at that delta
  EXPECT_EQ(rows1[1].delta, 0.99);
  EXPECT_EQ(rows1[1].n_windows, 0u);
  EXPECT_EQ(rows1[1].n_skipped, data_cfg_.n_windows);
  EXPECT_EQ(rows1[1].mean_tau, 0.0);
  // mAP ignores delta and still reflects the binary labels
  EXPECT_EQ(rows1[1].map, rows1[0].map);
  EXPECT_GE(rows1[0].map, 0.0);
  EXPECT_LE(rows1[0].map, 1.0);
  for (const auto& row : rows1) {
    EXPECT_GE(row.mean_tau, -1.0);
    EXPECT_LE(row.mean_tau, 1.0);
  }
}

TEST_F(TrainerTest, EvaluateCheckpointRejectsMismatchedDataset) {
  auto cfg = small_config("mismatch");
  auto result = train(cfg);
  auto other_cfg = data_cfg_;
  other_cfg.raw_visual_dim = 6;
  const std::string other_path = dir_ + "/other.bin";
  write_dataset(generate_stream(other_cfg), other_cfg, other_path);
  EXPECT_THROW(
      evaluate_checkpoint(result.final_checkpoint, other_path, cfg),
      std::invalid_argument);
}

TEST_F(TrainerTest, TrainRejectsMissingOrMismatchedData) {
  auto cfg = small_config("nodata");
  cfg.train_dataset = "";
  EXPECT_THROW(train(cfg), std::invalid_argument);

  auto cfg2 = small_config("badeval");
  auto other_cfg = data_cfg_;
  other_cfg.n_segments_per_window = 5;
  const std::string other_path = dir_ + "/badeval.bin";
  write_dataset(generate_stream(other_cfg), other_cfg, other_path);
  cfg2.eval_dataset = other_path;
  EXPECT_THROW(train(cfg2), std::invalid_argument);
}

TEST_F(TrainerTest, EvalSplitRowsAppearAtCadence) {
  auto cfg = small_config("evalcad");
  cfg.epochs = 4;
  cfg.eval_every = 2;
  cfg.eval_dataset = dataset_path_;
  auto result = train(cfg);
  std::vector<std::uint64_t> eval_epochs;
  for (const auto& row : result.rows)
    if (row.split == "eval") eval_epochs.push_back(row.epoch);
  EXPECT_EQ(eval_epochs, (std::vector<std::uint64_t>{0, 2, 4}));
}

TEST_F(TrainerTest, CheckpointLoadRejectsTampering) {
  auto cfg = small_config("tamper");
  cfg.epochs = 0;
  auto result = train(cfg);
  auto blocks = read_checkpoint(result.final_checkpoint);

  auto drop = [&](const std::string& name) {
    std::vector<CheckpointBlock> out;
    for (const auto& b : blocks)
      if (b.name != name) out.push_back(b);
    return out;
  };
  const std::string missing = dir_ + "/missing.khl";
  write_checkpoint(missing, drop("adam.t"));
  try {
    load_training_checkpoint(missing);
    FAIL() << "expected CheckpointError";
  } catch (const CheckpointError& e) {
    EXPECT_NE(std::string(e.what()).find("adam.t"), std::string::npos);
  }

  const std::string extra = dir_ + "/extra.khl";
  auto with_extra = blocks;
  with_extra.push_back({"stray", {1}, {0.0}});
  write_checkpoint(extra, with_extra);
  try {
    load_training_checkpoint(extra);
    FAIL() << "expected CheckpointError";
  } catch (const CheckpointError& e) {
    EXPECT_NE(std::string(e.what()).find("stray"), std::string::npos);
  }

  const std::string reshaped = dir_ + "/reshaped.khl";
  auto bad_shape = blocks;
  for (auto& b : bad_shape)
    if (b.name == "meta.model") b.data[5] = 7.0;  // claim 7 segments
  write_checkpoint(reshaped, bad_shape);
  EXPECT_THROW(load_training_checkpoint(reshaped), CheckpointError);

  // the untampered file loads and its params match the trained result
  auto loaded = load_training_checkpoint(result.final_checkpoint);
  auto got = named_parameters(loaded.params);
  auto want = named_parameters(result.params);
  ASSERT_EQ(got.size(), want.size());
  for (std::size_t i = 0; i < got.size(); ++i)
    EXPECT_EQ(got[i].second.data(), want[i].second.data());
}

TEST_F(TrainerTest, AlignLossParticipatesAtRealisticWidth) {
  auto cfg = small_config("align");
  cfg.d = 16;
  cfg.lambda1 = 0.65;
  cfg.lambda2 = 0.15;
  cfg.lambda3 = 0.20;
  cfg.epochs = 2;
  auto result = train(cfg);
  for (const auto& row : result.rows) EXPECT_GT(row.loss_align, 0.0);
  // the align gradient reaches both encoders
  auto fresh = named_parameters(init_model(result.model_cfg, cfg.seed));
  auto trained = named_parameters(result.params);
  for (std::size_t i = 0; i < fresh.size(); ++i) {
    if (fresh[i].first == "enc.text_w" || fresh[i].first == "enc.visual_w")
      EXPECT_NE(fresh[i].second.data(), trained[i].second.data())
          << fresh[i].first;
  }
}

TEST_F(TrainerTest, ResumeRejectsConfigModelMismatch) {
  auto cfg = small_config("shapechk");
  cfg.epochs = 1;
  auto result = train(cfg);
  auto bigger = small_config("shapechk2");
  bigger.epochs = 2;
  bigger.d = 16;
  EXPECT_THROW(train(bigger, result.final_checkpoint), std::invalid_argument);
}

// An untrained model must not look predictive: its mean tau over a fresh
// dataset has to sit inside the 99% interval of the permutation null (label
// order shuffled per window), the zero-correlation reference distribution.
TEST(UntrainedBaseline, MeanTauWithinPermutationNull) {
  StreamConfig dc;
  dc.n_windows = 32;
  dc.n_viewers = 60;
  dc.raw_visual_dim = 4;
  dc.raw_text_dim = 4;
  dc.n_streamers = 2;
  dc.seed = 71;
  auto windows = generate_stream(dc);

  ModelConfig mc;
  mc.d = 16;
  mc.d_h = 8;
  mc.n_h = 2;
  mc.n_perceiver_layers = 1;
  mc.decoder_depth = 1;
  mc.n_segments = dc.n_segments_per_window;
  mc.raw_visual_dim = dc.raw_visual_dim;
  mc.raw_text_dim = dc.raw_text_dim;
  mc.n_streamers = dc.n_streamers;
  ModelParams params = init_model(mc, 5);

  std::vector<std::vector<double>> s_windows, y_windows;
  for (const auto& win : windows) {
    Tape tape;
    auto out = forward_window(tape, win, params, mc);
    auto mask = label_mask(win);
    std::vector<double> s, y;
    for (std::size_t i = 0; i < win.segments.size(); ++i) {
      if (!mask[i]) continue;
      s.push_back(out.s.data()[i]);
      y.push_back(win.segments[i].y);
    }
    s_windows.push_back(std::move(s));
    y_windows.push_back(std::move(y));
  }
  const double observed = summarize_tau(s_windows, y_windows, 0.0).mean_tau;

  const std::size_t trials = 2000;
  Rng rng(72);
  std::vector<double> null_means;
  null_means.reserve(trials);
  for (std::size_t t = 0; t < trials; ++t) {
    auto shuffled = s_windows;
    for (auto& s : shuffled) {
      auto perm = rng.permutation(s.size());
      std::vector<double> next(s.size());
      for (std::size_t i = 0; i < s.size(); ++i) next[i] = s[perm[i]];
      s = std::move(next);
    }
    null_means.push_back(summarize_tau(shuffled, y_windows, 0.0).mean_tau);
  }
  std::sort(null_means.begin(), null_means.end());
  const double lo = null_means[static_cast<std::size_t>(0.005 * trials)];
  const double hi = null_means[static_cast<std::size_t>(0.995 * trials) - 1];
  EXPECT_GE(observed, lo);
  EXPECT_LE(observed, hi);
}

}  // namespace
}  // namespace streamhl
