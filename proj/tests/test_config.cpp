#include "streamhl/config.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <string>

namespace streamhl {
namespace {

std::string error_of(const std::string& text) {
  try {
    parse_config_text(text);
    return "";
  } catch (const std::invalid_argument& e) {
    return e.what();
  }
}

TEST(ConfigParse, EmptyTextYieldsDefaults) {
  auto cfg = parse_config_text("");
  EXPECT_EQ(cfg.learning_rate, 1e-3);
  EXPECT_EQ(cfg.batch_size, 8u);
  EXPECT_EQ(cfg.d, 32u);
  EXPECT_EQ(cfg.pair_variant, PairVariant::kL1);
  EXPECT_EQ(cfg.dtw_mode, DtwMode::kMin);
  EXPECT_EQ(cfg.tau_variant, TauVariant::kTauB);
  ASSERT_EQ(cfg.delta_list.size(), 4u);
  EXPECT_EQ(cfg.delta_list[1], 0.2);
  EXPECT_NO_THROW(cfg.validate());
}

TEST(ConfigParse, ParsesTypedValues) {
  auto cfg = parse_config_text(
      "learning_rate = 5e-5\n"
      "batch_size = 48\n"
      "epochs = 7\n"
      "pair_variant = l3\n"
      "dtw_mode = max\n"
      "use_pos_emb = false\n"
      "perceiver_causal = 1\n"
      "delta_list = 0.0, 0.3 ,0.6\n"
      "tau_variant = a\n"
      "train_dataset = data/train.bin\n");
  EXPECT_EQ(cfg.learning_rate, 5e-5);
  EXPECT_EQ(cfg.batch_size, 48u);
  EXPECT_EQ(cfg.epochs, 7u);
  EXPECT_EQ(cfg.pair_variant, PairVariant::kL3);
  EXPECT_EQ(cfg.dtw_mode, DtwMode::kMax);
  EXPECT_FALSE(cfg.use_pos_emb);
  EXPECT_TRUE(cfg.perceiver_causal);
  ASSERT_EQ(cfg.delta_list.size(), 3u);
  EXPECT_EQ(cfg.delta_list[1], 0.3);
  EXPECT_EQ(cfg.tau_variant, TauVariant::kTauA);
  EXPECT_EQ(cfg.train_dataset, "data/train.bin");
}

TEST(ConfigParse, CommentsAndBlankLinesIgnored) {
  auto cfg = parse_config_text(
      "# full line comment\n"
      "\n"
      "   \t\n"
      "sigma = 4.0  # trailing comment\n");
  EXPECT_EQ(cfg.sigma, 4.0);
}

TEST(ConfigParse, UnknownKeyNamesLineAndKey) {
  const auto msg = error_of("\nsigm = 4.0\n");
  EXPECT_NE(msg.find("line 2"), std::string::npos) << msg;
  EXPECT_NE(msg.find("sigm"), std::string::npos) << msg;
}

TEST(ConfigParse, DuplicateKeyNamesLine) {
  const auto msg = error_of("sigma = 1.0\nsigma = 2.0\n");
  EXPECT_NE(msg.find("line 2"), std::string::npos) << msg;
  EXPECT_NE(msg.find("duplicate"), std::string::npos) << msg;
}

TEST(ConfigParse, MissingEqualsIsError) {
  const auto msg = error_of("sigma 4.0\n");
  EXPECT_NE(msg.find("line 1"), std::string::npos) << msg;
  EXPECT_NE(msg.find("key=value"), std::string::npos) << msg;
}

TEST(ConfigParse, BadValuesReportKey) {
  EXPECT_NE(error_of("sigma = fast\n").find("sigma"), std::string::npos);
  EXPECT_NE(error_of("batch_size = -3\n").find("batch_size"),
            std::string::npos);
  EXPECT_NE(error_of("use_pos_emb = yes\n").find("use_pos_emb"),
            std::string::npos);
  EXPECT_NE(error_of("pair_variant = l9\n").find("l9"), std::string::npos);
  EXPECT_NE(error_of("dtw_mode = med\n").find("med"), std::string::npos);
  EXPECT_NE(error_of("tau_variant = c\n").find("tau_variant"),
            std::string::npos);
  EXPECT_NE(error_of("delta_list = \n").find("delta_list"), std::string::npos);
}

TEST(ConfigValidate, RejectsOutOfRangeFields) {
  TrainConfig cfg;
  cfg.learning_rate = 0.0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = TrainConfig{};
  cfg.d = 7;  // odd
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = TrainConfig{};
  cfg.delta_list = {1.0};
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = TrainConfig{};
  cfg.eval_every = 0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = TrainConfig{};
  cfg.lambda1 = -0.1;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
}

TEST(ConfigRoundTrip, SerializeParseIsIdentity) {
  TrainConfig cfg;
  cfg.learning_rate = 5e-5;
  cfg.batch_size = 48;
  cfg.epochs = 123;
  cfg.seed = 987654321;
  cfg.d = 16;
  cfg.pair_variant = PairVariant::kL2;
  cfg.dtw_mode = DtwMode::kMax;
  cfg.use_pos_emb = false;
  cfg.perceiver_causal = true;
  cfg.lambda2 = 0.0;
  cfg.delta_list = {0.0, 0.15, 0.45};
  cfg.train_dataset = "train.bin";
  cfg.eval_dataset = "eval.bin";
  cfg.out_dir = "runs/x";
  cfg.checkpoint_every = 10;
  cfg.tau_variant = TauVariant::kTauA;

  auto parsed = parse_config_text(config_to_text(cfg));
  EXPECT_EQ(config_to_text(parsed), config_to_text(cfg));
  EXPECT_EQ(parsed.learning_rate, cfg.learning_rate);
  EXPECT_EQ(parsed.seed, cfg.seed);
  EXPECT_EQ(parsed.pair_variant, cfg.pair_variant);
  EXPECT_EQ(parsed.delta_list, cfg.delta_list);
  EXPECT_EQ(parsed.eval_dataset, cfg.eval_dataset);
}

TEST(ConfigFile, LoadsFromDiskAndRejectsMissing) {
  auto dir = std::filesystem::temp_directory_path() / "streamhl_cfg_test";
  std::filesystem::create_directories(dir);
  const auto path = (dir / "t.cfg").string();
  {
    std::ofstream os(path);
    os << "epochs = 3\nsigma = 2.5\n";
  }
  auto cfg = load_config_file(path);
  EXPECT_EQ(cfg.epochs, 3u);
  EXPECT_EQ(cfg.sigma, 2.5);
  EXPECT_THROW(load_config_file((dir / "absent.cfg").string()),
               std::invalid_argument);
}

}  // namespace
}  // namespace streamhl
