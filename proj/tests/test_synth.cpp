#include "streamhl/synth.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "streamhl/dataset_io.hpp"
#include "streamhl/rng.hpp"

namespace streamhl {
namespace {

StreamConfig small_config() {
  StreamConfig cfg;
  cfg.n_segments_per_window = 8;
  cfg.raw_visual_dim = 4;
  cfg.raw_text_dim = 4;
  cfg.n_viewers = 60;
  cfg.n_windows = 3;
  cfg.n_streamers = 2;
  cfg.seed = 7;
  return cfg;
}

std::string slurp(const std::string& path) {
  std::ifstream is(path);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::string temp_path(const std::string& name) {
  return ::testing::TempDir() + name;
}

bool windows_equal(const std::vector<SampleWindow>& a,
                   const std::vector<SampleWindow>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t w = 0; w < a.size(); ++w) {
    if (a[w].stream_id != b[w].stream_id) return false;
    if (a[w].streamer_id != b[w].streamer_id) return false;
    if (a[w].label_shift_applied != b[w].label_shift_applied) return false;
    if (a[w].segments.size() != b[w].segments.size()) return false;
    for (std::size_t i = 0; i < a[w].segments.size(); ++i) {
      const Segment& s = a[w].segments[i];
      const Segment& t = b[w].segments[i];
      if (s.raw_visual != t.raw_visual || s.raw_text != t.raw_text) return false;
      if (s.y != t.y || s.y_binary != t.y_binary) return false;
    }
  }
  return true;
}

TEST(SynthConfig, ValidationRejectsBadValues) {
  auto cfg = small_config();
  cfg.n_viewers = 59;
  EXPECT_THROW(validate(cfg), std::invalid_argument);
  cfg = small_config();
  cfg.misalignment_shift = 8;
  EXPECT_THROW(validate(cfg), std::invalid_argument);
  cfg = small_config();
  cfg.misalignment_fraction = 1.5;
  EXPECT_THROW(validate(cfg), std::invalid_argument);
  cfg = small_config();
  cfg.raw_text_dim = 1;
  EXPECT_THROW(validate(cfg), std::invalid_argument);
  EXPECT_NO_THROW(validate(small_config()));
}

TEST(SynthLabels, DegenerateWatchTimeAtZeroGivesAllZeroLabels) {
  auto cfg = small_config();
  cfg.watch_base_min_seconds = 0.0;
  cfg.watch_base_max_seconds = 0.0;
  cfg.watch_noise_seconds = 0.0;
  for (const auto& w : generate_raw_windows(cfg))
    for (const auto& seg : w.segments) EXPECT_EQ(seg.y, 0.0);
}

TEST(SynthLabels, DegenerateWatchTimeAboveThresholdGivesAllOneLabels) {
  auto cfg = small_config();
  cfg.watch_base_min_seconds = 100.0;
  cfg.watch_base_max_seconds = 100.0;
  cfg.watch_noise_seconds = 0.0;
  for (const auto& w : generate_raw_windows(cfg))
    for (const auto& seg : w.segments) EXPECT_EQ(seg.y, 1.0);
}

// Empirical mean of y over many segments at fixed q vs the closed-form
// long-view probability, within 3 standard errors.
TEST(SynthLabels, EmpiricalMeanMatchesClosedForm) {
  auto cfg = small_config();
  cfg.n_viewers = 100;
  const double q = 0.5;
  const double p = long_view_probability(cfg, q);
  ASSERT_GT(p, 0.01);
  ASSERT_LT(p, 0.99);
  const int n_segments = 1000;
  Rng rng(991);
  double sum = 0.0;
  for (int s = 0; s < n_segments; ++s) {
    std::vector<double> u(cfg.n_viewers);
    for (auto& x : u) x = rng.uniform();
    sum += lvtr_from_uniforms(cfg, q, u);
  }
  const double mean = sum / n_segments;
  const double se =
      std::sqrt(p * (1.0 - p) / (cfg.n_viewers * double(n_segments)));
  EXPECT_NEAR(mean, p, 3.0 * se);
}

TEST(SynthLabels, MonotoneInQUnderCommonRandomNumbers) {
  auto cfg = small_config();
  Rng rng(17);
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<double> u(cfg.n_viewers);
    for (auto& x : u) x = rng.uniform();
    double prev = -1.0;
    for (double q = 0.0; q <= 1.0001; q += 0.05) {
      double y = lvtr_from_uniforms(cfg, q, u);
      EXPECT_GE(y, prev);
      prev = y;
    }
  }
}

TEST(SynthLabels, BinaryLabelMatchesBurstThreshold) {
  auto cfg = small_config();
  cfg.n_windows = 10;
  int positives = 0;
  for (const auto& w : generate_raw_windows(cfg))
    for (const auto& seg : w.segments) {
      EXPECT_EQ(seg.y_binary, seg.q > kBurstThreshold ? 1 : 0);
      EXPECT_GE(seg.y, 0.0);
      EXPECT_LE(seg.y, 1.0);
      positives += seg.y_binary;
    }
  EXPECT_GT(positives, 0);  // base rate 0.15 over 80 segments
}

TEST(SynthMisalign, ZeroShiftIsIdentity) {
  auto cfg = small_config();
  auto windows = generate_raw_windows(cfg);
  auto shifted = inject_misalignment(windows[0], 0);
  EXPECT_TRUE(windows_equal({shifted}, {windows[0]}));
}

TEST(SynthMisalign, PlusTwoMinusTwoRestoresInterior) {
  auto cfg = small_config();
  auto w = generate_raw_windows(cfg)[0];
  auto round_trip = inject_misalignment(inject_misalignment(w, 2), -2);
  const std::size_t n = w.segments.size();
  // interior positions: both shifts in range, no edge padding involved
  for (std::size_t i = 2; i + 2 < n; ++i)
    EXPECT_EQ(round_trip.segments[i].raw_text, w.segments[i].raw_text) << i;
}

TEST(SynthMisalign, OutOfRangeShiftThrows) {
  auto cfg = small_config();
  auto w = generate_raw_windows(cfg)[0];
  EXPECT_THROW(inject_misalignment(w, 8), std::invalid_argument);
  EXPECT_THROW(inject_misalignment(w, -8), std::invalid_argument);
}

double cos_sim(const std::vector<double>& a, const std::vector<double>& b) {
  double dot = 0, na = 0, nb = 0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    dot += a[k] * b[k];
    na += a[k] * a[k];
    nb += b[k] * b[k];
  }
  return dot / std::sqrt(na * nb);
}

// On noiseless data the feature direction encodes q exactly, so the best
// visual match for text i sits at j=i, and at j=i-2 after a +2 shift.
TEST(SynthMisalign, NoiselessArgmaxTracksShift) {
  auto cfg = small_config();
  cfg.feature_noise = 0.0;
  cfg.streamer_signature_scale = 0.0;
  cfg.n_windows = 2;
  auto windows = generate_raw_windows(cfg);
  for (const auto& w : windows) {
    const std::size_t n = w.segments.size();
    auto argmax_visual = [&](const std::vector<double>& text) {
      std::size_t best = 0;
      double best_sim = -2.0;
      for (std::size_t j = 0; j < n; ++j) {
        double s = cos_sim(text, w.segments[j].raw_visual);
        if (s > best_sim) {
          best_sim = s;
          best = j;
        }
      }
      return best;
    };
    for (std::size_t i = 0; i < n; ++i)
      EXPECT_EQ(argmax_visual(w.segments[i].raw_text), i) << "aligned i=" << i;
    auto shifted = inject_misalignment(w, 2);
    for (std::size_t i = 2; i < n; ++i) {
      std::size_t best = 0;
      double best_sim = -2.0;
      for (std::size_t j = 0; j < n; ++j) {
        double s = cos_sim(shifted.segments[i].raw_text, w.segments[j].raw_visual);
        if (s > best_sim) {
          best_sim = s;
          best = j;
        }
      }
      EXPECT_EQ(best, i - 2) << "shifted i=" << i;
    }
  }
}

TEST(SynthShift, LabelsShiftLeftWithMaskedTail) {
  SampleWindow w;
  w.segments.resize(3);
  for (int i = 0; i < 3; ++i) {
    w.segments[i].raw_visual = {1, 0};
    w.segments[i].raw_text = {0, 1};
  }
  w.segments[0].y = 0.1;
  w.segments[1].y = 0.2;
  w.segments[2].y = 0.3;
  w.segments[1].y_binary = 1;
  auto s = left_shift_labels(w);
  EXPECT_DOUBLE_EQ(s.segments[0].y, 0.2);
  EXPECT_DOUBLE_EQ(s.segments[1].y, 0.3);
  EXPECT_EQ(s.segments[0].y_binary, 1);
  EXPECT_TRUE(s.label_shift_applied);
  auto mask = label_mask(s);
  EXPECT_TRUE(mask[0]);
  EXPECT_TRUE(mask[1]);
  EXPECT_FALSE(mask[2]);
  EXPECT_THROW(left_shift_labels(s), std::logic_error);
}

TEST(SynthShift, ConstantLabelsUnchangedOnUnmaskedPositions) {
  auto cfg = small_config();
  cfg.watch_base_min_seconds = 100.0;
  cfg.watch_base_max_seconds = 100.0;
  cfg.watch_noise_seconds = 0.0;  // every y == 1
  auto w = generate_raw_windows(cfg)[0];
  auto s = left_shift_labels(w);
  for (std::size_t i = 0; i + 1 < s.segments.size(); ++i)
    EXPECT_EQ(s.segments[i].y, 1.0);
}

TEST(SynthShift, ShiftedTargetEqualsNextPreShiftLabel) {
  auto cfg = small_config();
  auto raw = generate_raw_windows(cfg);
  for (const auto& w : raw) {
    auto s = left_shift_labels(w);
    for (std::size_t i = 0; i + 1 < w.segments.size(); ++i) {
      EXPECT_EQ(s.segments[i].y, w.segments[i + 1].y);
      EXPECT_EQ(s.segments[i].y_binary, w.segments[i + 1].y_binary);
    }
  }
}

TEST(SynthDeterminism, SameSeedGivesBitwiseIdenticalDataset) {
  auto cfg = small_config();
  auto a = generate_stream(cfg);
  auto b = generate_stream(cfg);
  EXPECT_TRUE(windows_equal(a, b));
  cfg.seed = 8;
  auto c = generate_stream(cfg);
  EXPECT_FALSE(windows_equal(a, c));
}

TEST(SynthDeterminism, WindowShapeInvariants) {
  auto cfg = small_config();
  auto windows = generate_stream(cfg);
  ASSERT_EQ(windows.size(), cfg.n_windows);
  for (const auto& w : windows) {
    EXPECT_EQ(w.segments.size(), cfg.n_segments_per_window);
    EXPECT_LT(w.streamer_id, cfg.n_streamers);
    EXPECT_TRUE(w.label_shift_applied);
    for (const auto& seg : w.segments) {
      EXPECT_EQ(seg.raw_visual.size(), cfg.raw_visual_dim);
      EXPECT_EQ(seg.raw_text.size(), cfg.raw_text_dim);
      for (double x : seg.raw_visual) EXPECT_TRUE(std::isfinite(x));
      for (double x : seg.raw_text) EXPECT_TRUE(std::isfinite(x));
    }
  }
}

TEST(SynthIo, RoundTripIsLosslessAndReserializationIsByteIdentical) {
  auto cfg = small_config();
  auto windows = generate_stream(cfg);
  const std::string p1 = temp_path("ds1.txt");
  const std::string p2 = temp_path("ds2.txt");
  write_dataset(windows, cfg, p1);
  auto [back, cfg2] = read_dataset(p1);
  EXPECT_TRUE(windows_equal(windows, back));
  EXPECT_EQ(cfg2.n_segments_per_window, cfg.n_segments_per_window);
  EXPECT_EQ(cfg2.seed, cfg.seed);
  EXPECT_EQ(cfg2.n_viewers, cfg.n_viewers);
  write_dataset(back, cfg2, p2);
  EXPECT_EQ(slurp(p1), slurp(p2));
}

TEST(SynthIo, EmptyWindowListRoundTrips) {
  auto cfg = small_config();
  const std::string p = temp_path("empty.txt");
  write_dataset({}, cfg, p);
  auto [back, cfg2] = read_dataset(p);
  EXPECT_TRUE(back.empty());
  EXPECT_EQ(cfg2.n_windows, 0u);
}

TEST(SynthIo, TruncatedRecordNamesRecordIndex) {
  auto cfg = small_config();
  auto windows = generate_stream(cfg);
  const std::string p = temp_path("trunc.txt");
  write_dataset(windows, cfg, p);
  std::string text = slurp(p);
  // drop the last 3 lines (tail of the final record)
  std::size_t cut = text.size();
  for (int k = 0; k < 4; ++k) cut = text.rfind('\n', cut - 1);
  std::ofstream(p) << text.substr(0, cut + 1);
  try {
    read_dataset(p);
    FAIL() << "expected DatasetParseError";
  } catch (const DatasetParseError& e) {
    EXPECT_EQ(e.record_index(), static_cast<long>(windows.size() - 1));
    EXPECT_NE(std::string(e.what()).find("window record"), std::string::npos);
  }
}

TEST(SynthIo, MalformedLinesReportLineNumbers) {
  const std::string p = temp_path("bad.txt");
  std::ofstream(p) << "streamhl-dataset 1\nnot a header\n";
  try {
    read_dataset(p);
    FAIL() << "expected DatasetParseError";
  } catch (const DatasetParseError& e) {
    EXPECT_EQ(e.line(), 2u);
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }

  std::ofstream(p) << "wrong magic\n";
  EXPECT_THROW(read_dataset(p), DatasetParseError);

  auto cfg = small_config();
  auto windows = generate_stream(cfg);
  write_dataset(windows, cfg, p);
  std::string text = slurp(p);
  auto pos = text.find("y_binary 0");
  if (pos == std::string::npos) pos = text.find("y_binary 1");
  ASSERT_NE(pos, std::string::npos);
  text.replace(pos, 10, "y_binary 7");
  std::ofstream(p) << text;
  EXPECT_THROW(read_dataset(p), DatasetParseError);
}

TEST(SynthIo, UnknownHeaderKeyRejected) {
  auto cfg = small_config();
  const std::string p = temp_path("unknown.txt");
  write_dataset({}, cfg, p);
  std::string text = slurp(p);
  text.insert(text.find("n_windows"), "mystery_key=3\n");
  std::ofstream(p) << text;
  EXPECT_THROW(read_dataset(p), DatasetParseError);
}

TEST(SynthIo, MisalignedFractionAltersTextOnly) {
  auto cfg = small_config();
  cfg.misalignment_fraction = 1.0;
  cfg.misalignment_shift = 2;
  auto aligned_cfg = cfg;
  aligned_cfg.misalignment_fraction = 0.0;
  auto mis = generate_raw_windows(cfg);
  auto ali = generate_raw_windows(aligned_cfg);
  ASSERT_EQ(mis.size(), ali.size());
  bool text_differs = false;
  for (std::size_t w = 0; w < mis.size(); ++w)
    for (std::size_t i = 0; i < mis[w].segments.size(); ++i) {
      EXPECT_EQ(mis[w].segments[i].raw_visual, ali[w].segments[i].raw_visual);
      EXPECT_EQ(mis[w].segments[i].y, ali[w].segments[i].y);
      if (mis[w].segments[i].raw_text != ali[w].segments[i].raw_text)
        text_differs = true;
    }
  EXPECT_TRUE(text_differs);
}

}  // namespace
}  // namespace streamhl
