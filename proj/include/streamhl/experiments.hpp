#pragma once

// Canned studies over the synthetic corpus: overfit (can the model memorize
// a small clean dataset), collapse (pairwise variant l0 vs l1 under a
// pairwise-dominant objective), and mtam-ablation (alignment loss on vs off
// on misaligned data, scored on held-out windows). Each study writes its
// artifacts under an output directory and returns typed results so tests can
// assert on the numbers directly.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "streamhl/config.hpp"
#include "streamhl/dataset_io.hpp"
#include "streamhl/numfmt.hpp"
#include "streamhl/synth.hpp"
#include "streamhl/trainer.hpp"

namespace streamhl {

// ---- overfit ----

struct OverfitPreset {
  StreamConfig data;
  TrainConfig train;
  double target_tau = 0.8;  // training-split tau at delta 0
};

inline OverfitPreset overfit_preset() {
  OverfitPreset p;
  p.data.n_windows = 64;
  p.data.seed = 2001;
  p.train.epochs = 200;
  p.train.learning_rate = 3e-3;
  p.train.batch_size = 8;
  return p;
}

struct OverfitResult {
  std::vector<MetricsRow> final_rows;  // train split, final epoch, per delta
  double tau_delta0 = 0.0;
  std::uint64_t epochs = 0;
  bool reached = false;
  std::string report_path;
};

inline OverfitResult run_overfit(const std::string& out_dir,
                                 std::uint64_t seed,
                                 OverfitPreset preset = overfit_preset()) {
  std::filesystem::create_directories(out_dir);
  const std::string data_path = out_dir + "/overfit_data.bin";
  write_dataset(generate_stream(preset.data), preset.data, data_path);
  TrainConfig cfg = preset.train;
  cfg.seed = seed;
  cfg.train_dataset = data_path;
  cfg.out_dir = out_dir;
  auto trained = train(cfg);

  OverfitResult result;
  result.epochs = cfg.epochs;
  for (const auto& row : trained.rows)
    if (row.epoch == cfg.epochs && row.split == "train")
      result.final_rows.push_back(row);
  for (const auto& row : result.final_rows)
    if (row.delta == 0.0) result.tau_delta0 = row.mean_tau;
  result.reached = result.tau_delta0 >= preset.target_tau;

  result.report_path = out_dir + "/overfit_report.txt";
  std::ofstream report(result.report_path);
  report << "overfit study: " << preset.data.n_windows << " windows, "
         << cfg.epochs << " epochs, seed " << seed << "\n";
  for (const auto& row : result.final_rows)
    report << "final training tau(delta=" << fmt9(row.delta)
           << ") = " << fmt9(row.mean_tau) << " over " << row.n_windows
           << " windows (" << row.n_skipped << " skipped)\n";
  report << "target tau(delta=0) >= " << fmt9(preset.target_tau) << ": "
         << (result.reached ? "reached" : "not reached") << "\n";
  return result;
}

// ---- collapse ----

struct CollapsePreset {
  StreamConfig data;
  TrainConfig train;  // pair_variant is overridden per run
  std::vector<std::uint64_t> seeds = {1, 2, 3};
};

inline CollapsePreset collapse_preset() {
  CollapsePreset p;
  p.data.n_windows = 64;
  p.data.seed = 2002;
  p.train.epochs = 40;
  p.train.learning_rate = 3e-3;
  p.train.lambda1 = 0.2;
  p.train.lambda2 = 0.0;
  p.train.lambda3 = 0.8;
  p.train.delta_list = {0.0};
  return p;
}

struct CollapseRun {
  PairVariant variant = PairVariant::kL0;
  std::uint64_t seed = 0;
  double final_part3_fraction = 0.0;
  double final_loss_point = 0.0;
  std::string csv_path;
};

struct CollapseResult {
  std::vector<CollapseRun> runs;
  // seeds where l0 ends with both a higher Part3 fraction and a higher
  // pointwise loss than l1
  std::size_t seeds_l0_worse = 0;
  std::size_t n_seeds = 0;
  std::string report_path;
};

inline CollapseResult run_collapse(const std::string& out_dir,
                                   CollapsePreset preset = collapse_preset()) {
  std::filesystem::create_directories(out_dir);
  const std::string data_path = out_dir + "/collapse_data.bin";
  write_dataset(generate_stream(preset.data), preset.data, data_path);

  CollapseResult result;
  result.n_seeds = preset.seeds.size();
  auto run_one = [&](PairVariant variant, std::uint64_t seed) {
    TrainConfig cfg = preset.train;
    cfg.pair_variant = variant;
    cfg.seed = seed;
    cfg.train_dataset = data_path;
    const std::string tag =
        pair_variant_name(variant) + "_seed" + std::to_string(seed);
    cfg.out_dir = out_dir + "/" + tag;
    auto trained = train(cfg);

    CollapseRun run;
    run.variant = variant;
    run.seed = seed;
    run.final_part3_fraction = trained.epoch_stats.back().part3_fraction;
    run.final_loss_point = trained.epoch_stats.back().mean_point;
    run.csv_path = out_dir + "/collapse_" + tag + ".csv";
    std::ofstream csv(run.csv_path);
    csv << "epoch,loss_point,loss_pair,part3_fraction\n";
    for (const auto& st : trained.epoch_stats)
      csv << st.epoch << ',' << fmt9(st.mean_point) << ','
          << fmt9(st.mean_pair) << ',' << fmt9(st.part3_fraction) << '\n';
    return run;
  };

  result.report_path = out_dir + "/collapse_report.txt";
  std::ofstream report(result.report_path);
  report << "collapse study: pairwise-dominant objective (lambda1="
         << fmt9(preset.train.lambda1)
         << ", lambda3=" << fmt9(preset.train.lambda3) << "), "
         << preset.train.epochs << " epochs\n";
  for (std::uint64_t seed : preset.seeds) {
    auto l0 = run_one(PairVariant::kL0, seed);
    auto l1 = run_one(PairVariant::kL1, seed);
    result.runs.push_back(l0);
    result.runs.push_back(l1);
    const bool l0_worse =
        l0.final_part3_fraction > l1.final_part3_fraction &&
        l0.final_loss_point > l1.final_loss_point;
    if (l0_worse) ++result.seeds_l0_worse;
    report << "seed " << seed << ": part3 l0=" << fmt9(l0.final_part3_fraction)
           << " l1=" << fmt9(l1.final_part3_fraction)
           << ", loss_point l0=" << fmt9(l0.final_loss_point)
           << " l1=" << fmt9(l1.final_loss_point)
           << (l0_worse ? "  [l0 worse on both]" : "") << "\n";
  }
  report << "seeds where l0 ends worse on both: " << result.seeds_l0_worse
         << " of " << result.n_seeds << "\n";
  return result;
}

// ---- mtam ablation ----

struct AblationPreset {
  StreamConfig train_data;
  StreamConfig eval_data;
  TrainConfig train;  // lambda2 is overridden per run
  double lambda2_on = 0.15;
  std::vector<std::uint64_t> seeds = {1, 2, 3};
};

inline AblationPreset ablation_preset() {
  AblationPreset p;
  p.train_data.n_windows = 48;
  p.train_data.misalignment_fraction = 0.5;
  p.train_data.misalignment_shift = 2;
  // at low noise the modalities are redundant and alignment has nothing to
  // add; at 0.2 the order-contrastive pull measurably denoises the encoders
  p.train_data.feature_noise = 0.2;
  p.train_data.seed = 2003;
  p.eval_data = p.train_data;
  p.eval_data.n_windows = 64;
  p.eval_data.seed = 2004;
  p.train.epochs = 120;
  p.train.learning_rate = 3e-3;
  p.train.delta_list = {0.0};
  p.train.eval_every = 20;
  return p;
}

struct AblationRun {
  double lambda2 = 0.0;
  std::uint64_t seed = 0;
  double heldout_tau = 0.0;  // eval split, final epoch, delta 0
};

struct AblationResult {
  std::vector<AblationRun> runs;
  double mean_with = 0.0;
  double mean_without = 0.0;
  double margin = 0.0;  // mean_with - mean_without
  std::string csv_path;
  std::string report_path;
};

inline AblationResult run_ablation(const std::string& out_dir,
                                   AblationPreset preset = ablation_preset()) {
  std::filesystem::create_directories(out_dir);
  const std::string train_path = out_dir + "/ablation_train.bin";
  const std::string eval_path = out_dir + "/ablation_eval.bin";
  write_dataset(generate_stream(preset.train_data), preset.train_data,
                train_path);
  write_dataset(generate_stream(preset.eval_data), preset.eval_data,
                eval_path);

  AblationResult result;
  auto run_one = [&](double lambda2, std::uint64_t seed) {
    TrainConfig cfg = preset.train;
    cfg.lambda2 = lambda2;
    cfg.seed = seed;
    cfg.train_dataset = train_path;
    cfg.eval_dataset = eval_path;
    cfg.out_dir = out_dir + "/lambda2_" + fmt9(lambda2) + "_seed" +
                  std::to_string(seed);
    auto trained = train(cfg);
    AblationRun run;
    run.lambda2 = lambda2;
    run.seed = seed;
    for (const auto& row : trained.rows)
      if (row.split == "eval" && row.epoch == cfg.epochs && row.delta == 0.0)
        run.heldout_tau = row.mean_tau;
    return run;
  };

  for (std::uint64_t seed : preset.seeds) {
    auto off = run_one(0.0, seed);
    auto on = run_one(preset.lambda2_on, seed);
    result.runs.push_back(off);
    result.runs.push_back(on);
    result.mean_without += off.heldout_tau;
    result.mean_with += on.heldout_tau;
  }
  result.mean_without /= double(preset.seeds.size());
  result.mean_with /= double(preset.seeds.size());
  result.margin = result.mean_with - result.mean_without;

  result.csv_path = out_dir + "/ablation_runs.csv";
  std::ofstream csv(result.csv_path);
  csv << "lambda2,seed,heldout_tau\n";
  for (const auto& run : result.runs)
    csv << fmt9(run.lambda2) << ',' << run.seed << ','
        << fmt9(run.heldout_tau) << '\n';

  result.report_path = out_dir + "/ablation_report.txt";
  std::ofstream report(result.report_path);
  report << "mtam ablation: misalignment fraction "
         << fmt9(preset.train_data.misalignment_fraction) << ", shift "
         << preset.train_data.misalignment_shift << ", "
         << preset.train.epochs << " epochs, "
         << preset.seeds.size() << " seeds\n";
  report << "mean held-out tau(delta=0) with lambda2="
         << fmt9(preset.lambda2_on) << ": " << fmt9(result.mean_with) << "\n";
  report << "mean held-out tau(delta=0) with lambda2=0: "
         << fmt9(result.mean_without) << "\n";
  report << "margin: " << fmt9(result.margin) << "\n";
  return result;
}

// CLI entry: runs one study by name with its default preset.
inline int run_experiment(const std::string& name, const std::string& out_dir,
                          std::uint64_t seed) {
  if (name == "overfit") {
    auto r = run_overfit(out_dir, seed);
    return r.reached ? 0 : 1;
  }
  if (name == "collapse") {
    auto preset = collapse_preset();
    preset.seeds = {seed, seed + 1, seed + 2};
    auto r = run_collapse(out_dir, preset);
    return 2 * r.seeds_l0_worse >= r.n_seeds + 1 ? 0 : 1;
  }
  if (name == "mtam-ablation") {
    auto preset = ablation_preset();
    preset.seeds = {seed, seed + 1, seed + 2};
    auto r = run_ablation(out_dir, preset);
    return r.margin > 0.0 ? 0 : 1;
  }
  throw std::invalid_argument(
      "unknown experiment '" + name +
      "' (expected overfit, collapse, or mtam-ablation)");
}

}  // namespace streamhl
