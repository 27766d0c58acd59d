#pragma once

// Command-line front end. Lives in a header (cli_main) so tests can drive
// subcommands in-process; tools/main.cpp is a one-line wrapper.

#include <cstdint>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "streamhl/config.hpp"
#include "streamhl/dataset_io.hpp"
#include "streamhl/experiments.hpp"
#include "streamhl/numfmt.hpp"
#include "streamhl/synth.hpp"
#include "streamhl/trainer.hpp"

namespace streamhl {

namespace detail {

// Flags shared by train and eval. Each flag overrides the config file value
// only when given on the command line.
struct SharedFlags {
  std::string config_path;
  std::string dtw_mode;
  std::string pair_variant;
  std::string delta_list;
  std::string out_dir;
  std::uint64_t seed = 0;
  double lambda1 = 0, lambda2 = 0, lambda3 = 0;
  double sigma = 0, gamma = 0, tau_c = 0;
  std::uint64_t negatives = 0;
  bool no_pos_emb = false;
  bool perceiver_causal = false;
};

inline void add_shared_flags(CLI::App* cmd, SharedFlags& f) {
  cmd->add_option("--config", f.config_path, "config file (flat key=value)");
  cmd->add_option("--seed", f.seed, "rng seed");
  cmd->add_option("--dtw-mode", f.dtw_mode, "dtw objective")
      ->check(CLI::IsMember({"min", "max"}));
  cmd->add_option("--pair-variant", f.pair_variant, "pairwise loss variant")
      ->check(CLI::IsMember({"l0", "l1", "l2", "l3"}));
  cmd->add_option("--lambda1", f.lambda1, "pointwise loss weight");
  cmd->add_option("--lambda2", f.lambda2, "alignment loss weight");
  cmd->add_option("--lambda3", f.lambda3, "pairwise loss weight");
  cmd->add_option("--sigma", f.sigma, "pairwise logistic scale");
  cmd->add_option("--gamma", f.gamma, "swap sampling temperature");
  cmd->add_option("--tau-c", f.tau_c, "contrastive temperature");
  cmd->add_option("--negatives", f.negatives, "negative permutations");
  cmd->add_option("--delta-list", f.delta_list,
                  "comma-separated tau thresholds");
  cmd->add_flag("--no-pos-emb", f.no_pos_emb,
                "disable learned positional embeddings");
  cmd->add_flag("--perceiver-causal", f.perceiver_causal,
                "causal mask inside the perceiver");
  cmd->add_option("--out", f.out_dir, "output directory");
}

inline TrainConfig resolve_config(const CLI::App* cmd, const SharedFlags& f) {
  TrainConfig cfg;
  if (!f.config_path.empty()) cfg = load_config_file(f.config_path);
  auto given = [&](const std::string& name) {
    return cmd->count(name) > 0;
  };
  if (given("--seed")) cfg.seed = f.seed;
  if (given("--dtw-mode")) cfg.dtw_mode = parse_dtw_mode(f.dtw_mode);
  if (given("--pair-variant"))
    cfg.pair_variant = parse_pair_variant(f.pair_variant);
  if (given("--lambda1")) cfg.lambda1 = f.lambda1;
  if (given("--lambda2")) cfg.lambda2 = f.lambda2;
  if (given("--lambda3")) cfg.lambda3 = f.lambda3;
  if (given("--sigma")) cfg.sigma = f.sigma;
  if (given("--gamma")) cfg.gamma = f.gamma;
  if (given("--tau-c")) cfg.tau_c = f.tau_c;
  if (given("--negatives")) cfg.negatives = f.negatives;
  if (given("--delta-list"))
    cfg.delta_list = config_delta_list("delta_list", f.delta_list);
  if (f.no_pos_emb) cfg.use_pos_emb = false;
  if (f.perceiver_causal) cfg.perceiver_causal = true;
  if (given("--out")) cfg.out_dir = f.out_dir;
  return cfg;
}

}  // namespace detail

inline int cli_main(int argc, const char* const* argv) {
  CLI::App app{"desk-scale livestream highlight prediction"};
  app.require_subcommand(1);

  // generate-data
  auto* gen = app.add_subcommand("generate-data",
                                 "write a synthetic dataset file");
  StreamConfig gen_cfg;
  std::string gen_out = "dataset.bin";
  gen->add_option("--out", gen_out, "output dataset path");
  gen->add_option("--seed", gen_cfg.seed, "generator seed");
  gen->add_option("--windows", gen_cfg.n_windows, "number of windows");
  gen->add_option("--segments", gen_cfg.n_segments_per_window,
                  "segments per window");
  gen->add_option("--visual-dim", gen_cfg.raw_visual_dim,
                  "raw visual feature width");
  gen->add_option("--text-dim", gen_cfg.raw_text_dim,
                  "raw text feature width");
  gen->add_option("--streamers", gen_cfg.n_streamers, "streamer count");
  gen->add_option("--viewers", gen_cfg.n_viewers, "viewers per segment");
  gen->add_option("--misalignment-fraction", gen_cfg.misalignment_fraction,
                  "fraction of windows with shifted text");
  gen->add_option("--misalignment-shift", gen_cfg.misalignment_shift,
                  "segments of text lag in misaligned windows");
  gen->add_option("--feature-noise", gen_cfg.feature_noise,
                  "iid gaussian noise added to raw features");

  // train
  auto* tr = app.add_subcommand("train", "train a model");
  detail::SharedFlags tr_flags;
  detail::add_shared_flags(tr, tr_flags);
  std::string tr_data, tr_eval_data, tr_resume;
  std::uint64_t tr_epochs = 0;
  tr->add_option("--data", tr_data, "training dataset path");
  tr->add_option("--eval-data", tr_eval_data, "held-out dataset path");
  tr->add_option("--epochs", tr_epochs, "training epochs");
  tr->add_option("--resume", tr_resume, "checkpoint to continue from");

  // eval
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
  detail::SharedFlags ev_flags;
  detail::add_shared_flags(ev, ev_flags);
  std::string ev_checkpoint, ev_data;
  ev->add_option("--checkpoint", ev_checkpoint, "checkpoint path")
      ->required();
  ev->add_option("--data", ev_data, "dataset path")->required();

  // experiment
  auto* ex = app.add_subcommand("experiment", "run a canned study");
  std::string ex_name, ex_out = "experiment_out";
  std::uint64_t ex_seed = 1;
  ex->add_option("name", ex_name, "overfit | collapse | mtam-ablation")
      ->required()
      ->check(CLI::IsMember({"overfit", "collapse", "mtam-ablation"}));
  ex->add_option("--out", ex_out, "output directory");
  ex->add_option("--seed", ex_seed, "base seed");

  // inspect-checkpoint
  auto* ins = app.add_subcommand("inspect-checkpoint",
                                 "list the blocks of a checkpoint");
  std::string ins_path;
  ins->add_option("path", ins_path, "checkpoint path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*gen) {
      write_dataset(generate_stream(gen_cfg), gen_cfg, gen_out);
      std::cout << "wrote " << gen_cfg.n_windows << " windows to " << gen_out
                << "\n";
      return 0;
    }
    if (*tr) {
      TrainConfig cfg = detail::resolve_config(tr, tr_flags);
      if (tr->count("--data")) cfg.train_dataset = tr_data;
      if (tr->count("--eval-data")) cfg.eval_dataset = tr_eval_data;
      if (tr->count("--epochs")) cfg.epochs = tr_epochs;
      auto result = train(cfg, tr_resume);
      std::cout << "trained " << cfg.epochs << " epochs; final checkpoint "
                << result.final_checkpoint << "\n";
      for (const auto& row : result.rows)
        if (row.epoch == cfg.epochs && row.split == "train")
          std::cout << "train tau(delta=" << fmt9(row.delta)
                    << ") = " << fmt9(row.mean_tau) << "\n";
      return 0;
    }
    if (*ev) {
      TrainConfig cfg = detail::resolve_config(ev, ev_flags);
      auto rows = evaluate_checkpoint(ev_checkpoint, ev_data, cfg);
      std::cout << metrics_csv_header() << "\n";
      for (const auto& row : rows) std::cout << metrics_csv_row(row) << "\n";
      return 0;
    }
    if (*ex) {
      const int rc = run_experiment(ex_name, ex_out, ex_seed);
      std::cout << "experiment " << ex_name << " finished; reports in "
                << ex_out << "\n";
      return rc;
    }
    if (*ins) {
      auto blocks = read_checkpoint(ins_path);
      for (const auto& b : blocks) {
        std::cout << b.name << "  shape=" << shape_str(b.shape)
                  << "  values=" << b.data.size();
        if (b.data.size() == 1) std::cout << "  value=" << fmt17(b.data[0]);
        std::cout << "\n";
      }
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace streamhl
