#pragma once

// Training and evaluation orchestration: the epoch loop (shuffled windows,
// per-window losses, summed batch gradients, Adam updates), deterministic
// per-(seed, epoch, window) rng streams, metrics emission, and checkpoint
// save/load. All randomness is derived statelessly so a reloaded checkpoint
// continues the exact trajectory.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "streamhl/adam.hpp"
#include "streamhl/checkpoint.hpp"
#include "streamhl/config.hpp"
#include "streamhl/dataset_io.hpp"
#include "streamhl/losses.hpp"
#include "streamhl/metrics.hpp"
#include "streamhl/model.hpp"
#include "streamhl/mtam.hpp"
#include "streamhl/numfmt.hpp"
#include "streamhl/rng.hpp"
#include "streamhl/synth.hpp"

namespace streamhl {

class TrainAbortError : public std::runtime_error {
 public:
  explicit TrainAbortError(const std::string& what)
      : std::runtime_error(what) {}
};

namespace detail {

// rng stream keys; window-level streams add (epoch, window) below
constexpr std::uint64_t kStreamShuffle = 0x7368756666ULL;
constexpr std::uint64_t kStreamAlignTrain = 0x616c74726eULL;
constexpr std::uint64_t kStreamAlignEval = 0x616c65766cULL;

}  // namespace detail

inline ModelConfig model_config_from(const TrainConfig& tc,
                                     const StreamConfig& data_cfg) {
  ModelConfig mc;
  mc.d = tc.d;
  mc.d_h = tc.d_h;
  mc.n_h = tc.n_h;
  mc.n_perceiver_layers = tc.n_perceiver_layers;
  mc.decoder_depth = tc.decoder_depth;
  mc.n_segments = data_cfg.n_segments_per_window;
  mc.raw_visual_dim = data_cfg.raw_visual_dim;
  mc.raw_text_dim = data_cfg.raw_text_dim;
  mc.n_streamers = data_cfg.n_streamers;
  mc.use_pos_emb = tc.use_pos_emb;
  mc.perceiver_causal = tc.perceiver_causal;
  mc.validate();
  return mc;
}

struct WindowLoss {
  CombinedLoss combined;
  RegionCounts regions;
  std::size_t pairs_included = 0;
  std::vector<double> s;  // detached predictions, all positions
};

// Per-window objective: pointwise + alignment + pairwise per the weights;
// components with zero weight are not computed at all.
inline WindowLoss window_loss(Tape& tape, const SampleWindow& window,
                              const ModelParams& params,
                              const ModelConfig& mcfg, const LossConfig& lcfg,
                              const AlignConfig& acfg, Rng& align_rng) {
  auto out = forward_window(tape, window, params, mcfg);
  auto all_finite = [](const std::vector<double>& xs) {
    for (double x : xs)
      if (!std::isfinite(x)) return false;
    return true;
  };
  if (!all_finite(out.s.data()) || !all_finite(out.z.data()) ||
      !all_finite(out.v.data()))
    throw TrainAbortError("model produced non-finite outputs");
  auto mask = label_mask(window);
  std::vector<double> y;
  y.reserve(window.segments.size());
  for (const auto& seg : window.segments) y.push_back(seg.y);
  std::optional<Tensor> point, align, pair;
  WindowLoss wl;
  if (lcfg.lambda1 > 0.0) point = pointwise_loss(tape, out.s, y, mask);
  if (lcfg.lambda2 > 0.0)
    align = align_loss(tape, align_rng, out.z, out.v, acfg).loss;
  if (lcfg.lambda3 > 0.0) {
    auto pr = pairwise_loss(tape, out.s, y, mask, lcfg);
    pair = pr.loss;
    wl.pairs_included = pr.n_included;
  }
  wl.regions = region_histogram(out.s.data(), y, mask, lcfg.pair_epsilon);
  wl.combined = combined_loss(tape, point, align, pair, lcfg);
  wl.s = out.s.data();
  return wl;
}

struct SplitEval {
  std::vector<MetricsRow> rows;  // one per delta
  RegionCounts regions;          // aggregated over windows
  double mean_point = 0.0;
  double mean_align = 0.0;
  double mean_pair = 0.0;
  double mean_total = 0.0;
};

// Forward-only pass over a split: losses, per-delta tau, mAP. Alignment
// draws come from streams derived per (seed, stream_key, epoch, window), so
// repeated evaluation is bitwise identical.
inline SplitEval evaluate_split(const std::vector<SampleWindow>& windows,
                                const ModelParams& params,
                                const ModelConfig& mcfg,
                                const LossConfig& lcfg,
                                const AlignConfig& acfg,
                                const std::vector<double>& deltas,
                                TauVariant tau_variant, std::uint64_t epoch,
                                const std::string& split,
                                std::uint64_t seed,
                                std::uint64_t stream_key) {
  SplitEval eval;
  std::vector<std::vector<double>> all_s, all_y;
  std::vector<std::vector<int>> all_bin;
  for (std::size_t w = 0; w < windows.size(); ++w) {
    Tape tape;
    Rng align_rng(derive_seed(seed, stream_key, epoch, w));
    WindowLoss wl;
    try {
      wl = window_loss(tape, windows[w], params, mcfg, lcfg, acfg, align_rng);
    } catch (const std::exception& e) {
      throw TrainAbortError(std::string(e.what()) + " (split " + split +
                            ", epoch " + std::to_string(epoch) + ", window " +
                            std::to_string(w) + ")");
    }
    eval.mean_point += wl.combined.pointwise;
    eval.mean_align += wl.combined.align;
    eval.mean_pair += wl.combined.pairwise;
    eval.mean_total += wl.combined.total.value();
    eval.regions.part1 += wl.regions.part1;
    eval.regions.part2 += wl.regions.part2;
    eval.regions.part3 += wl.regions.part3;
    // metrics see only masked-in positions
    auto mask = label_mask(windows[w]);
    std::vector<double> s, y;
    std::vector<int> bin;
    for (std::size_t i = 0; i < windows[w].segments.size(); ++i) {
      if (!mask[i]) continue;
      s.push_back(wl.s[i]);
      y.push_back(windows[w].segments[i].y);
      bin.push_back(windows[w].segments[i].y_binary);
    }
    all_s.push_back(std::move(s));
    all_y.push_back(std::move(y));
    all_bin.push_back(std::move(bin));
  }
  const double n = windows.empty() ? 1.0 : double(windows.size());
  eval.mean_point /= n;
  eval.mean_align /= n;
  eval.mean_pair /= n;
  eval.mean_total /= n;
  auto map_summary = summarize_map(all_s, all_bin);
  for (double delta : deltas) {
    auto tau = summarize_tau(all_s, all_y, delta, tau_variant);
    MetricsRow row;
    row.epoch = epoch;
    row.split = split;
    row.delta = delta;
    row.mean_tau = tau.mean_tau;
    row.n_windows = tau.n_evaluated;
    row.n_skipped = tau.n_skipped;
    row.map = map_summary.mean_ap;
    row.loss_point = eval.mean_point;
    row.loss_align = eval.mean_align;
    row.loss_pair = eval.mean_pair;
    row.loss_total = eval.mean_total;
    eval.rows.push_back(std::move(row));
  }
  return eval;
}

// ---- checkpoint bridge ----

namespace detail {

inline std::vector<double> model_meta(const ModelConfig& mc) {
  return {double(mc.d),
          double(mc.d_h),
          double(mc.n_h),
          double(mc.n_perceiver_layers),
          double(mc.decoder_depth),
          double(mc.n_segments),
          double(mc.raw_visual_dim),
          double(mc.raw_text_dim),
          double(mc.n_streamers),
          mc.use_pos_emb ? 1.0 : 0.0,
          mc.perceiver_causal ? 1.0 : 0.0,
          mc.use_layer_norm ? 1.0 : 0.0};
}

inline ModelConfig model_from_meta(const std::vector<double>& meta) {
  if (meta.size() != 12)
    throw CheckpointError("meta.model block must hold 12 values, found " +
                          std::to_string(meta.size()));
  ModelConfig mc;
  mc.d = std::size_t(meta[0]);
  mc.d_h = std::size_t(meta[1]);
  mc.n_h = std::size_t(meta[2]);
  mc.n_perceiver_layers = std::size_t(meta[3]);
  mc.decoder_depth = std::size_t(meta[4]);
  mc.n_segments = std::size_t(meta[5]);
  mc.raw_visual_dim = std::size_t(meta[6]);
  mc.raw_text_dim = std::size_t(meta[7]);
  mc.n_streamers = std::size_t(meta[8]);
  mc.use_pos_emb = meta[9] != 0.0;
  mc.perceiver_causal = meta[10] != 0.0;
  mc.use_layer_norm = meta[11] != 0.0;
  mc.validate();
  return mc;
}

}  // namespace detail

inline void save_training_checkpoint(const std::string& path,
                                     const ModelParams& params,
                                     const ModelConfig& mcfg,
                                     const AdamState& adam,
                                     std::uint64_t epoch, std::uint64_t seed) {
  std::vector<CheckpointBlock> blocks;
  blocks.push_back({"meta.model", {12}, detail::model_meta(mcfg)});
  blocks.push_back({"meta.epoch", {1}, {double(epoch)}});
  blocks.push_back(
      {"meta.seed", {2}, {double(seed >> 32), double(seed & 0xffffffffULL)}});
  auto named = named_parameters(params);
  for (const auto& [name, tensor] : named)
    blocks.push_back({name, tensor.shape(), tensor.data()});
  blocks.push_back({"adam.t", {1}, {double(adam.t)}});
  if (adam.m.size() != named.size() || adam.v.size() != named.size())
    throw CheckpointError("optimizer state does not match parameter count");
  for (std::size_t i = 0; i < named.size(); ++i) {
    blocks.push_back({"adam.m." + named[i].first, named[i].second.shape(),
                      adam.m[i]});
    blocks.push_back({"adam.v." + named[i].first, named[i].second.shape(),
                      adam.v[i]});
  }
  write_checkpoint(path, blocks);
}

struct LoadedTrainingState {
  ModelConfig model_cfg;
  ModelParams params;
  AdamState adam;
  std::uint64_t epoch = 0;
  std::uint64_t seed = 0;
};

inline LoadedTrainingState load_training_checkpoint(const std::string& path) {
  auto blocks = read_checkpoint(path);
  std::map<std::string, const CheckpointBlock*> by_name;
  for (const auto& b : blocks) by_name[b.name] = &b;
  auto take = [&](const std::string& name) -> const CheckpointBlock& {
    auto it = by_name.find(name);
    if (it == by_name.end())
      throw CheckpointError("checkpoint '" + path + "' missing block '" +
                            name + "'");
    const CheckpointBlock* b = it->second;
    by_name.erase(it);
    return *b;
  };
  LoadedTrainingState state;
  state.model_cfg = detail::model_from_meta(take("meta.model").data);
  state.epoch = std::uint64_t(take("meta.epoch").data.at(0));
  const auto& seed_block = take("meta.seed");
  if (seed_block.data.size() != 2)
    throw CheckpointError("meta.seed block must hold 2 values");
  state.seed = (std::uint64_t(seed_block.data[0]) << 32) |
               std::uint64_t(seed_block.data[1]);
  state.params = init_model(state.model_cfg, 0);
  auto named = named_parameters(state.params);
  state.adam.t = std::uint64_t(take("adam.t").data.at(0));
  for (auto& [name, tensor] : named) {
    const auto& block = take(name);
    if (block.shape != tensor.shape())
      throw CheckpointError("checkpoint parameter '" + name + "' has shape " +
                            shape_str(block.shape) + ", model expects " +
                            shape_str(tensor.shape()));
    tensor.mutable_data() = block.data;
    const auto& m = take("adam.m." + name);
    const auto& v = take("adam.v." + name);
    if (m.shape != tensor.shape() || v.shape != tensor.shape())
      throw CheckpointError("optimizer state for '" + name +
                            "' does not match its shape");
    state.adam.m.push_back(m.data);
    state.adam.v.push_back(v.data);
  }
  if (!by_name.empty())
    throw CheckpointError("checkpoint '" + path + "' has unexpected block '" +
                          by_name.begin()->first + "'");
  return state;
}

// ---- training loop ----

struct EpochStats {
  std::uint64_t epoch = 0;
  double mean_point = 0.0;
  double mean_align = 0.0;
  double mean_pair = 0.0;
  double mean_total = 0.0;
  RegionCounts regions;
  double part3_fraction = 0.0;
};

struct TrainResult {
  std::vector<MetricsRow> rows;       // exactly what metrics.csv holds
  std::vector<EpochStats> epoch_stats;  // post-epoch train-split statistics
  std::string final_checkpoint;
  ModelConfig model_cfg;
  ModelParams params;
  AdamState adam;
};

namespace detail {

inline EpochStats stats_from_eval(std::uint64_t epoch, const SplitEval& eval) {
  EpochStats st;
  st.epoch = epoch;
  st.mean_point = eval.mean_point;
  st.mean_align = eval.mean_align;
  st.mean_pair = eval.mean_pair;
  st.mean_total = eval.mean_total;
  st.regions = eval.regions;
  const std::size_t total = eval.regions.total();
  st.part3_fraction =
      total ? double(eval.regions.part3) / double(total) : 0.0;
  return st;
}

}  // namespace detail

// Trains per the config, optionally resuming from a checkpoint. Metrics rows
// cover the post-epoch state; epoch 0 rows describe the untrained (or
// loaded) model. Throws TrainAbortError with a component dump if any window
// loss goes non-finite.
inline TrainResult train(const TrainConfig& cfg,
                         const std::string& resume_from = "") {
  cfg.validate();
  if (cfg.train_dataset.empty())
    throw std::invalid_argument("train: config sets no train_dataset");
  auto [windows, data_cfg] = read_dataset(cfg.train_dataset);
  if (windows.empty())
    throw std::invalid_argument("train: dataset '" + cfg.train_dataset +
                                "' holds no windows");
  std::vector<SampleWindow> eval_windows;
  bool have_eval = !cfg.eval_dataset.empty();
  if (have_eval) {
    auto [ew, ecfg] = read_dataset(cfg.eval_dataset);
    if (ecfg.n_segments_per_window != data_cfg.n_segments_per_window ||
        ecfg.raw_visual_dim != data_cfg.raw_visual_dim ||
        ecfg.raw_text_dim != data_cfg.raw_text_dim)
      throw std::invalid_argument(
          "train: eval dataset shape does not match train dataset");
    eval_windows = std::move(ew);
  }

  TrainResult result;
  std::uint64_t start_epoch = 0;
  std::uint64_t seed = cfg.seed;
  if (resume_from.empty()) {
    result.model_cfg = model_config_from(cfg, data_cfg);
    result.params = init_model(result.model_cfg, seed);
    result.adam = init_adam_state([&] {
      std::vector<Tensor> t;
      for (auto& [name, tensor] : named_parameters(result.params))
        t.push_back(tensor);
      return t;
    }());
  } else {
    auto loaded = load_training_checkpoint(resume_from);
    ModelConfig expected = model_config_from(cfg, data_cfg);
    auto want = detail::model_meta(expected);
    auto got = detail::model_meta(loaded.model_cfg);
    if (want != got)
      throw std::invalid_argument(
          "train: checkpoint model does not match the configured model");
    result.model_cfg = loaded.model_cfg;
    result.params = loaded.params;
    result.adam = loaded.adam;
    start_epoch = loaded.epoch;
    seed = loaded.seed;
    if (cfg.epochs < start_epoch)
      throw std::invalid_argument(
          "train: checkpoint is already at epoch " +
          std::to_string(start_epoch) + ", past the configured " +
          std::to_string(cfg.epochs));
  }

  const LossConfig lcfg = cfg.loss_config();
  const AlignConfig acfg = cfg.align_config();
  const AdamConfig adam_cfg{cfg.learning_rate, 0.9, 0.999, 1e-8};
  std::vector<Tensor> param_tensors;
  auto named = named_parameters(result.params);
  for (auto& [name, tensor] : named) param_tensors.push_back(tensor);

  std::filesystem::create_directories(cfg.out_dir);
  {
    std::ofstream used(cfg.out_dir + "/config_used.cfg");
    if (used) used << config_to_text(cfg);
  }
  const std::string metrics_path = cfg.out_dir + "/metrics.csv";
  const bool append = !resume_from.empty() &&
                      std::filesystem::exists(metrics_path) &&
                      std::filesystem::file_size(metrics_path) > 0;
  std::ofstream metrics(metrics_path,
                        append ? std::ios::app : std::ios::trunc);
  if (!metrics)
    throw std::runtime_error("train: cannot write '" + metrics_path + "'");
  auto emit = [&](const SplitEval& eval) {
    for (const auto& row : eval.rows) {
      metrics << metrics_csv_row(row) << '\n';
      result.rows.push_back(row);
    }
  };
  if (!append) metrics << metrics_csv_header() << '\n';

  auto eval_train = [&](std::uint64_t epoch) {
    return evaluate_split(windows, result.params, result.model_cfg, lcfg, acfg,
                          cfg.delta_list, cfg.tau_variant, epoch, "train",
                          seed, detail::kStreamAlignEval);
  };
  auto eval_eval = [&](std::uint64_t epoch) {
    return evaluate_split(eval_windows, result.params, result.model_cfg, lcfg,
                          acfg, cfg.delta_list, cfg.tau_variant, epoch, "eval",
                          seed, detail::kStreamAlignEval);
  };

  {
    auto baseline = eval_train(start_epoch);
    emit(baseline);
    result.epoch_stats.push_back(detail::stats_from_eval(start_epoch, baseline));
    if (have_eval) emit(eval_eval(start_epoch));
  }

  for (std::uint64_t epoch = start_epoch + 1; epoch <= cfg.epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(seed, detail::kStreamShuffle, epoch));
    auto order = shuffle_rng.permutation(windows.size());
    for (std::size_t start = 0; start < order.size();
         start += cfg.batch_size) {
      for (auto& t : param_tensors) t.zero_grad();
      const std::size_t stop =
          std::min(order.size(), start + cfg.batch_size);
      for (std::size_t k = start; k < stop; ++k) {
        const std::size_t w = order[k];
        Tape tape;
        Rng align_rng(derive_seed(seed, detail::kStreamAlignTrain, epoch, w));
        WindowLoss wl;
        try {
          wl = window_loss(tape, windows[w], result.params, result.model_cfg,
                           lcfg, acfg, align_rng);
        } catch (const std::exception& e) {
          throw TrainAbortError(std::string(e.what()) + " (training epoch " +
                                std::to_string(epoch) + ", window " +
                                std::to_string(w) + ")");
        }
        const double total = wl.combined.total.value();
        if (!std::isfinite(total))
          throw TrainAbortError(
              "training aborted: non-finite loss at epoch " +
              std::to_string(epoch) + " window " + std::to_string(w) +
              " (point=" + fmt9(wl.combined.pointwise) +
              ", align=" + fmt9(wl.combined.align) +
              ", pair=" + fmt9(wl.combined.pairwise) +
              ", total=" + fmt9(total) + ")");
        tape.backward(wl.combined.total);
      }
      adam_step(param_tensors, result.adam, adam_cfg);
    }
    auto train_eval = eval_train(epoch);
    emit(train_eval);
    result.epoch_stats.push_back(detail::stats_from_eval(epoch, train_eval));
    const bool last = epoch == cfg.epochs;
    if (have_eval && (epoch % cfg.eval_every == 0 || last))
      emit(eval_eval(epoch));
    if (cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0 && !last)
      save_training_checkpoint(
          cfg.out_dir + "/checkpoint_epoch" + std::to_string(epoch) + ".khl",
          result.params, result.model_cfg, result.adam, epoch, seed);
  }

  result.final_checkpoint = cfg.out_dir + "/checkpoint_final.khl";
  save_training_checkpoint(result.final_checkpoint, result.params,
                           result.model_cfg, result.adam, cfg.epochs, seed);
  return result;
}

// Evaluation entry point for a saved checkpoint; no parameter updates.
inline std::vector<MetricsRow> evaluate_checkpoint(
    const std::string& checkpoint_path, const std::string& dataset_path,
    const TrainConfig& cfg) {
  auto loaded = load_training_checkpoint(checkpoint_path);
  auto [windows, data_cfg] = read_dataset(dataset_path);
  if (loaded.model_cfg.n_segments != data_cfg.n_segments_per_window ||
      loaded.model_cfg.raw_visual_dim != data_cfg.raw_visual_dim ||
      loaded.model_cfg.raw_text_dim != data_cfg.raw_text_dim ||
      loaded.model_cfg.n_streamers < data_cfg.n_streamers)
    throw std::invalid_argument(
        "evaluate_checkpoint: checkpoint dims do not match dataset '" +
        dataset_path + "'");
  auto eval = evaluate_split(windows, loaded.params, loaded.model_cfg,
                             cfg.loss_config(), cfg.align_config(),
                             cfg.delta_list, cfg.tau_variant, loaded.epoch,
                             "eval", loaded.seed, detail::kStreamAlignEval);
  return eval.rows;
}

}  // namespace streamhl
