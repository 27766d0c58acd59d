#pragma once

// Synthetic live-stream generator. Each window is n consecutive segments of
// one stream: a smooth latent quality q in [0,1] with occasional highlight
// bursts drives per-viewer watch times, and the label y is the fraction of
// viewers whose watch time exceeds the long-view threshold. Visual and text
// features trace a 2-D cosine curve in q plus a per-streamer signature, so
// the modalities are alignable and the ID embedding carries signal.

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "streamhl/numfmt.hpp"
#include "streamhl/rng.hpp"

namespace streamhl {

struct StreamConfig {
  std::size_t n_segments_per_window = 20;
  std::size_t raw_visual_dim = 8;
  std::size_t raw_text_dim = 8;
  std::size_t n_viewers = 200;  // per segment; >= 60
  double long_view_threshold_seconds = 60.0;
  double segment_seconds = 30.0;
  long misalignment_shift = 0;
  double misalignment_fraction = 0.0;
  double highlight_base_rate = 0.15;
  std::uint64_t seed = 1;
  // Watch-time model: W = base(q) + watch_noise_seconds * Exp(1) with
  // base(q) = watch_base_min + q * (watch_base_max - watch_base_min).
  // watch_noise_seconds may be 0, making W deterministic.
  double watch_base_min_seconds = 20.0;
  double watch_base_max_seconds = 55.0;
  double watch_noise_seconds = 25.0;
  double feature_noise = 0.05;
  double streamer_signature_scale = 0.3;
  std::size_t n_windows = 64;
  std::size_t n_streamers = 4;
};

// Latent-process constants (not configurable; documented in the README).
// The AR state is squashed through a sigmoid rather than clamped so that
// distinct time steps almost surely produce distinct q values.
inline constexpr double kBurstThreshold = 0.7;
inline constexpr double kArRho = 0.85;
inline constexpr double kArNoise = 0.25;
inline constexpr double kArSquash = 2.5;
inline constexpr double kArLo = 0.05;
inline constexpr double kArHi = 0.65;

struct Segment {
  std::vector<double> raw_visual;
  std::vector<double> raw_text;
  double q = 0.0;  // latent quality; generation-internal, not serialized
  double y = 0.0;
  int y_binary = 0;
};

struct SampleWindow {
  std::uint64_t stream_id = 0;
  std::uint64_t streamer_id = 0;
  std::vector<Segment> segments;
  bool label_shift_applied = false;
};

inline void validate(const StreamConfig& cfg) {
  auto fail = [](const std::string& msg) {
    throw std::invalid_argument("StreamConfig: " + msg);
  };
  if (cfg.n_segments_per_window < 2) fail("n_segments_per_window must be >= 2");
  if (cfg.raw_visual_dim < 2 || cfg.raw_text_dim < 2)
    fail("feature dims must be >= 2 (quality curve uses two components)");
  if (cfg.n_viewers < 60) fail("n_viewers must be >= 60");
  if (cfg.long_view_threshold_seconds <= 0) fail("threshold must be positive");
  if (cfg.segment_seconds <= 0) fail("segment_seconds must be positive");
  if (static_cast<std::size_t>(std::llabs(cfg.misalignment_shift)) >=
      cfg.n_segments_per_window)
    fail("|misalignment_shift| must be < n_segments_per_window");
  if (cfg.misalignment_fraction < 0 || cfg.misalignment_fraction > 1)
    fail("misalignment_fraction must be in [0,1]");
  if (cfg.highlight_base_rate < 0 || cfg.highlight_base_rate > 1)
    fail("highlight_base_rate must be in [0,1]");
  if (cfg.watch_base_min_seconds < 0 ||
      cfg.watch_base_max_seconds < cfg.watch_base_min_seconds)
    fail("watch base range must satisfy 0 <= min <= max");
  if (cfg.watch_noise_seconds < 0) fail("watch_noise_seconds must be >= 0");
  if (cfg.feature_noise < 0) fail("feature_noise must be >= 0");
  if (cfg.streamer_signature_scale < 0)
    fail("streamer_signature_scale must be >= 0");
  if (cfg.n_windows == 0) fail("n_windows must be positive");
  if (cfg.n_streamers == 0) fail("n_streamers must be positive");
}

inline double watch_base_seconds(const StreamConfig& cfg, double q) {
  return cfg.watch_base_min_seconds +
         q * (cfg.watch_base_max_seconds - cfg.watch_base_min_seconds);
}

// P(W > threshold | q). With exponential noise the tail is closed-form;
// with zero noise W is deterministic at base(q).
inline double long_view_probability(const StreamConfig& cfg, double q) {
  const double base = watch_base_seconds(cfg, q);
  const double t = cfg.long_view_threshold_seconds;
  if (cfg.watch_noise_seconds == 0.0) return base > t ? 1.0 : 0.0;
  if (base >= t) return 1.0;
  return std::exp(-(t - base) / cfg.watch_noise_seconds);
}

// LVTR from one uniform draw per viewer (common random numbers: the same
// uniforms with a larger q never yield a smaller y).
inline double lvtr_from_uniforms(const StreamConfig& cfg, double q,
                                 const std::vector<double>& uniforms) {
  const double base = watch_base_seconds(cfg, q);
  const double t = cfg.long_view_threshold_seconds;
  std::size_t count = 0;
  for (double u : uniforms) {
    const double w = base + cfg.watch_noise_seconds * (-std::log1p(-u));
    if (w > t) ++count;
  }
  return static_cast<double>(count) / static_cast<double>(uniforms.size());
}

namespace detail {

// Stream keys for derive_seed; values are arbitrary but frozen so datasets
// are stable across releases.
enum StreamKey : std::uint64_t {
  kKeyLatent = 1,
  kKeyViewers = 2,
  kKeyFeatures = 3,
  kKeyMisalign = 4,
  kKeySignature = 5,
};

inline std::vector<double> streamer_signature(const StreamConfig& cfg,
                                              std::uint64_t streamer_id,
                                              std::uint64_t modality,
                                              std::size_t dim) {
  Rng rng(derive_seed(cfg.seed, kKeySignature, streamer_id, modality));
  std::vector<double> sig(dim);
  for (auto& x : sig) x = cfg.streamer_signature_scale * rng.uniform(-1.0, 1.0);
  return sig;
}

inline std::vector<double> quality_features(const StreamConfig& cfg, double q,
                                            const std::vector<double>& sig,
                                            std::size_t dim, Rng& noise_rng) {
  const double theta = q * 3.14159265358979323846 / 2.0;
  std::vector<double> f(dim, 0.0);
  f[0] = std::cos(theta);
  f[1] = std::sin(theta);
  for (std::size_t k = 0; k < dim; ++k)
    f[k] = quantize9(f[k] + sig[k] + cfg.feature_noise * noise_rng.normal());
  return f;
}

}  // namespace detail

// Text rotated by `shift` segments (positive shift: comments lag the video,
// so segment i carries text generated at i - shift); edges pad by duplication.
// Visual features and labels are untouched.
inline SampleWindow inject_misalignment(const SampleWindow& window,
                                        long shift) {
  const long n = static_cast<long>(window.segments.size());
  if (std::llabs(shift) >= n)
    throw std::invalid_argument("inject_misalignment: |shift| " +
                                std::to_string(shift) +
                                " must be < n = " + std::to_string(n));
  SampleWindow out = window;
  for (long i = 0; i < n; ++i) {
    long src = i - shift;
    src = std::max(0L, std::min(n - 1, src));
    out.segments[i].raw_text = window.segments[src].raw_text;
  }
  return out;
}

// Segment i's label becomes the original label of segment i+1; the final
// segment's labels are zeroed and excluded from every loss via label_mask.
inline SampleWindow left_shift_labels(const SampleWindow& window) {
  if (window.label_shift_applied)
    throw std::logic_error("left_shift_labels: already applied");
  SampleWindow out = window;
  const std::size_t n = out.segments.size();
  for (std::size_t i = 0; i + 1 < n; ++i) {
    out.segments[i].y = window.segments[i + 1].y;
    out.segments[i].y_binary = window.segments[i + 1].y_binary;
  }
  out.segments[n - 1].y = 0.0;
  out.segments[n - 1].y_binary = 0;
  out.label_shift_applied = true;
  return out;
}

// Which positions carry a usable training target.
inline std::vector<bool> label_mask(const SampleWindow& window) {
  std::vector<bool> mask(window.segments.size(), true);
  if (window.label_shift_applied && !mask.empty()) mask.back() = false;
  return mask;
}

// Windows before label shifting (tests exercise the shift separately).
// Misalignment is already injected per misalignment_fraction.
inline std::vector<SampleWindow> generate_raw_windows(const StreamConfig& cfg) {
  validate(cfg);
  std::vector<SampleWindow> windows;
  windows.reserve(cfg.n_windows);
  for (std::uint64_t w = 0; w < cfg.n_windows; ++w) {
    SampleWindow win;
    win.stream_id = w;
    win.streamer_id = w % cfg.n_streamers;
    const auto sig_v =
        detail::streamer_signature(cfg, win.streamer_id, 0, cfg.raw_visual_dim);
    const auto sig_t =
        detail::streamer_signature(cfg, win.streamer_id, 1, cfg.raw_text_dim);
    Rng latent_rng(derive_seed(cfg.seed, w, detail::kKeyLatent));
    Rng feature_rng(derive_seed(cfg.seed, w, detail::kKeyFeatures));
    double state = 0.0;
    win.segments.resize(cfg.n_segments_per_window);
    for (std::size_t i = 0; i < cfg.n_segments_per_window; ++i) {
      state = kArRho * state + kArNoise * latent_rng.normal();
      const double level =
          kArLo + (kArHi - kArLo) /
                      (1.0 + std::exp(-kArSquash * state));
      const bool burst = latent_rng.uniform() < cfg.highlight_base_rate;
      double q = level;
      if (burst)
        q = kBurstThreshold +
            (1.0 - kBurstThreshold) * (0.2 + 0.8 * latent_rng.uniform());
      Segment& seg = win.segments[i];
      seg.q = q;
      seg.y_binary = q > kBurstThreshold ? 1 : 0;
      Rng viewer_rng(derive_seed(cfg.seed, detail::kKeyViewers, w, i));
      std::vector<double> uniforms(cfg.n_viewers);
      for (auto& u : uniforms) u = viewer_rng.uniform();
      seg.y = quantize9(lvtr_from_uniforms(cfg, q, uniforms));
      seg.raw_visual = detail::quality_features(cfg, q, sig_v,
                                                cfg.raw_visual_dim, feature_rng);
      seg.raw_text = detail::quality_features(cfg, q, sig_t, cfg.raw_text_dim,
                                              feature_rng);
    }
    Rng mis_rng(derive_seed(cfg.seed, w, detail::kKeyMisalign));
    if (cfg.misalignment_fraction > 0.0 &&
        mis_rng.uniform() < cfg.misalignment_fraction)
      win = inject_misalignment(win, cfg.misalignment_shift);
    windows.push_back(std::move(win));
  }
  return windows;
}

inline std::vector<SampleWindow> generate_stream(const StreamConfig& cfg) {
  auto windows = generate_raw_windows(cfg);
  for (auto& w : windows) w = left_shift_labels(w);
  return windows;
}

}  // namespace streamhl
