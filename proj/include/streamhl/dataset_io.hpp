#pragma once

// Text dataset format. One header (magic line plus key=value StreamConfig
// record) followed by one record per window:
//
//   streamhl-dataset 1
//   n_segments_per_window=20
//   ... remaining config keys ...
//   label_shift_applied=1
//   window 0
//   stream_id 0
//   streamer_id 3
//   segment 0 visual <dv reals> text <dt reals> y <real> y_binary <0|1>
//   ...
//   end
//
// Per-segment reals carry 9 significant digits; generation quantizes through
// the same formatter, so write -> read is lossless and re-serialization is
// byte-identical.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "streamhl/numfmt.hpp"
#include "streamhl/synth.hpp"

namespace streamhl {

class DatasetParseError : public std::runtime_error {
 public:
  DatasetParseError(const std::string& what, std::size_t line,
                    long record_index = -1)
      : std::runtime_error(describe(what, line, record_index)),
        line_(line),
        record_index_(record_index) {}
  std::size_t line() const { return line_; }
  long record_index() const { return record_index_; }

 private:
  static std::string describe(const std::string& what, std::size_t line,
                              long record) {
    std::string s = "dataset parse error at line " + std::to_string(line);
    if (record >= 0) s += " (window record " + std::to_string(record) + ")";
    return s + ": " + what;
  }
  std::size_t line_;
  long record_index_;
};

namespace detail {

inline const char* kDatasetMagic = "streamhl-dataset 1";

inline void serialize_header(std::ostream& os, const StreamConfig& cfg,
                             bool label_shift_applied) {
  os << kDatasetMagic << "\n";
  os << "n_segments_per_window=" << cfg.n_segments_per_window << "\n";
  os << "raw_visual_dim=" << cfg.raw_visual_dim << "\n";
  os << "raw_text_dim=" << cfg.raw_text_dim << "\n";
  os << "n_viewers=" << cfg.n_viewers << "\n";
  os << "long_view_threshold_seconds=" << fmt17(cfg.long_view_threshold_seconds)
     << "\n";
  os << "segment_seconds=" << fmt17(cfg.segment_seconds) << "\n";
  os << "misalignment_shift=" << cfg.misalignment_shift << "\n";
  os << "misalignment_fraction=" << fmt17(cfg.misalignment_fraction) << "\n";
  os << "highlight_base_rate=" << fmt17(cfg.highlight_base_rate) << "\n";
  os << "seed=" << cfg.seed << "\n";
  os << "watch_base_min_seconds=" << fmt17(cfg.watch_base_min_seconds) << "\n";
  os << "watch_base_max_seconds=" << fmt17(cfg.watch_base_max_seconds) << "\n";
  os << "watch_noise_seconds=" << fmt17(cfg.watch_noise_seconds) << "\n";
  os << "feature_noise=" << fmt17(cfg.feature_noise) << "\n";
  os << "streamer_signature_scale=" << fmt17(cfg.streamer_signature_scale)
     << "\n";
  os << "n_windows=" << cfg.n_windows << "\n";
  os << "n_streamers=" << cfg.n_streamers << "\n";
  os << "label_shift_applied=" << (label_shift_applied ? 1 : 0) << "\n";
}

}  // namespace detail

inline void write_dataset(const std::vector<SampleWindow>& windows,
                          StreamConfig cfg, const std::string& path) {
  bool shifted = windows.empty() ? true : windows.front().label_shift_applied;
  for (const auto& w : windows) {
    if (w.label_shift_applied != shifted)
      throw std::invalid_argument(
          "write_dataset: windows disagree on label_shift_applied");
    if (w.segments.size() != cfg.n_segments_per_window)
      throw std::invalid_argument(
          "write_dataset: window has " + std::to_string(w.segments.size()) +
          " segments, config says " +
          std::to_string(cfg.n_segments_per_window));
  }
  cfg.n_windows = windows.size();
  std::ofstream os(path);
  if (!os) throw std::runtime_error("write_dataset: cannot open " + path);
  detail::serialize_header(os, cfg, shifted);
  for (std::size_t wi = 0; wi < windows.size(); ++wi) {
    const SampleWindow& w = windows[wi];
    os << "window " << wi << "\n";
    os << "stream_id " << w.stream_id << "\n";
    os << "streamer_id " << w.streamer_id << "\n";
    for (std::size_t i = 0; i < w.segments.size(); ++i) {
      const Segment& seg = w.segments[i];
      os << "segment " << i << " visual";
      for (double x : seg.raw_visual) os << " " << fmt9(x);
      os << " text";
      for (double x : seg.raw_text) os << " " << fmt9(x);
      os << " y " << fmt9(seg.y) << " y_binary " << seg.y_binary << "\n";
    }
    os << "end\n";
  }
  if (!os) throw std::runtime_error("write_dataset: write failed for " + path);
}

inline std::pair<std::vector<SampleWindow>, StreamConfig> read_dataset(
    const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("read_dataset: cannot open " + path);
  std::size_t lineno = 0;
  long record = -1;
  std::string line;
  auto next_line = [&](const char* what) {
    if (!std::getline(is, line))
      throw DatasetParseError(std::string("unexpected end of file, expected ") +
                                  what,
                              lineno + 1, record);
    ++lineno;
  };

  next_line("magic line");
  if (line != detail::kDatasetMagic)
    throw DatasetParseError("bad magic line '" + line + "'", lineno);

  std::map<std::string, std::string> kv;
  StreamConfig cfg;
  bool label_shift_applied = false;
  // header: key=value lines until the first "window" line
  std::streampos before;
  while (true) {
    before = is.tellg();
    if (!std::getline(is, line)) break;  // zero-record files end here
    ++lineno;
    if (line.rfind("window ", 0) == 0 || line == "window") {
      is.seekg(before);
      --lineno;
      break;
    }
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw DatasetParseError("expected key=value in header, got '" + line +
                                  "'",
                              lineno);
    std::string key = line.substr(0, eq), val = line.substr(eq + 1);
    if (kv.count(key))
      throw DatasetParseError("duplicate header key '" + key + "'", lineno);
    kv[key] = val;
    if (kv.size() > 64) throw DatasetParseError("header too large", lineno);
  }

  auto take = [&](const std::string& key) {
    auto it = kv.find(key);
    if (it == kv.end())
      throw DatasetParseError("missing header key '" + key + "'", lineno);
    std::string v = it->second;
    kv.erase(it);
    return v;
  };
  auto to_u64 = [&](const std::string& key) {
    std::string v = take(key);
    std::size_t pos = 0;
    unsigned long long x;
    try {
      x = std::stoull(v, &pos);
    } catch (const std::exception&) {
      throw DatasetParseError("header key '" + key + "' is not an integer",
                              lineno);
    }
    if (pos != v.size())
      throw DatasetParseError("trailing characters in header key '" + key + "'",
                              lineno);
    return static_cast<std::uint64_t>(x);
  };
  auto to_long = [&](const std::string& key) {
    std::string v = take(key);
    std::size_t pos = 0;
    long x;
    try {
      x = std::stol(v, &pos);
    } catch (const std::exception&) {
      throw DatasetParseError("header key '" + key + "' is not an integer",
                              lineno);
    }
    if (pos != v.size())
      throw DatasetParseError("trailing characters in header key '" + key + "'",
                              lineno);
    return x;
  };
  auto to_double = [&](const std::string& key) {
    std::string v = take(key);
    std::size_t pos = 0;
    double x;
    try {
      x = std::stod(v, &pos);
    } catch (const std::exception&) {
      throw DatasetParseError("header key '" + key + "' is not a number",
                              lineno);
    }
    if (pos != v.size())
      throw DatasetParseError("trailing characters in header key '" + key + "'",
                              lineno);
    return x;
  };

  cfg.n_segments_per_window = to_u64("n_segments_per_window");
  cfg.raw_visual_dim = to_u64("raw_visual_dim");
  cfg.raw_text_dim = to_u64("raw_text_dim");
  cfg.n_viewers = to_u64("n_viewers");
  cfg.long_view_threshold_seconds = to_double("long_view_threshold_seconds");
  cfg.segment_seconds = to_double("segment_seconds");
  cfg.misalignment_shift = to_long("misalignment_shift");
  cfg.misalignment_fraction = to_double("misalignment_fraction");
  cfg.highlight_base_rate = to_double("highlight_base_rate");
  cfg.seed = to_u64("seed");
  cfg.watch_base_min_seconds = to_double("watch_base_min_seconds");
  cfg.watch_base_max_seconds = to_double("watch_base_max_seconds");
  cfg.watch_noise_seconds = to_double("watch_noise_seconds");
  cfg.feature_noise = to_double("feature_noise");
  cfg.streamer_signature_scale = to_double("streamer_signature_scale");
  cfg.n_windows = to_u64("n_windows");
  cfg.n_streamers = to_u64("n_streamers");
  label_shift_applied = to_u64("label_shift_applied") != 0;
  if (!kv.empty())
    throw DatasetParseError("unknown header key '" + kv.begin()->first + "'",
                            lineno);

  std::vector<SampleWindow> windows;
  windows.reserve(cfg.n_windows);
  for (std::uint64_t wi = 0; wi < cfg.n_windows; ++wi) {
    record = static_cast<long>(wi);
    next_line("'window' line");
    {
      std::istringstream ss(line);
      std::string tok;
      std::uint64_t idx;
      if (!(ss >> tok >> idx) || tok != "window" || idx != wi || (ss >> tok))
        throw DatasetParseError("expected 'window " + std::to_string(wi) +
                                    "', got '" + line + "'",
                                lineno, record);
    }
    SampleWindow w;
    w.label_shift_applied = label_shift_applied;
    auto read_id = [&](const char* name, std::uint64_t& out) {
      next_line(name);
      std::istringstream ss(line);
      std::string tok;
      std::string extra;
      if (!(ss >> tok >> out) || tok != name || (ss >> extra))
        throw DatasetParseError(std::string("expected '") + name +
                                    " <id>', got '" + line + "'",
                                lineno, record);
    };
    read_id("stream_id", w.stream_id);
    read_id("streamer_id", w.streamer_id);
    w.segments.resize(cfg.n_segments_per_window);
    for (std::size_t i = 0; i < cfg.n_segments_per_window; ++i) {
      next_line("segment line");
      std::istringstream ss(line);
      std::string tok;
      std::size_t idx;
      if (!(ss >> tok >> idx) || tok != "segment" || idx != i)
        throw DatasetParseError("expected 'segment " + std::to_string(i) +
                                    " ...', got '" + line + "'",
                                lineno, record);
      Segment& seg = w.segments[i];
      auto read_vec = [&](const char* name, std::size_t dim,
                          std::vector<double>& out) {
        if (!(ss >> tok) || tok != name)
          throw DatasetParseError(std::string("expected '") + name +
                                      "' marker in segment line",
                                  lineno, record);
        out.resize(dim);
        for (std::size_t k = 0; k < dim; ++k) {
          if (!(ss >> out[k]))
            throw DatasetParseError(std::string("truncated '") + name +
                                        "' array (need " + std::to_string(dim) +
                                        " values)",
                                    lineno, record);
          if (!std::isfinite(out[k]))
            throw DatasetParseError(std::string("non-finite value in '") +
                                        name + "'",
                                    lineno, record);
        }
      };
      read_vec("visual", cfg.raw_visual_dim, seg.raw_visual);
      read_vec("text", cfg.raw_text_dim, seg.raw_text);
      if (!(ss >> tok) || tok != "y" || !(ss >> seg.y))
        throw DatasetParseError("expected 'y <value>' in segment line", lineno,
                                record);
      if (!(seg.y >= 0.0 && seg.y <= 1.0))
        throw DatasetParseError("y out of [0,1]: " + fmt9(seg.y), lineno,
                                record);
      int yb;
      if (!(ss >> tok) || tok != "y_binary" || !(ss >> yb))
        throw DatasetParseError("expected 'y_binary <0|1>' in segment line",
                                lineno, record);
      if (yb != 0 && yb != 1)
        throw DatasetParseError("y_binary must be 0 or 1", lineno, record);
      seg.y_binary = yb;
      std::string extra;
      if (ss >> extra)
        throw DatasetParseError("trailing tokens '" + extra +
                                    "' in segment line",
                                lineno, record);
    }
    next_line("'end' line");
    if (line != "end")
      throw DatasetParseError("expected 'end', got '" + line + "'", lineno,
                              record);
    windows.push_back(std::move(w));
  }
  record = -1;
  if (std::getline(is, line)) {
    ++lineno;
    if (!line.empty())
      throw DatasetParseError("trailing content after last record", lineno);
  }
  return {std::move(windows), cfg};
}

}  // namespace streamhl
