#pragma once

// Binary checkpoint container: magic "KHL1", one version byte, then named
// blocks of [u32 LE name length, name, u32 LE rank, u32 LE dims, payload
// doubles LE]. Purely a byte-exact block store; which blocks exist and what
// they mean is the trainer's contract.

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "streamhl/tensor.hpp"

namespace streamhl {

class CheckpointError : public std::runtime_error {
 public:
  explicit CheckpointError(const std::string& what) : std::runtime_error(what) {}
};

struct CheckpointBlock {
  std::string name;
  Shape shape;
  std::vector<double> data;
};

namespace detail {

constexpr char kCheckpointMagic[4] = {'K', 'H', 'L', '1'};
constexpr unsigned char kCheckpointVersion = 1;

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(char((v >> (8 * i)) & 0xff));
}

inline void put_f64(std::string& out, double x) {
  std::uint64_t bits;
  std::memcpy(&bits, &x, 8);
  for (int i = 0; i < 8; ++i) out.push_back(char((bits >> (8 * i)) & 0xff));
}

class ByteReader {
 public:
  ByteReader(const std::string& bytes, std::string source)
      : bytes_(bytes), source_(std::move(source)) {}

  bool at_end() const { return pos_ == bytes_.size(); }

  std::uint32_t u32(const std::string& what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= std::uint32_t(static_cast<unsigned char>(bytes_[pos_ + i]))
           << (8 * i);
    pos_ += 4;
    return v;
  }

  double f64(const std::string& what) {
    need(8, what);
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i)
      bits |= std::uint64_t(static_cast<unsigned char>(bytes_[pos_ + i]))
              << (8 * i);
    pos_ += 8;
    double x;
    std::memcpy(&x, &bits, 8);
    return x;
  }

  std::string raw(std::size_t n, const std::string& what) {
    need(n, what);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  void need(std::size_t n, const std::string& what) {
    if (pos_ + n > bytes_.size())
      throw CheckpointError("checkpoint " + source_ + ": truncated while reading " +
                            what);
  }

  const std::string& bytes_;
  std::string source_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline void write_checkpoint(const std::string& path,
                             const std::vector<CheckpointBlock>& blocks) {
  std::string out;
  out.append(detail::kCheckpointMagic, 4);
  out.push_back(char(detail::kCheckpointVersion));
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const auto& block = blocks[b];
    if (block.name.empty())
      throw CheckpointError("checkpoint block " + std::to_string(b) +
                            " has an empty name");
    for (std::size_t o = 0; o < b; ++o)
      if (blocks[o].name == block.name)
        throw CheckpointError("duplicate checkpoint block '" + block.name + "'");
    std::size_t numel = 1;
    for (std::size_t dim : block.shape) numel *= dim;
    if (block.data.size() != numel)
      throw CheckpointError("checkpoint block '" + block.name + "' holds " +
                            std::to_string(block.data.size()) +
                            " values but its shape " + shape_str(block.shape) +
                            " needs " + std::to_string(numel));
    detail::put_u32(out, std::uint32_t(block.name.size()));
    out += block.name;
    detail::put_u32(out, std::uint32_t(block.shape.size()));
    for (std::size_t dim : block.shape)
      detail::put_u32(out, std::uint32_t(dim));
    for (double x : block.data) detail::put_f64(out, x);
  }
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw CheckpointError("cannot open '" + path + "' for writing");
  os.write(out.data(), std::streamsize(out.size()));
  if (!os) throw CheckpointError("short write to '" + path + "'");
}

inline std::vector<CheckpointBlock> read_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot open '" + path + "'");
  std::string bytes((std::istreambuf_iterator<char>(is)),
                    std::istreambuf_iterator<char>());
  detail::ByteReader reader(bytes, "'" + path + "'");
  const std::string magic = reader.raw(4, "magic");
  if (std::memcmp(magic.data(), detail::kCheckpointMagic, 4) != 0)
    throw CheckpointError("checkpoint '" + path + "': bad magic bytes");
  const std::string version = reader.raw(1, "version");
  if (static_cast<unsigned char>(version[0]) != detail::kCheckpointVersion)
    throw CheckpointError("checkpoint '" + path +
                          "': unsupported version " +
                          std::to_string(int(version[0])));
  std::vector<CheckpointBlock> blocks;
  while (!reader.at_end()) {
    CheckpointBlock block;
    const std::uint32_t name_len = reader.u32("block name length");
    block.name = reader.raw(name_len, "block name");
    const std::string ctx = "block '" + block.name + "'";
    const std::uint32_t rank = reader.u32(ctx + " rank");
    std::size_t numel = 1;
    for (std::uint32_t r = 0; r < rank; ++r) {
      block.shape.push_back(reader.u32(ctx + " dims"));
      numel *= block.shape.back();
    }
    block.data.reserve(numel);
    for (std::size_t i = 0; i < numel; ++i)
      block.data.push_back(reader.f64(ctx + " payload"));
    for (const auto& seen : blocks)
      if (seen.name == block.name)
        throw CheckpointError("checkpoint '" + path + "': duplicate " + ctx);
    blocks.push_back(std::move(block));
  }
  return blocks;
}

}  // namespace streamhl
