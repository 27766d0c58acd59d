#include "streamhl/checkpoint.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

namespace streamhl {
namespace {

class CheckpointTest : public ::testing::Test {
 protected:
  std::string path(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / "streamhl_ckpt_test";
    std::filesystem::create_directories(dir);
    return (dir / name).string();
  }

  std::string read_bytes(const std::string& p) {
    std::ifstream is(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(is)),
                       std::istreambuf_iterator<char>());
  }

  void write_bytes(const std::string& p, const std::string& bytes) {
    std::ofstream os(p, std::ios::binary | std::ios::trunc);
    os.write(bytes.data(), std::streamsize(bytes.size()));
  }
};

bool same_bits(double a, double b) {
  std::uint64_t ba, bb;
  std::memcpy(&ba, &a, 8);
  std::memcpy(&bb, &b, 8);
  return ba == bb;
}

TEST_F(CheckpointTest, RoundTripIsBitwise) {
  const double denormal = std::numeric_limits<double>::denorm_min();
  std::vector<CheckpointBlock> blocks = {
      {"weights", {2, 3}, {1.0, -0.0, 3.5e-300, denormal, 1e308, -7.25}},
      {"bias", {3}, {0.1, 0.2, 0.3}},
      {"step", {1}, {42.0}},
  };
  const auto p = path("roundtrip.khl");
  write_checkpoint(p, blocks);
  auto loaded = read_checkpoint(p);
  ASSERT_EQ(loaded.size(), blocks.size());
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    EXPECT_EQ(loaded[b].name, blocks[b].name);
    EXPECT_EQ(loaded[b].shape, blocks[b].shape);
    ASSERT_EQ(loaded[b].data.size(), blocks[b].data.size());
    for (std::size_t i = 0; i < blocks[b].data.size(); ++i)
      EXPECT_TRUE(same_bits(loaded[b].data[i], blocks[b].data[i]))
          << blocks[b].name << "[" << i << "]";
  }
}

TEST_F(CheckpointTest, OrderIsPreserved) {
  std::vector<CheckpointBlock> blocks;
  for (int i = 0; i < 12; ++i)
    blocks.push_back({"blk" + std::to_string(i), {1}, {double(i)}});
  const auto p = path("order.khl");
  write_checkpoint(p, blocks);
  auto loaded = read_checkpoint(p);
  ASSERT_EQ(loaded.size(), 12u);
  for (int i = 0; i < 12; ++i)
    EXPECT_EQ(loaded[i].name, "blk" + std::to_string(i));
}

TEST_F(CheckpointTest, EmptyBlockListRoundTrips) {
  const auto p = path("empty.khl");
  write_checkpoint(p, {});
  EXPECT_TRUE(read_checkpoint(p).empty());
  // file is exactly magic + version
  EXPECT_EQ(read_bytes(p).size(), 5u);
}

TEST_F(CheckpointTest, ScalarShapeZeroRankHoldsOneValue) {
  // rank 0 means one element (empty shape product), matching tensor scalars
  const auto p = path("rank0.khl");
  write_checkpoint(p, {{"s", {}, {3.25}}});
  auto loaded = read_checkpoint(p);
  ASSERT_EQ(loaded.size(), 1u);
  EXPECT_TRUE(loaded[0].shape.empty());
  ASSERT_EQ(loaded[0].data.size(), 1u);
  EXPECT_EQ(loaded[0].data[0], 3.25);
}

TEST_F(CheckpointTest, WriteRejectsBadBlocks) {
  const auto p = path("reject.khl");
  EXPECT_THROW(write_checkpoint(p, {{"", {1}, {1.0}}}), CheckpointError);
  EXPECT_THROW(
      write_checkpoint(p, {{"a", {1}, {1.0}}, {"a", {1}, {2.0}}}),
      CheckpointError);
  EXPECT_THROW(write_checkpoint(p, {{"a", {2}, {1.0}}}), CheckpointError);
}

TEST_F(CheckpointTest, BadMagicRejected) {
  const auto p = path("badmagic.khl");
  write_checkpoint(p, {{"a", {1}, {1.0}}});
  auto bytes = read_bytes(p);
  bytes[0] = 'X';
  write_bytes(p, bytes);
  try {
    read_checkpoint(p);
    FAIL() << "expected CheckpointError";
  } catch (const CheckpointError& e) {
    EXPECT_NE(std::string(e.what()).find("magic"), std::string::npos);
  }
}

TEST_F(CheckpointTest, BadVersionRejected) {
  const auto p = path("badversion.khl");
  write_checkpoint(p, {{"a", {1}, {1.0}}});
  auto bytes = read_bytes(p);
  bytes[4] = 9;
  write_bytes(p, bytes);
  try {
    read_checkpoint(p);
    FAIL() << "expected CheckpointError";
  } catch (const CheckpointError& e) {
    EXPECT_NE(std::string(e.what()).find("version"), std::string::npos);
  }
}

TEST_F(CheckpointTest, TruncationNamesTheBlock) {
  const auto p = path("trunc.khl");
  write_checkpoint(p, {{"first", {1}, {1.0}}, {"second", {2}, {2.0, 3.0}}});
  auto bytes = read_bytes(p);
  // cut into the middle of second's payload
  write_bytes(p, bytes.substr(0, bytes.size() - 10));
  try {
    read_checkpoint(p);
    FAIL() << "expected CheckpointError";
  } catch (const CheckpointError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("second"), std::string::npos) << msg;
    EXPECT_NE(msg.find("truncated"), std::string::npos) << msg;
  }
}

TEST_F(CheckpointTest, DuplicateBlockInFileRejected) {
  const auto p = path("dupfile.khl");
  write_checkpoint(p, {{"a", {1}, {1.0}}});
  auto bytes = read_bytes(p);
  // append a second copy of block 'a' byte for byte
  const std::string block_bytes = bytes.substr(5);
  write_bytes(p, bytes + block_bytes);
  EXPECT_THROW(read_checkpoint(p), CheckpointError);
}

TEST_F(CheckpointTest, MissingFileRejected) {
  EXPECT_THROW(read_checkpoint(path("nosuchfile.khl")), CheckpointError);
}

TEST_F(CheckpointTest, PayloadIsLittleEndianDoubles) {
  const auto p = path("endian.khl");
  write_checkpoint(p, {{"x", {1}, {1.0}}});
  const auto bytes = read_bytes(p);
  // layout: magic(4) version(1) name_len(4) name(1) rank(4) dim(4) payload(8)
  ASSERT_EQ(bytes.size(), 4u + 1u + 4u + 1u + 4u + 4u + 8u);
  EXPECT_EQ(bytes.substr(0, 4), "KHL1");
  const std::size_t off = bytes.size() - 8;
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i)
    bits |= std::uint64_t(static_cast<unsigned char>(bytes[off + i]))
            << (8 * i);
  std::uint64_t expect;
  const double one = 1.0;
  std::memcpy(&expect, &one, 8);
  EXPECT_EQ(bits, expect);
}

}  // namespace
}  // namespace streamhl
