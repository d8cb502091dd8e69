#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>

#include "seqsum/checkpoint.hpp"

namespace seqsum {
namespace {

CheckpointData sample() {
  CheckpointData d;
  d.config_json = R"({"k":1})";
  Matrix a(2, 3);
  a << 1, 2, 3, 4, 5, -6.25;
  d.tensors.push_back({"alpha", true, a});
  d.tensors.push_back({"beta", false, Matrix::Constant(1, 1, 0.1)});
  return d;
}

TEST(Sha256, KnownVectors) {
  EXPECT_EQ(sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Checkpoint, RoundTrip) {
  const auto d = sample();
  const auto back = decode_checkpoint(encode_checkpoint(d));
  EXPECT_EQ(back.config_json, d.config_json);
  ASSERT_EQ(back.tensors.size(), 2u);
  EXPECT_EQ(back.tensors[0].name, "alpha");
  EXPECT_TRUE(back.tensors[0].trainable);
  EXPECT_EQ(back.tensors[0].value, d.tensors[0].value);
  EXPECT_FALSE(back.tensors[1].trainable);
  EXPECT_EQ(back.tensors[1].value, d.tensors[1].value);
}

TEST(Checkpoint, ByteStable) { EXPECT_EQ(encode_checkpoint(sample()), encode_checkpoint(sample())); }

TEST(Checkpoint, RowMajorLayout) {
  const std::string bytes = encode_checkpoint(sample());
  // Header: magic, version, config length and text, tensor count, then the
  // first tensor's name, flag, rank, rows, cols.
  std::size_t off = 8 + 4 + 8 + 7 + 8 + 4 + 5 + 1 + 4 + 8 + 8;
  double second;
  std::memcpy(&second, bytes.data() + off + sizeof(double), sizeof(double));
  EXPECT_EQ(second, 2.0);
}

TEST(Checkpoint, CorruptionDetected) {
  std::string bytes = encode_checkpoint(sample());
  bytes[bytes.size() / 2] ^= 0x01;
  try {
    decode_checkpoint(bytes);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("checksum mismatch"), std::string::npos);
  }
}

TEST(Checkpoint, BadMagicAndTruncation) {
  EXPECT_THROW(decode_checkpoint("not a checkpoint at all, clearly not"), Error);
  std::string bytes = encode_checkpoint(sample());
  EXPECT_THROW(decode_checkpoint(bytes.substr(0, 20)), Error);
}

TEST(Checkpoint, FileRoundTripAndMissingFile) {
  const auto path = std::filesystem::temp_directory_path() / "seqsum_ck_test.bin";
  write_checkpoint(path, sample());
  EXPECT_EQ(read_checkpoint(path).tensors.size(), 2u);
  EXPECT_EQ(sha256_file(path), sha256_hex(encode_checkpoint(sample())));
  std::filesystem::remove(path);
  try {
    read_checkpoint(path);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("not found"), std::string::npos);
  }
}

}  // namespace
}  // namespace seqsum
