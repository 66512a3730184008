#include <cstring>
#include <filesystem>
#include <string>

#include <gtest/gtest.h>

#include "fixtures/scratch.hpp"
#include "fixtures/training.hpp"
#include "reid/error.hpp"
#include "reid/io.hpp"

using namespace reid;

namespace {

EmbeddingSet small_set() {
  EmbeddingSet s;
  s.dim = 3;
  s.records = {{7, 0, Role::Query, {1.0f, -2.5f, 0.1f}},
               {7, 1, Role::Gallery, {1.5f, 2.0f, 1e-9f}},
               {70000, 65535, Role::Train, {-0.0f, 3.0e38f, 6e-8f}}};
  return s;
}

Checkpoint trained_checkpoint() {
  const auto f = fixtures::synthetic_fixture();
  TrainConfig cfg = fixtures::convergence_config();
  cfg.epochs = 1;
  cfg.decay_start = 1;
  cfg.iters_per_epoch = 3;
  Checkpoint c;
  c.model = init_model(f.geometry, partition(network_manifest(f.geometry)), 0);
  c.adam = AdamState::zeros_like(c.model.master);
  train(c.model, c.adam, f.train, cfg);
  c.config_hash = 0x0123456789abcdefULL;
  c.step = c.adam.t;
  c.epochs_completed = 1;
  return c;
}

template <class T>
void put(std::string& bytes, std::size_t at, T value) {
  std::memcpy(bytes.data() + at, &value, sizeof value);
}

}  // namespace

TEST(EmbeddingFile, RoundTripBinary32) {
  const auto s = small_set();
  EXPECT_EQ(decode_embedding_file(encode_embedding_file(s)), s);
}

TEST(EmbeddingFile, RoundTripBinary16) {
  const auto q = small_set().quantized();
  EXPECT_EQ(q.precision, Precision::Binary16Emulated);
  const auto back = decode_embedding_file(encode_embedding_file(q));
  EXPECT_EQ(back, q);
  EXPECT_EQ(back.quantized(), back);
}

TEST(EmbeddingFile, HeaderLayout) {
  const std::string b = encode_embedding_file(small_set());
  ASSERT_EQ(b.size(), 4u + 2 + 4 + 4 + 1 + 3 * (4 + 2 + 1 + 3 * 4));
  EXPECT_EQ(b.substr(0, 4), "REMB");
  EXPECT_EQ(static_cast<unsigned char>(b[4]), 1);
  EXPECT_EQ(static_cast<unsigned char>(b[5]), 0);
  EXPECT_EQ(static_cast<unsigned char>(b[6]), 3);
  EXPECT_EQ(static_cast<unsigned char>(b[10]), 3);
  EXPECT_EQ(static_cast<unsigned char>(b[14]), 0);
  EXPECT_EQ(static_cast<unsigned char>(b[15]), 7);
  EXPECT_EQ(static_cast<unsigned char>(b[21]), 0);  // role of the first record
  float first;
  std::memcpy(&first, b.data() + 22, 4);
  EXPECT_EQ(first, 1.0f);
}

TEST(EmbeddingFile, FormatErrors) {
  const std::string good = encode_embedding_file(small_set());
  std::string b = good;
  b[0] = 'X';
  EXPECT_THROW(decode_embedding_file(b), FormatError);
  b = good;
  put<std::uint16_t>(b, 4, 2);
  EXPECT_THROW(decode_embedding_file(b), FormatError);
  b = good;
  put<std::uint32_t>(b, 6, 4);
  EXPECT_THROW(decode_embedding_file(b), FormatError);
  b = good;
  put<std::uint32_t>(b, 6, 2);
  EXPECT_THROW(decode_embedding_file(b), FormatError);
  b = good;
  b[14] = 2;
  EXPECT_THROW(decode_embedding_file(b), FormatError);
  b = good;
  b[14] = 1;  // claims binary16 but 0.1f is not representable
  EXPECT_THROW(decode_embedding_file(b), FormatError);
  b = good;
  b[21] = 3;
  EXPECT_THROW(decode_embedding_file(b), FormatError);
  EXPECT_THROW(decode_embedding_file(good.substr(0, good.size() - 1)), FormatError);
  EXPECT_THROW(decode_embedding_file(""), FormatError);
}

TEST(Checkpoint, RoundTrip) {
  const Checkpoint c = trained_checkpoint();
  const Checkpoint back = decode_checkpoint(encode_checkpoint(c));
  EXPECT_EQ(back, c);
  EXPECT_TRUE(working_in_sync(back.model));
}

TEST(Checkpoint, FormatErrors) {
  const std::string good = encode_checkpoint(trained_checkpoint());
  std::string b = good;
  b[1] = 'X';
  EXPECT_THROW(decode_checkpoint(b), FormatError);
  b = good;
  put<std::uint16_t>(b, 4, 9);
  EXPECT_THROW(decode_checkpoint(b), FormatError);
  EXPECT_THROW(decode_checkpoint(good.substr(0, good.size() - 3)), FormatError);
  EXPECT_THROW(decode_checkpoint(good + "x"), FormatError);
}

TEST(Files, AtomicWriteReplacesAndLeavesNoTemporary) {
  const fixtures::ScratchDir dir("io");
  const std::string path = dir.file("set.remb");
  write_embedding_file(path, small_set());
  write_embedding_file(path, small_set().quantized());
  EXPECT_EQ(read_embedding_file(path), small_set().quantized());
  std::size_t entries = 0;
  for (const auto& e : std::filesystem::directory_iterator(dir.path())) entries += e.path().filename() != "";
  EXPECT_EQ(entries, 1u);
  EXPECT_THROW(read_embedding_file(dir.file("missing")), InvalidArgument);
  write_file_atomic(dir.file("new/dir/x"), "abc");
  EXPECT_EQ(read_file(dir.file("new/dir/x")), "abc");
  EXPECT_THROW(write_file_atomic(dir.file("new/dir/x/y"), "abc"), InvalidArgument);
}

TEST(Files, CheckpointOnDisk) {
  const fixtures::ScratchDir dir("ckpt");
  const Checkpoint c = trained_checkpoint();
  write_checkpoint(dir.file("model.ckpt"), c);
  EXPECT_EQ(read_checkpoint(dir.file("model.ckpt")), c);
}

TEST(Fnv, KnownValues) {
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(fnv1a64("foobar"), 0x85944171f73967e8ULL);
}
