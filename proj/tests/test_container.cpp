#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <random>

#include "oracles.hpp"
#include "samihs/container.hpp"

using namespace samihs;

TEST(Container, RoundTripIsLossless) {
  std::mt19937_64 rng(71);
  NamedArrayFile f;
  f.metadata = {{"epoch", 3}, {"name", "x"}};
  Matrix m = oracle::random_matrix(3, 5, rng);
  m[0] = std::numeric_limits<double>::denorm_min();
  m[1] = -0.0;
  m[2] = 1e308;
  const Mask mk = oracle::random_mask(4, 2, rng);
  f.put("prob", m, TensorRole::data);
  f.put("w", oracle::random_matrix(2, 2, rng), TensorRole::trainable);
  f.put("mask", mk);
  f.put("empty", Matrix(0, 4), TensorRole::buffer);
  const auto back = NamedArrayFile::deserialize(f.serialize());
  EXPECT_EQ(back.metadata, f.metadata);
  ASSERT_EQ(back.entries().size(), 4u);
  const Matrix got = back.matrix("prob");
  ASSERT_TRUE(got.same_shape(m));
  for (std::size_t i = 0; i < m.size(); ++i)
    EXPECT_EQ(std::memcmp(&got[i], &m[i], sizeof(double)), 0) << i;
  EXPECT_EQ(back.mask("mask"), mk);
  EXPECT_EQ(back.find("w")->role, TensorRole::trainable);
  EXPECT_EQ(back.find("empty")->rows, 0u);
  EXPECT_EQ(back.find("empty")->cols, 4u);
  EXPECT_EQ(back.serialize(), f.serialize());
}

TEST(Container, PutReplacesAndPreservesOrder) {
  NamedArrayFile f;
  f.put("a", Matrix(1, 1, 1.0));
  f.put("b", Matrix(1, 1, 2.0));
  f.put("a", Matrix(2, 1, 3.0));
  ASSERT_EQ(f.entries().size(), 2u);
  EXPECT_EQ(f.entries()[0].name, "a");
  EXPECT_EQ(f.matrix("a").rows(), 2u);
}

TEST(Container, SaveLoadFile) {
  const auto dir = oracle::scratch_dir("container");
  NamedArrayFile f;
  f.put("x", Matrix(2, 3, 0.25));
  f.save(dir / "a.ntc");
  const auto back = NamedArrayFile::load(dir / "a.ntc");
  EXPECT_EQ(back.matrix("x"), Matrix(2, 3, 0.25));
  // no temp files left behind
  std::size_t files = 0;
  for (const auto& e : std::filesystem::directory_iterator(dir)) files += e.is_regular_file();
  EXPECT_EQ(files, 1u);
}

TEST(Container, Errors) {
  const auto dir = oracle::scratch_dir("container_err");
  EXPECT_THROW(NamedArrayFile::load(dir / "nope.ntc"), ContainerError);
  std::ofstream(dir / "junk.ntc") << "this is not a container";
  EXPECT_THROW(NamedArrayFile::load(dir / "junk.ntc"), ContainerError);
  NamedArrayFile f;
  f.put("x", Matrix(4, 4, 1.0));
  auto bytes = f.serialize();
  bytes.resize(bytes.size() - 5);
  EXPECT_THROW(NamedArrayFile::deserialize(bytes), ContainerError);
  EXPECT_THROW(f.matrix("missing"), ContainerError);
  EXPECT_THROW(f.mask("x"), ContainerError);  // dtype mismatch
}
