#include <gtest/gtest.h>

#include <bit>
#include <numeric>
#include <random>

#include "isf/exec.hpp"
#include "isf/random.hpp"
#include "naive_oracle.hpp"

namespace isf {
namespace {

Bytes le32(std::uint32_t v) {
  return {static_cast<std::uint8_t>(v), static_cast<std::uint8_t>(v >> 8),
          static_cast<std::uint8_t>(v >> 16), static_cast<std::uint8_t>(v >> 24)};
}

void append(Bytes& b, const Bytes& x) { b.insert(b.end(), x.begin(), x.end()); }
void append_f(Bytes& b, float f) { append(b, le32(std::bit_cast<std::uint32_t>(f))); }

ModelParseError::Kind parse_kind(const Bytes& blob) {
  try {
    parse_model(blob);
  } catch (const ModelParseError& e) {
    return e.kind();
  }
  ADD_FAILURE() << "blob parsed";
  return ModelParseError::Kind::BadMagic;
}

TEST(ParseModel, Identity) {
  const Bytes blob = {'M', 'E', 'X', '1', 0x00};
  EXPECT_EQ(identity_blob(), blob);
  auto m = parse_model(blob);
  EXPECT_EQ(m.exec_type, ExecType::Identity);
  EXPECT_TRUE(m.layers.empty());
}

TEST(ParseModel, AffineHandBuiltBlob) {
  // in=2, out=2, W=[[1,0],[0,2]], b=[1,-1]
  Bytes blob = {'M', 'E', 'X', '1', 0x01};
  append(blob, le32(2));
  append(blob, le32(2));
  for (float f : {1.0f, 0.0f, 0.0f, 2.0f, 1.0f, -1.0f}) append_f(blob, f);
  ASSERT_EQ(blob.size(), 5u + 8u + 24u);

  const float w[] = {1, 0, 0, 2}, b[] = {1, -1};
  EXPECT_EQ(affine_blob(2, 2, w, b), blob);

  auto m = parse_model(blob);
  EXPECT_EQ(m.exec_type, ExecType::Affine);
  EXPECT_EQ(m.in_dim(), 2u);
  EXPECT_EQ(m.out_dim(), 2u);
}

TEST(ParseModel, DistinctDiagnostics) {
  using K = ModelParseError::Kind;
  EXPECT_EQ(parse_kind({'M', 'E', 'X', '0', 0}), K::BadMagic);
  EXPECT_EQ(parse_kind({'M', 'E'}), K::BadMagic);
  EXPECT_EQ(parse_kind({'M', 'E', 'X', '1', 7}), K::UnknownExecType);
  EXPECT_EQ(parse_kind({'M', 'E', 'X', '1'}), K::Truncated);

  Bytes truncated = {'M', 'E', 'X', '1', 1};
  append(truncated, le32(2));
  append(truncated, le32(2));
  append_f(truncated, 1.0f);
  EXPECT_EQ(parse_kind(truncated), K::Truncated);

  Bytes mismatch = {'M', 'E', 'X', '1', 2, 2};
  append(mismatch, le32(1));
  append(mismatch, le32(2));
  mismatch.push_back(0);
  append(mismatch, le32(3));
  append(mismatch, le32(1));
  mismatch.push_back(0);
  EXPECT_EQ(parse_kind(mismatch), K::DimensionMismatch);

  Bytes trailing = identity_blob();
  trailing.push_back(0);
  EXPECT_EQ(parse_kind(trailing), K::TrailingBytes);
}

TEST(ParseModel, TotalOverRandomBytes) {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 5000; ++i) {
    Bytes blob = {'M', 'E', 'X', '1', static_cast<std::uint8_t>(rng() % 4)};
    blob.resize(5 + rng() % 64);
    for (std::size_t j = 5; j < blob.size(); ++j) blob[j] = static_cast<std::uint8_t>(rng() % 5);
    try {
      parse_model(blob);
    } catch (const ModelParseError&) {
    }
  }
}

TEST(Run, AffineExample) {
  const float w[] = {1, 0, 0, 2}, b[] = {1, -1};
  auto m = parse_model(affine_blob(2, 2, w, b));
  const float x[] = {3, 4};
  auto out = run(m, std::vector{Tensor::from_f32({1, 2}, x)});
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].shape(), (std::vector<std::uint64_t>{1, 2}));
  EXPECT_EQ(out[0].to_f32(), (std::vector<float>{4, 7}));
}

TEST(Run, IdentityKeepsBytes) {
  auto m = parse_model(identity_blob());
  Tensor t(Dtype::I64, {2, 3}, Bytes(48, 0xAB));
  auto out = run(m, std::vector{t});
  EXPECT_EQ(out.at(0), t);
}

TEST(Run, MlpReluExample) {
  std::vector<DenseLayer> layers(2);
  layers[0] = {1, 2, Activation::Relu, {1, -1}, {0, 0}};
  layers[1] = {2, 1, Activation::None, {1, 1}, {0}};
  auto m = parse_model(mlp_blob(layers));
  const float x[] = {2};
  auto out = run(m, std::vector{Tensor::from_f32({1, 1}, x)});
  EXPECT_EQ(out.at(0).to_f32(), (std::vector<float>{2}));
  // hidden layer alone gives [2, 0]
  auto first = parse_model(mlp_blob(std::span(layers).first(1)));
  EXPECT_EQ(run(first, std::vector{Tensor::from_f32({1, 1}, x)}).at(0).to_f32(),
            (std::vector<float>{2, 0}));
}

TEST(Run, BatchOfSixteenAndFeatureFlattening) {
  auto m = parse_model(random_affine_blob(3 * 4 * 4, 10, 42));
  auto t = Tensor::zeros(Dtype::F32, {16, 3, 4, 4});
  auto out = run(m, std::vector{t});
  EXPECT_EQ(out.at(0).shape(), (std::vector<std::uint64_t>{16, 10}));
}

TEST(Run, ShapeAndDtypeErrors) {
  auto m = parse_model(random_affine_blob(4, 2, 1));
  auto expect_exec = [&](const Tensor& t) {
    try {
      run(m, std::vector{t});
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.status(), Status::ExecError);
    }
  };
  expect_exec(Tensor::zeros(Dtype::F64, {1, 4}));
  expect_exec(Tensor::zeros(Dtype::F32, {4}));
  expect_exec(Tensor::zeros(Dtype::F32, {1, 5}));
  EXPECT_THROW(run(m, std::vector<Tensor>{}), Error);
}

TEST(Run, MatchesNaiveOracleOnRandomModels) {
  std::mt19937_64 rng(99);
  for (int i = 0; i < 200; ++i) {
    std::vector<std::uint32_t> dims(2 + rng() % 3);
    for (auto& d : dims) d = 1 + rng() % 32;
    const Bytes blob = dims.size() == 2 ? random_affine_blob(dims[0], dims[1], rng())
                                        : random_mlp_blob(dims, Activation::Relu, rng());
    auto m = parse_model(blob);
    const std::uint64_t n = 1 + rng() % 4;
    std::vector<float> x(n * dims[0]);
    SplitMix64 g(rng());
    for (auto& v : x) v = g.uniform_pm1() * 4.0f;
    auto got = run(m, std::vector{Tensor::from_f32({n, dims[0]}, x)}).at(0).to_f32();
    auto want = testing_oracle::forward(blob, x, n);
    ASSERT_EQ(got, want) << "model " << i;
  }
}

TEST(Random, ReproducibleModels) {
  EXPECT_EQ(random_affine_blob(8, 3, 5), random_affine_blob(8, 3, 5));
  EXPECT_NE(random_affine_blob(8, 3, 5), random_affine_blob(8, 3, 6));
  SplitMix64 g(0);
  // Published splitmix64 first output for seed 0.
  EXPECT_EQ(g.next(), 0xe220a8397b1dcdafULL);
}

}  // namespace
}  // namespace isf
