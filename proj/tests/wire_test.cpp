#include <gtest/gtest.h>

#include <random>

#include "isf/wire.hpp"

namespace isf {
namespace {

Bytes hex(std::initializer_list<int> v) {
  Bytes b;
  for (int x : v) b.push_back(static_cast<std::uint8_t>(x));
  return b;
}

Status decode_status(ByteView b) {
  try {
    decode_tensor(b);
  } catch (const Error& e) {
    return e.status();
  }
  return Status::Ok;
}

TEST(Dtype, ElementSizes) {
  EXPECT_EQ(element_size(Dtype::F32), 4u);
  EXPECT_EQ(element_size(Dtype::F64), 8u);
  EXPECT_EQ(element_size(Dtype::I32), 4u);
  EXPECT_EQ(element_size(Dtype::I64), 8u);
  EXPECT_EQ(element_size(Dtype::U8), 1u);
  EXPECT_FALSE(dtype_from_code(5));
}

TEST(TensorCodec, GoldenF32Scalar) {
  const float one = 1.0f;
  Tensor t = Tensor::from_f32({1}, std::span(&one, 1));
  EXPECT_EQ(encode_tensor(t), hex({0x00, 0x01, 0x01, 0, 0, 0, 0, 0, 0, 0, 0x00, 0x00, 0x80, 0x3F}));
  EXPECT_EQ(decode_tensor(encode_tensor(t)), t);
  EXPECT_EQ(decode_tensor(encode_tensor(t)).to_f32().at(0), 1.0f);
}

TEST(TensorCodec, GoldenU8Vector) {
  Tensor t(Dtype::U8, {3}, Bytes{7, 8, 9});
  EXPECT_EQ(encode_tensor(t), hex({0x04, 0x01, 0x03, 0, 0, 0, 0, 0, 0, 0, 0x07, 0x08, 0x09}));
}

TEST(TensorCodec, RejectsMissingData) {
  EXPECT_EQ(decode_status(hex({0x00, 0x01, 0x01, 0, 0, 0, 0, 0, 0, 0})), Status::BadRequest);
  try {
    decode_tensor(hex({0x00, 0x01, 0x01, 0, 0, 0, 0, 0, 0, 0}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("length mismatch"), std::string::npos) << e.what();
  }
}

TEST(TensorCodec, RejectsUnknownDtype) {
  try {
    decode_tensor(hex({0x09, 0x01, 0x01, 0, 0, 0, 0, 0, 0, 0, 0}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.status(), Status::BadRequest);
    EXPECT_NE(std::string(e.what()).find("unknown dtype"), std::string::npos);
  }
}

TEST(TensorCodec, RejectsBadRankAndTrailingBytes) {
  EXPECT_EQ(decode_status(hex({0x04, 0x00})), Status::BadRequest);
  Bytes rank9 = hex({0x04, 0x09});
  for (int i = 0; i < 9; ++i) {
    Bytes one = hex({1, 0, 0, 0, 0, 0, 0, 0});
    rank9.insert(rank9.end(), one.begin(), one.end());
  }
  rank9.push_back(0);
  EXPECT_EQ(decode_status(rank9), Status::BadRequest);
  EXPECT_EQ(decode_status(hex({0x04, 0x01, 0x01, 0, 0, 0, 0, 0, 0, 0, 0x07, 0x08})), Status::BadRequest);
  EXPECT_EQ(decode_status(hex({0x04, 0x01, 0x00, 0, 0, 0, 0, 0, 0, 0})), Status::BadRequest);
  EXPECT_EQ(decode_status({}), Status::BadRequest);
}

TEST(TensorInvariants, ConstructorEnforcesShape) {
  EXPECT_THROW(Tensor(Dtype::F32, {2}, Bytes(7)), Error);
  EXPECT_THROW(Tensor(Dtype::F32, {}, Bytes(4)), Error);
  EXPECT_THROW(Tensor(Dtype::U8, {0}, Bytes{}), Error);
  EXPECT_THROW(Tensor(Dtype::U8, {1, 1, 1, 1, 1, 1, 1, 1, 1}, Bytes(1)), Error);
  EXPECT_NO_THROW(Tensor(Dtype::U8, {1, 1, 1, 1, 1, 1, 1, 1}, Bytes(1)));
}

TEST(Keys, Validation) {
  EXPECT_NO_THROW(validate_key("0.sol.2"));
  EXPECT_THROW(validate_key(""), Error);
  EXPECT_THROW(validate_key(std::string(256, 'a')), Error);
  EXPECT_NO_THROW(validate_key(std::string(255, 'a')));
  EXPECT_THROW(validate_key("a\nb"), Error);
  EXPECT_EQ(producer_key(3, "sol", 12), "3.sol.12");
}

TEST(FrameCodec, GoldenPing) {
  Frame f{1, 0x01, 7, {}};
  const Bytes b = encode_frame(f);
  EXPECT_EQ(b, hex({0x0A, 0, 0, 0, 0x01, 0x01, 0x07, 0, 0, 0, 0, 0, 0, 0}));
  EXPECT_EQ(decode_frame(b), f);
}

TEST(FrameCodec, RoundTripUnderEverySplit) {
  Frame a{1, 0x02, 0x0102030405060708ULL, encode_put_tensor("k", Tensor(Dtype::U8, {3}, Bytes{1, 2, 3}))};
  Frame b{1, 0x8B, 99, Bytes{0}};
  Bytes stream = encode_frame(a);
  const Bytes eb = encode_frame(b);
  stream.insert(stream.end(), eb.begin(), eb.end());

  for (std::size_t cut = 0; cut <= stream.size(); ++cut) {
    FrameDecoder dec;
    std::vector<Frame> got;
    dec.feed(ByteView(stream).subspan(0, cut));
    while (auto f = dec.next()) got.push_back(*f);
    dec.feed(ByteView(stream).subspan(cut));
    while (auto f = dec.next()) got.push_back(*f);
    ASSERT_EQ(got.size(), 2u) << "cut=" << cut;
    EXPECT_EQ(got[0], a);
    EXPECT_EQ(got[1], b);
    EXPECT_EQ(dec.buffered(), 0u);
  }
}

TEST(FrameCodec, ByteAtATime) {
  Frame a{1, 0x03, 5, encode_key_request("x.y.z")};
  const Bytes s = encode_frame(a);
  FrameDecoder dec;
  std::optional<Frame> got;
  for (std::size_t i = 0; i < s.size(); ++i) {
    EXPECT_FALSE(got.has_value());
    dec.feed(ByteView(s).subspan(i, 1));
    got = dec.next();
  }
  ASSERT_TRUE(got);
  EXPECT_EQ(*got, a);
}

TEST(FrameCodec, OversizeRejected) {
  // Header announcing a 1 GiB + 1 byte payload is rejected before buffering it.
  const std::uint32_t total = 10 + (1u << 30) + 1;
  Bytes hdr = {static_cast<std::uint8_t>(total), static_cast<std::uint8_t>(total >> 8),
               static_cast<std::uint8_t>(total >> 16), static_cast<std::uint8_t>(total >> 24), 1, 1};
  FrameDecoder dec;
  dec.feed(hdr);
  try {
    dec.next();
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.status(), Status::BadRequest);
  }
  // Exactly at the cap is fine; one byte over is not (small configurable cap).
  Frame ok{1, 0x02, 1, Bytes(16)};
  EXPECT_NO_THROW(encode_frame(ok, 16));
  ok.payload.push_back(0);
  EXPECT_THROW(encode_frame(ok, 16), Error);
  FrameDecoder small(16);
  small.feed(encode_frame(ok));
  EXPECT_THROW(small.next(), Error);
}

TEST(FrameCodec, BadVersionRejected) {
  Bytes b = encode_frame(Frame{1, 1, 1, {}});
  b[4] = 2;
  EXPECT_THROW(decode_frame(b), Error);
}

TEST(MetaCodec, Values) {
  EXPECT_EQ(decode_meta(encode_meta(MetaValue{std::int64_t{42}})), MetaValue{std::int64_t{42}});
  EXPECT_EQ(decode_meta(encode_meta(MetaValue{2.5})), MetaValue{2.5});
  EXPECT_EQ(decode_meta(encode_meta(MetaValue{std::string("hi")})), MetaValue{std::string("hi")});
  EXPECT_EQ(encode_meta(MetaValue{std::int64_t{1}}), hex({1, 1, 0, 0, 0, 0, 0, 0, 0}));
  EXPECT_THROW(decode_meta(hex({3})), Error);
  EXPECT_THROW(encode_meta(MetaValue{std::string(kMaxMetaString + 1, 'x')}), Error);
  EXPECT_NO_THROW(encode_meta(MetaValue{std::string(kMaxMetaString, 'x')}));
}

TEST(Payloads, RunModelLayout) {
  RunModelRequest req{"m", {"a", "bc"}, {"o"}};
  const Bytes b = encode_run_model(req);
  EXPECT_EQ(b, hex({1, 0, 'm', 2, 0, 1, 0, 'a', 2, 0, 'b', 'c', 1, 0, 1, 0, 'o'}));
  EXPECT_EQ(decode_run_model(b), req);
}

TEST(Payloads, PutTensorLayout) {
  const Bytes b = encode_put_tensor("k", Tensor(Dtype::U8, {1}, Bytes{5}));
  EXPECT_EQ(b, hex({1, 0, 'k', 4, 1, 1, 0, 0, 0, 0, 0, 0, 0, 5}));
  auto [k, t] = decode_put_tensor(b);
  EXPECT_EQ(k, "k");
  EXPECT_EQ(t.data()[0], 5);
}

TEST(Payloads, Responses) {
  Frame req{1, 0x03, 77, {}};
  Frame r = make_error_response(req, Status::NotFound, "nope");
  EXPECT_EQ(r.command, 0x83);
  EXPECT_EQ(r.request_id, 77u);
  EXPECT_EQ(r.payload.front(), static_cast<std::uint8_t>(Status::NotFound));
}

// Property: decode(encode(x)) == x over random tensors, metadata and frames.
TEST(CodecProperty, RandomRoundTrips) {
  std::mt19937_64 rng(1234);
  for (int i = 0; i < 2000; ++i) {
    const auto dtype = static_cast<Dtype>(rng() % 5);
    std::vector<std::uint64_t> shape(1 + rng() % kMaxRank);
    std::uint64_t n = 1;
    for (auto& d : shape) {
      d = 1 + rng() % (n > 64 ? 1 : 4);
      n *= d;
    }
    Bytes data(n * element_size(dtype));
    for (auto& b : data) b = static_cast<std::uint8_t>(rng());
    Tensor t(dtype, shape, data);
    ASSERT_EQ(decode_tensor(encode_tensor(t)), t);

    Frame f{1, static_cast<std::uint8_t>(rng()), rng(), encode_tensor(t)};
    ASSERT_EQ(decode_frame(encode_frame(f)), f);

    MetaValue m;
    switch (rng() % 3) {
      case 0: m = std::string(rng() % 40, static_cast<char>('a' + rng() % 26)); break;
      case 1: m = static_cast<std::int64_t>(rng()); break;
      default: m = std::bit_cast<double>(rng() & 0x7fefffffffffffffULL); break;
    }
    ASSERT_EQ(decode_meta(encode_meta(m)), m);
  }
}

}  // namespace
}  // namespace isf
