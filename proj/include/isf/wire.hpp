#pragma once

// Binary wire protocol shared by the store, the client and the tools.
//
//   frame:   [total_len:u32][version:u8][command:u8][request_id:u64][payload]
//   tensor:  [dtype:u8][ndim:u8][dims: ndim x u64][data]
//   meta:    [tag:u8] then string [len:u32][bytes] | int i64 | float f64
//
// total_len counts the bytes from version to the end of the payload. All
// multi-byte integers are little-endian. A response frame echoes the request
// id, sets bit 0x80 on the command byte and starts its payload with one
// status byte.

#include <cstddef>
#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace isf {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

enum class Status : std::uint8_t {
  Ok = 0,
  NotFound = 1,
  BadRequest = 2,
  ExecError = 3,
  OutOfMemory = 4,
  WrongShard = 5,
  Internal = 6,
};

std::string_view to_string(Status s);

/// Error carrying the protocol status it maps to. Decode failures are
/// BadRequest, executor failures ExecError, and so on.
class Error : public std::runtime_error {
 public:
  Error(Status status, const std::string& what)
      : std::runtime_error(what), status_(status) {}
  Status status() const noexcept { return status_; }

 private:
  Status status_;
};

enum class Dtype : std::uint8_t { F32 = 0, F64 = 1, I32 = 2, I64 = 3, U8 = 4 };

std::size_t element_size(Dtype d);
std::string_view to_string(Dtype d);
std::optional<Dtype> dtype_from_code(std::uint8_t code);

inline constexpr std::size_t kMaxRank = 8;
inline constexpr std::size_t kMaxKeyBytes = 255;
inline constexpr std::size_t kMaxMetaString = 64 * 1024;
inline constexpr std::size_t kDefaultMaxPayload = std::size_t{1} << 30;
inline constexpr std::uint8_t kProtocolVersion = 1;
inline constexpr std::uint8_t kResponseBit = 0x80;
inline constexpr std::size_t kFrameHeaderBytes = 14;

/// Dense row-major little-endian tensor. The constructor enforces the
/// shape/data invariants, so every Tensor in the program is encodable.
class Tensor {
 public:
  Tensor(Dtype dtype, std::vector<std::uint64_t> shape, Bytes data);

  static Tensor zeros(Dtype dtype, std::vector<std::uint64_t> shape);
  static Tensor from_f32(std::vector<std::uint64_t> shape, std::span<const float> values);
  static Tensor from_f64(std::vector<std::uint64_t> shape, std::span<const double> values);

  Dtype dtype() const noexcept { return dtype_; }
  const std::vector<std::uint64_t>& shape() const noexcept { return shape_; }
  ByteView data() const noexcept { return data_; }
  std::span<std::uint8_t> mutable_data() noexcept { return data_; }
  std::uint64_t element_count() const noexcept;
  std::size_t byte_size() const noexcept { return data_.size(); }

  std::vector<float> to_f32() const;
  std::vector<double> to_f64() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Dtype dtype_;
  std::vector<std::uint64_t> shape_;
  Bytes data_;
};

/// Throws Error(BadRequest) unless the key is 1..255 bytes with no control bytes.
void validate_key(std::string_view key);

/// "<rank>.<field>.<step>"
std::string producer_key(std::uint64_t rank, std::string_view field, std::uint64_t step);

using MetaValue = std::variant<std::string, std::int64_t, double>;

enum class Command : std::uint8_t {
  Ping = 0x01,
  PutTensor = 0x02,
  GetTensor = 0x03,
  DelTensor = 0x04,
  Exists = 0x05,
  PutMeta = 0x06,
  GetMeta = 0x07,
  SetModel = 0x08,
  GetModel = 0x09,
  RunModel = 0x0A,
  Info = 0x0B,
  Flush = 0x0C,
};

std::string_view to_string(Command c);
std::optional<Command> command_from_code(std::uint8_t code);

struct Frame {
  std::uint8_t version = kProtocolVersion;
  std::uint8_t command = 0;
  std::uint64_t request_id = 0;
  Bytes payload;

  friend bool operator==(const Frame&, const Frame&) = default;
};

// Little-endian primitive writer/reader. The reader throws Error(BadRequest)
// on truncation.
class ByteWriter {
 public:
  ByteWriter() = default;
  explicit ByteWriter(std::size_t reserve) { buf_.reserve(reserve); }

  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u16(std::uint16_t v) { put_le(v, 2); }
  void u32(std::uint32_t v) { put_le(v, 4); }
  void u64(std::uint64_t v) { put_le(v, 8); }
  void i64(std::int64_t v) { put_le(static_cast<std::uint64_t>(v), 8); }
  void f32(float v);
  void f64(double v);
  void bytes(ByteView b) { buf_.insert(buf_.end(), b.begin(), b.end()); }
  void str(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }
  /// [len:u16][key]
  void key(std::string_view k);

  Bytes take() && { return std::move(buf_); }
  const Bytes& buffer() const noexcept { return buf_; }

 private:
  void put_le(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  Bytes buf_;
};

class ByteReader {
 public:
  explicit ByteReader(ByteView data) : data_(data) {}

  std::uint8_t u8();
  std::uint16_t u16() { return static_cast<std::uint16_t>(get_le(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(get_le(4)); }
  std::uint64_t u64() { return get_le(8); }
  std::int64_t i64() { return static_cast<std::int64_t>(get_le(8)); }
  float f32();
  double f64();
  ByteView bytes(std::size_t n);
  std::string str(std::size_t n);
  /// [len:u16][key], validated.
  std::string key();
  ByteView rest();

  std::size_t remaining() const noexcept { return data_.size() - pos_; }
  bool done() const noexcept { return pos_ == data_.size(); }
  /// Throws unless every byte was consumed.
  void expect_done(std::string_view what) const;

 private:
  std::uint64_t get_le(int n);
  void need(std::size_t n) const;

  ByteView data_;
  std::size_t pos_ = 0;
};

Bytes encode_tensor(const Tensor& t);
void encode_tensor(ByteWriter& w, const Tensor& t);
Tensor decode_tensor(ByteView b);
Tensor decode_tensor(ByteReader& r);

Bytes encode_meta(const MetaValue& v);
void encode_meta(ByteWriter& w, const MetaValue& v);
MetaValue decode_meta(ByteView b);
MetaValue decode_meta(ByteReader& r);

Bytes encode_frame(const Frame& f, std::size_t max_payload = kDefaultMaxPayload);
/// Decodes exactly one complete frame occupying all of `b`.
Frame decode_frame(ByteView b, std::size_t max_payload = kDefaultMaxPayload);

/// Incremental frame decoder over a byte stream. Feed arbitrary chunks and
/// pop complete frames; a header is validated as soon as it is complete so an
/// oversize frame is rejected before its payload is buffered.
class FrameDecoder {
 public:
  explicit FrameDecoder(std::size_t max_payload = kDefaultMaxPayload)
      : max_payload_(max_payload) {}

  void feed(ByteView chunk);
  std::optional<Frame> next();
  std::size_t buffered() const noexcept { return buf_.size() - pos_; }

 private:
  void compact();

  std::size_t max_payload_;
  Bytes buf_;
  std::size_t pos_ = 0;
};

// Request/response payload layouts.

struct RunModelRequest {
  std::string model_key;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;

  friend bool operator==(const RunModelRequest&, const RunModelRequest&) = default;
};

struct SetModelRequest {
  std::string key;
  std::string device_hint;
  Bytes blob;
};

Bytes encode_key_request(std::string_view key);
std::string decode_key_request(ByteView payload);

Bytes encode_put_tensor(std::string_view key, const Tensor& t);
std::pair<std::string, Tensor> decode_put_tensor(ByteView payload);

Bytes encode_put_meta(std::string_view key, const MetaValue& v);
std::pair<std::string, MetaValue> decode_put_meta(ByteView payload);

/// [keylen:u16][key][hintlen:u8][hint][blob]
Bytes encode_set_model(std::string_view key, std::string_view device_hint, ByteView blob);
SetModelRequest decode_set_model(ByteView payload);

Bytes encode_run_model(const RunModelRequest& req);
RunModelRequest decode_run_model(ByteView payload);

using InfoMap = std::vector<std::pair<std::string, MetaValue>>;
/// [count:u16][count x ([keylen:u16][key][meta])]
Bytes encode_info(const InfoMap& info);
InfoMap decode_info(ByteView payload);

/// Response payload: [status:u8][body]. Error bodies carry a UTF-8 message.
Frame make_response(const Frame& request, Status status, ByteView body = {});
Frame make_error_response(const Frame& request, Status status, std::string_view message);

}  // namespace isf
