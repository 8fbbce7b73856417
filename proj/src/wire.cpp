#include "isf/wire.hpp"

#include <bit>
#include <cstring>
#include <limits>

// Tensor payload bytes are copied straight into host floats and ints.
static_assert(std::endian::native == std::endian::little,
              "isf assumes a little-endian host");

namespace isf {

namespace {

[[noreturn]] void bad_request(const std::string& what) {
  throw Error(Status::BadRequest, what);
}

std::uint64_t checked_element_count(std::span<const std::uint64_t> shape) {
  std::uint64_t n = 1;
  for (auto d : shape) {
    if (d == 0) bad_request("tensor dimension of size 0");
    if (n > std::numeric_limits<std::uint64_t>::max() / d) bad_request("tensor shape overflows");
    n *= d;
  }
  return n;
}

}  // namespace

std::string_view to_string(Status s) {
  switch (s) {
    case Status::Ok: return "OK";
    case Status::NotFound: return "NOT_FOUND";
    case Status::BadRequest: return "BAD_REQUEST";
    case Status::ExecError: return "EXEC_ERROR";
    case Status::OutOfMemory: return "OUT_OF_MEMORY";
    case Status::WrongShard: return "WRONG_SHARD";
    case Status::Internal: return "INTERNAL";
  }
  return "UNKNOWN";
}

std::size_t element_size(Dtype d) {
  switch (d) {
    case Dtype::F32: return 4;
    case Dtype::F64: return 8;
    case Dtype::I32: return 4;
    case Dtype::I64: return 8;
    case Dtype::U8: return 1;
  }
  return 0;
}

std::string_view to_string(Dtype d) {
  switch (d) {
    case Dtype::F32: return "f32";
    case Dtype::F64: return "f64";
    case Dtype::I32: return "i32";
    case Dtype::I64: return "i64";
    case Dtype::U8: return "u8";
  }
  return "?";
}

std::optional<Dtype> dtype_from_code(std::uint8_t code) {
  if (code > static_cast<std::uint8_t>(Dtype::U8)) return std::nullopt;
  return static_cast<Dtype>(code);
}

Tensor::Tensor(Dtype dtype, std::vector<std::uint64_t> shape, Bytes data)
    : dtype_(dtype), shape_(std::move(shape)), data_(std::move(data)) {
  if (!dtype_from_code(static_cast<std::uint8_t>(dtype_))) bad_request("unknown dtype");
  if (shape_.empty() || shape_.size() > kMaxRank) {
    bad_request("tensor rank must be in 1..8, got " + std::to_string(shape_.size()));
  }
  const std::uint64_t n = checked_element_count(shape_);
  const std::uint64_t esz = element_size(dtype_);
  if (n > std::numeric_limits<std::uint64_t>::max() / esz || n * esz != data_.size()) {
    bad_request("tensor data length " + std::to_string(data_.size()) +
                " does not match shape");
  }
}

Tensor Tensor::zeros(Dtype dtype, std::vector<std::uint64_t> shape) {
  const std::uint64_t n = checked_element_count(shape);
  return Tensor(dtype, std::move(shape), Bytes(n * element_size(dtype), 0));
}

Tensor Tensor::from_f32(std::vector<std::uint64_t> shape, std::span<const float> values) {
  Bytes data(values.size_bytes());
  if (!values.empty()) std::memcpy(data.data(), values.data(), data.size());
  return Tensor(Dtype::F32, std::move(shape), std::move(data));
}

Tensor Tensor::from_f64(std::vector<std::uint64_t> shape, std::span<const double> values) {
  Bytes data(values.size_bytes());
  if (!values.empty()) std::memcpy(data.data(), values.data(), data.size());
  return Tensor(Dtype::F64, std::move(shape), std::move(data));
}

std::uint64_t Tensor::element_count() const noexcept {
  return data_.size() / element_size(dtype_);
}

std::vector<float> Tensor::to_f32() const {
  if (dtype_ != Dtype::F32) throw Error(Status::ExecError, "tensor is not f32");
  std::vector<float> out(element_count());
  std::memcpy(out.data(), data_.data(), data_.size());
  return out;
}

std::vector<double> Tensor::to_f64() const {
  if (dtype_ != Dtype::F64) throw Error(Status::ExecError, "tensor is not f64");
  std::vector<double> out(element_count());
  std::memcpy(out.data(), data_.data(), data_.size());
  return out;
}

void validate_key(std::string_view key) {
  if (key.empty() || key.size() > kMaxKeyBytes) {
    bad_request("key length must be 1..255 bytes, got " + std::to_string(key.size()));
  }
  for (unsigned char c : key) {
    if (c < 0x20) bad_request("key contains a control byte");
  }
}

std::string producer_key(std::uint64_t rank, std::string_view field, std::uint64_t step) {
  std::string k = std::to_string(rank);
  k += '.';
  k += field;
  k += '.';
  k += std::to_string(step);
  return k;
}

std::string_view to_string(Command c) {
  switch (c) {
    case Command::Ping: return "PING";
    case Command::PutTensor: return "PUT_TENSOR";
    case Command::GetTensor: return "GET_TENSOR";
    case Command::DelTensor: return "DEL_TENSOR";
    case Command::Exists: return "EXISTS";
    case Command::PutMeta: return "PUT_META";
    case Command::GetMeta: return "GET_META";
    case Command::SetModel: return "SET_MODEL";
    case Command::GetModel: return "GET_MODEL";
    case Command::RunModel: return "RUN_MODEL";
    case Command::Info: return "INFO";
    case Command::Flush: return "FLUSH";
  }
  return "UNKNOWN";
}

std::optional<Command> command_from_code(std::uint8_t code) {
  if (code < 0x01 || code > 0x0C) return std::nullopt;
  return static_cast<Command>(code);
}

// ---------------------------------------------------------------------------
// ByteWriter / ByteReader

void ByteWriter::f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
void ByteWriter::f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

void ByteWriter::key(std::string_view k) {
  validate_key(k);
  u16(static_cast<std::uint16_t>(k.size()));
  str(k);
}

void ByteReader::need(std::size_t n) const {
  if (remaining() < n) {
    bad_request("truncated payload: need " + std::to_string(n) + " bytes, have " +
                std::to_string(remaining()));
  }
}

std::uint64_t ByteReader::get_le(int n) {
  need(static_cast<std::size_t>(n));
  std::uint64_t v = 0;
  for (int i = 0; i < n; ++i) v |= std::uint64_t{data_[pos_ + i]} << (8 * i);
  pos_ += static_cast<std::size_t>(n);
  return v;
}

std::uint8_t ByteReader::u8() {
  need(1);
  return data_[pos_++];
}

float ByteReader::f32() { return std::bit_cast<float>(u32()); }
double ByteReader::f64() { return std::bit_cast<double>(u64()); }

ByteView ByteReader::bytes(std::size_t n) {
  need(n);
  auto out = data_.subspan(pos_, n);
  pos_ += n;
  return out;
}

std::string ByteReader::str(std::size_t n) {
  auto b = bytes(n);
  return std::string(b.begin(), b.end());
}

std::string ByteReader::key() {
  const std::size_t n = u16();
  std::string k = str(n);
  validate_key(k);
  return k;
}

ByteView ByteReader::rest() { return bytes(remaining()); }

void ByteReader::expect_done(std::string_view what) const {
  if (!done()) {
    bad_request(std::string(what) + ": " + std::to_string(remaining()) + " trailing bytes");
  }
}

// ---------------------------------------------------------------------------
// Tensor / meta codecs

void encode_tensor(ByteWriter& w, const Tensor& t) {
  w.u8(static_cast<std::uint8_t>(t.dtype()));
  w.u8(static_cast<std::uint8_t>(t.shape().size()));
  for (auto d : t.shape()) w.u64(d);
  w.bytes(t.data());
}

Bytes encode_tensor(const Tensor& t) {
  ByteWriter w(2 + 8 * t.shape().size() + t.byte_size());
  encode_tensor(w, t);
  return std::move(w).take();
}

Tensor decode_tensor(ByteReader& r) {
  const auto code = r.u8();
  const auto dtype = dtype_from_code(code);
  if (!dtype) bad_request("unknown dtype code " + std::to_string(code));
  const std::size_t ndim = r.u8();
  if (ndim == 0 || ndim > kMaxRank) bad_request("tensor rank must be in 1..8, got " + std::to_string(ndim));
  std::vector<std::uint64_t> shape(ndim);
  for (auto& d : shape) d = r.u64();
  const std::uint64_t n = checked_element_count(shape);
  const std::uint64_t esz = element_size(*dtype);
  if (n > r.remaining() / esz) {
    bad_request("tensor data length mismatch: shape needs " + std::to_string(n) +
                " elements, " + std::to_string(r.remaining()) + " bytes available");
  }
  auto data = r.bytes(n * esz);
  return Tensor(*dtype, std::move(shape), Bytes(data.begin(), data.end()));
}

Tensor decode_tensor(ByteView b) {
  ByteReader r(b);
  Tensor t = decode_tensor(r);
  if (!r.done()) bad_request("tensor data length mismatch: trailing bytes");
  return t;
}

void encode_meta(ByteWriter& w, const MetaValue& v) {
  w.u8(static_cast<std::uint8_t>(v.index()));
  if (const auto* s = std::get_if<std::string>(&v)) {
    if (s->size() > kMaxMetaString) bad_request("metadata string exceeds 64KiB");
    w.u32(static_cast<std::uint32_t>(s->size()));
    w.str(*s);
  } else if (const auto* i = std::get_if<std::int64_t>(&v)) {
    w.i64(*i);
  } else {
    w.f64(std::get<double>(v));
  }
}

Bytes encode_meta(const MetaValue& v) {
  ByteWriter w;
  encode_meta(w, v);
  return std::move(w).take();
}

MetaValue decode_meta(ByteReader& r) {
  switch (r.u8()) {
    case 0: {
      const std::size_t n = r.u32();
      if (n > kMaxMetaString) bad_request("metadata string exceeds 64KiB");
      return r.str(n);
    }
    case 1: return r.i64();
    case 2: return r.f64();
    default: bad_request("unknown metadata tag");
  }
}

MetaValue decode_meta(ByteView b) {
  ByteReader r(b);
  MetaValue v = decode_meta(r);
  r.expect_done("metadata value");
  return v;
}

// ---------------------------------------------------------------------------
// Frames

namespace {

void check_payload_size(std::size_t n, std::size_t max_payload) {
  if (n > max_payload ||
      n > std::numeric_limits<std::uint32_t>::max() - (kFrameHeaderBytes - 4)) {
    bad_request("frame payload of " + std::to_string(n) + " bytes exceeds cap of " +
                std::to_string(max_payload));
  }
}

}  // namespace

Bytes encode_frame(const Frame& f, std::size_t max_payload) {
  check_payload_size(f.payload.size(), max_payload);
  ByteWriter w(kFrameHeaderBytes + f.payload.size());
  w.u32(static_cast<std::uint32_t>(kFrameHeaderBytes - 4 + f.payload.size()));
  w.u8(f.version);
  w.u8(f.command);
  w.u64(f.request_id);
  w.bytes(f.payload);
  return std::move(w).take();
}

Frame decode_frame(ByteView b, std::size_t max_payload) {
  FrameDecoder dec(max_payload);
  dec.feed(b);
  auto f = dec.next();
  if (!f) bad_request("truncated frame");
  if (dec.buffered() != 0) bad_request("trailing bytes after frame");
  return std::move(*f);
}

void FrameDecoder::feed(ByteView chunk) {
  compact();
  buf_.insert(buf_.end(), chunk.begin(), chunk.end());
}

void FrameDecoder::compact() {
  if (pos_ == 0) return;
  buf_.erase(buf_.begin(), buf_.begin() + static_cast<std::ptrdiff_t>(pos_));
  pos_ = 0;
}

std::optional<Frame> FrameDecoder::next() {
  const std::size_t avail = buffered();
  if (avail < 4) return std::nullopt;
  ByteReader hdr(ByteView(buf_).subspan(pos_, avail));
  const std::uint32_t total = hdr.u32();
  if (total < kFrameHeaderBytes - 4) bad_request("frame total_len too small");
  check_payload_size(total - (kFrameHeaderBytes - 4), max_payload_);
  if (avail >= 5 && buf_[pos_ + 4] != kProtocolVersion) {
    bad_request("unsupported protocol version " + std::to_string(buf_[pos_ + 4]));
  }
  if (avail < 4 + std::size_t{total}) return std::nullopt;
  Frame f;
  f.version = hdr.u8();
  f.command = hdr.u8();
  f.request_id = hdr.u64();
  auto payload = hdr.bytes(total - (kFrameHeaderBytes - 4));
  f.payload.assign(payload.begin(), payload.end());
  pos_ += 4 + std::size_t{total};
  if (pos_ == buf_.size()) {
    buf_.clear();
    pos_ = 0;
  }
  return f;
}

// ---------------------------------------------------------------------------
// Request payloads

Bytes encode_key_request(std::string_view key) {
  ByteWriter w(2 + key.size());
  w.key(key);
  return std::move(w).take();
}

std::string decode_key_request(ByteView payload) {
  ByteReader r(payload);
  auto k = r.key();
  r.expect_done("key request");
  return k;
}

Bytes encode_put_tensor(std::string_view key, const Tensor& t) {
  ByteWriter w(2 + key.size() + 2 + 8 * t.shape().size() + t.byte_size());
  w.key(key);
  encode_tensor(w, t);
  return std::move(w).take();
}

std::pair<std::string, Tensor> decode_put_tensor(ByteView payload) {
  ByteReader r(payload);
  auto k = r.key();
  Tensor t = decode_tensor(r);
  if (!r.done()) bad_request("tensor data length mismatch: trailing bytes");
  return {std::move(k), std::move(t)};
}

Bytes encode_put_meta(std::string_view key, const MetaValue& v) {
  ByteWriter w;
  w.key(key);
  encode_meta(w, v);
  return std::move(w).take();
}

std::pair<std::string, MetaValue> decode_put_meta(ByteView payload) {
  ByteReader r(payload);
  auto k = r.key();
  MetaValue v = decode_meta(r);
  r.expect_done("PUT_META");
  return {std::move(k), std::move(v)};
}

Bytes encode_set_model(std::string_view key, std::string_view device_hint, ByteView blob) {
  if (device_hint.size() > 255) bad_request("device hint longer than 255 bytes");
  ByteWriter w(2 + key.size() + 1 + device_hint.size() + blob.size());
  w.key(key);
  w.u8(static_cast<std::uint8_t>(device_hint.size()));
  w.str(device_hint);
  w.bytes(blob);
  return std::move(w).take();
}

SetModelRequest decode_set_model(ByteView payload) {
  ByteReader r(payload);
  SetModelRequest req;
  req.key = r.key();
  req.device_hint = r.str(r.u8());
  auto blob = r.rest();
  req.blob.assign(blob.begin(), blob.end());
  return req;
}

Bytes encode_run_model(const RunModelRequest& req) {
  if (req.inputs.size() > 0xFFFF || req.outputs.size() > 0xFFFF) {
    bad_request("too many RUN_MODEL keys");
  }
  ByteWriter w;
  w.key(req.model_key);
  w.u16(static_cast<std::uint16_t>(req.inputs.size()));
  for (const auto& k : req.inputs) w.key(k);
  w.u16(static_cast<std::uint16_t>(req.outputs.size()));
  for (const auto& k : req.outputs) w.key(k);
  return std::move(w).take();
}

RunModelRequest decode_run_model(ByteView payload) {
  ByteReader r(payload);
  RunModelRequest req;
  req.model_key = r.key();
  req.inputs.resize(r.u16());
  for (auto& k : req.inputs) k = r.key();
  req.outputs.resize(r.u16());
  for (auto& k : req.outputs) k = r.key();
  r.expect_done("RUN_MODEL");
  return req;
}

Bytes encode_info(const InfoMap& info) {
  ByteWriter w;
  w.u16(static_cast<std::uint16_t>(info.size()));
  for (const auto& [k, v] : info) {
    w.key(k);
    encode_meta(w, v);
  }
  return std::move(w).take();
}

InfoMap decode_info(ByteView payload) {
  ByteReader r(payload);
  InfoMap info(r.u16());
  for (auto& [k, v] : info) {
    k = r.key();
    v = decode_meta(r);
  }
  r.expect_done("INFO");
  return info;
}

Frame make_response(const Frame& request, Status status, ByteView body) {
  Frame f;
  f.command = request.command | kResponseBit;
  f.request_id = request.request_id;
  f.payload.reserve(1 + body.size());
  f.payload.push_back(static_cast<std::uint8_t>(status));
  f.payload.insert(f.payload.end(), body.begin(), body.end());
  return f;
}

Frame make_error_response(const Frame& request, Status status, std::string_view message) {
  ByteView body(reinterpret_cast<const std::uint8_t*>(message.data()), message.size());
  return make_response(request, status, body);
}

}  // namespace isf
