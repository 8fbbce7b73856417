#include "isf/exec.hpp"

#include <algorithm>
#include <cstring>

#include "isf/random.hpp"

namespace isf {

namespace {

constexpr std::uint8_t kMagic[4] = {'M', 'E', 'X', '1'};
using Kind = ModelParseError::Kind;

[[noreturn]] void parse_fail(Kind kind, const std::string& what) {
  throw ModelParseError(kind, "model parse: " + what);
}

[[noreturn]] void exec_fail(const std::string& what) {
  throw Error(Status::ExecError, "model exec: " + what);
}

// Reader over the model blob that reports truncation as a parse error
// instead of a generic BAD_REQUEST.
class BlobReader {
 public:
  explicit BlobReader(ByteView b) : b_(b) {}

  std::uint8_t u8() {
    need(1, "header");
    return b_[pos_++];
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t{b_[pos_ + i]} << (8 * i);
    pos_ += 4;
    return v;
  }
  void floats(std::vector<float>& out, std::size_t n, const char* what) {
    if (n > remaining() / 4) {
      parse_fail(Kind::Truncated, std::string("truncated ") + what + ": need " +
                                      std::to_string(n) + " f32 values, " +
                                      std::to_string(remaining()) + " bytes left");
    }
    out.resize(n);
    if (n) std::memcpy(out.data(), b_.data() + pos_, n * 4);
    pos_ += n * 4;
  }
  std::size_t remaining() const { return b_.size() - pos_; }

 private:
  void need(std::size_t n, const char* what) {
    if (remaining() < n) parse_fail(Kind::Truncated, std::string("truncated ") + what);
  }
  ByteView b_;
  std::size_t pos_ = 0;
};

Activation parse_activation(std::uint8_t v) {
  if (v > 1) parse_fail(Kind::BadActivation, "unknown activation " + std::to_string(v));
  return static_cast<Activation>(v);
}

void put_u32(Bytes& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_floats(Bytes& out, std::span<const float> v) {
  const auto old = out.size();
  out.resize(old + v.size_bytes());
  if (!v.empty()) std::memcpy(out.data() + old, v.data(), v.size_bytes());
}

Bytes header(ExecType t) {
  Bytes out(std::begin(kMagic), std::end(kMagic));
  out.push_back(static_cast<std::uint8_t>(t));
  return out;
}

// y[r] = act(sum_k W[o][k] * x[r][k] + b[o]), k ascending, f32 accumulator.
void dense_forward(const DenseLayer& layer, std::span<const float> x, std::size_t rows,
                   std::vector<float>& y) {
  y.assign(rows * layer.out_dim, 0.0f);
  for (std::size_t r = 0; r < rows; ++r) {
    const float* xr = x.data() + r * layer.in_dim;
    for (std::uint32_t o = 0; o < layer.out_dim; ++o) {
      const float* w = layer.weights.data() + std::size_t{o} * layer.in_dim;
      float acc = 0.0f;
      for (std::uint32_t k = 0; k < layer.in_dim; ++k) acc += w[k] * xr[k];
      acc += layer.bias[o];
      if (layer.act == Activation::Relu && acc < 0.0f) acc = 0.0f;
      y[r * layer.out_dim + o] = acc;
    }
  }
}

}  // namespace

std::string_view to_string(ExecType t) {
  switch (t) {
    case ExecType::Identity: return "identity";
    case ExecType::Affine: return "affine";
    case ExecType::Mlp: return "mlp";
  }
  return "?";
}

ModelSpec parse_model(ByteView blob, std::string name, std::string device_hint) {
  if (blob.size() < 4 || !std::equal(std::begin(kMagic), std::end(kMagic), blob.begin())) {
    parse_fail(Kind::BadMagic, "bad magic (expected \"MEX1\")");
  }
  BlobReader r(blob.subspan(4));
  const auto type_byte = r.u8();
  if (type_byte > 2) parse_fail(Kind::UnknownExecType, "unknown exec type " + std::to_string(type_byte));

  ModelSpec spec;
  spec.name = std::move(name);
  spec.device_hint = std::move(device_hint);
  spec.exec_type = static_cast<ExecType>(type_byte);

  switch (spec.exec_type) {
    case ExecType::Identity:
      break;
    case ExecType::Affine: {
      DenseLayer l;
      l.in_dim = r.u32("affine in_dim");
      l.out_dim = r.u32("affine out_dim");
      if (l.in_dim == 0 || l.out_dim == 0) parse_fail(Kind::DimensionMismatch, "affine dims must be >= 1");
      r.floats(l.weights, std::size_t{l.in_dim} * l.out_dim, "affine weights");
      r.floats(l.bias, l.out_dim, "affine bias");
      spec.layers.push_back(std::move(l));
      break;
    }
    case ExecType::Mlp: {
      const std::size_t n = r.u8();
      if (n == 0) parse_fail(Kind::DimensionMismatch, "mlp needs at least one layer");
      spec.layers.resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        auto& l = spec.layers[i];
        l.in_dim = r.u32("mlp layer in_dim");
        l.out_dim = r.u32("mlp layer out_dim");
        l.act = parse_activation(r.u8());
        if (l.in_dim == 0 || l.out_dim == 0) {
          parse_fail(Kind::DimensionMismatch, "mlp layer " + std::to_string(i) + " has a zero dim");
        }
        if (i > 0 && spec.layers[i - 1].out_dim != l.in_dim) {
          parse_fail(Kind::DimensionMismatch,
                     "mlp layer " + std::to_string(i - 1) + " out=" +
                         std::to_string(spec.layers[i - 1].out_dim) + " but layer " +
                         std::to_string(i) + " in=" + std::to_string(l.in_dim));
        }
      }
      for (auto& l : spec.layers) {
        r.floats(l.weights, std::size_t{l.in_dim} * l.out_dim, "mlp weights");
        r.floats(l.bias, l.out_dim, "mlp bias");
      }
      break;
    }
  }
  if (r.remaining() != 0) {
    parse_fail(Kind::TrailingBytes, std::to_string(r.remaining()) + " trailing bytes after model");
  }
  spec.blob.assign(blob.begin(), blob.end());
  return spec;
}

std::vector<Tensor> run(const ModelSpec& model, std::span<const Tensor> inputs) {
  if (inputs.size() != 1) exec_fail("expected exactly 1 input tensor, got " + std::to_string(inputs.size()));
  const Tensor& in = inputs.front();
  if (model.exec_type == ExecType::Identity) return {in};

  if (in.dtype() != Dtype::F32) exec_fail("input dtype must be f32, got " + std::string(to_string(in.dtype())));
  if (in.shape().size() < 2) exec_fail("input rank must be >= 2 (batch, features...)");
  const std::uint64_t rows = in.shape().front();
  const std::uint64_t features = in.element_count() / rows;
  if (features != model.in_dim()) {
    exec_fail("flattened feature size " + std::to_string(features) + " != model in_dim " +
              std::to_string(model.in_dim()));
  }

  std::vector<float> cur = in.to_f32();
  std::vector<float> next;
  for (const auto& layer : model.layers) {
    dense_forward(layer, cur, rows, next);
    cur.swap(next);
  }
  std::vector<Tensor> out;
  out.push_back(Tensor::from_f32({rows, model.out_dim()}, cur));
  return out;
}

Bytes identity_blob() { return header(ExecType::Identity); }

Bytes affine_blob(std::uint32_t in_dim, std::uint32_t out_dim, std::span<const float> weights,
                  std::span<const float> bias) {
  if (weights.size() != std::size_t{in_dim} * out_dim || bias.size() != out_dim) {
    throw std::invalid_argument("affine_blob: weight/bias sizes do not match dims");
  }
  Bytes out = header(ExecType::Affine);
  put_u32(out, in_dim);
  put_u32(out, out_dim);
  put_floats(out, weights);
  put_floats(out, bias);
  return out;
}

Bytes mlp_blob(std::span<const DenseLayer> layers) {
  if (layers.empty() || layers.size() > 255) throw std::invalid_argument("mlp_blob: 1..255 layers");
  Bytes out = header(ExecType::Mlp);
  out.push_back(static_cast<std::uint8_t>(layers.size()));
  for (const auto& l : layers) {
    if (l.weights.size() != std::size_t{l.in_dim} * l.out_dim || l.bias.size() != l.out_dim) {
      throw std::invalid_argument("mlp_blob: weight/bias sizes do not match dims");
    }
    put_u32(out, l.in_dim);
    put_u32(out, l.out_dim);
    out.push_back(static_cast<std::uint8_t>(l.act));
  }
  for (const auto& l : layers) {
    put_floats(out, l.weights);
    put_floats(out, l.bias);
  }
  return out;
}

Bytes random_affine_blob(std::uint32_t in_dim, std::uint32_t out_dim, std::uint64_t seed) {
  SplitMix64 g(seed);
  std::vector<float> w(std::size_t{in_dim} * out_dim), b(out_dim);
  for (auto& v : w) v = g.uniform_pm1();
  for (auto& v : b) v = g.uniform_pm1();
  return affine_blob(in_dim, out_dim, w, b);
}

Bytes random_mlp_blob(std::span<const std::uint32_t> dims, Activation hidden_act, std::uint64_t seed) {
  if (dims.size() < 2) throw std::invalid_argument("random_mlp_blob: need at least in and out dims");
  SplitMix64 g(seed);
  std::vector<DenseLayer> layers(dims.size() - 1);
  for (std::size_t i = 0; i < layers.size(); ++i) {
    auto& l = layers[i];
    l.in_dim = dims[i];
    l.out_dim = dims[i + 1];
    l.act = i + 1 < layers.size() ? hidden_act : Activation::None;
    l.weights.resize(std::size_t{l.in_dim} * l.out_dim);
    l.bias.resize(l.out_dim);
    for (auto& v : l.weights) v = g.uniform_pm1();
    for (auto& v : l.bias) v = g.uniform_pm1();
  }
  return mlp_blob(layers);
}

}  // namespace isf
