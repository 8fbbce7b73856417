#pragma once

// Model executors. A model blob is "MEX1" followed by an exec-type byte and a
// type-specific payload:
//
//   IDENTITY (0): empty
//   AFFINE   (1): [in:u32][out:u32][W: out x in f32, row-major][b: out f32]
//   MLP      (2): [n_layers:u8] n_layers x [in:u32][out:u32][act:u8]
//                 then, per layer in order, W followed by b (f32)
//
// Evaluation accumulates in f32 over the input index in ascending order, so
// results are bit-reproducible for identical blob and input bytes.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "isf/wire.hpp"

namespace isf {

enum class ExecType : std::uint8_t { Identity = 0, Affine = 1, Mlp = 2 };
enum class Activation : std::uint8_t { None = 0, Relu = 1 };

std::string_view to_string(ExecType t);

struct DenseLayer {
  std::uint32_t in_dim = 0;
  std::uint32_t out_dim = 0;
  Activation act = Activation::None;
  std::vector<float> weights;  // out_dim x in_dim, row-major
  std::vector<float> bias;     // out_dim
};

class ModelParseError : public Error {
 public:
  enum class Kind { BadMagic, UnknownExecType, DimensionMismatch, Truncated, TrailingBytes, BadActivation };

  ModelParseError(Kind kind, const std::string& what)
      : Error(Status::BadRequest, what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

struct ModelSpec {
  std::string name;
  std::string device_hint = "cpu";
  ExecType exec_type = ExecType::Identity;
  std::vector<DenseLayer> layers;  // empty for IDENTITY, one for AFFINE
  Bytes blob;

  std::uint32_t in_dim() const { return layers.empty() ? 0 : layers.front().in_dim; }
  std::uint32_t out_dim() const { return layers.empty() ? 0 : layers.back().out_dim; }
};

/// Total over arbitrary bytes: either returns a validated spec or throws
/// ModelParseError.
ModelSpec parse_model(ByteView blob, std::string name = {}, std::string device_hint = "cpu");

/// Evaluates a model. Throws Error(ExecError) on dtype or shape mismatch.
std::vector<Tensor> run(const ModelSpec& model, std::span<const Tensor> inputs);

Bytes identity_blob();
Bytes affine_blob(std::uint32_t in_dim, std::uint32_t out_dim, std::span<const float> weights,
                  std::span<const float> bias);
Bytes mlp_blob(std::span<const DenseLayer> layers);

/// Reproducible random weights, uniform in [-1, 1) from a splitmix64 stream
/// seeded with `seed`, drawn W then b layer by layer.
Bytes random_affine_blob(std::uint32_t in_dim, std::uint32_t out_dim, std::uint64_t seed);
Bytes random_mlp_blob(std::span<const std::uint32_t> dims, Activation hidden_act, std::uint64_t seed);

}  // namespace isf
