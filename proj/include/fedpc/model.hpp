#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "fedpc/math.hpp"

namespace fedpc {

// Multi-layer perceptron: ReLU hidden layers, softmax head. Hidden layers
// counted from the input side may be frozen; frozen parameters never update
// and are excluded from transmission payloads.
struct ModelSpec {
  std::vector<int> layer_sizes;  // input dim, hidden dims..., class count
  int frozen_layers = 0;

  int num_weight_layers() const { return static_cast<int>(layer_sizes.size()) - 1; }
  int input_dim() const { return layer_sizes.front(); }
  int num_classes() const { return layer_sizes.back(); }

  // Scalars of weight layer l: out*in weights plus out biases.
  Eigen::Index layer_param_count(int l) const;
  Eigen::Index total_params() const;
  // Scalar count of the frozen prefix (first frozen_layers weight layers).
  Eigen::Index frozen_param_count() const;

  void validate() const;  // throws ConfigError

  bool operator==(const ModelSpec&) const = default;
};

// Flat parameter array in canonical layer order: for each weight layer,
// the weight matrix (out x in, column-major) followed by its bias. The
// first frozen_len scalars belong to frozen layers.
struct ParamVector {
  Vector values;
  ModelSpec spec;
  Eigen::Index frozen_len = 0;

  static ParamVector zeros(const ModelSpec& spec);

  Eigen::Index size() const { return values.size(); }
  Eigen::Index trainable_count() const { return values.size() - frozen_len; }

  Eigen::Map<const Matrix> weight(int l) const;
  Eigen::Map<Matrix> weight(int l);
  Eigen::Map<const Vector> bias(int l) const;
  Eigen::Map<Vector> bias(int l);

  // Offset of weight layer l inside the flat array.
  Eigen::Index layer_offset(int l) const;

  void validate() const;  // shape + finiteness
};

// Seeded Glorot-uniform weight init (biases zero): entries uniform in
// +/- sqrt(6 / (fan_in + fan_out)).
ParamVector glorot_init(const ModelSpec& spec, std::uint64_t seed);

// Class probabilities for a single feature vector.
Vector forward(const ParamVector& params, const Eigen::Ref<const Vector>& features);

// Batched version; columns of `features` are samples, columns of the
// result are probability vectors.
Matrix forward_batch(const ParamVector& params, const Eigen::Ref<const Matrix>& features);

}  // namespace fedpc
