#include "fedpc/model.hpp"

#include <cmath>
#include <string>

#include "fedpc/errors.hpp"
#include "fedpc/rng.hpp"

namespace fedpc {

Eigen::Index ModelSpec::layer_param_count(int l) const {
  const Eigen::Index in = layer_sizes[l];
  const Eigen::Index out = layer_sizes[l + 1];
  return in * out + out;
}

Eigen::Index ModelSpec::total_params() const {
  Eigen::Index n = 0;
  for (int l = 0; l < num_weight_layers(); ++l) n += layer_param_count(l);
  return n;
}

Eigen::Index ModelSpec::frozen_param_count() const {
  Eigen::Index n = 0;
  for (int l = 0; l < frozen_layers; ++l) n += layer_param_count(l);
  return n;
}

void ModelSpec::validate() const {
  if (layer_sizes.size() < 2)
    throw ConfigError("model: layer_sizes needs at least input and output dims");
  for (int s : layer_sizes)
    if (s < 1) throw ConfigError("model: layer sizes must be >= 1");
  if (frozen_layers < 0 || frozen_layers >= num_weight_layers())
    throw ConfigError("model: frozen_layers must be in [0, weight layer count)");
}

ParamVector ParamVector::zeros(const ModelSpec& spec) {
  spec.validate();
  ParamVector p;
  p.spec = spec;
  p.values = Vector::Zero(spec.total_params());
  p.frozen_len = spec.frozen_param_count();
  return p;
}

Eigen::Index ParamVector::layer_offset(int l) const {
  Eigen::Index off = 0;
  for (int i = 0; i < l; ++i) off += spec.layer_param_count(i);
  return off;
}

Eigen::Map<const Matrix> ParamVector::weight(int l) const {
  const Eigen::Index out = spec.layer_sizes[l + 1];
  const Eigen::Index in = spec.layer_sizes[l];
  return {values.data() + layer_offset(l), out, in};
}

Eigen::Map<Matrix> ParamVector::weight(int l) {
  const Eigen::Index out = spec.layer_sizes[l + 1];
  const Eigen::Index in = spec.layer_sizes[l];
  return {values.data() + layer_offset(l), out, in};
}

Eigen::Map<const Vector> ParamVector::bias(int l) const {
  const Eigen::Index out = spec.layer_sizes[l + 1];
  const Eigen::Index in = spec.layer_sizes[l];
  return {values.data() + layer_offset(l) + in * out, out};
}

Eigen::Map<Vector> ParamVector::bias(int l) {
  const Eigen::Index out = spec.layer_sizes[l + 1];
  const Eigen::Index in = spec.layer_sizes[l];
  return {values.data() + layer_offset(l) + in * out, out};
}

void ParamVector::validate() const {
  spec.validate();
  if (values.size() != spec.total_params())
    throw ShapeError("params: length " + std::to_string(values.size()) +
                     " does not match spec total " +
                     std::to_string(spec.total_params()));
  if (frozen_len != spec.frozen_param_count())
    throw ShapeError("params: frozen_len inconsistent with spec");
  if (!values.allFinite()) throw NumericError("params: non-finite entries");
}

ParamVector glorot_init(const ModelSpec& spec, std::uint64_t seed) {
  ParamVector p = ParamVector::zeros(spec);
  Rng rng(seed);
  for (int l = 0; l < spec.num_weight_layers(); ++l) {
    const double fan_in = spec.layer_sizes[l];
    const double fan_out = spec.layer_sizes[l + 1];
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    auto w = p.weight(l);
    // Column-major fill order matches the canonical flat layout.
    for (Eigen::Index j = 0; j < w.cols(); ++j)
      for (Eigen::Index i = 0; i < w.rows(); ++i)
        w(i, j) = rng.uniform(-limit, limit);
  }
  return p;
}

Matrix forward_batch(const ParamVector& params,
                     const Eigen::Ref<const Matrix>& features) {
  const ModelSpec& spec = params.spec;
  if (features.rows() != spec.input_dim())
    throw ShapeError("forward: feature dim " + std::to_string(features.rows()) +
                     " != model input dim " + std::to_string(spec.input_dim()));
  Matrix a = features;
  const int layers = spec.num_weight_layers();
  for (int l = 0; l < layers; ++l) {
    Matrix z = (params.weight(l) * a).colwise() + params.bias(l);
    if (l + 1 < layers)
      a = relu(z);
    else
      a = softmax_columns(z);
  }
  return a;
}

Vector forward(const ParamVector& params, const Eigen::Ref<const Vector>& features) {
  return forward_batch(params, features);
}

}  // namespace fedpc
