#include "fedpc/loss.hpp"

#include <cmath>
#include <string>
#include <vector>

#include "fedpc/errors.hpp"

namespace fedpc {

void LossConfig::validate() const {
  if (mu < 0.0) throw ConfigError("loss: mu must be >= 0");
  if (weight_decay < 0.0) throw ConfigError("loss: weight_decay must be >= 0");
}

double nll_loss(const Eigen::Ref<const Vector>& probs, int label) {
  if (label < 0 || label >= probs.size())
    throw ShapeError("nll: label " + std::to_string(label) +
                     " out of range for " + std::to_string(probs.size()) +
                     " classes");
  return -std::log(std::max(probs[label], kProbFloor));
}

double nll_loss(const Eigen::Ref<const Matrix>& probs,
                const Eigen::Ref<const IntVector>& labels) {
  if (probs.cols() != labels.size())
    throw ShapeError("nll: batch size mismatch between probs and labels");
  if (probs.cols() == 0) throw ConfigError("nll: empty batch");
  double total = 0.0;
  for (Eigen::Index i = 0; i < labels.size(); ++i)
    total += nll_loss(probs.col(i), labels[i]);
  return total / static_cast<double>(labels.size());
}

double proximal_term(const ParamVector& w, const ParamVector& w_prev, double mu) {
  if (w.values.size() != w_prev.values.size() || w.spec != w_prev.spec)
    throw ShapeError("proximal: parameter vectors have different specs");
  return 0.5 * mu * (w.values - w_prev.values).squaredNorm();
}

LossGrad total_loss_and_grad(const ParamVector& params, const ParamVector& anchor,
                             const Eigen::Ref<const Matrix>& features,
                             const Eigen::Ref<const IntVector>& labels,
                             const LossConfig& cfg) {
  const ModelSpec& spec = params.spec;
  const Eigen::Index batch = features.cols();
  if (batch == 0) throw ConfigError("loss: empty batch");
  if (labels.size() != batch)
    throw ShapeError("loss: feature/label count mismatch");
  if (features.rows() != spec.input_dim())
    throw ShapeError("loss: feature dim does not match model input");

  const int layers = spec.num_weight_layers();

  // Forward pass, caching inputs of each layer and the hidden pre-activations.
  std::vector<Matrix> inputs(layers);   // inputs[l] feeds weight layer l
  std::vector<Matrix> preacts(layers);  // pre-activation of each layer
  Matrix a = features;
  for (int l = 0; l < layers; ++l) {
    inputs[l] = a;
    preacts[l] = (params.weight(l) * a).colwise() + params.bias(l);
    if (l + 1 < layers) a = relu(preacts[l]);
  }
  const Matrix probs = softmax_columns(preacts[layers - 1]);

  LossGrad out;
  out.nll = nll_loss(probs, labels);
  out.proximal = proximal_term(params, anchor, cfg.mu);
  out.loss = out.nll + out.proximal;
  out.grad = Vector::Zero(params.size());

  // Backprop of the mean NLL: dL/dlogits = (p - onehot(y)) / batch.
  Matrix dz = probs;
  for (Eigen::Index i = 0; i < batch; ++i) {
    if (labels[i] < 0 || labels[i] >= spec.num_classes())
      throw ShapeError("loss: label out of class range");
    dz(labels[i], i) -= 1.0;
  }
  dz /= static_cast<double>(batch);

  ParamVector gview = ParamVector::zeros(spec);  // layer views over the grad
  for (int l = layers - 1; l >= 0; --l) {
    gview.weight(l).noalias() = dz * inputs[l].transpose();
    gview.bias(l) = dz.rowwise().sum();
    if (l > 0) {
      Matrix da = params.weight(l).transpose() * dz;
      dz = da.cwiseProduct(
          (preacts[l - 1].array() > 0.0).cast<double>().matrix());
    }
  }
  out.grad = gview.values;

  // Proximal pull and weight decay act on trainable scalars only; the
  // frozen prefix carries zero gradient by contract.
  const Eigen::Index f = params.frozen_len;
  const Eigen::Index t = params.size() - f;
  if (t > 0) {
    out.grad.tail(t) += cfg.mu * (params.values.tail(t) - anchor.values.tail(t));
    out.grad.tail(t) += cfg.weight_decay * params.values.tail(t);
  }
  if (f > 0) out.grad.head(f).setZero();
  return out;
}

}  // namespace fedpc
