#pragma once

#include "fedpc/model.hpp"

namespace fedpc {

// Probabilities below this floor are clamped inside the NLL so the loss
// stays finite even on a confidently wrong prediction.
inline constexpr double kProbFloor = 1e-12;

struct LossConfig {
  double mu = 1.0;           // proximal penalty factor
  double weight_decay = 1e-5;  // coupled L2, added to the gradient

  void validate() const;
};

// -ln(probs[label]) with the probability floor.
double nll_loss(const Eigen::Ref<const Vector>& probs, int label);

// Mean NLL over a batch; columns of `probs` are per-sample distributions.
double nll_loss(const Eigen::Ref<const Matrix>& probs,
                const Eigen::Ref<const IntVector>& labels);

// (mu/2) * ||w - w_prev||^2.
double proximal_term(const ParamVector& w, const ParamVector& w_prev, double mu);

struct LossGrad {
  double loss = 0.0;  // nll + proximal (weight decay enters the gradient only)
  double nll = 0.0;
  double proximal = 0.0;
  Vector grad;
};

// Loss and gradient of the proximal-augmented objective on one minibatch.
// * loss  = mean NLL + (mu/2)||params - anchor||^2
// * grad  = backprop gradient + mu*(params - anchor) + weight_decay*params,
//           applied to trainable scalars; frozen entries are exactly zero.
// `anchor` is the model received at the start of the local session.
LossGrad total_loss_and_grad(const ParamVector& params, const ParamVector& anchor,
                             const Eigen::Ref<const Matrix>& features,
                             const Eigen::Ref<const IntVector>& labels,
                             const LossConfig& cfg);

}  // namespace fedpc
