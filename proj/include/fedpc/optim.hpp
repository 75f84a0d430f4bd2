#pragma once

#include "fedpc/model.hpp"

namespace fedpc {

// Multiplicative per-round decay: eta(t) = eta0 * decay^t.
struct LearningSchedule {
  double eta0 = 1e-4;
  double decay = 0.5;

  void validate() const;
};

double learning_rate(const LearningSchedule& schedule, int round);

struct AdamState {
  Vector first_moment;
  Vector second_moment;
  long step_count = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static AdamState init(Eigen::Index n);
};

// Bias-corrected Adam update on the trainable scalars; the frozen prefix
// is left untouched. Throws NumericError naming the first non-finite
// gradient entry.
void adam_step(ParamVector& params, const Eigen::Ref<const Vector>& grad,
               AdamState& state, double eta);

}  // namespace fedpc
