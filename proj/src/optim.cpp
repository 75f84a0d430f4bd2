#include "fedpc/optim.hpp"

#include <cmath>
#include <string>

#include "fedpc/errors.hpp"

namespace fedpc {

void LearningSchedule::validate() const {
  if (eta0 <= 0.0) throw ConfigError("lr: eta0 must be positive");
  if (decay <= 0.0 || decay > 1.0) throw ConfigError("lr: decay must be in (0, 1]");
}

double learning_rate(const LearningSchedule& schedule, int round) {
  if (round < 0) throw ConfigError("lr: round must be >= 0");
  return schedule.eta0 * std::pow(schedule.decay, round);
}

AdamState AdamState::init(Eigen::Index n) {
  AdamState s;
  s.first_moment = Vector::Zero(n);
  s.second_moment = Vector::Zero(n);
  return s;
}

void adam_step(ParamVector& params, const Eigen::Ref<const Vector>& grad,
               AdamState& state, double eta) {
  if (grad.size() != params.size())
    throw ShapeError("adam: gradient length does not match parameters");
  if (state.first_moment.size() != params.size())
    throw ShapeError("adam: state length does not match parameters");
  if (eta <= 0.0) throw ConfigError("adam: eta must be positive");
  for (Eigen::Index i = 0; i < grad.size(); ++i)
    if (!std::isfinite(grad[i]))
      throw NumericError("adam: non-finite gradient at index " + std::to_string(i));

  state.step_count += 1;
  const double b1 = state.beta1, b2 = state.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step_count));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step_count));

  const Eigen::Index f = params.frozen_len;
  const Eigen::Index t = params.size() - f;
  if (t == 0) return;

  auto m = state.first_moment.tail(t);
  auto v = state.second_moment.tail(t);
  auto g = grad.tail(t);
  m = b1 * m + (1.0 - b1) * g;
  v = b2 * v + (1.0 - b2) * g.cwiseProduct(g);
  const Vector m_hat = m / c1;
  const Vector v_hat = v / c2;
  params.values.tail(t) -=
      eta * (m_hat.array() / (v_hat.array().sqrt() + state.epsilon)).matrix();
}

}  // namespace fedpc
