#include "archrank/optim.hpp"

#include "archrank/eigen_view.hpp"

namespace archrank::num {

void MomentumState::validate() const {
  require(momentum >= 0.0 && momentum < 1.0, "momentum must lie in [0, 1)");
  require(learning_rate > 0.0, "learning rate must be positive");
}

void sgd_momentum_step(std::span<const ParamRef> params, std::span<const Matrix> grads,
                       MomentumState& state) {
  state.validate();
  require(params.size() == grads.size(), "sgd_momentum_step: " + std::to_string(params.size()) +
                                             " params but " + std::to_string(grads.size()) +
                                             " gradients");
  for (std::size_t i = 0; i < params.size(); ++i) {
    require(params[i].value->same_shape(grads[i]),
            "sgd_momentum_step: gradient shape " + shape_string(grads[i]) + " for '" +
                params[i].name + "' " + shape_string(*params[i].value));
    if (!grads[i].all_finite()) {
      throw NonFiniteError("non-finite gradient for '" + params[i].name + "'");
    }
  }
  if (state.velocity.empty()) {
    state.velocity.reserve(params.size());
    for (const auto& p : params) state.velocity.emplace_back(p.value->rows(), p.value->cols());
  }
  require(state.velocity.size() == params.size(), "momentum state tracks a different parameter set");
  for (std::size_t i = 0; i < params.size(); ++i) {
    require(state.velocity[i].same_shape(*params[i].value),
            "velocity shape mismatch for '" + params[i].name + "'");
    auto v = view(state.velocity[i]);
    v = state.momentum * v - state.learning_rate * view(grads[i]);
    view(*params[i].value) += v;
  }
}

}  // namespace archrank::num
