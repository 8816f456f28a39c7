#pragma once

#include <span>
#include <string>
#include <vector>

#include "archrank/numerics.hpp"

namespace archrank::num {

// Mutable view of one trainable tensor.
struct ParamRef {
  std::string name;
  Matrix* value;
};

// Classical (Polyak) momentum: v <- mu*v - eta*g, w <- w + v.
struct MomentumState {
  double momentum = 0.5;
  double learning_rate = 1e-4;
  // One buffer per parameter, created as zeros on the first step.
  std::vector<Matrix> velocity;

  void validate() const;
};

// Applies one update in place. All gradients are checked before any parameter
// moves, so a rejected step leaves params and state untouched.
void sgd_momentum_step(std::span<const ParamRef> params, std::span<const Matrix> grads,
                       MomentumState& state);

}  // namespace archrank::num
