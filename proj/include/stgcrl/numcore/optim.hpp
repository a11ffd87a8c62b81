#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "stgcrl/numcore/errors.hpp"
#include "stgcrl/numcore/tensor.hpp"

namespace stgcrl {

/// Momentum buffers for SGD, one per parameter, zero-initialized.
struct OptimizerState {
  std::vector<Tensor> buffers;
  double momentum = 0.9;
  bool nesterov = true;

  static OptimizerState for_params(std::span<Parameter* const> params, double momentum = 0.9,
                                   bool nesterov = true) {
    OptimizerState s;
    s.momentum = momentum;
    s.nesterov = nesterov;
    s.buffers.reserve(params.size());
    for (const Parameter* p : params) s.buffers.emplace_back(p->value.shape(), 0.0);
    return s;
  }
};

/// buf <- momentum * buf + grad
/// nesterov:  p <- p - lr * (grad + momentum * buf)
/// otherwise: p <- p - lr * buf
inline void sgd_nesterov_step(std::span<Parameter* const> params, std::span<const Tensor> grads,
                              OptimizerState& state, double lr) {
  require(params.size() == grads.size() && params.size() == state.buffers.size(),
          "sgd_nesterov_step: params/grads/buffers count mismatch");
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& p = params[k]->value;
    Tensor& buf = state.buffers[k];
    const Tensor& g = grads[k];
    require(p.shape() == g.shape() && p.shape() == buf.shape(),
            "sgd_nesterov_step: shape mismatch for parameter '" + params[k]->name + "'");
    const double m = state.momentum;
    for (std::size_t i = 0; i < p.size(); ++i) {
      buf[i] = m * buf[i] + g[i];
      p[i] -= lr * (state.nesterov ? g[i] + m * buf[i] : buf[i]);
    }
  }
}

/// Step schedule: base_lr / drop_factor^(number of drop epochs <= epoch).
struct LrSchedule {
  double base_lr = 0.1;
  std::vector<int> drop_epochs{20, 30, 35};
  double drop_factor = 10.0;

  double lr_at_epoch(int epoch) const {
    require(epoch >= 0, "lr_at_epoch: epoch must be non-negative");
    const auto drops = std::count_if(drop_epochs.begin(), drop_epochs.end(),
                                     [epoch](int e) { return e <= epoch; });
    return base_lr / std::pow(drop_factor, static_cast<double>(drops));
  }
};

inline double lr_at_epoch(const LrSchedule& schedule, int epoch) { return schedule.lr_at_epoch(epoch); }

}  // namespace stgcrl
