#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "stgcrl/numcore/errors.hpp"
#include "stgcrl/numcore/rng.hpp"
#include "stgcrl/numcore/tape.hpp"

namespace stgcrl {

using TensorFn = std::function<Var(Tape&, Var)>;
using ParamFn = std::function<Var(Tape&)>;

namespace detail {

inline double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1.0, std::abs(numeric));
}

inline double eval_scalar(const TensorFn& f, const Tensor& x) {
  Tape t;
  const double v = f(t, t.constant(x)).value().item();
  if (!std::isfinite(v)) throw NumericFailure("grad_check: function is non-finite at a perturbed point");
  return v;
}

inline double eval_scalar(const ParamFn& f) {
  Tape t;
  const double v = f(t).value().item();
  if (!std::isfinite(v)) throw NumericFailure("grad_check: function is non-finite at a perturbed point");
  return v;
}

}  // namespace detail

/// Max over coordinates of |analytic - central difference| / max(1, |central difference|).
inline double grad_check(const TensorFn& f, const Tensor& x, double eps = 1e-5) {
  require(eps > 0.0, "grad_check: eps must be positive");
  Tape tape;
  Var xv = tape.input(x);
  Var y = f(tape, xv);
  require(y.value().size() == 1, "grad_check: f must be scalar-valued");
  const Gradients grads = tape.backward(y);
  const Tensor& analytic = grads[xv];

  double worst = 0.0;
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + eps;
    const double fp = detail::eval_scalar(f, probe);
    probe[i] = orig - eps;
    const double fm = detail::eval_scalar(f, probe);
    probe[i] = orig;
    worst = std::max(worst, detail::relative_error(analytic[i], (fp - fm) / (2.0 * eps)));
  }
  return worst;
}

/// Same check against parameters the function reads through Tape::param.
/// With max_coords_per_param > 0 only that many coordinates per parameter are
/// probed, picked with a seeded generator.
inline double grad_check_params(const ParamFn& f, const std::vector<Parameter*>& params, double eps = 1e-5,
                                std::size_t max_coords_per_param = 0, std::uint64_t seed = 0) {
  require(eps > 0.0, "grad_check_params: eps must be positive");
  Tape tape;
  Var y = f(tape);
  require(y.value().size() == 1, "grad_check_params: f must be scalar-valued");
  const Gradients grads = tape.backward(y);

  Rng rng(seed);
  double worst = 0.0;
  for (Parameter* p : params) {
    const Tensor* g = grads.find(*p);
    const Tensor zero(p->value.shape(), 0.0);
    const Tensor& analytic = g ? *g : zero;
    std::vector<std::size_t> coords;
    if (max_coords_per_param == 0 || max_coords_per_param >= p->value.size()) {
      coords.resize(p->value.size());
      for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
    } else {
      for (std::size_t k = 0; k < max_coords_per_param; ++k) coords.push_back(rng.below(p->value.size()));
    }
    for (std::size_t i : coords) {
      const double orig = p->value[i];
      p->value[i] = orig + eps;
      const double fp = detail::eval_scalar(f);
      p->value[i] = orig - eps;
      const double fm = detail::eval_scalar(f);
      p->value[i] = orig;
      worst = std::max(worst, detail::relative_error(analytic[i], (fp - fm) / (2.0 * eps)));
    }
  }
  return worst;
}

}  // namespace stgcrl
