#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "raincycle/tape.hpp"

namespace raincycle {

constexpr double kGradStep = 1e-5;
constexpr double kGradTol = 1e-3;

// Relative error with a small floor so near-zero gradients degrade to an
// absolute comparison instead of dividing by noise.
inline double grad_rel_err(double fd, double an) {
  const double denom = std::max({std::abs(fd), std::abs(an), 1e-6});
  return std::abs(fd - an) / denom;
}

// Central finite differences of a scalar-valued graph w.r.t. its leaf
// inputs. f must rebuild the graph from the given leaves on every call.
inline double gradcheck_inputs(
    const std::function<Var(Tape&, const std::vector<Var>&)>& f,
    std::vector<Tensor> inputs, double step = kGradStep) {
  auto eval = [&]() {
    Tape t;
    std::vector<Var> xs;
    xs.reserve(inputs.size());
    for (const Tensor& in : inputs) xs.push_back(t.leaf(in));
    return t.val(f(t, xs))[0];
  };

  Tape t;
  std::vector<Var> xs;
  xs.reserve(inputs.size());
  for (const Tensor& in : inputs) xs.push_back(t.leaf(in));
  const Var out = f(t, xs);
  t.backward(out);
  std::vector<Tensor> analytic;
  analytic.reserve(xs.size());
  for (Var x : xs) analytic.push_back(t.grad(x));

  double worst = 0.0;
  for (size_t i = 0; i < inputs.size(); ++i) {
    for (int64_t j = 0; j < inputs[i].numel(); ++j) {
      const double keep = inputs[i][j];
      inputs[i][j] = keep + step;
      const double fp = eval();
      inputs[i][j] = keep - step;
      const double fm = eval();
      inputs[i][j] = keep;
      const double fd = (fp - fm) / (2.0 * step);
      worst = std::max(worst, grad_rel_err(fd, analytic[i][j]));
    }
  }
  return worst;
}

// Same idea for trainable parameters: f rebuilds the forward on a fresh tape
// around the live parameter storage, which gets perturbed in place.
inline double gradcheck_params(const std::function<Var(Tape&)>& f,
                               const std::vector<Parameter*>& params,
                               double step = kGradStep) {
  auto eval = [&]() {
    Tape t;
    return t.val(f(t))[0];
  };

  for (Parameter* p : params) p->zero_grad();
  {
    Tape t;
    const Var out = f(t);
    t.backward(out);
    t.collect_param_grads();
  }

  double worst = 0.0;
  for (Parameter* p : params) {
    for (int64_t j = 0; j < p->value.numel(); ++j) {
      const double keep = p->value[j];
      p->value[j] = keep + step;
      const double fp = eval();
      p->value[j] = keep - step;
      const double fm = eval();
      p->value[j] = keep;
      const double fd = (fp - fm) / (2.0 * step);
      worst = std::max(worst, grad_rel_err(fd, p->grad[j]));
    }
  }
  return worst;
}

inline Tensor random_tensor(const std::vector<int>& shape, Rng& rng, double lo = -1.0,
                            double hi = 1.0) {
  Tensor t(shape);
  for (double& v : t.data) v = rng.uniform(lo, hi);
  return t;
}

}  // namespace raincycle
