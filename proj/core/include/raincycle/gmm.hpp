#pragma once

#include <cstdint>
#include <vector>

namespace raincycle {

// Zero-mean Gaussian mixture over scalar residual values. Means are fixed at
// zero; only mixing weights and variances are free.
struct GmmModel {
  std::vector<double> pi;     // mixing weights, sum to 1
  std::vector<double> sigma;  // per-component variances
  bool floored = false;       // a component hit the variance floor while fitting

  int components() const { return static_cast<int>(pi.size()); }
  void validate() const;  // throws ConfigError on violated invariants

  // K components, equal weights, unit variances. First-epoch default before
  // any residuals exist to fit on.
  static GmmModel unit(int k);
};

// Mean negative log likelihood of samples under the mixture.
double gmm_mean_nll(const double* samples, size_t n, const GmmModel& model);
double gmm_mean_nll(const std::vector<double>& samples, const GmmModel& model);

struct EmResult {
  GmmModel model;
  std::vector<double> nll_trajectory;  // initial NLL, then one entry per iteration
};

// Zero-mean EM. Initial variances spread geometrically around the sample
// second moment with a small seeded jitter so components start distinct.
// Collapsed variances are floored at 1e-8 and flagged on the model.
EmResult gmm_em_fit(const std::vector<double>& samples, int k, int iters, uint64_t seed);

constexpr double kGmmVarianceFloor = 1e-8;

}  // namespace raincycle
