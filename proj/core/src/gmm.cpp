#include "raincycle/gmm.hpp"

#include <algorithm>
#include <cmath>

#include "raincycle/error.hpp"
#include "raincycle/tensor.hpp"

namespace raincycle {

namespace {
constexpr double kLogTwoPi = 1.8378770664093454835606594728112;
}

void GmmModel::validate() const {
  if (pi.empty() || pi.size() != sigma.size()) {
    throw ConfigError("gmm: need K >= 1 components with matching weight/variance counts");
  }
  double s = 0.0;
  for (double p : pi) {
    if (!(p >= 0.0)) throw ConfigError("gmm: mixing weights must be non-negative");
    s += p;
  }
  if (std::fabs(s - 1.0) > 1e-9) throw ConfigError("gmm: mixing weights must sum to 1");
  for (double v : sigma) {
    if (!(v > 0.0)) throw ConfigError("gmm: variances must be positive");
  }
}

GmmModel GmmModel::unit(int k) {
  if (k < 1) throw ConfigError("gmm: K must be >= 1");
  GmmModel m;
  m.pi.assign(static_cast<size_t>(k), 1.0 / k);
  m.sigma.assign(static_cast<size_t>(k), 1.0);
  return m;
}

double gmm_mean_nll(const double* samples, size_t n, const GmmModel& model) {
  model.validate();
  if (n == 0) throw ConfigError("gmm: no samples");
  const int k = model.components();
  std::vector<double> log_norm(static_cast<size_t>(k));
  for (int j = 0; j < k; ++j) {
    log_norm[static_cast<size_t>(j)] =
        std::log(model.pi[static_cast<size_t>(j)]) -
        0.5 * (kLogTwoPi + std::log(model.sigma[static_cast<size_t>(j)]));
  }
  double total = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double v = samples[i];
    double mx = -1e300;
    for (int j = 0; j < k; ++j) {
      const double l = log_norm[static_cast<size_t>(j)] -
                       0.5 * v * v / model.sigma[static_cast<size_t>(j)];
      if (l > mx) mx = l;
    }
    double acc = 0.0;
    for (int j = 0; j < k; ++j) {
      const double l = log_norm[static_cast<size_t>(j)] -
                       0.5 * v * v / model.sigma[static_cast<size_t>(j)];
      acc += std::exp(l - mx);
    }
    total += mx + std::log(acc);
  }
  return -total / static_cast<double>(n);
}

double gmm_mean_nll(const std::vector<double>& samples, const GmmModel& model) {
  return gmm_mean_nll(samples.data(), samples.size(), model);
}

EmResult gmm_em_fit(const std::vector<double>& samples, int k, int iters, uint64_t seed) {
  if (k < 1) throw ConfigError("gmm: K must be >= 1");
  if (iters < 1) throw ConfigError("gmm: iters must be >= 1");
  const size_t n = samples.size();
  if (n < static_cast<size_t>(k)) throw ConfigError("gmm: need at least K samples");

  double m2 = 0.0;
  for (double v : samples) m2 += v * v;
  m2 /= static_cast<double>(n);
  if (m2 < kGmmVarianceFloor) m2 = kGmmVarianceFloor;

  EmResult res;
  GmmModel& model = res.model;
  model.pi.assign(static_cast<size_t>(k), 1.0 / k);
  model.sigma.resize(static_cast<size_t>(k));
  Rng rng(seed);
  for (int j = 0; j < k; ++j) {
    // geometric spread around the second moment; jitter breaks exact symmetry
    const double expo = k == 1 ? 0.0 : (j - 0.5 * (k - 1)) / (0.5 * (k - 1));
    const double jitter = k == 1 ? 1.0 : std::exp(0.1 * rng.uniform(-1.0, 1.0));
    model.sigma[static_cast<size_t>(j)] = m2 * std::pow(4.0, expo) * jitter;
  }

  std::vector<double> log_norm(static_cast<size_t>(k));
  std::vector<double> nk(static_cast<size_t>(k));
  std::vector<double> sk(static_cast<size_t>(k));
  std::vector<double> le(static_cast<size_t>(k));

  res.nll_trajectory.push_back(gmm_mean_nll(samples.data(), n, model));
  for (int it = 0; it < iters; ++it) {
    for (int j = 0; j < k; ++j) {
      const double p = model.pi[static_cast<size_t>(j)];
      log_norm[static_cast<size_t>(j)] =
          (p > 0.0 ? std::log(p) : -1e300) -
          0.5 * (kLogTwoPi + std::log(model.sigma[static_cast<size_t>(j)]));
    }
    std::fill(nk.begin(), nk.end(), 0.0);
    std::fill(sk.begin(), sk.end(), 0.0);
    for (size_t i = 0; i < n; ++i) {
      const double v = samples[i];
      double mx = -1e300;
      for (int j = 0; j < k; ++j) {
        le[static_cast<size_t>(j)] = log_norm[static_cast<size_t>(j)] -
                                     0.5 * v * v / model.sigma[static_cast<size_t>(j)];
        if (le[static_cast<size_t>(j)] > mx) mx = le[static_cast<size_t>(j)];
      }
      double denom = 0.0;
      for (int j = 0; j < k; ++j) {
        le[static_cast<size_t>(j)] = std::exp(le[static_cast<size_t>(j)] - mx);
        denom += le[static_cast<size_t>(j)];
      }
      for (int j = 0; j < k; ++j) {
        const double g = le[static_cast<size_t>(j)] / denom;
        nk[static_cast<size_t>(j)] += g;
        sk[static_cast<size_t>(j)] += g * v * v;
      }
    }
    for (int j = 0; j < k; ++j) {
      model.pi[static_cast<size_t>(j)] = nk[static_cast<size_t>(j)] / static_cast<double>(n);
      if (nk[static_cast<size_t>(j)] > 1e-300) {
        double v = sk[static_cast<size_t>(j)] / nk[static_cast<size_t>(j)];
        if (v < kGmmVarianceFloor) {
          v = kGmmVarianceFloor;
          model.floored = true;
        }
        model.sigma[static_cast<size_t>(j)] = v;
      }
    }
    res.nll_trajectory.push_back(gmm_mean_nll(samples.data(), n, model));
  }
  return res;
}

}  // namespace raincycle
