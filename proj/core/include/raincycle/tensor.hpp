#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

#include "raincycle/error.hpp"

namespace raincycle {

// Dense row-major f64 tensor. Conventions used throughout:
//   feature maps   [C, H, W]
//   conv weights   [OC, IC, KH, KW]
//   biases/vectors [N]
//   scalars        [1]
struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s, double fill = 0.0);
  static Tensor scalar(double v);

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  int dim(int i) const { return shape[static_cast<size_t>(i)]; }
  int ndim() const { return static_cast<int>(shape.size()); }

  double& operator[](int64_t i) { return data[static_cast<size_t>(i)]; }
  double operator[](int64_t i) const { return data[static_cast<size_t>(i)]; }

  // [C,H,W] accessors
  double& at3(int c, int y, int x) {
    return data[(static_cast<size_t>(c) * dim(1) + y) * dim(2) + x];
  }
  double at3(int c, int y, int x) const {
    return data[(static_cast<size_t>(c) * dim(1) + y) * dim(2) + x];
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
  bool all_finite() const;
  void fill(double v);
  std::string shape_str() const;
};

int64_t shape_numel(const std::vector<int>& shape);

void require_same_shape(const Tensor& a, const Tensor& b, const char* where);

// Deterministic RNG with hand-rolled distributions so that draws depend only
// on the engine, never on the standard library's distribution internals.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed == 0 ? 0x9e3779b97f4a7c15ull : seed) {}

  uint64_t next_u64();
  double uniform();                       // [0, 1)
  double uniform(double lo, double hi);   // [lo, hi)
  int64_t uniform_int(int64_t n);         // [0, n)
  double normal();                        // standard normal, Box-Muller
  double normal(double mean, double stddev);
  // Gaussian truncated to [lo, hi] by rejection.
  double truncated_normal(double mean, double stddev, double lo, double hi);

  // Derives an independent stream seed from a base seed and stream tags.
  static uint64_t derive(uint64_t seed, uint64_t a, uint64_t b = 0, uint64_t c = 0);

 private:
  uint64_t state_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace raincycle
