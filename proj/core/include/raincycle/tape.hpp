#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "raincycle/tensor.hpp"

namespace raincycle {

// A trainable tensor plus its gradient and optimizer moments. Owned by the
// model modules; tapes reference it through param().
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  Tensor m, v;        // Adam first/second moments
  bool decay = true;  // decoupled weight decay applies (biases opt out)

  Parameter() = default;
  Parameter(std::string n, Tensor val, bool decay_ = true);
  void zero_grad();
};

struct Var {
  int32_t id = -1;
  bool valid() const { return id >= 0; }
};

struct GmmModel;  // gmm.hpp

// Reverse-mode autodiff tape over f64 tensors. Every op appends a node, so
// creation order is a topological order; backward() walks it in reverse.
// Single-threaded by design: one tape = one forward/backward pass.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Tensor value);           // constant input, no upstream gradient
  Var leaf(const Tensor& value, bool copy);
  Var param(Parameter& p);          // trainable leaf; one node per Parameter per tape

  const Tensor& val(Var v) const;
  Tensor& grad(Var v);

  // --- structure ---
  // x:[IC,H,W], w:[OC,IC,KH,KW], b:[OC] -> [OC,OH,OW]
  Var conv2d(Var x, Var w, Var b, int stride, int pad);
  Var upsample_nearest2(Var x);               // [C,H,W] -> [C,2H,2W]
  Var avg_pool2(Var x);                       // [C,H,W] -> [C,H/2,W/2], floor
  Var concat_ch(const std::vector<Var>& xs);  // channel concat
  Var slice_ch(Var x, int c0, int c1);        // channels [c0,c1) of [C,H,W]
  Var repeat_ch(Var x, int n);                // [1,H,W] -> [n,H,W]

  // --- pointwise ---
  Var sigmoid(Var x);
  Var tanh_(Var x);
  Var relu(Var x);
  Var leaky_relu(Var x, double slope);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var x, double s);
  Var add_const(Var x, double c);
  Var clamp(Var x, double lo, double hi);  // gradient passes strictly inside
  Var log_(Var x);
  Var abs_(Var x);
  Var square(Var x);

  // --- reductions ---
  Var mean(Var x);  // scalar
  Var sum(Var x);   // scalar

  // --- compositions ---
  Var mse(Var a, Var b) { return mean(square(sub(a, b))); }
  Var mae(Var a, Var b) { return mean(abs_(sub(a, b))); }

  // Per-sample mean negative log likelihood of a zero-mean Gaussian mixture,
  // differentiable w.r.t. x. Mixture parameters are constants.
  Var gmm_nll(Var x, const GmmModel& model);

  void backward(Var root);      // root must be scalar; seeds d(root)=1
  void collect_param_grads();   // accumulates node grads into Parameter::grad
  size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::function<void(Tape&)> back;  // adds into parents' grads
    Parameter* parameter = nullptr;
  };

  Var push(Tensor value);
  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, int32_t> param_nodes_;
  std::vector<double> scratch_;   // im2col buffer shared across conv nodes
  std::vector<double> scratch2_;  // dcol buffer shared across conv backwards
};

}  // namespace raincycle
