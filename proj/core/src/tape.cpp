#include "raincycle/tape.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstring>

#include "raincycle/gmm.hpp"

namespace raincycle {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<MatRM>;
using MapCM = Eigen::Map<const MatRM>;
using MapCV = Eigen::Map<const Eigen::VectorXd>;

Parameter::Parameter(std::string n, Tensor val, bool decay_)
    : name(std::move(n)),
      value(std::move(val)),
      grad(value.shape),
      m(value.shape),
      v(value.shape),
      decay(decay_) {}

void Parameter::zero_grad() { grad.fill(0.0); }

Var Tape::push(Tensor value) {
  Node n;
  n.grad = Tensor(value.shape);
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int32_t>(nodes_.size() - 1)};
}

Var Tape::leaf(Tensor value) { return push(std::move(value)); }

Var Tape::leaf(const Tensor& value, bool copy) {
  if (copy) return push(value);
  return push(value);
}

Var Tape::param(Parameter& p) {
  auto it = param_nodes_.find(&p);
  if (it != param_nodes_.end()) return Var{it->second};
  Var v = push(p.value);
  nodes_[static_cast<size_t>(v.id)].parameter = &p;
  param_nodes_.emplace(&p, v.id);
  return v;
}

const Tensor& Tape::val(Var v) const { return nodes_[static_cast<size_t>(v.id)].value; }

Tensor& Tape::grad(Var v) { return nodes_[static_cast<size_t>(v.id)].grad; }

// ---------------------------------------------------------------------------
// convolution

// valid ox range for xx = ox*stride + x0 staying inside [0, w)
static inline void ox_span(int x0, int stride, int w, int ow, int& lo, int& hi) {
  lo = x0 >= 0 ? 0 : (-x0 + stride - 1) / stride;
  const int room = w - x0;
  hi = room <= 0 ? 0 : (room + stride - 1) / stride;
  if (lo > ow) lo = ow;
  if (hi > ow) hi = ow;
  if (hi < lo) hi = lo;
}

// col layout: rows = (ic*KH + ky)*KW + kx, cols = oy*OW + ox
static void im2col(const Tensor& x, int kh, int kw, int stride, int pad, int oh,
                   int ow, double* col) {
  const int ic = x.dim(0), h = x.dim(1), w = x.dim(2);
  double* out = col;
  for (int c = 0; c < ic; ++c) {
    const double* src = x.data.data() + static_cast<size_t>(c) * h * w;
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx) {
        const int x0 = kx - pad;
        int lo, hi;
        ox_span(x0, stride, w, ow, lo, hi);
        for (int oy = 0; oy < oh; ++oy, out += ow) {
          const int y = oy * stride - pad + ky;
          if (y < 0 || y >= h) {
            std::fill(out, out + ow, 0.0);
            continue;
          }
          const double* row = src + static_cast<size_t>(y) * w;
          std::fill(out, out + lo, 0.0);
          if (stride == 1) {
            std::memcpy(out + lo, row + lo + x0, static_cast<size_t>(hi - lo) * sizeof(double));
          } else {
            for (int ox = lo; ox < hi; ++ox) out[ox] = row[ox * stride + x0];
          }
          std::fill(out + hi, out + ow, 0.0);
        }
      }
    }
  }
}

static void col2im_add(const double* col, int ic, int h, int w, int kh, int kw,
                       int stride, int pad, int oh, int ow, Tensor& dx) {
  const double* in = col;
  for (int c = 0; c < ic; ++c) {
    double* dst = dx.data.data() + static_cast<size_t>(c) * h * w;
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx) {
        const int x0 = kx - pad;
        int lo, hi;
        ox_span(x0, stride, w, ow, lo, hi);
        for (int oy = 0; oy < oh; ++oy, in += ow) {
          const int y = oy * stride - pad + ky;
          if (y < 0 || y >= h) continue;
          double* row = dst + static_cast<size_t>(y) * w + x0;
          if (stride == 1) {
            for (int ox = lo; ox < hi; ++ox) row[ox] += in[ox];
          } else {
            for (int ox = lo; ox < hi; ++ox) row[ox * stride] += in[ox];
          }
        }
      }
    }
  }
}

Var Tape::conv2d(Var xv, Var wv, Var bv, int stride, int pad) {
  const Tensor& x = val(xv);
  const Tensor& w = val(wv);
  const Tensor& b = val(bv);
  if (x.ndim() != 3) throw DimensionError("conv2d: input must be [C,H,W]");
  if (w.ndim() != 4) throw DimensionError("conv2d: weight must be [OC,IC,KH,KW]");
  if (w.dim(1) != x.dim(0)) {
    throw DimensionError("conv2d: channel mismatch, input " + x.shape_str() +
                         " vs weight " + w.shape_str());
  }
  const int oc = w.dim(0), ic = x.dim(0), kh = w.dim(2), kw = w.dim(3);
  if (b.ndim() != 1 || b.dim(0) != oc) throw DimensionError("conv2d: bad bias shape");
  const int h = x.dim(1), wd = x.dim(2);
  const int oh = (h + 2 * pad - kh) / stride + 1;
  const int ow = (wd + 2 * pad - kw) / stride + 1;
  if (h + 2 * pad < kh || wd + 2 * pad < kw || oh <= 0 || ow <= 0) {
    throw DimensionError("conv2d: input " + x.shape_str() + " too small for kernel");
  }
  const int ick = ic * kh * kw;
  const int64_t n = static_cast<int64_t>(oh) * ow;

  Tensor y({oc, oh, ow});
  const bool pointwise = (kh == 1 && kw == 1 && stride == 1 && pad == 0);
  {
    MapCM wm(w.data.data(), oc, ick);
    MapM ym(y.data.data(), oc, n);
    if (pointwise) {
      MapCM xm(x.data.data(), ic, n);
      ym.noalias() = wm * xm;
    } else {
      if (scratch_.size() < static_cast<size_t>(ick) * n)
        scratch_.resize(static_cast<size_t>(ick) * n);
      im2col(x, kh, kw, stride, pad, oh, ow, scratch_.data());
      MapCM cm(scratch_.data(), ick, n);
      ym.noalias() = wm * cm;
    }
    ym.colwise() += MapCV(b.data.data(), oc);
  }

  Var out = push(std::move(y));
  nodes_.back().back = [xv, wv, bv, out, stride, pad, pointwise](Tape& t) {
    const Tensor& xval = t.val(xv);
    const Tensor& wval = t.val(wv);
    const Tensor& g = t.grad(out);
    const int oc2 = wval.dim(0), ic2 = wval.dim(1), kh2 = wval.dim(2), kw2 = wval.dim(3);
    const int h2 = xval.dim(1), wd2 = xval.dim(2);
    const int oh2 = g.dim(1), ow2 = g.dim(2);
    const int ick2 = ic2 * kh2 * kw2;
    const int64_t n2 = static_cast<int64_t>(oh2) * ow2;

    MapCM gm(g.data.data(), oc2, n2);
    MapCM wm(wval.data.data(), oc2, ick2);
    MapM dwm(t.grad(wv).data.data(), oc2, ick2);
    // serial row sums: Eigen's vectorized redux splits on buffer alignment,
    // which would make repeat runs differ in the last ulp
    Tensor& db = t.grad(bv);
    for (int o = 0; o < oc2; ++o) {
      const double* row = g.data.data() + static_cast<size_t>(o) * static_cast<size_t>(n2);
      double s = 0.0;
      for (int64_t i = 0; i < n2; ++i) s += row[i];
      db.data[static_cast<size_t>(o)] += s;
    }

    if (pointwise) {
      MapCM xm(xval.data.data(), ic2, n2);
      dwm.noalias() += gm * xm.transpose();
      MapM dxm(t.grad(xv).data.data(), ic2, n2);
      dxm.noalias() += wm.transpose() * gm;
      return;
    }
    if (t.scratch_.size() < static_cast<size_t>(ick2) * n2)
      t.scratch_.resize(static_cast<size_t>(ick2) * n2);
    im2col(xval, kh2, kw2, stride, pad, oh2, ow2, t.scratch_.data());
    MapCM cm(t.scratch_.data(), ick2, n2);
    dwm.noalias() += gm * cm.transpose();

    if (t.scratch2_.size() < static_cast<size_t>(ick2) * n2)
      t.scratch2_.resize(static_cast<size_t>(ick2) * n2);
    MapM dcm(t.scratch2_.data(), ick2, n2);
    dcm.noalias() = wm.transpose() * gm;
    col2im_add(t.scratch2_.data(), ic2, h2, wd2, kh2, kw2, stride, pad, oh2, ow2, t.grad(xv));
  };
  return out;
}

// ---------------------------------------------------------------------------
// structure ops

Var Tape::upsample_nearest2(Var xv) {
  const Tensor& x = val(xv);
  if (x.ndim() != 3) throw DimensionError("upsample_nearest2: input must be [C,H,W]");
  const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
  Tensor y({c, 2 * h, 2 * w});
  for (int ch = 0; ch < c; ++ch) {
    for (int iy = 0; iy < h; ++iy) {
      for (int ix = 0; ix < w; ++ix) {
        const double v = x.at3(ch, iy, ix);
        y.at3(ch, 2 * iy, 2 * ix) = v;
        y.at3(ch, 2 * iy, 2 * ix + 1) = v;
        y.at3(ch, 2 * iy + 1, 2 * ix) = v;
        y.at3(ch, 2 * iy + 1, 2 * ix + 1) = v;
      }
    }
  }
  Var out = push(std::move(y));
  nodes_.back().back = [xv, out, c, h, w](Tape& t) {
    const Tensor& g = t.grad(out);
    Tensor& dx = t.grad(xv);
    for (int ch = 0; ch < c; ++ch) {
      for (int iy = 0; iy < h; ++iy) {
        for (int ix = 0; ix < w; ++ix) {
          dx.at3(ch, iy, ix) += g.at3(ch, 2 * iy, 2 * ix) + g.at3(ch, 2 * iy, 2 * ix + 1) +
                                g.at3(ch, 2 * iy + 1, 2 * ix) +
                                g.at3(ch, 2 * iy + 1, 2 * ix + 1);
        }
      }
    }
  };
  return out;
}

Var Tape::avg_pool2(Var xv) {
  const Tensor& x = val(xv);
  if (x.ndim() != 3) throw DimensionError("avg_pool2: input must be [C,H,W]");
  const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
  const int oh = h / 2, ow = w / 2;
  if (oh == 0 || ow == 0) throw DimensionError("avg_pool2: input too small");
  Tensor y({c, oh, ow});
  for (int ch = 0; ch < c; ++ch) {
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        y.at3(ch, oy, ox) = 0.25 * (x.at3(ch, 2 * oy, 2 * ox) + x.at3(ch, 2 * oy, 2 * ox + 1) +
                                    x.at3(ch, 2 * oy + 1, 2 * ox) +
                                    x.at3(ch, 2 * oy + 1, 2 * ox + 1));
      }
    }
  }
  Var out = push(std::move(y));
  nodes_.back().back = [xv, out, c, oh, ow](Tape& t) {
    const Tensor& g = t.grad(out);
    Tensor& dx = t.grad(xv);
    for (int ch = 0; ch < c; ++ch) {
      for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
          const double gv = 0.25 * g.at3(ch, oy, ox);
          dx.at3(ch, 2 * oy, 2 * ox) += gv;
          dx.at3(ch, 2 * oy, 2 * ox + 1) += gv;
          dx.at3(ch, 2 * oy + 1, 2 * ox) += gv;
          dx.at3(ch, 2 * oy + 1, 2 * ox + 1) += gv;
        }
      }
    }
  };
  return out;
}

Var Tape::concat_ch(const std::vector<Var>& xs) {
  if (xs.empty()) throw DimensionError("concat_ch: empty input list");
  const Tensor& first = val(xs[0]);
  if (first.ndim() != 3) throw DimensionError("concat_ch: inputs must be [C,H,W]");
  const int h = first.dim(1), w = first.dim(2);
  int ctot = 0;
  for (Var v : xs) {
    const Tensor& t = val(v);
    if (t.ndim() != 3 || t.dim(1) != h || t.dim(2) != w) {
      throw DimensionError("concat_ch: spatial mismatch");
    }
    ctot += t.dim(0);
  }
  Tensor y({ctot, h, w});
  const size_t plane = static_cast<size_t>(h) * w;
  size_t off = 0;
  for (Var v : xs) {
    const Tensor& t = val(v);
    std::copy(t.data.begin(), t.data.end(), y.data.begin() + off);
    off += static_cast<size_t>(t.dim(0)) * plane;
  }
  Var out = push(std::move(y));
  std::vector<Var> parents = xs;
  nodes_.back().back = [parents, out, plane](Tape& t) {
    const Tensor& g = t.grad(out);
    size_t o = 0;
    for (Var v : parents) {
      Tensor& dx = t.grad(v);
      const size_t len = dx.data.size();
      for (size_t i = 0; i < len; ++i) dx.data[i] += g.data[o + i];
      o += len;
    }
    (void)plane;
  };
  return out;
}

Var Tape::slice_ch(Var xv, int c0, int c1) {
  const Tensor& x = val(xv);
  if (x.ndim() != 3) throw DimensionError("slice_ch: input must be [C,H,W]");
  if (c0 < 0 || c1 <= c0 || c1 > x.dim(0)) throw DimensionError("slice_ch: bad channel range");
  const int h = x.dim(1), w = x.dim(2);
  const size_t plane = static_cast<size_t>(h) * w;
  const size_t off = static_cast<size_t>(c0) * plane;
  const size_t len = static_cast<size_t>(c1 - c0) * plane;
  Tensor y({c1 - c0, h, w});
  std::copy(x.data.begin() + off, x.data.begin() + off + len, y.data.begin());
  Var out = push(std::move(y));
  nodes_.back().back = [xv, out, off, len](Tape& t) {
    const Tensor& g = t.grad(out);
    Tensor& dx = t.grad(xv);
    for (size_t i = 0; i < len; ++i) dx.data[off + i] += g.data[i];
  };
  return out;
}

Var Tape::repeat_ch(Var xv, int n) {
  const Tensor& x = val(xv);
  if (x.ndim() != 3 || x.dim(0) != 1) throw DimensionError("repeat_ch: input must be [1,H,W]");
  const int h = x.dim(1), w = x.dim(2);
  const size_t plane = static_cast<size_t>(h) * w;
  Tensor y({n, h, w});
  for (int c = 0; c < n; ++c) {
    std::copy(x.data.begin(), x.data.end(), y.data.begin() + c * plane);
  }
  Var out = push(std::move(y));
  nodes_.back().back = [xv, out, n, plane](Tape& t) {
    const Tensor& g = t.grad(out);
    Tensor& dx = t.grad(xv);
    for (int c = 0; c < n; ++c) {
      const double* gp = g.data.data() + c * plane;
      for (size_t i = 0; i < plane; ++i) dx.data[i] += gp[i];
    }
  };
  return out;
}

// ---------------------------------------------------------------------------
// pointwise ops

Var Tape::sigmoid(Var xv) {
  Tensor y = val(xv);
  for (double& v : y.data) v = 1.0 / (1.0 + std::exp(-v));
  Var out = push(std::move(y));
  nodes_.back().back = [xv, out](Tape& t) {
    const Tensor& yv = t.val(out);
    const Tensor& g = t.grad(out);
    Tensor& dx = t.grad(xv);
    for (size_t i = 0; i < dx.data.size(); ++i) {
      dx.data[i] += g.data[i] * yv.data[i] * (1.0 - yv.data[i]);
    }
  };
  return out;
}

Var Tape::tanh_(Var xv) {
  Tensor y = val(xv);
  for (double& v : y.data) v = std::tanh(v);
  Var out = push(std::move(y));
  nodes_.back().back = [xv, out](Tape& t) {
    const Tensor& yv = t.val(out);
    const Tensor& g = t.grad(out);
    Tensor& dx = t.grad(xv);
    for (size_t i = 0; i < dx.data.size(); ++i) {
      dx.data[i] += g.data[i] * (1.0 - yv.data[i] * yv.data[i]);
    }
  };
  return out;
}

Var Tape::relu(Var xv) {
  Tensor y = val(xv);
  for (double& v : y.data) v = v > 0.0 ? v : 0.0;
  Var out = push(std::move(y));
  nodes_.back().back = [xv, out](Tape& t) {
    const Tensor& x = t.val(xv);
    const Tensor& g = t.grad(out);
    Tensor& dx = t.grad(xv);
    for (size_t i = 0; i < dx.data.size(); ++i) {
      if (x.data[i] > 0.0) dx.data[i] += g.data[i];
    }
  };
  return out;
}

Var Tape::leaky_relu(Var xv, double slope) {
  Tensor y = val(xv);
  for (double& v : y.data) v = v > 0.0 ? v : slope * v;
  Var out = push(std::move(y));
  nodes_.back().back = [xv, out, slope](Tape& t) {
    const Tensor& x = t.val(xv);
    const Tensor& g = t.grad(out);
    Tensor& dx = t.grad(xv);
    for (size_t i = 0; i < dx.data.size(); ++i) {
      dx.data[i] += g.data[i] * (x.data[i] > 0.0 ? 1.0 : slope);
    }
  };
  return out;
}

Var Tape::add(Var av, Var bv) {
  const Tensor& a = val(av);
  const Tensor& b = val(bv);
  require_same_shape(a, b, "add");
  Tensor y = a;
  for (size_t i = 0; i < y.data.size(); ++i) y.data[i] += b.data[i];
  Var out = push(std::move(y));
  nodes_.back().back = [av, bv, out](Tape& t) {
    const Tensor& g = t.grad(out);
    Tensor& da = t.grad(av);
    Tensor& db = t.grad(bv);
    for (size_t i = 0; i < g.data.size(); ++i) {
      da.data[i] += g.data[i];
      db.data[i] += g.data[i];
    }
  };
  return out;
}

Var Tape::sub(Var av, Var bv) {
  const Tensor& a = val(av);
  const Tensor& b = val(bv);
  require_same_shape(a, b, "sub");
  Tensor y = a;
  for (size_t i = 0; i < y.data.size(); ++i) y.data[i] -= b.data[i];
  Var out = push(std::move(y));
  nodes_.back().back = [av, bv, out](Tape& t) {
    const Tensor& g = t.grad(out);
    Tensor& da = t.grad(av);
    Tensor& db = t.grad(bv);
    for (size_t i = 0; i < g.data.size(); ++i) {
      da.data[i] += g.data[i];
      db.data[i] -= g.data[i];
    }
  };
  return out;
}

Var Tape::mul(Var av, Var bv) {
  const Tensor& a = val(av);
  const Tensor& b = val(bv);
  require_same_shape(a, b, "mul");
  Tensor y = a;
  for (size_t i = 0; i < y.data.size(); ++i) y.data[i] *= b.data[i];
  Var out = push(std::move(y));
  nodes_.back().back = [av, bv, out](Tape& t) {
    const Tensor& g = t.grad(out);
    const Tensor& a2 = t.val(av);
    const Tensor& b2 = t.val(bv);
    Tensor& da = t.grad(av);
    Tensor& db = t.grad(bv);
    for (size_t i = 0; i < g.data.size(); ++i) {
      da.data[i] += g.data[i] * b2.data[i];
      db.data[i] += g.data[i] * a2.data[i];
    }
  };
  return out;
}

Var Tape::scale(Var xv, double s) {
  Tensor y = val(xv);
  for (double& v : y.data) v *= s;
  Var out = push(std::move(y));
  nodes_.back().back = [xv, out, s](Tape& t) {
    const Tensor& g = t.grad(out);
    Tensor& dx = t.grad(xv);
    for (size_t i = 0; i < g.data.size(); ++i) dx.data[i] += s * g.data[i];
  };
  return out;
}

Var Tape::add_const(Var xv, double c) {
  Tensor y = val(xv);
  for (double& v : y.data) v += c;
  Var out = push(std::move(y));
  nodes_.back().back = [xv, out](Tape& t) {
    const Tensor& g = t.grad(out);
    Tensor& dx = t.grad(xv);
    for (size_t i = 0; i < g.data.size(); ++i) dx.data[i] += g.data[i];
  };
  return out;
}

Var Tape::clamp(Var xv, double lo, double hi) {
  Tensor y = val(xv);
  for (double& v : y.data) v = v < lo ? lo : (v > hi ? hi : v);
  Var out = push(std::move(y));
  nodes_.back().back = [xv, out, lo, hi](Tape& t) {
    const Tensor& x = t.val(xv);
    const Tensor& g = t.grad(out);
    Tensor& dx = t.grad(xv);
    for (size_t i = 0; i < g.data.size(); ++i) {
      if (x.data[i] > lo && x.data[i] < hi) dx.data[i] += g.data[i];
    }
  };
  return out;
}

Var Tape::log_(Var xv) {
  Tensor y = val(xv);
  for (double& v : y.data) v = std::log(v);
  Var out = push(std::move(y));
  nodes_.back().back = [xv, out](Tape& t) {
    const Tensor& x = t.val(xv);
    const Tensor& g = t.grad(out);
    Tensor& dx = t.grad(xv);
    for (size_t i = 0; i < g.data.size(); ++i) dx.data[i] += g.data[i] / x.data[i];
  };
  return out;
}

Var Tape::abs_(Var xv) {
  Tensor y = val(xv);
  for (double& v : y.data) v = std::fabs(v);
  Var out = push(std::move(y));
  nodes_.back().back = [xv, out](Tape& t) {
    const Tensor& x = t.val(xv);
    const Tensor& g = t.grad(out);
    Tensor& dx = t.grad(xv);
    for (size_t i = 0; i < g.data.size(); ++i) {
      const double s = x.data[i] > 0.0 ? 1.0 : (x.data[i] < 0.0 ? -1.0 : 0.0);
      dx.data[i] += s * g.data[i];
    }
  };
  return out;
}

Var Tape::square(Var xv) {
  Tensor y = val(xv);
  for (double& v : y.data) v *= v;
  Var out = push(std::move(y));
  nodes_.back().back = [xv, out](Tape& t) {
    const Tensor& x = t.val(xv);
    const Tensor& g = t.grad(out);
    Tensor& dx = t.grad(xv);
    for (size_t i = 0; i < g.data.size(); ++i) dx.data[i] += 2.0 * x.data[i] * g.data[i];
  };
  return out;
}

// ---------------------------------------------------------------------------
// reductions

Var Tape::mean(Var xv) {
  const Tensor& x = val(xv);
  double s = 0.0;
  for (double v : x.data) s += v;
  const double n = static_cast<double>(x.numel());
  Var out = push(Tensor::scalar(s / n));
  nodes_.back().back = [xv, out, n](Tape& t) {
    const double g = t.grad(out).data[0] / n;
    Tensor& dx = t.grad(xv);
    for (double& v : dx.data) v += g;
  };
  return out;
}

Var Tape::sum(Var xv) {
  const Tensor& x = val(xv);
  double s = 0.0;
  for (double v : x.data) s += v;
  Var out = push(Tensor::scalar(s));
  nodes_.back().back = [xv, out](Tape& t) {
    const double g = t.grad(out).data[0];
    Tensor& dx = t.grad(xv);
    for (double& v : dx.data) v += g;
  };
  return out;
}

// ---------------------------------------------------------------------------

Var Tape::gmm_nll(Var xv, const GmmModel& model) {
  model.validate();
  const Tensor& x = val(xv);
  const int k = model.components();
  std::vector<double> log_norm(static_cast<size_t>(k));
  const double log_two_pi = 1.8378770664093454835606594728112;
  for (int j = 0; j < k; ++j) {
    log_norm[static_cast<size_t>(j)] =
        std::log(model.pi[static_cast<size_t>(j)]) -
        0.5 * (log_two_pi + std::log(model.sigma[static_cast<size_t>(j)]));
  }
  const double n = static_cast<double>(x.numel());
  double total = 0.0;
  for (double v : x.data) {
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
  Var out = push(Tensor::scalar(-total / n));
  GmmModel mcopy = model;
  nodes_.back().back = [xv, out, mcopy, log_norm, n](Tape& t) {
    const double g = t.grad(out).data[0];
    const Tensor& x2 = t.val(xv);
    Tensor& dx = t.grad(xv);
    const int kk = mcopy.components();
    for (size_t i = 0; i < x2.data.size(); ++i) {
      const double v = x2.data[i];
      double mx = -1e300;
      for (int j = 0; j < kk; ++j) {
        const double l = log_norm[static_cast<size_t>(j)] -
                         0.5 * v * v / mcopy.sigma[static_cast<size_t>(j)];
        if (l > mx) mx = l;
      }
      double denom = 0.0, num = 0.0;
      for (int j = 0; j < kk; ++j) {
        const double e = std::exp(log_norm[static_cast<size_t>(j)] -
                                  0.5 * v * v / mcopy.sigma[static_cast<size_t>(j)] - mx);
        denom += e;
        num += e / mcopy.sigma[static_cast<size_t>(j)];
      }
      // d/dv of -log sum_k pi_k N(v|0,s_k) = v * sum_k gamma_k / s_k
      dx.data[i] += g * v * (num / denom) / n;
    }
  };
  return out;
}

void Tape::backward(Var root) {
  if (!root.valid()) throw NumericError("backward: invalid root");
  Node& r = nodes_[static_cast<size_t>(root.id)];
  if (r.value.numel() != 1) throw NumericError("backward: root must be scalar");
  r.grad.data[0] = 1.0;
  for (int32_t i = root.id; i >= 0; --i) {
    Node& n = nodes_[static_cast<size_t>(i)];
    if (n.back) n.back(*this);
  }
}

void Tape::collect_param_grads() {
  for (Node& n : nodes_) {
    if (!n.parameter) continue;
    Tensor& pg = n.parameter->grad;
    for (size_t i = 0; i < pg.data.size(); ++i) pg.data[i] += n.grad.data[i];
  }
}

}  // namespace raincycle
