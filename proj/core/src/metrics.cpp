#include "raincycle/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <limits>

#include "raincycle/error.hpp"

namespace raincycle {

namespace {

// quantized planes, one per compared channel, values 0..255
std::vector<std::vector<double>> planes(const Image& img, bool luma) {
  const int c = img.channels(), h = img.height(), w = img.width();
  std::vector<std::vector<double>> out;
  if (luma && c == 3) {
    std::vector<double> y(static_cast<size_t>(h) * w);
    for (int i = 0; i < h; ++i) {
      for (int j = 0; j < w; ++j) {
        const double r = quantize8(img.at(0, i, j));
        const double g = quantize8(img.at(1, i, j));
        const double b = quantize8(img.at(2, i, j));
        y[static_cast<size_t>(i) * w + j] = 0.299 * r + 0.587 * g + 0.114 * b;
      }
    }
    out.push_back(std::move(y));
    return out;
  }
  for (int ch = 0; ch < c; ++ch) {
    std::vector<double> p(static_cast<size_t>(h) * w);
    for (int i = 0; i < h; ++i) {
      for (int j = 0; j < w; ++j) {
        p[static_cast<size_t>(i) * w + j] = quantize8(img.at(ch, i, j));
      }
    }
    out.push_back(std::move(p));
  }
  return out;
}

void require_comparable(const Image& a, const Image& b, const char* where) {
  if (a.channels() != b.channels() || a.height() != b.height() || a.width() != b.width()) {
    throw DimensionError(std::string(where) + ": shape mismatch " + a.t.shape_str() +
                         " vs " + b.t.shape_str());
  }
}

std::vector<double> gaussian_kernel11() {
  std::vector<double> k(11);
  const double sigma = 1.5;
  double sum = 0.0;
  for (int i = 0; i < 11; ++i) {
    const double d = i - 5.0;
    k[static_cast<size_t>(i)] = std::exp(-d * d / (2.0 * sigma * sigma));
    sum += k[static_cast<size_t>(i)];
  }
  for (double& v : k) v /= sum;
  return k;
}

// separable valid-region filter, output (h-10) x (w-10)
std::vector<double> filter_valid(const std::vector<double>& img, int h, int w,
                                 const std::vector<double>& k) {
  const int oh = h - 10, ow = w - 10;
  std::vector<double> tmp(static_cast<size_t>(h) * ow);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int i = 0; i < 11; ++i) s += k[static_cast<size_t>(i)] * img[static_cast<size_t>(y) * w + x + i];
      tmp[static_cast<size_t>(y) * ow + x] = s;
    }
  }
  std::vector<double> out(static_cast<size_t>(oh) * ow);
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int i = 0; i < 11; ++i) s += k[static_cast<size_t>(i)] * tmp[static_cast<size_t>(y + i) * ow + x];
      out[static_cast<size_t>(y) * ow + x] = s;
    }
  }
  return out;
}

}  // namespace

double psnr(const Image& a, const Image& b, double peak, bool luma) {
  require_comparable(a, b, "psnr");
  if (!(peak > 0.0)) throw ConfigError("psnr: peak must be > 0");
  const auto pa = planes(a, luma);
  const auto pb = planes(b, luma);
  double se = 0.0;
  size_t n = 0;
  for (size_t c = 0; c < pa.size(); ++c) {
    for (size_t i = 0; i < pa[c].size(); ++i) {
      const double d = pa[c][i] - pb[c][i];
      se += d * d;
    }
    n += pa[c].size();
  }
  if (se == 0.0) return std::numeric_limits<double>::infinity();
  const double mse = se / static_cast<double>(n);
  return 10.0 * std::log10(peak * peak / mse);
}

double ssim(const Image& a, const Image& b, bool luma) {
  require_comparable(a, b, "ssim");
  if (a.height() < 11 || a.width() < 11) {
    throw DimensionError("ssim: image smaller than the 11x11 window");
  }
  const double L = 255.0;
  const double c1 = (0.01 * L) * (0.01 * L);
  const double c2 = (0.03 * L) * (0.03 * L);
  const auto pa = planes(a, luma);
  const auto pb = planes(b, luma);
  const auto k = gaussian_kernel11();
  const int h = a.height(), w = a.width();

  double total = 0.0;
  for (size_t c = 0; c < pa.size(); ++c) {
    const auto& x = pa[c];
    const auto& y = pb[c];
    std::vector<double> xx(x.size()), yy(x.size()), xy(x.size());
    for (size_t i = 0; i < x.size(); ++i) {
      xx[i] = x[i] * x[i];
      yy[i] = y[i] * y[i];
      xy[i] = x[i] * y[i];
    }
    const auto mx = filter_valid(x, h, w, k);
    const auto my = filter_valid(y, h, w, k);
    const auto mxx = filter_valid(xx, h, w, k);
    const auto myy = filter_valid(yy, h, w, k);
    const auto mxy = filter_valid(xy, h, w, k);
    double s = 0.0;
    for (size_t i = 0; i < mx.size(); ++i) {
      const double vx = mxx[i] - mx[i] * mx[i];
      const double vy = myy[i] - my[i] * my[i];
      const double cov = mxy[i] - mx[i] * my[i];
      s += ((2.0 * mx[i] * my[i] + c1) * (2.0 * cov + c2)) /
           ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
    }
    total += s / static_cast<double>(mx.size());
  }
  return total / static_cast<double>(pa.size());
}

void MetricReport::finalize() {
  double ps = 0.0, ss = 0.0;
  size_t np = 0;
  for (const MetricRow& r : rows) {
    if (std::isfinite(r.psnr_db)) {
      ps += r.psnr_db;
      ++np;
    }
    ss += r.ssim_val;
  }
  mean_psnr = np ? ps / static_cast<double>(np) : std::numeric_limits<double>::infinity();
  mean_ssim = rows.empty() ? 0.0 : ss / static_cast<double>(rows.size());
}

std::string MetricReport::to_csv() const {
  std::string out = "filename,psnr_db,ssim\n";
  char buf[128];
  for (const MetricRow& r : rows) {
    if (std::isfinite(r.psnr_db)) {
      std::snprintf(buf, sizeof(buf), "%s,%.6f,%.6f\n", r.name.c_str(), r.psnr_db,
                    r.ssim_val);
    } else {
      std::snprintf(buf, sizeof(buf), "%s,inf,%.6f\n", r.name.c_str(), r.ssim_val);
    }
    out += buf;
  }
  if (std::isfinite(mean_psnr)) {
    std::snprintf(buf, sizeof(buf), "mean,%.6f,%.6f\n", mean_psnr, mean_ssim);
  } else {
    std::snprintf(buf, sizeof(buf), "mean,inf,%.6f\n", mean_ssim);
  }
  out += buf;
  return out;
}

}  // namespace raincycle
