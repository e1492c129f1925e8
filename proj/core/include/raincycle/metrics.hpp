#pragma once

#include <string>
#include <vector>

#include "raincycle/image.hpp"

namespace raincycle {

// Both metrics quantize to 8 bits first, matching how deraining tables are
// scored. luma=true converts to BT.601 luma before comparing.

// 10*log10(peak^2 / MSE); +inf when the quantized images are identical
double psnr(const Image& a, const Image& b, double peak = 255.0, bool luma = false);

// 11x11 Gaussian window, sigma 1.5, K1 0.01, K2 0.03, L 255, valid region
// only, channel-averaged
double ssim(const Image& a, const Image& b, bool luma = false);

struct MetricRow {
  std::string name;
  double psnr_db = 0.0;
  double ssim_val = 0.0;
};

struct MetricReport {
  std::vector<MetricRow> rows;
  double mean_psnr = 0.0;  // infinite rows are skipped in the mean
  double mean_ssim = 0.0;

  void finalize();
  std::string to_csv() const;  // filename, psnr_db, ssim + summary row
};

}  // namespace raincycle
