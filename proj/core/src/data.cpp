#include "raincycle/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numeric>

#include <nlohmann/json.hpp>

#include "raincycle/error.hpp"

namespace fs = std::filesystem;

namespace raincycle {

std::vector<std::string> list_pngs(const std::string& dir) {
  if (!fs::is_directory(dir)) {
    throw DatasetError("dataset: directory missing: " + dir);
  }
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".png") {
      names.push_back(e.path().filename().string());
    }
  }
  if (names.empty()) throw DatasetError("dataset: no PNG files in " + dir);
  std::sort(names.begin(), names.end());
  return names;
}

RainSynthSpec RainSynthSpec::from_config(const TrainingConfig& cfg, uint64_t seed) {
  RainSynthSpec s;
  s.density = cfg.rain_density;
  s.len_min = cfg.rain_len_min;
  s.len_max = cfg.rain_len_max;
  s.angle_min = cfg.rain_angle_min;
  s.angle_max = cfg.rain_angle_max;
  s.width = cfg.rain_width;
  s.intensity_min = cfg.rain_intensity_min;
  s.intensity_max = cfg.rain_intensity_max;
  s.seed = seed;
  return s;
}

SynthRainResult synth_rain(const Image& clean, const RainSynthSpec& spec) {
  if (spec.len_min > spec.len_max || spec.angle_min > spec.angle_max ||
      spec.intensity_min > spec.intensity_max) {
    throw ConfigError("synth_rain: parameter ranges must be ordered");
  }
  if (spec.intensity_min < 0.0) throw ConfigError("synth_rain: intensity must be >= 0");
  const int h = clean.height(), w = clean.width();
  Image streak(1, h, w);
  Rng rng(spec.seed);
  const double megapixels = static_cast<double>(h) * w / 1e6;
  const int count = static_cast<int>(std::llround(spec.density * megapixels));
  const double sigma = spec.width * 0.5;
  const double reach = spec.width * 2.0;  // beyond this the profile is negligible

  for (int s = 0; s < count; ++s) {
    const double cx = rng.uniform(0.0, static_cast<double>(w));
    const double cy = rng.uniform(0.0, static_cast<double>(h));
    const double ang = rng.uniform(spec.angle_min, spec.angle_max) * M_PI / 180.0;
    const double len = rng.uniform(spec.len_min, spec.len_max);
    const double amp = rng.uniform(spec.intensity_min, spec.intensity_max);
    const double dx = std::cos(ang), dy = std::sin(ang);
    const double x0 = cx - 0.5 * len * dx, y0 = cy - 0.5 * len * dy;
    const double x1 = cx + 0.5 * len * dx, y1 = cy + 0.5 * len * dy;

    const int bx0 = std::max(0, static_cast<int>(std::floor(std::min(x0, x1) - reach)));
    const int bx1 = std::min(w - 1, static_cast<int>(std::ceil(std::max(x0, x1) + reach)));
    const int by0 = std::max(0, static_cast<int>(std::floor(std::min(y0, y1) - reach)));
    const int by1 = std::min(h - 1, static_cast<int>(std::ceil(std::max(y0, y1) + reach)));
    const double seg_len2 = len * len;

    for (int y = by0; y <= by1; ++y) {
      for (int x = bx0; x <= bx1; ++x) {
        // distance from pixel center to the segment
        const double px = x + 0.5 - x0, py = y + 0.5 - y0;
        double tproj = (px * (x1 - x0) + py * (y1 - y0)) / seg_len2;
        tproj = std::clamp(tproj, 0.0, 1.0);
        const double ex = px - tproj * (x1 - x0), ey = py - tproj * (y1 - y0);
        const double d2 = ex * ex + ey * ey;
        if (d2 > reach * reach) continue;
        streak.at(0, y, x) += amp * std::exp(-d2 / (2.0 * sigma * sigma));
      }
    }
  }

  SynthRainResult out;
  out.streak = streak;
  out.rainy = Image(clean.channels(), h, w);
  for (int c = 0; c < clean.channels(); ++c) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        out.rainy.at(c, y, x) = std::clamp(clean.at(c, y, x) + streak.at(0, y, x), -1.0, 1.0);
      }
    }
  }
  return out;
}

Image toy_clean_image(int size, uint64_t seed) {
  Rng rng(seed);
  Image img(3, size, size);
  // linear gradient between two random colors along a random direction
  double ca[3], cb[3];
  for (int c = 0; c < 3; ++c) {
    ca[c] = rng.uniform(-0.9, 0.5);
    cb[c] = rng.uniform(-0.9, 0.5);
  }
  const double ga = rng.uniform(0.0, 2.0 * M_PI);
  const double gx = std::cos(ga), gy = std::sin(ga);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const double u = ((x * gx + y * gy) / size + 1.0) * 0.5;
      for (int c = 0; c < 3; ++c) img.at(c, y, x) = ca[c] + (cb[c] - ca[c]) * u;
    }
  }
  // a few solid shapes
  const int shapes = 3 + static_cast<int>(rng.uniform_int(4));
  for (int s = 0; s < shapes; ++s) {
    const bool circle = rng.uniform() < 0.5;
    const double sx = rng.uniform(0.0, size), sy = rng.uniform(0.0, size);
    const double rad = rng.uniform(size * 0.06, size * 0.22);
    double col[3];
    for (int c = 0; c < 3; ++c) col[c] = rng.uniform(-0.9, 0.6);
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        const double ddx = x - sx, ddy = y - sy;
        const bool inside = circle ? (ddx * ddx + ddy * ddy < rad * rad)
                                   : (std::fabs(ddx) < rad && std::fabs(ddy) < rad);
        if (inside) {
          for (int c = 0; c < 3; ++c) img.at(c, y, x) = col[c];
        }
      }
    }
  }
  // low-frequency texture
  const double fx = rng.uniform(1.0, 3.0), fy = rng.uniform(1.0, 3.0);
  const double ph = rng.uniform(0.0, 2.0 * M_PI);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const double tex =
          0.08 * std::sin(2.0 * M_PI * (fx * x + fy * y) / size + ph);
      for (int c = 0; c < 3; ++c) {
        img.at(c, y, x) = std::clamp(img.at(c, y, x) + tex, -1.0, 1.0);
      }
    }
  }
  return img;
}

std::vector<std::pair<int, int>> unpaired_pair_indices(int n_rain, int n_norain,
                                                       uint64_t seed, uint64_t epoch) {
  if (n_rain < 1 || n_norain < 1) throw DatasetError("dataset: empty domain");
  std::vector<int> pr(static_cast<size_t>(n_rain)), pn(static_cast<size_t>(n_norain));
  std::iota(pr.begin(), pr.end(), 0);
  std::iota(pn.begin(), pn.end(), 0);
  Rng rr(Rng::derive(seed, 5001, epoch, 0));
  Rng rn(Rng::derive(seed, 5001, epoch, 1));
  for (int i = n_rain - 1; i > 0; --i) {
    std::swap(pr[static_cast<size_t>(i)], pr[static_cast<size_t>(rr.uniform_int(i + 1))]);
  }
  for (int i = n_norain - 1; i > 0; --i) {
    std::swap(pn[static_cast<size_t>(i)], pn[static_cast<size_t>(rn.uniform_int(i + 1))]);
  }
  const int steps = std::max(n_rain, n_norain);
  std::vector<std::pair<int, int>> out;
  out.reserve(static_cast<size_t>(steps));
  for (int i = 0; i < steps; ++i) {
    out.emplace_back(pr[static_cast<size_t>(i % n_rain)], pn[static_cast<size_t>(i % n_norain)]);
  }
  return out;
}

std::vector<PairedSample> load_paired(const std::string& root) {
  const std::string rain = root + "/rain";
  const std::string norain = root + "/norain";
  const std::vector<std::string> ra = list_pngs(rain);
  const std::vector<std::string> nb = list_pngs(norain);
  std::vector<std::string> only_rain, only_norain, both;
  std::set_difference(ra.begin(), ra.end(), nb.begin(), nb.end(), std::back_inserter(only_rain));
  std::set_difference(nb.begin(), nb.end(), ra.begin(), ra.end(), std::back_inserter(only_norain));
  std::set_intersection(ra.begin(), ra.end(), nb.begin(), nb.end(), std::back_inserter(both));
  if (!only_rain.empty() || !only_norain.empty()) {
    std::string msg = "dataset: unmatched paired files:";
    for (const std::string& n : only_rain) msg += " rain/" + n;
    for (const std::string& n : only_norain) msg += " norain/" + n;
    throw DatasetError(msg);
  }
  if (both.empty()) throw DatasetError("dataset: no filename-matched pairs in " + root);
  std::vector<PairedSample> out;
  for (const std::string& name : both) {
    PairedSample s;
    s.name = name;
    s.rainy = load_png(rain + "/" + name).replicate_gray();
    s.clean = load_png(norain + "/" + name).replicate_gray();
    out.push_back(std::move(s));
  }
  return out;
}

void write_toy_dataset(const std::string& out_root, const TrainingConfig& cfg) {
  const std::string rain = out_root + "/rain";
  const std::string norain = out_root + "/norain";
  const std::string pt_rain = out_root + "/paired_test/rain";
  const std::string pt_norain = out_root + "/paired_test/norain";
  for (const std::string& d : {rain, norain, pt_rain, pt_norain}) {
    std::error_code ec;
    fs::create_directories(d, ec);
    if (ec) throw IoError("cannot create directory " + d + ": " + ec.message());
  }

  char name[64];
  // rainy training domain
  for (int i = 0; i < cfg.synth_images; ++i) {
    const Image clean = toy_clean_image(cfg.synth_size, Rng::derive(cfg.seed, 6001, 0, i));
    const RainSynthSpec spec =
        RainSynthSpec::from_config(cfg, Rng::derive(cfg.seed, 6002, 0, i));
    std::snprintf(name, sizeof(name), "rain_%04d.png", i);
    save_png(rain + "/" + name, synth_rain(clean, spec).rainy);
  }
  // clean training domain, disjoint bases
  for (int i = 0; i < cfg.synth_images; ++i) {
    const Image clean = toy_clean_image(cfg.synth_size, Rng::derive(cfg.seed, 6001, 1, i));
    std::snprintf(name, sizeof(name), "norain_%04d.png", i);
    save_png(norain + "/" + name, clean);
  }
  // held-out paired test set, a third disjoint base family
  for (int i = 0; i < cfg.synth_test_pairs; ++i) {
    const Image clean = toy_clean_image(cfg.synth_size, Rng::derive(cfg.seed, 6001, 2, i));
    const RainSynthSpec spec =
        RainSynthSpec::from_config(cfg, Rng::derive(cfg.seed, 6002, 2, i));
    std::snprintf(name, sizeof(name), "pair_%04d.png", i);
    save_png(pt_rain + "/" + name, synth_rain(clean, spec).rainy);
    save_png(pt_norain + "/" + name, clean);
  }

  nlohmann::json manifest;
  manifest["seed"] = cfg.seed;
  manifest["images_per_domain"] = cfg.synth_images;
  manifest["test_pairs"] = cfg.synth_test_pairs;
  manifest["image_size"] = cfg.synth_size;
  manifest["rain"] = {{"density_per_megapixel", cfg.rain_density},
                      {"length", {cfg.rain_len_min, cfg.rain_len_max}},
                      {"angle_deg", {cfg.rain_angle_min, cfg.rain_angle_max}},
                      {"width", cfg.rain_width},
                      {"intensity", {cfg.rain_intensity_min, cfg.rain_intensity_max}}};
  write_text_file(out_root + "/manifest.json", manifest.dump(2) + "\n");
}

}  // namespace raincycle
