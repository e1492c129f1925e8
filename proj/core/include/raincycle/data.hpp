#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "raincycle/config.hpp"
#include "raincycle/image.hpp"

namespace raincycle {

struct DatasetLayout {
  std::string root;

  std::string rain_dir() const { return root + "/rain"; }
  std::string norain_dir() const { return root + "/norain"; }
  std::string paired_rain_dir() const { return root + "/rain"; }
};

// sorted PNG basenames; throws DatasetError naming the directory when empty
// or missing
std::vector<std::string> list_pngs(const std::string& dir);

struct RainSynthSpec {
  double density = 3000.0;  // streaks per megapixel
  double len_min = 8.0, len_max = 20.0;
  double angle_min = 70.0, angle_max = 110.0;  // degrees from the x axis
  double width = 1.5;
  double intensity_min = 0.15, intensity_max = 0.5;
  uint64_t seed = 0;

  static RainSynthSpec from_config(const TrainingConfig& cfg, uint64_t seed);
};

struct SynthRainResult {
  Image rainy;
  Image streak;  // non-negative residual before clamping
};

// Additive bright streaks: anti-aliased line segments with a Gaussian cross
// profile, summed then clamped into range.
SynthRainResult synth_rain(const Image& clean, const RainSynthSpec& spec);

// Procedural clean base image (gradient + shapes + low-frequency texture).
Image toy_clean_image(int size, uint64_t seed);

// Positional pairs of indices into the two sorted domain listings; both
// domains shuffled per (seed, epoch), shorter domain cycling.
std::vector<std::pair<int, int>> unpaired_pair_indices(int n_rain, int n_norain,
                                                       uint64_t seed, uint64_t epoch);

struct PairedSample {
  std::string name;
  Image rainy;
  Image clean;
};

// Filename-matched pairs from root/rain and root/norain, sorted by name.
// Unmatched files on either side are reported together in one error.
std::vector<PairedSample> load_paired(const std::string& root);

// Writes rain/, norain/, paired_test/{rain,norain}/ and manifest.json under
// out_root. The two training domains use disjoint clean bases.
void write_toy_dataset(const std::string& out_root, const TrainingConfig& cfg);

}  // namespace raincycle
