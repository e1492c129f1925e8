#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "raincycle/tensor.hpp"

namespace raincycle {

// Planar [C,H,W] raster, model value range [-1,1]. Channels are 1 or 3;
// loaders replicate grayscale to 3 before anything model-facing sees it.
struct Image {
  Tensor t;

  Image() = default;
  explicit Image(Tensor tensor);
  Image(int channels, int height, int width);

  int channels() const { return t.dim(0); }
  int height() const { return t.dim(1); }
  int width() const { return t.dim(2); }
  double& at(int c, int y, int x) { return t.at3(c, y, x); }
  double at(int c, int y, int x) const { return t.at3(c, y, x); }

  // Finite and inside [-1,1] within tolerance. Spatial minimums are checked
  // at model boundaries, not here, so small codec fixtures stay legal.
  void require_valid(const char* where) const;
  void require_min_dims(int min_hw, const char* where) const;

  Image replicate_gray() const;  // 1 channel -> 3; 3-channel images pass through
};

struct AugmentSpec {
  int crop = 216;
  double flip_probability = 0.5;
  uint64_t seed = 0;
};

// pixel p in [0,maxval] maps to 2*(p/maxval) - 1
Image decode_png(const std::vector<uint8_t>& bytes);
// clamps, quantizes round-half-up to 8 bits, always writes 8-bit PNG
std::vector<uint8_t> encode_png(const Image& img);

Image load_png(const std::string& path);
void save_png(const std::string& path, const Image& img);

// Flip decision then crop origin, both drawn from spec.seed.
Image augment(const Image& img, const AugmentSpec& spec);

Image hflip(const Image& img);
Image crop(const Image& img, int y0, int x0, int h, int w);
// Reflect-pads on the bottom/right so both dims are multiples of `multiple`.
Image pad_to_multiple(const Image& img, int multiple);

uint8_t quantize8(double v);  // [-1,1] -> [0,255], round half up

std::vector<uint8_t> read_binary_file(const std::string& path);
void write_binary_file(const std::string& path, const void* data, size_t size);
void write_text_file(const std::string& path, const std::string& text);

}  // namespace raincycle
