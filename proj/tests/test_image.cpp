#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <png.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <vector>

#include "raincycle/error.hpp"
#include "raincycle/image.hpp"

using namespace raincycle;

namespace {

// writes a 16-bit big-endian gray PNG straight through libpng, bypassing the
// library under test
std::vector<uint8_t> make_png16_gray(int h, int w, const std::vector<uint16_t>& px) {
  std::vector<uint8_t> out;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  REQUIRE(png != nullptr);
  REQUIRE(info != nullptr);
  png_set_write_fn(
      png, &out,
      [](png_structp p, png_bytep data, png_size_t len) {
        auto* v = static_cast<std::vector<uint8_t>*>(png_get_io_ptr(p));
        v->insert(v->end(), data, data + len);
      },
      nullptr);
  png_set_IHDR(png, info, w, h, 16, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<uint8_t> row(static_cast<size_t>(w) * 2);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const uint16_t v = px[static_cast<size_t>(y) * w + x];
      row[2 * x] = static_cast<uint8_t>(v >> 8);
      row[2 * x + 1] = static_cast<uint8_t>(v & 0xff);
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

Image gray_image(int h, int w, double v) {
  Image img(1, h, w);
  img.t.fill(v);
  return img;
}

}  // namespace

TEST_CASE("decode maps 8-bit levels onto [-1,1]") {
  Image img(3, 2, 2);
  img.at(0, 0, 0) = -1.0;
  img.at(1, 0, 0) = -1.0;
  img.at(2, 0, 0) = -1.0;
  const std::vector<uint8_t> bytes = encode_png(img);
  const Image back = decode_png(bytes);
  CHECK(back.channels() == 3);
  CHECK(back.at(0, 0, 0) == doctest::Approx(-1.0));

  Image white(1, 2, 2);
  white.t.fill(1.0);
  const Image wback = decode_png(encode_png(white));
  CHECK(wback.channels() == 1);
  CHECK(wback.at(0, 1, 1) == doctest::Approx(1.0));
}

TEST_CASE("quantization is round-half-up") {
  // value 0 maps to byte floor(127.5 + 0.5) = 128
  const Image back = decode_png(encode_png(gray_image(2, 2, 0.0)));
  CHECK(back.at(0, 0, 0) == doctest::Approx(2.0 * 128.0 / 255.0 - 1.0).epsilon(1e-12));
}

TEST_CASE("encode is canonical and round trips within one level") {
  Rng rng(21);
  Image img(3, 9, 7);
  for (double& v : img.t.data) v = rng.uniform(-1.0, 1.0);
  const std::vector<uint8_t> b1 = encode_png(img);
  const std::vector<uint8_t> b2 = encode_png(img);
  CHECK(b1 == b2);

  const Image back = decode_png(b1);
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < 9; ++y) {
      for (int x = 0; x < 7; ++x) {
        CHECK(std::abs(back.at(c, y, x) - img.at(c, y, x)) <= 1.0 / 255.0 + 1e-12);
      }
    }
  }
  // a second pass through the codec is lossless
  CHECK(encode_png(back) == b1);
}

TEST_CASE("encode rejects non-finite pixels") {
  Image img = gray_image(2, 2, 0.0);
  img.at(0, 0, 0) = std::nan("");
  CHECK_THROWS_AS(encode_png(img), NumericError);
}

TEST_CASE("16-bit gray input decodes against maxval 65535") {
  const std::vector<uint16_t> px = {0, 65535, 32768, 12345};
  const Image img = decode_png(make_png16_gray(2, 2, px));
  CHECK(img.channels() == 1);
  CHECK(img.at(0, 0, 0) == doctest::Approx(-1.0));
  CHECK(img.at(0, 0, 1) == doctest::Approx(1.0));
  CHECK(img.at(0, 1, 0) == doctest::Approx(2.0 * 32768.0 / 65535.0 - 1.0).epsilon(1e-12));
  CHECK(img.at(0, 1, 1) == doctest::Approx(2.0 * 12345.0 / 65535.0 - 1.0).epsilon(1e-12));
}

TEST_CASE("malformed and truncated bytes raise decode errors") {
  CHECK_THROWS_AS(decode_png({1, 2, 3, 4, 5, 6, 7, 8, 9, 10}), DecodeError);
  std::vector<uint8_t> ok = encode_png(gray_image(8, 8, 0.25));
  std::vector<uint8_t> truncated(ok.begin(), ok.begin() + ok.size() / 2);
  CHECK_THROWS_AS(decode_png(truncated), DecodeError);
  std::vector<uint8_t> corrupt = ok;
  corrupt[corrupt.size() / 2] ^= 0xff;
  CHECK_THROWS_AS(decode_png(corrupt), DecodeError);
  CHECK_THROWS_AS(decode_png({}), DecodeError);
}

TEST_CASE("file round trip") {
  namespace fs = std::filesystem;
  const std::string dir = "tmp-test-image";
  fs::create_directories(dir);
  Image img(3, 5, 4);
  Rng rng(3);
  for (double& v : img.t.data) v = rng.uniform(-1.0, 1.0);
  save_png(dir + "/a.png", img);
  const Image back = load_png(dir + "/a.png");
  CHECK(back.height() == 5);
  CHECK(back.width() == 4);
  CHECK_THROWS_AS(load_png(dir + "/missing.png"), IoError);
  fs::remove_all(dir);
}

TEST_CASE("replicate_gray") {
  const Image g = gray_image(3, 3, 0.5);
  const Image rgb = g.replicate_gray();
  CHECK(rgb.channels() == 3);
  CHECK(rgb.at(2, 1, 1) == 0.5);
  CHECK(rgb.replicate_gray().channels() == 3);
}

TEST_CASE("hflip is an involution and mirrors columns") {
  Image img(1, 2, 3);
  for (int i = 0; i < 6; ++i) img.t[i] = i;
  const Image f = hflip(img);
  CHECK(f.at(0, 0, 0) == 2.0);
  CHECK(f.at(0, 0, 2) == 0.0);
  CHECK(f.at(0, 1, 1) == 4.0);
  const Image ff = hflip(f);
  CHECK(ff.t.data == img.t.data);
}

TEST_CASE("crop extracts the exact window") {
  Image img(1, 4, 4);
  for (int i = 0; i < 16; ++i) img.t[i] = i;
  const Image c = crop(img, 1, 2, 2, 2);
  CHECK(c.height() == 2);
  CHECK(c.width() == 2);
  CHECK(c.at(0, 0, 0) == 6.0);
  CHECK(c.at(0, 1, 1) == 11.0);
  CHECK_THROWS_AS(crop(img, 3, 3, 4, 4), DimensionError);
}

TEST_CASE("pad_to_multiple reflects and is a no-op on aligned sizes") {
  Image img(1, 3, 5);
  for (int i = 0; i < 15; ++i) img.t[i] = i;
  const Image p = pad_to_multiple(img, 4);
  CHECK(p.height() == 4);
  CHECK(p.width() == 8);
  CHECK(p.at(0, 0, 0) == img.at(0, 0, 0));
  // reflected rows/cols mirror without repeating the edge sample
  CHECK(p.at(0, 3, 0) == img.at(0, 1, 0));
  CHECK(p.at(0, 0, 5) == img.at(0, 0, 3));
  CHECK(p.at(0, 0, 7) == img.at(0, 0, 1));

  Image ok(1, 4, 4);
  const Image same = pad_to_multiple(ok, 4);
  CHECK(same.height() == 4);
  CHECK(same.width() == 4);
}

TEST_CASE("augment is deterministic per seed and honors the spec") {
  Image img(3, 20, 20);
  Rng rng(5);
  for (double& v : img.t.data) v = rng.uniform(-1.0, 1.0);

  const AugmentSpec spec{8, 0.5, 77};
  const Image a = augment(img, spec);
  const Image b = augment(img, spec);
  CHECK(a.height() == 8);
  CHECK(a.width() == 8);
  CHECK(a.t.data == b.t.data);

  const AugmentSpec never{8, 0.0, 77};
  const AugmentSpec always{8, 1.0, 77};
  const Image plain = augment(img, never);
  const Image flipped = augment(img, always);
  // flip decision is drawn before the crop origin, so both runs share (oy,ox)
  int oy = -1, ox = -1;
  for (int y = 0; y <= 12 && oy < 0; ++y) {
    for (int x = 0; x <= 12; ++x) {
      if (crop(img, y, x, 8, 8).t.data == plain.t.data) {
        oy = y;
        ox = x;
        break;
      }
    }
  }
  REQUIRE(oy >= 0);
  CHECK(crop(hflip(img), oy, ox, 8, 8).t.data == flipped.t.data);
  bool any_diff = false;
  for (uint64_t s = 0; s < 20 && !any_diff; ++s) {
    const Image c = augment(img, {8, 0.5, s});
    any_diff = c.t.data != a.t.data;
  }
  CHECK(any_diff);
}

TEST_CASE("augment with crop equal to image size leaves content") {
  Image img(1, 8, 8);
  for (int i = 0; i < 64; ++i) img.t[i] = i / 64.0;
  const Image a = augment(img, {8, 0.0, 1});
  CHECK(a.t.data == img.t.data);
}

TEST_CASE("require_valid flags out-of-range and non-finite values") {
  Image img = gray_image(4, 4, 0.0);
  CHECK_NOTHROW(img.require_valid("t"));
  img.at(0, 0, 0) = 1.5;
  CHECK_THROWS_AS(img.require_valid("t"), NumericError);
  img.at(0, 0, 0) = std::nan("");
  CHECK_THROWS_AS(img.require_valid("t"), NumericError);
  CHECK_THROWS_AS(gray_image(4, 4, 0.0).require_min_dims(16, "t"), DimensionError);
}
