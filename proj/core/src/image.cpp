#include "raincycle/image.hpp"

#include <png.h>

#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "raincycle/error.hpp"

namespace raincycle {

Image::Image(Tensor tensor) : t(std::move(tensor)) {
  if (t.ndim() != 3 || (t.dim(0) != 1 && t.dim(0) != 3)) {
    throw DimensionError("image: tensor must be [1|3,H,W], got " + t.shape_str());
  }
}

Image::Image(int channels, int height, int width) : t({channels, height, width}) {
  if (channels != 1 && channels != 3) throw DimensionError("image: channels must be 1 or 3");
}

void Image::require_valid(const char* where) const {
  for (double v : t.data) {
    if (!std::isfinite(v)) throw NumericError(std::string(where) + ": non-finite pixel");
    if (v < -1.0 - 1e-6 || v > 1.0 + 1e-6) {
      throw NumericError(std::string(where) + ": pixel outside [-1,1]");
    }
  }
}

void Image::require_min_dims(int min_hw, const char* where) const {
  if (height() < min_hw || width() < min_hw) {
    throw DimensionError(std::string(where) + ": image " + std::to_string(width()) + "x" +
                         std::to_string(height()) + " smaller than required " +
                         std::to_string(min_hw));
  }
}

Image Image::replicate_gray() const {
  if (channels() == 3) return *this;
  Image out(3, height(), width());
  const size_t plane = t.data.size();
  for (int c = 0; c < 3; ++c) {
    std::copy(t.data.begin(), t.data.end(), out.t.data.begin() + c * plane);
  }
  return out;
}

uint8_t quantize8(double v) {
  if (v < -1.0) v = -1.0;
  if (v > 1.0) v = 1.0;
  const double q = std::floor((v + 1.0) * 0.5 * 255.0 + 0.5);
  return static_cast<uint8_t>(q < 0.0 ? 0.0 : (q > 255.0 ? 255.0 : q));
}

namespace {

struct MemReader {
  const uint8_t* data;
  size_t size;
  size_t offset;
  std::string error;
};

void read_fn(png_structp png, png_bytep out, png_size_t len) {
  auto* r = static_cast<MemReader*>(png_get_io_ptr(png));
  if (r->offset + len > r->size) {
    png_error(png, "unexpected end of stream");
    return;
  }
  std::memcpy(out, r->data + r->offset, len);
  r->offset += len;
}

void reader_error_fn(png_structp png, png_const_charp msg) {
  auto* r = static_cast<MemReader*>(png_get_error_ptr(png));
  if (r) r->error = msg;
  longjmp(png_jmpbuf(png), 1);
}

void silent_warning_fn(png_structp, png_const_charp) {}

struct MemWriter {
  std::vector<uint8_t> bytes;
  std::string error;
};

void write_fn(png_structp png, png_bytep data, png_size_t len) {
  auto* w = static_cast<MemWriter*>(png_get_io_ptr(png));
  w->bytes.insert(w->bytes.end(), data, data + len);
}

void flush_fn(png_structp) {}

void writer_error_fn(png_structp png, png_const_charp msg) {
  auto* w = static_cast<MemWriter*>(png_get_error_ptr(png));
  if (w) w->error = msg;
  longjmp(png_jmpbuf(png), 1);
}

}  // namespace

Image decode_png(const std::vector<uint8_t>& bytes) {
  if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) {
    throw DecodeError("png decode failed at byte 0: not a PNG signature");
  }
  MemReader reader{bytes.data(), bytes.size(), 0, {}};
  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, &reader, reader_error_fn, silent_warning_fn);
  if (!png) throw DecodeError("png decode failed: out of memory");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw DecodeError("png decode failed: out of memory");
  }

  std::vector<uint8_t> rowdata;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    const size_t off = reader.offset;
    const std::string msg = reader.error.empty() ? "malformed stream" : reader.error;
    png_destroy_read_struct(&png, &info, nullptr);
    throw DecodeError("png decode failed at byte " + std::to_string(off) + ": " + msg);
  }

  png_set_read_fn(png, &reader, read_fn);
  png_read_info(png, info);

  const png_uint_32 w = png_get_image_width(png, info);
  const png_uint_32 h = png_get_image_height(png, info);
  const int color = png_get_color_type(png, info);
  int depth = png_get_bit_depth(png, info);

  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  png_set_strip_alpha(png);
  png_set_interlace_handling(png);
  png_read_update_info(png, info);

  depth = png_get_bit_depth(png, info);
  const int ch = static_cast<int>(png_get_channels(png, info));
  if (ch != 1 && ch != 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DecodeError("png decode failed: unsupported channel count " + std::to_string(ch));
  }

  const size_t rowbytes = png_get_rowbytes(png, info);
  rowdata.resize(rowbytes * h);
  rows.resize(h);
  for (png_uint_32 y = 0; y < h; ++y) rows[y] = rowdata.data() + y * rowbytes;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  Image img(ch, static_cast<int>(h), static_cast<int>(w));
  const double maxval = depth == 16 ? 65535.0 : 255.0;
  for (png_uint_32 y = 0; y < h; ++y) {
    const uint8_t* row = rowdata.data() + y * rowbytes;
    for (png_uint_32 x = 0; x < w; ++x) {
      for (int c = 0; c < ch; ++c) {
        double p;
        if (depth == 16) {
          const size_t i = (static_cast<size_t>(x) * ch + c) * 2;
          p = static_cast<double>((static_cast<unsigned>(row[i]) << 8) | row[i + 1]);
        } else {
          p = static_cast<double>(row[static_cast<size_t>(x) * ch + c]);
        }
        img.at(c, static_cast<int>(y), static_cast<int>(x)) = 2.0 * (p / maxval) - 1.0;
      }
    }
  }
  return img;
}

std::vector<uint8_t> encode_png(const Image& img) {
  for (double v : img.t.data) {
    if (!std::isfinite(v)) throw NumericError("png encode failed: non-finite pixel value");
  }
  const int ch = img.channels(), h = img.height(), w = img.width();

  std::vector<uint8_t> rowdata(static_cast<size_t>(h) * w * ch);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < ch; ++c) {
        rowdata[(static_cast<size_t>(y) * w + x) * ch + c] = quantize8(img.at(c, y, x));
      }
    }
  }

  MemWriter writer;
  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, &writer, writer_error_fn, silent_warning_fn);
  if (!png) throw IoError("png encode failed: out of memory");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError("png encode failed: out of memory");
  }
  if (setjmp(png_jmpbuf(png))) {
    const std::string msg = writer.error.empty() ? "write error" : writer.error;
    png_destroy_write_struct(&png, &info);
    throw IoError("png encode failed: " + msg);
  }

  png_set_write_fn(png, &writer, write_fn, flush_fn);
  // fixed settings keep the byte stream canonical for a given pixel content
  png_set_compression_level(png, 6);
  png_set_filter(png, 0, PNG_FILTER_NONE);
  png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8,
               ch == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_bytep> rows(static_cast<size_t>(h));
  for (int y = 0; y < h; ++y) {
    rows[static_cast<size_t>(y)] = rowdata.data() + static_cast<size_t>(y) * w * ch;
  }
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return std::move(writer.bytes);
}

Image load_png(const std::string& path) { return decode_png(read_binary_file(path)); }

void save_png(const std::string& path, const Image& img) {
  const std::vector<uint8_t> bytes = encode_png(img);
  write_binary_file(path, bytes.data(), bytes.size());
}

Image hflip(const Image& img) {
  Image out(img.channels(), img.height(), img.width());
  for (int c = 0; c < img.channels(); ++c) {
    for (int y = 0; y < img.height(); ++y) {
      for (int x = 0; x < img.width(); ++x) {
        out.at(c, y, x) = img.at(c, y, img.width() - 1 - x);
      }
    }
  }
  return out;
}

Image crop(const Image& img, int y0, int x0, int h, int w) {
  if (y0 < 0 || x0 < 0 || y0 + h > img.height() || x0 + w > img.width()) {
    throw DimensionError("crop: region outside image");
  }
  Image out(img.channels(), h, w);
  for (int c = 0; c < img.channels(); ++c) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) out.at(c, y, x) = img.at(c, y0 + y, x0 + x);
    }
  }
  return out;
}

Image pad_to_multiple(const Image& img, int multiple) {
  const int h = img.height(), w = img.width();
  const int ph = (h + multiple - 1) / multiple * multiple;
  const int pw = (w + multiple - 1) / multiple * multiple;
  if (ph == h && pw == w) return img;
  if (ph - h >= h || pw - w >= w) {
    throw DimensionError("pad_to_multiple: image too small to reflect-pad");
  }
  Image out(img.channels(), ph, pw);
  for (int c = 0; c < img.channels(); ++c) {
    for (int y = 0; y < ph; ++y) {
      const int sy = y < h ? y : 2 * h - 2 - y;
      for (int x = 0; x < pw; ++x) {
        const int sx = x < w ? x : 2 * w - 2 - x;
        out.at(c, y, x) = img.at(c, sy, sx);
      }
    }
  }
  return out;
}

Image augment(const Image& img, const AugmentSpec& spec) {
  if (spec.crop > img.height() || spec.crop > img.width()) {
    throw DimensionError("augment: crop " + std::to_string(spec.crop) +
                         " larger than image " + std::to_string(img.width()) + "x" +
                         std::to_string(img.height()));
  }
  Rng rng(spec.seed);
  const bool flip = rng.uniform() < spec.flip_probability;
  const int oy = static_cast<int>(rng.uniform_int(img.height() - spec.crop + 1));
  const int ox = static_cast<int>(rng.uniform_int(img.width() - spec.crop + 1));
  const Image base = flip ? hflip(img) : img;
  return crop(base, oy, ox, spec.crop, spec.crop);
}

std::vector<uint8_t> read_binary_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for reading: " + path);
  f.seekg(0, std::ios::end);
  const std::streamoff size = f.tellg();
  f.seekg(0, std::ios::beg);
  std::vector<uint8_t> bytes(static_cast<size_t>(size));
  if (size > 0) f.read(reinterpret_cast<char*>(bytes.data()), size);
  if (!f) throw IoError("read failed: " + path);
  return bytes;
}

void write_binary_file(const std::string& path, const void* data, size_t size) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open for writing: " + path);
  f.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
  if (!f) throw IoError("write failed: " + path);
}

void write_text_file(const std::string& path, const std::string& text) {
  write_binary_file(path, text.data(), text.size());
}

}  // namespace raincycle
