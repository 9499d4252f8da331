// Copyright 2026 The psfuse Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "psfuse/core/image_io.hpp"

#include <png.h>

#include <array>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <memory>
#include <sstream>

namespace psfuse::io {

namespace fs = std::filesystem;

static_assert(std::endian::native == std::endian::little, "binary containers assume a little-endian host");

namespace {

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  return os;
}

std::ifstream open_in(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  return is;
}

void put_u32(std::ostream& os, std::uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }

std::uint32_t get_u32(std::istream& is, const fs::path& path) {
  std::uint32_t v = 0;
  if (!is.read(reinterpret_cast<char*>(&v), 4)) throw IoError("truncated header in " + path.string());
  return v;
}

void expect_magic(std::istream& is, const char* magic, const fs::path& path) {
  std::array<char, 4> buf{};
  if (!is.read(buf.data(), 4) || std::memcmp(buf.data(), magic, 4) != 0) {
    throw IoError(path.string() + " is not a " + std::string(magic, 4) + " file");
  }
}

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] void png_error_fn(png_structp png, png_const_charp msg) {
  auto* what = static_cast<std::string*>(png_get_error_ptr(png));
  if (what) *what = msg;
  png_longjmp(png, 1);
}

void png_warning_fn(png_structp, png_const_charp) {}

void write_png_raw(const fs::path& path, int height, int width, int channels, int bit_depth,
                   const std::uint8_t* rows_data) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  FilePtr fp(std::fopen(path.string().c_str(), "wb"));
  if (!fp) throw IoError("cannot open " + path.string() + " for writing");
  std::string err;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &err, png_error_fn, png_warning_fn);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng initialization failed");
  }
  const std::size_t row_bytes = static_cast<std::size_t>(width) * channels * (bit_depth / 8);
  std::vector<png_bytep> rows(height);
  for (int r = 0; r < height; ++r) rows[r] = const_cast<png_bytep>(rows_data + r * row_bytes);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("failed to write " + path.string() + ": " + err);
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, width, height, bit_depth, channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  if (bit_depth == 16) png_set_swap(png);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace

void write_normal_map(const fs::path& path, const NormalMap& normals) {
  auto os = open_out(path);
  os.write("PSNM", 4);
  put_u32(os, static_cast<std::uint32_t>(normals.height()));
  put_u32(os, static_cast<std::uint32_t>(normals.width()));
  const auto data = normals.data();
  os.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size_bytes()));
  if (!os) throw IoError("failed writing " + path.string());
}

namespace {

std::vector<float> read_psnm_payload(const fs::path& path, int& height, int& width) {
  auto is = open_in(path);
  expect_magic(is, "PSNM", path);
  height = static_cast<int>(get_u32(is, path));
  width = static_cast<int>(get_u32(is, path));
  std::vector<float> xyz(static_cast<std::size_t>(height) * width * 3);
  if (!is.read(reinterpret_cast<char*>(xyz.data()), static_cast<std::streamsize>(xyz.size() * sizeof(float)))) {
    throw IoError("truncated normal map " + path.string());
  }
  return xyz;
}

}  // namespace

NormalMap read_normal_map(const fs::path& path) {
  int h = 0, w = 0;
  auto xyz = read_psnm_payload(path, h, w);
  std::vector<std::uint8_t> inside(static_cast<std::size_t>(h) * w, 0);
  for (std::size_t p = 0; p < inside.size(); ++p) {
    inside[p] = (xyz[3 * p] != 0.0f || xyz[3 * p + 1] != 0.0f || xyz[3 * p + 2] != 0.0f) ? 1 : 0;
  }
  return NormalMap::from_unit_vectors(Mask(h, w, std::move(inside)), std::move(xyz));
}

NormalMap read_normal_map(const fs::path& path, const Mask& mask) {
  int h = 0, w = 0;
  auto xyz = read_psnm_payload(path, h, w);
  if (h != mask.height() || w != mask.width()) {
    throw ShapeError("normal map " + path.string() + " does not match mask dimensions");
  }
  return NormalMap::from_unit_vectors(mask, std::move(xyz));
}

void write_float_image(const fs::path& path, const FloatImage& image) {
  auto os = open_out(path);
  os.write("PSIM", 4);
  put_u32(os, static_cast<std::uint32_t>(image.height));
  put_u32(os, static_cast<std::uint32_t>(image.width));
  put_u32(os, static_cast<std::uint32_t>(image.channels));
  os.write(reinterpret_cast<const char*>(image.values.data()),
           static_cast<std::streamsize>(image.values.size() * sizeof(float)));
  if (!os) throw IoError("failed writing " + path.string());
}

FloatImage read_float_image(const fs::path& path) {
  auto is = open_in(path);
  expect_magic(is, "PSIM", path);
  FloatImage img;
  img.height = static_cast<int>(get_u32(is, path));
  img.width = static_cast<int>(get_u32(is, path));
  img.channels = static_cast<int>(get_u32(is, path));
  img.values.resize(static_cast<std::size_t>(img.height) * img.width * img.channels);
  if (!is.read(reinterpret_cast<char*>(img.values.data()),
               static_cast<std::streamsize>(img.values.size() * sizeof(float)))) {
    throw IoError("truncated float image " + path.string());
  }
  return img;
}

void write_radiance(const fs::path& path, const RadianceImage& image) {
  const auto v = image.values();
  write_float_image(path, FloatImage{image.height(), image.width(), image.channels(), {v.begin(), v.end()}});
}

RadianceImage read_radiance(const fs::path& path) {
  auto f = read_float_image(path);
  RadianceImage img(f.height, f.width, f.channels, std::move(f.values));
  img.validate();
  return img;
}

void write_png8(const fs::path& path, int height, int width, int channels, const std::vector<std::uint8_t>& data) {
  if (data.size() != static_cast<std::size_t>(height) * width * channels) {
    throw ShapeError("png buffer size does not match dimensions");
  }
  write_png_raw(path, height, width, channels, 8, data.data());
}

void write_png16(const fs::path& path, const Png16& image) {
  if (image.data.size() != static_cast<std::size_t>(image.height) * image.width * image.channels) {
    throw ShapeError("png buffer size does not match dimensions");
  }
  write_png_raw(path, image.height, image.width, image.channels, 16,
                reinterpret_cast<const std::uint8_t*>(image.data.data()));
}

Png16 read_png16(const fs::path& path) {
  FilePtr fp(std::fopen(path.string().c_str(), "rb"));
  if (!fp) throw IoError("cannot open " + path.string());
  std::string err;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &err, png_error_fn, png_warning_fn);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("libpng initialization failed");
  }
  Png16 out;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("failed to read " + path.string() + ": " + err);
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);
  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  png_set_strip_alpha(png);
  if (depth < 8) png_set_packing(png);
  png_read_update_info(png, info);
  out.height = static_cast<int>(png_get_image_height(png, info));
  out.width = static_cast<int>(png_get_image_width(png, info));
  out.channels = png_get_channels(png, info);
  const int out_depth = png_get_bit_depth(png, info);
  if (out_depth == 16) png_set_swap(png);
  const std::size_t row_bytes = png_get_rowbytes(png, info);
  std::vector<std::uint8_t> buf(row_bytes * out.height);
  rows.resize(out.height);
  for (int r = 0; r < out.height; ++r) rows[r] = buf.data() + r * row_bytes;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  const std::size_t n = static_cast<std::size_t>(out.height) * out.width * out.channels;
  out.data.resize(n);
  if (out_depth == 16) {
    std::memcpy(out.data.data(), buf.data(), n * 2);
  } else {
    for (std::size_t i = 0; i < n; ++i) out.data[i] = static_cast<std::uint16_t>(buf[i] * 257);
  }
  return out;
}

void write_mask_png(const fs::path& path, const Mask& mask) {
  std::vector<std::uint8_t> data(mask.data().begin(), mask.data().end());
  for (auto& v : data) v = v ? 255 : 0;
  write_png8(path, mask.height(), mask.width(), 1, data);
}

Mask read_mask_png(const fs::path& path) {
  const Png16 png = read_png16(path);
  std::vector<std::uint8_t> inside(static_cast<std::size_t>(png.height) * png.width);
  for (std::size_t p = 0; p < inside.size(); ++p) inside[p] = png.data[p * png.channels] > 32767 ? 1 : 0;
  return Mask(png.height, png.width, std::move(inside));
}

void write_lights(const fs::path& path, const std::vector<LightSample>& lights) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(6);
  for (const auto& l : lights) {
    os << l.direction().x() << ' ' << l.direction().y() << ' ' << l.direction().z() << ' ' << l.intensity()
       << '\n';
  }
  write_text(path, os.str());
}

std::vector<std::vector<double>> read_table(const fs::path& path) {
  std::istringstream is(read_text(path));
  std::vector<std::vector<double>> rows;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::vector<double> row;
    std::string tok;
    while (ls >> tok) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(tok, &used));
        if (used != tok.size()) throw std::invalid_argument(tok);
      } catch (const std::exception&) {
        throw IngestionError(path.string() + ":" + std::to_string(line_no) + ": not a number: " + tok);
      }
    }
    if (!row.empty()) rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<LightSample> read_lights(const fs::path& path) {
  std::vector<LightSample> lights;
  for (const auto& row : read_table(path)) {
    if (row.size() != 4) throw IngestionError(path.string() + ": expected 4 values per light line");
    try {
      lights.emplace_back(UnitVec3::normalize(row[0], row[1], row[2]), row[3]);
    } catch (const DomainError& e) {
      throw IngestionError(path.string() + ": " + e.what());
    }
  }
  return lights;
}

void write_text(const fs::path& path, const std::string& text) {
  auto os = open_out(path);
  os << text;
  if (!os) throw IoError("failed writing " + path.string());
}

std::string read_text(const fs::path& path) {
  auto is = open_in(path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace psfuse::io
