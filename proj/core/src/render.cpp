#include "attnctl/render.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>

#ifdef ATTNCTL_HAVE_PNG
#include <png.h>
#endif

namespace attnctl {

DenseArray collapse_trace(const DenseArray& trace, std::optional<std::size_t> step) {
  if (trace.rank() == 1) {
    if (step && *step != 0) throw DomainError("render: a single attention vector has only step 0");
    for (double v : trace.data()) {
      if (!std::isfinite(v) || v < 0.0) throw DomainError("render: attention values must be finite and non-negative");
    }
    return trace;
  }
  if (trace.rank() != 2 || trace.rows() == 0) throw DimensionError("render: trace must be T x L");
  const std::size_t T = trace.rows(), L = trace.cols();
  for (std::size_t t = 0; t < T; ++t) {
    DenseArray row({L}, std::vector<double>(trace.row(t).begin(), trace.row(t).end()));
    if (!is_simplex(row, 1e-9, false)) throw DomainError("render: trace row " + std::to_string(t) + " is not a simplex");
  }
  if (step) {
    if (*step >= T) throw DomainError("render: step " + std::to_string(*step) + " outside a " + std::to_string(T) + "-step trace");
    return DenseArray({L}, std::vector<double>(trace.row(*step).begin(), trace.row(*step).end()));
  }
  DenseArray sum({L}, 0.0);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t i = 0; i < L; ++i) sum[i] += trace(t, i);
  }
  return sum;
}

ByteGrid render_attention(const DenseArray& values, std::size_t grid, std::size_t upscale) {
  if (grid == 0 || upscale == 0) throw DomainError("render: grid and upscale must be positive");
  if (values.rank() != 1 || values.size() != grid * grid) {
    throw DimensionError("render: expected " + std::to_string(grid * grid) + " values, got " +
                         shape_to_string(values.shape()));
  }
  const double peak = *std::max_element(values.data().begin(), values.data().end());
  ByteGrid cells{grid, grid, std::vector<std::uint8_t>(grid * grid, 0)};
  if (peak > 0.0) {
    for (std::size_t i = 0; i < values.size(); ++i) {
      cells.data[i] = static_cast<std::uint8_t>(std::lround(255.0 * std::max(0.0, values[i]) / peak));
    }
  }
  return upscale == 1 ? cells : nearest_neighbor_resize(cells, grid * upscale, grid * upscale);
}

std::string encode_pgm(const ByteGrid& image) {
  std::string out = "P5\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
  out.append(image.data.begin(), image.data.end());
  return out;
}

void write_pgm(const std::filesystem::path& path, const ByteGrid& image) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  const std::string bytes = encode_pgm(image);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

#ifdef ATTNCTL_HAVE_PNG

bool png_supported() { return true; }

void write_png(const std::filesystem::path& path, const ByteGrid& image) {
  std::unique_ptr<FILE, int (*)(FILE*)> file(std::fopen(path.c_str(), "wb"), &std::fclose);
  if (!file) throw std::runtime_error("cannot write " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw std::runtime_error("libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("failed writing " + path.string());
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(image.width), static_cast<png_uint_32>(image.height), 8,
               PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (std::size_t r = 0; r < image.height; ++r) {
    png_write_row(png, const_cast<png_bytep>(image.data.data() + r * image.width));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

#else

bool png_supported() { return false; }

void write_png(const std::filesystem::path&, const ByteGrid&) {
  throw std::runtime_error("PNG output needs libpng, which was not found at build time");
}

#endif

}  // namespace attnctl
