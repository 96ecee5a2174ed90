#pragma once

#include <algorithm>
#include <csetjmp>
#include <cstdint>
#include <cstdio>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <jpeglib.h>
#include <png.h>

#include <nlohmann/json.hpp>

#include "vitprobe/tensor.hpp"

namespace vitprobe {

// Undecodable or malformed image input.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// 8-bit RGB, row-major, interleaved.
struct RasterImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;

  std::uint8_t at(std::size_t x, std::size_t y, std::size_t c) const { return pixels[(y * width + x) * 3 + c]; }

  void check() const {
    if (width == 0 || height == 0) throw FormatError("image has zero extent");
    if (pixels.size() != width * height * 3)
      throw FormatError("pixel buffer holds " + std::to_string(pixels.size()) + " bytes, expected " +
                        std::to_string(width * height * 3));
  }
};

inline RasterImage decode_png(std::span<const std::uint8_t> bytes) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&img, bytes.data(), bytes.size()))
    throw FormatError(std::string("PNG decode failed: ") + img.message);
  img.format = PNG_FORMAT_RGB;
  RasterImage out;
  out.width = img.width;
  out.height = img.height;
  out.pixels.resize(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, out.pixels.data(), 0, nullptr)) {
    std::string msg = img.message;
    png_image_free(&img);
    throw FormatError("PNG decode failed: " + msg);
  }
  if (PNG_IMAGE_FAILED(img)) throw FormatError(std::string("PNG decode failed: ") + img.message);
  out.check();
  return out;
}

inline std::vector<std::uint8_t> encode_png(const RasterImage& img) {
  img.check();
  png_image p{};
  p.version = PNG_IMAGE_VERSION;
  p.width = static_cast<png_uint_32>(img.width);
  p.height = static_cast<png_uint_32>(img.height);
  p.format = PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&p, nullptr, &size, 0, img.pixels.data(), 0, nullptr))
    throw FormatError(std::string("PNG encode failed: ") + p.message);
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&p, out.data(), &size, 0, img.pixels.data(), 0, nullptr))
    throw FormatError(std::string("PNG encode failed: ") + p.message);
  out.resize(size);
  return out;
}

namespace detail {

struct JpegErrorManager {
  jpeg_error_mgr base;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

extern "C" inline void jpeg_error_exit(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegErrorManager*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, err->message);
  std::longjmp(err->jump, 1);
}

// Corrupt or truncated streams only warn in libjpeg; treat them as errors.
extern "C" inline void jpeg_emit_message(j_common_ptr cinfo, int level) {
  if (level < 0) jpeg_error_exit(cinfo);
}

}  // namespace detail

inline RasterImage decode_jpeg(std::span<const std::uint8_t> bytes) {
  RasterImage out;
  jpeg_decompress_struct cinfo{};
  detail::JpegErrorManager err{};
  cinfo.err = jpeg_std_error(&err.base);
  err.base.error_exit = detail::jpeg_error_exit;
  err.base.emit_message = detail::jpeg_emit_message;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    throw FormatError(std::string("JPEG decode failed: ") + err.message);
  }
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, bytes.data(), static_cast<unsigned long>(bytes.size()));
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);
  out.width = cinfo.output_width;
  out.height = cinfo.output_height;
  out.pixels.resize(out.width * out.height * 3);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = out.pixels.data() + static_cast<std::size_t>(cinfo.output_scanline) * out.width * 3;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  out.check();
  return out;
}

inline std::vector<std::uint8_t> encode_jpeg(const RasterImage& img, int quality = 90) {
  img.check();
  jpeg_compress_struct cinfo{};
  jpeg_error_mgr jerr{};
  cinfo.err = jpeg_std_error(&jerr);
  jpeg_create_compress(&cinfo);
  unsigned char* buf = nullptr;
  unsigned long size = 0;
  jpeg_mem_dest(&cinfo, &buf, &size);
  cinfo.image_width = static_cast<JDIMENSION>(img.width);
  cinfo.image_height = static_cast<JDIMENSION>(img.height);
  cinfo.input_components = 3;
  cinfo.in_color_space = JCS_RGB;
  jpeg_set_defaults(&cinfo);
  jpeg_set_quality(&cinfo, quality, TRUE);
  jpeg_start_compress(&cinfo, TRUE);
  while (cinfo.next_scanline < cinfo.image_height) {
    auto* row = const_cast<JSAMPROW>(img.pixels.data() + static_cast<std::size_t>(cinfo.next_scanline) * img.width * 3);
    jpeg_write_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_compress(&cinfo);
  std::vector<std::uint8_t> out(buf, buf + size);
  jpeg_destroy_compress(&cinfo);
  std::free(buf);
  return out;
}

// Sniffs PNG / JPEG by magic bytes.
inline RasterImage decode_image(std::span<const std::uint8_t> bytes) {
  static constexpr std::uint8_t png_magic[] = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
  if (bytes.size() >= 8 && std::equal(std::begin(png_magic), std::end(png_magic), bytes.begin()))
    return decode_png(bytes);
  if (bytes.size() >= 3 && bytes[0] == 0xff && bytes[1] == 0xd8 && bytes[2] == 0xff) return decode_jpeg(bytes);
  throw FormatError("unrecognised image format (expected PNG or JPEG)");
}

// Raw `.rgb8` fixture: interleaved RGB bytes, with extents in a sidecar
// `<path>.json` holding {"width": W, "height": H}.
inline RasterImage load_rgb8(const std::filesystem::path& path) {
  auto read = [](const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw FormatError("cannot open " + p.string());
    return std::vector<std::uint8_t>((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  };
  const auto header_bytes = read(path.string() + ".json");
  RasterImage img;
  try {
    const auto header = nlohmann::json::parse(header_bytes.begin(), header_bytes.end());
    img.width = header.at("width").get<std::size_t>();
    img.height = header.at("height").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("bad rgb8 sidecar for " + path.string() + ": " + e.what());
  }
  img.pixels = read(path);
  img.check();
  return img;
}

inline void save_rgb8(const RasterImage& img, const std::filesystem::path& path) {
  img.check();
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  std::ofstream side(path.string() + ".json");
  side << nlohmann::json{{"width", img.width}, {"height", img.height}}.dump() << "\n";
  if (!out || !side) throw FormatError("failed writing " + path.string());
}

// Dispatches on extension: .rgb8 uses the sidecar loader, anything else is
// sniffed as PNG/JPEG.
inline RasterImage load_image(const std::filesystem::path& path) {
  if (path.extension() == ".rgb8") return load_rgb8(path);
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_image(bytes);
}

inline constexpr std::size_t kInputSize = 224;

// Maps a channel byte to [-1, 1]: (v / 255 - 0.5) / 0.5.
inline float normalize_channel(double v) { return static_cast<float>((v / 255.0 - 0.5) / 0.5); }

// Bilinear resize (half-pixel centres, edge clamp, no antialiasing, aspect
// not preserved) to size x size, then channel normalisation. Output is
// [size, size, 3]. Images already at the target size skip resampling.
inline Tensor preprocess(const RasterImage& img, std::size_t size = kInputSize) {
  img.check();
  Tensor out({size, size, 3});
  if (img.width == size && img.height == size) {
    for (std::size_t i = 0; i < img.pixels.size(); ++i) out[i] = normalize_channel(img.pixels[i]);
    return out;
  }
  const double sx = static_cast<double>(img.width) / static_cast<double>(size);
  const double sy = static_cast<double>(img.height) / static_cast<double>(size);
  auto source = [](std::size_t dst, double s, std::size_t extent, std::size_t& i0, std::size_t& i1, double& frac) {
    double src = (static_cast<double>(dst) + 0.5) * s - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(extent - 1));
    i0 = static_cast<std::size_t>(std::floor(src));
    i1 = std::min(i0 + 1, extent - 1);
    frac = src - static_cast<double>(i0);
  };
  for (std::size_t y = 0; y < size; ++y) {
    std::size_t y0, y1;
    double fy;
    source(y, sy, img.height, y0, y1, fy);
    for (std::size_t x = 0; x < size; ++x) {
      std::size_t x0, x1;
      double fx;
      source(x, sx, img.width, x0, x1, fx);
      for (std::size_t c = 0; c < 3; ++c) {
        const double top = img.at(x0, y0, c) * (1.0 - fx) + img.at(x1, y0, c) * fx;
        const double bottom = img.at(x0, y1, c) * (1.0 - fx) + img.at(x1, y1, c) * fx;
        out[(y * size + x) * 3 + c] = normalize_channel(top * (1.0 - fy) + bottom * fy);
      }
    }
  }
  return out;
}

}  // namespace vitprobe
