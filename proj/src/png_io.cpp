#include "sdt/png_io.hpp"

#include <png.h>

#include <cstdio>
#include <memory>

#include "sdt/errors.hpp"

namespace sdt {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

PngBuffer read_png(const std::string& path) {
  FilePtr file(std::fopen(path.c_str(), "rb"));
  if (!file) throw IoError("cannot open '" + path + "' for reading");

  png_byte header[8];
  if (std::fread(header, 1, 8, file.get()) != 8 ||
      png_sig_cmp(header, 0, 8) != 0)
    throw IoError("'" + path + "' is not a PNG file");

  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IoError("libpng: failed to allocate read struct");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw IoError("libpng: failed to allocate info struct");
  }

  std::vector<png_bytep> row_ptrs;
  PngBuffer out;
  // libpng reports errors via longjmp; everything reachable from here must
  // stay trivially destructible until the jump target.
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("libpng: failed to decode '" + path + "'");
  }

  png_init_io(png, file.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  const png_byte color_type = png_get_color_type(png, info);
  const png_byte bit_depth = png_get_bit_depth(png, info);

  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8)
    png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (bit_depth == 16) png_set_strip_16(png);
  if (color_type & PNG_COLOR_MASK_ALPHA ||
      png_get_valid(png, info, PNG_INFO_tRNS))
    png_set_strip_alpha(png);
  png_set_interlace_handling(png);
  png_read_update_info(png, info);

  out.width = static_cast<int>(png_get_image_width(png, info));
  out.height = static_cast<int>(png_get_image_height(png, info));
  out.channels = static_cast<int>(png_get_channels(png, info));
  if (out.channels != 1 && out.channels != 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("'" + path + "' decodes to unsupported channel count " +
                  std::to_string(out.channels));
  }

  const size_t stride = static_cast<size_t>(out.width) * out.channels;
  out.pixels.resize(stride * static_cast<size_t>(out.height));
  row_ptrs.resize(static_cast<size_t>(out.height));
  for (int y = 0; y < out.height; ++y)
    row_ptrs[static_cast<size_t>(y)] = out.pixels.data() + stride * y;

  png_read_image(png, row_ptrs.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return out;
}

void write_png(const std::string& path, const PngBuffer& buf) {
  if (buf.width <= 0 || buf.height <= 0 ||
      (buf.channels != 1 && buf.channels != 3))
    throw std::invalid_argument("write_png: invalid buffer geometry");
  const size_t stride = static_cast<size_t>(buf.width) * buf.channels;
  if (buf.pixels.size() != stride * static_cast<size_t>(buf.height))
    throw std::invalid_argument("write_png: pixel buffer size mismatch");

  const std::string tmp = path + ".tmp";
  FilePtr file(std::fopen(tmp.c_str(), "wb"));
  if (!file) throw IoError("cannot open '" + tmp + "' for writing");

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                            nullptr, nullptr);
  if (!png) throw IoError("libpng: failed to allocate write struct");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError("libpng: failed to allocate info struct");
  }

  std::vector<png_bytep> row_ptrs(static_cast<size_t>(buf.height));
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::remove(tmp.c_str());
    throw IoError("libpng: failed to encode '" + path + "'");
  }

  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(buf.width),
               static_cast<png_uint_32>(buf.height), 8,
               buf.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < buf.height; ++y)
    row_ptrs[static_cast<size_t>(y)] =
        const_cast<png_bytep>(buf.pixels.data() + stride * y);
  png_write_image(png, row_ptrs.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);

  if (std::fflush(file.get()) != 0) {
    std::remove(tmp.c_str());
    throw IoError("failed to flush '" + tmp + "'");
  }
  file.reset();
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    std::remove(tmp.c_str());
    throw IoError("failed to move '" + tmp + "' into place");
  }
}

}  // namespace sdt
