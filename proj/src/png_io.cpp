#include "grainkit/png_io.hpp"

#include "grainkit/error.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstring>
#include <fstream>
#include <iterator>

namespace grainkit {

namespace {

// libpng reports failures by longjmp; the message is stashed for the caller.
void on_png_error(png_structp png, png_const_charp msg) {
    auto* sink = static_cast<std::string*>(png_get_error_ptr(png));
    *sink = msg ? msg : "unknown error";
    png_longjmp(png, 1);
}
void on_png_warning(png_structp, png_const_charp) {}

struct ReadCursor {
    const std::vector<uint8_t>* bytes;
    size_t pos;
};

void read_from_buffer(png_structp png, png_bytep out, png_size_t n) {
    auto* cur = static_cast<ReadCursor*>(png_get_io_ptr(png));
    if (cur->pos + n > cur->bytes->size()) {
        png_error(png, "truncated data");
        return;
    }
    std::memcpy(out, cur->bytes->data() + cur->pos, n);
    cur->pos += n;
}

void write_to_buffer(png_structp png, png_bytep data, png_size_t n) {
    auto* out = static_cast<std::vector<uint8_t>*>(png_get_io_ptr(png));
    out->insert(out->end(), data, data + n);
}

void flush_noop(png_structp) {}

} // namespace

std::vector<uint8_t> encode_png(const GrayPng& img) {
    if (img.bit_depth != 8 && img.bit_depth != 16) throw Error(ErrorKind::InvalidArgument, "png bit depth must be 8 or 16");
    std::string failure;
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &failure, on_png_error, on_png_warning);
    png_infop info = png_create_info_struct(png);
    std::vector<uint8_t> out;
    std::vector<uint8_t> row(static_cast<size_t>(img.width) * (img.bit_depth / 8));
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw Error(ErrorKind::IoError, "png encode: " + failure);
    }
    {
        png_set_write_fn(png, &out, write_to_buffer, flush_noop);
        png_set_IHDR(png, info, img.width, img.height, img.bit_depth, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                     PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
        png_write_info(png, info);
        for (int y = 0; y < img.height; ++y) {
            for (int x = 0; x < img.width; ++x) {
                const uint16_t v = img.values[static_cast<size_t>(y) * img.width + x];
                if (img.bit_depth == 8) {
                    row[x] = static_cast<uint8_t>(v);
                } else { // PNG stores 16-bit samples big-endian
                    row[2 * x] = static_cast<uint8_t>(v >> 8);
                    row[2 * x + 1] = static_cast<uint8_t>(v & 0xff);
                }
            }
            png_write_row(png, row.data());
        }
        png_write_end(png, nullptr);
    }
    png_destroy_write_struct(&png, &info);
    return out;
}

GrayPng decode_png(const std::vector<uint8_t>& bytes) {
    if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) throw Error(ErrorKind::IoError, "not a PNG stream");
    std::string failure;
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &failure, on_png_error, on_png_warning);
    png_infop info = png_create_info_struct(png);
    GrayPng img;
    ReadCursor cur{&bytes, 0};
    std::vector<uint8_t> row;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw Error(ErrorKind::IoError, "png decode: " + failure);
    }
    {
        png_set_read_fn(png, &cur, read_from_buffer);
        png_read_info(png, info);
        img.width = static_cast<int>(png_get_image_width(png, info));
        img.height = static_cast<int>(png_get_image_height(png, info));
        const int depth = png_get_bit_depth(png, info);
        const int color = png_get_color_type(png, info);
        if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
        if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
        if (color == PNG_COLOR_TYPE_RGB || color == PNG_COLOR_TYPE_RGB_ALPHA || color == PNG_COLOR_TYPE_PALETTE)
            png_set_rgb_to_gray_fixed(png, 1, -1, -1);
        if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
        png_read_update_info(png, info);
        img.bit_depth = png_get_bit_depth(png, info) == 16 ? 16 : 8;
        const size_t rowbytes = png_get_rowbytes(png, info);
        row.resize(rowbytes);
        img.values.resize(static_cast<size_t>(img.width) * img.height);
        for (int y = 0; y < img.height; ++y) {
            png_read_row(png, row.data(), nullptr);
            for (int x = 0; x < img.width; ++x) {
                uint16_t v = img.bit_depth == 16 ? static_cast<uint16_t>((row[2 * x] << 8) | row[2 * x + 1]) : row[x];
                img.values[static_cast<size_t>(y) * img.width + x] = v;
            }
        }
    }
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

void write_png(const std::filesystem::path& path, const GrayPng& img) {
    const auto bytes = encode_png(img);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::IoError, "cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorKind::IoError, "short write to " + path.string());
}

GrayPng read_png(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::IoError, "cannot read " + path.string());
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_png(bytes);
}

namespace {

GrayPng to_png8(const ImageGray& image) {
    GrayPng png{image.width(), image.height(), 8, {}};
    png.values.resize(image.pixels.size());
    for (size_t i = 0; i < image.pixels.size(); ++i)
        png.values[i] = static_cast<uint16_t>(std::lround(std::clamp(image.pixels.data[i], 0.0f, 1.0f) * 255.0f));
    return png;
}

} // namespace

std::vector<uint8_t> encode_image_png(const ImageGray& image) { return encode_png(to_png8(image)); }

void write_image_png(const std::filesystem::path& path, const ImageGray& image) { write_png(path, to_png8(image)); }

ImageGray image_from_png(const GrayPng& png) {
    ImageGray img(png.width, png.height);
    const float scale = png.bit_depth == 16 ? 65535.0f : 255.0f;
    for (size_t i = 0; i < png.values.size(); ++i) img.pixels.data[i] = static_cast<float>(png.values[i]) / scale;
    return img;
}

ImageGray read_image_png(const std::filesystem::path& path) { return image_from_png(read_png(path)); }

void write_labels_png(const std::filesystem::path& path, const LabelMap& lm) {
    GrayPng png{lm.width(), lm.height(), 16, {}};
    png.values.resize(lm.labels.size());
    for (size_t i = 0; i < lm.labels.size(); ++i) {
        const int32_t v = lm.labels.data[i];
        if (v < 0 || v > 65535) throw Error(ErrorKind::InvalidArgument, "label out of 16-bit range");
        png.values[i] = static_cast<uint16_t>(v);
    }
    write_png(path, png);
}

LabelMap read_labels_png(const std::filesystem::path& path) {
    const GrayPng png = read_png(path);
    LabelMap lm(png.width, png.height);
    for (size_t i = 0; i < png.values.size(); ++i) lm.labels.data[i] = png.values[i];
    return lm;
}

void write_mask_png(const std::filesystem::path& path, const BitMask& mask) {
    GrayPng png{mask.width(), mask.height(), 8, std::vector<uint16_t>(static_cast<size_t>(mask.width()) * mask.height(), 0)};
    mask.for_each_pixel([&](int x, int y) { png.values[static_cast<size_t>(y) * mask.width() + x] = 255; });
    write_png(path, png);
}

} // namespace grainkit
