#pragma once

#include "grainkit/geometry.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace grainkit {

/// Single-channel PNG pixels, widened to 16 bits.
struct GrayPng {
    int width = 0;
    int height = 0;
    int bit_depth = 8;
    std::vector<uint16_t> values;
};

std::vector<uint8_t> encode_png(const GrayPng& img);
GrayPng decode_png(const std::vector<uint8_t>& bytes);
void write_png(const std::filesystem::path& path, const GrayPng& img);
GrayPng read_png(const std::filesystem::path& path);

/// 8-bit gray: intensity = value / 255.
std::vector<uint8_t> encode_image_png(const ImageGray& image);
void write_image_png(const std::filesystem::path& path, const ImageGray& image);
ImageGray read_image_png(const std::filesystem::path& path);
ImageGray image_from_png(const GrayPng& png);

/// 16-bit single channel, pixel value = label.
void write_labels_png(const std::filesystem::path& path, const LabelMap& lm);
LabelMap read_labels_png(const std::filesystem::path& path);

void write_mask_png(const std::filesystem::path& path, const BitMask& mask);

} // namespace grainkit
