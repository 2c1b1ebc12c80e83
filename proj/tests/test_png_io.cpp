#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "grainkit/error.hpp"
#include "grainkit/png_io.hpp"
#include "grainkit/rng.hpp"

#include <filesystem>

using namespace grainkit;
namespace fs = std::filesystem;

TEST_CASE("png round trips 8 and 16 bit") {
    KeyedRng rng(1, "png");
    for (int depth : {8, 16}) {
        GrayPng p{37, 19, depth, {}};
        p.values.resize(37 * 19);
        for (auto& v : p.values) v = static_cast<uint16_t>(rng.below(depth == 8 ? 256 : 65536));
        const GrayPng q = decode_png(encode_png(p));
        CHECK(q.width == 37);
        CHECK(q.height == 19);
        CHECK(q.bit_depth == depth);
        CHECK(q.values == p.values);
    }
}

TEST_CASE("labels and images persist through files") {
    const fs::path dir = fs::temp_directory_path() / "grainkit_png_test";
    fs::create_directories(dir);
    LabelMap lm(40, 30);
    for (int y = 0; y < 30; ++y)
        for (int x = 0; x < 40; ++x) lm.labels.at(x, y) = (x / 10) + 4 * (y / 10) + 1;
    lm.labels.at(0, 0) = 300;
    write_labels_png(dir / "labels.png", lm);
    CHECK(read_labels_png(dir / "labels.png").labels == lm.labels);

    ImageGray img(16, 8);
    for (int x = 0; x < 16; ++x) img.pixels.at(x, 3) = static_cast<float>(x * 17) / 255.0f;
    write_image_png(dir / "image.png", img);
    const ImageGray back = read_image_png(dir / "image.png");
    for (size_t i = 0; i < img.pixels.data.size(); ++i) CHECK(back.pixels.data[i] == doctest::Approx(img.pixels.data[i]));
    fs::remove_all(dir);
}

TEST_CASE("corrupt png raises an error instead of crashing") {
    std::vector<uint8_t> junk{0x89, 'P', 'N', 'G', 1, 2, 3, 4, 5};
    CHECK_THROWS_AS(decode_png(junk), Error);
    CHECK_THROWS_AS(read_png("/nonexistent/file.png"), Error);
}
