#include <algorithm>
#include <cmath>
#include <random>

#include "doctest.h"
#include "liquid/errors.hpp"
#include "liquid/perception.hpp"

using namespace liquid;

namespace {

Frame random_frame(std::size_t h, std::size_t w, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> d(0.0, 1.0);
    Frame f(1, h, w);
    for (double& v : f.pixels) v = d(rng);
    return f;
}

} // namespace

TEST_CASE("default head geometry") {
    std::mt19937_64 rng(1);
    const ConvHead head = init_conv_head(ConvHeadConfig{}, rng);
    REQUIRE(head.layers.size() == 3);
    CHECK(head.layers[0].out_height == 22);
    CHECK(head.layers[0].out_width == 78);
    CHECK(head.layers[1].out_height == 9);
    CHECK(head.layers[1].out_width == 37);
    CHECK(head.layers[2].out_height == 4);
    CHECK(head.layers[2].out_width == 18);
    CHECK(head.flattened_size() == 16 * 4 * 18);
    const ConvOutput out = conv_forward(head, random_frame(48, 160, rng), true);
    CHECK(out.features.size() == 64);
    CHECK(out.maps.size() == 3);
}

TEST_CASE("geometry errors") {
    ConvHeadConfig cfg;
    cfg.height = 6;
    CHECK_THROWS_AS(make_conv_head(cfg), DimensionError);
    cfg = ConvHeadConfig{};
    cfg.layers.assign(7, {2, 1, 1});
    CHECK_THROWS_AS(make_conv_head(cfg), DimensionError);
    std::mt19937_64 rng(1);
    const ConvHead head = init_conv_head(ConvHeadConfig{}, rng);
    CHECK_THROWS_AS(conv_forward(head, Frame(1, 40, 160), false), DimensionError);
}

TEST_CASE("conv forward against a direct evaluation") {
    ConvHeadConfig cfg;
    cfg.height = 5;
    cfg.width = 6;
    cfg.layers = {{2, 3, 2}};
    cfg.features = 3;
    std::mt19937_64 rng(3);
    const ConvHead head = init_conv_head(cfg, rng);
    const Frame x = random_frame(5, 6, rng);
    const ConvOutput out = conv_forward(head, x, true);
    const ConvLayer& l = head.layers[0];
    REQUIRE(l.out_height == 2);
    REQUIRE(l.out_width == 2);
    std::vector<double> act;
    for (std::size_t oc = 0; oc < 2; ++oc) {
        for (std::size_t oy = 0; oy < 2; ++oy) {
            for (std::size_t ox = 0; ox < 2; ++ox) {
                double s = l.bias[oc];
                for (std::size_t ky = 0; ky < 3; ++ky) {
                    for (std::size_t kx = 0; kx < 3; ++kx) {
                        s += l.kernel[(oc * 3 + ky) * 3 + kx] * x.at(0, 2 * oy + ky, 2 * ox + kx);
                    }
                }
                act.push_back(std::max(0.0, s));
            }
        }
    }
    for (std::size_t q = 0; q < act.size(); ++q) {
        CHECK(out.maps[0].pixels[q] == doctest::Approx(act[q]).epsilon(1e-14));
    }
    for (std::size_t f = 0; f < 3; ++f) {
        double s = head.dense_b[f];
        for (std::size_t q = 0; q < act.size(); ++q) {
            s += head.dense_w[f * act.size() + q] * act[q];
        }
        CHECK(out.features[f] == doctest::Approx(s).epsilon(1e-14));
    }
}

TEST_CASE("max-norm Lipschitz bound holds on random pairs") {
    ConvHeadConfig cfg;
    cfg.height = 16;
    cfg.width = 20;
    cfg.layers = {{3, 3, 2}, {4, 3, 2}};
    cfg.features = 6;
    std::mt19937_64 rng(5);
    const ConvHead head = init_conv_head(cfg, rng);
    const double L = lipschitz_bound(head);
    for (int trial = 0; trial < 50; ++trial) {
        const Frame a = random_frame(16, 20, rng);
        const Frame b = random_frame(16, 20, rng);
        double dx = 0.0;
        for (std::size_t q = 0; q < a.pixels.size(); ++q) {
            dx = std::max(dx, std::abs(a.pixels[q] - b.pixels[q]));
        }
        const auto fa = conv_forward(head, a, false).features;
        const auto fb = conv_forward(head, b, false).features;
        double dy = 0.0;
        for (std::size_t q = 0; q < fa.size(); ++q) {
            dy = std::max(dy, std::abs(fa[q] - fb[q]));
        }
        CHECK(dy <= L * dx * (1.0 + 1e-12));
    }
}

TEST_CASE("nearest-neighbour upsampling") {
    Frame src(1, 2, 2);
    src.pixels = {1, 2, 3, 4};
    const Frame up = upsample_nearest(src, 4, 6);
    CHECK(up.at(0, 0, 0) == 1);
    CHECK(up.at(0, 1, 2) == 1);
    CHECK(up.at(0, 1, 3) == 2);
    CHECK(up.at(0, 2, 0) == 3);
    CHECK(up.at(0, 3, 5) == 4);
}

TEST_CASE("VisualBackprop on a hand-built stack") {
    Frame shallow(2, 4, 4);
    for (std::size_t q = 0; q < 16; ++q) {
        shallow.pixels[q] = 2.0;       // channel 0
        shallow.pixels[16 + q] = 0.0;  // channel 1: mean is 1 everywhere
    }
    Frame deep(1, 2, 2);
    deep.pixels = {1, 2, 3, 4};
    const std::vector<FeatureMap> maps = {shallow, deep};
    const SaliencyMap s = visual_backprop(maps, 8, 8);
    // product equals the upsampled deep map; min-max gives (v - 1) / 3
    CHECK(s.at(0, 0, 0) == 0.0);
    CHECK(s.at(0, 0, 7) == doctest::Approx(1.0 / 3.0));
    CHECK(s.at(0, 7, 0) == doctest::Approx(2.0 / 3.0));
    CHECK(s.at(0, 7, 7) == 1.0);
    CHECK(s.at(0, 3, 3) == 0.0);
    CHECK(s.at(0, 4, 4) == 1.0);
}

TEST_CASE("constant saliency normalizes to zeros") {
    Frame f(1, 3, 3, 0.7);
    normalize_min_max(f);
    for (double v : f.pixels) CHECK(v == 0.0);
}

TEST_CASE("input noise") {
    std::mt19937_64 rng(9);
    const Frame x = random_frame(10, 12, rng);
    CHECK(add_gaussian_noise(x, 0.0, 5) == x);
    CHECK(add_gaussian_noise(x, 0.1, 5) == add_gaussian_noise(x, 0.1, 5));
    CHECK_FALSE(add_gaussian_noise(x, 0.1, 5) == add_gaussian_noise(x, 0.1, 6));
    const Frame noisy = add_gaussian_noise(x, 0.2, 5);
    for (double v : noisy.pixels) CHECK((v >= 0.0 && v <= 1.0));
    CHECK_THROWS_AS(add_gaussian_noise(x, -0.1, 5), NumericError);

    const auto field = gaussian_noise_field(1000000, 0.1, 3);
    double mean = 0.0, sq = 0.0;
    for (double v : field) {
        mean += v;
        sq += v * v;
    }
    mean /= static_cast<double>(field.size());
    sq /= static_cast<double>(field.size());
    CHECK(std::abs(mean) <= 0.003);
    CHECK(sq - mean * mean == doctest::Approx(0.1).epsilon(0.02));
}

TEST_CASE("zero input and zero biases give zero features") {
    std::mt19937_64 rng(21);
    ConvHead head = init_conv_head(ConvHeadConfig{}, rng);
    for (ConvLayer& l : head.layers) std::fill(l.bias.begin(), l.bias.end(), 0.0);
    std::fill(head.dense_b.begin(), head.dense_b.end(), 0.0);
    const auto f = conv_forward(head, Frame(1, 48, 160, 0.0), false).features;
    for (double v : f) CHECK(v == 0.0);
    const Frame x = random_frame(48, 160, rng);
    CHECK(conv_forward(head, x, false).features == conv_forward(head, Frame(x), false).features);
}

TEST_CASE("single 3x3 convolution by hand") {
    ConvHeadConfig cfg;
    cfg.height = 3;
    cfg.width = 3;
    cfg.layers = {{1, 3, 1}};
    cfg.features = 1;
    ConvHead head = make_conv_head(cfg);
    head.layers[0].kernel = {1, 0, -1, 2, 0.5, -2, 0.25, 1, 0};
    head.layers[0].bias = {0.1};
    head.dense_w = {1.0};
    head.dense_b = {0.0};
    Frame x(1, 3, 3);
    x.pixels = {0.9, 0.1, 0.2, 0.4, 0.8, 0.3, 0.5, 0.6, 0.7};
    const double dot = 0.9 - 0.2 + 0.8 + 0.4 - 0.6 + 0.125 + 0.6 + 0.1;
    CHECK(conv_forward(head, x, false).features[0] == doctest::Approx(dot).epsilon(1e-15));
}

TEST_CASE("single-layer constant activations give an all-zero saliency map") {
    const std::vector<FeatureMap> maps = {Frame(3, 4, 5, 0.6)};
    const SaliencyMap s = visual_backprop(maps, 8, 10);
    for (double v : s.pixels) CHECK(v == 0.0);
}

TEST_CASE("saliency support follows the deep activation footprint") {
    Frame shallow(1, 4, 4, 0.5);
    Frame deep(2, 2, 2, 0.0);
    deep.at(0, 1, 0) = 0.8;
    deep.at(1, 1, 0) = 0.4; // mean 0.6 in cell (1,0), zero elsewhere
    const std::vector<FeatureMap> maps = {shallow, deep};
    const SaliencyMap s = visual_backprop(maps, 8, 8);
    for (std::size_t y = 0; y < 8; ++y) {
        for (std::size_t x = 0; x < 8; ++x) {
            const bool inside = y >= 4 && x < 4;
            CHECK(s.at(0, y, x) == (inside ? 1.0 : 0.0));
        }
    }
}
