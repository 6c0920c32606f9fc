#pragma once

// Convolutional feature head, VisualBackprop saliency and input-noise
// injection for camera frames.

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <vector>

namespace liquid {

/// Channel-major intensity grid (channels x height x width).
struct Frame {
    std::size_t channels = 1;
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<double> pixels;

    Frame() = default;
    Frame(std::size_t c, std::size_t h, std::size_t w, double fill = 0.0)
        : channels(c), height(h), width(w), pixels(c * h * w, fill) {}

    double& at(std::size_t c, std::size_t y, std::size_t x) {
        return pixels[(c * height + y) * width + x];
    }
    double at(std::size_t c, std::size_t y, std::size_t x) const {
        return pixels[(c * height + y) * width + x];
    }

    friend bool operator==(const Frame&, const Frame&) = default;
};

/// Per-layer activation stack; same layout as Frame.
using FeatureMap = Frame;

/// Relevance grid at input resolution, values in [0,1]. Single channel.
using SaliencyMap = Frame;

struct ConvLayerSpec {
    std::size_t channels;
    std::size_t kernel;
    std::size_t stride;
};

struct ConvHeadConfig {
    std::size_t height = 48;
    std::size_t width = 160;
    std::size_t in_channels = 1;
    std::vector<ConvLayerSpec> layers = {{8, 5, 2}, {16, 5, 2}, {16, 3, 2}};
    std::size_t features = 64;
};

/// Valid (unpadded) convolution followed by ReLU.
struct ConvLayer {
    ConvLayerSpec spec{};
    std::size_t in_channels = 0;
    std::size_t in_height = 0, in_width = 0;
    std::size_t out_height = 0, out_width = 0;
    std::vector<double> kernel; // out_ch x in_ch x k x k
    std::vector<double> bias;   // out_ch
};

struct ConvHead {
    ConvHeadConfig config;
    std::vector<ConvLayer> layers;
    std::vector<double> dense_w; // features x flattened(last layer)
    std::vector<double> dense_b; // features

    std::size_t flattened_size() const;

    template <class Visitor>
    void visit(Visitor&& visitor) {
        visit_impl(*this, visitor);
    }
    template <class Visitor>
    void visit(Visitor&& visitor) const {
        visit_impl(*this, visitor);
    }

private:
    template <class Self, class Visitor>
    static void visit_impl(Self& self, Visitor& visitor) {
        static constexpr std::string_view kernel_names[] = {"conv0.kernel", "conv1.kernel",
                                                            "conv2.kernel", "conv3.kernel",
                                                            "conv4.kernel", "conv5.kernel"};
        static constexpr std::string_view bias_names[] = {"conv0.bias", "conv1.bias",
                                                          "conv2.bias", "conv3.bias",
                                                          "conv4.bias", "conv5.bias"};
        for (std::size_t l = 0; l < self.layers.size(); ++l) {
            visitor(kernel_names[l], self.layers[l].kernel, true);
            visitor(bias_names[l], self.layers[l].bias, false);
        }
        visitor(std::string_view("dense.w"), self.dense_w, true);
        visitor(std::string_view("dense.b"), self.dense_b, false);
    }
};

/// Computes layer geometry; throws DimensionError if a layer does not fit
/// or more than six layers are requested.
ConvHead make_conv_head(const ConvHeadConfig& config);

/// He-uniform kernels, zero biases.
ConvHead init_conv_head(const ConvHeadConfig& config, std::mt19937_64& rng);

struct ConvOutput {
    std::vector<double> features;
    std::vector<FeatureMap> maps; // post-ReLU, shallow to deep; empty unless kept
};

ConvOutput conv_forward(const ConvHead& head, const Frame& frame, bool keep_maps);

/// Accumulates parameter gradients into `grad` (congruent with `head`).
/// `maps` must come from conv_forward(head, frame, true).
void conv_backward(const ConvHead& head, const Frame& frame, std::span<const FeatureMap> maps,
                   std::span<const double> d_features, ConvHead& grad);

/// Upper bound on the max-norm Lipschitz constant of conv_forward.
double lipschitz_bound(const ConvHead& head);

/// Channel-average each map, then from the deepest layer upsample
/// (nearest neighbour) and multiply into the next shallower average; the
/// final product is upsampled to out_height x out_width and min-max
/// normalized. A constant result yields all zeros.
SaliencyMap visual_backprop(std::span<const FeatureMap> maps, std::size_t out_height,
                            std::size_t out_width);

/// Nearest-neighbour resampling of a single-channel grid.
Frame upsample_nearest(const Frame& src, std::size_t height, std::size_t width);

/// Channel mean of a stack.
Frame channel_mean(const FeatureMap& map);

/// Min-max normalization to [0,1]; constant input maps to zeros.
void normalize_min_max(Frame& map);

/// i.i.d. N(0, variance) samples; the unclamped noise added by
/// add_gaussian_noise for the same seed.
std::vector<double> gaussian_noise_field(std::size_t count, double variance, std::uint64_t seed);

/// frame + N(0, variance) per pixel, clamped to [0,1].
Frame add_gaussian_noise(const Frame& frame, double variance, std::uint64_t seed);

} // namespace liquid
