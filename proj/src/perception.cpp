#include "liquid/perception.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "liquid/errors.hpp"

namespace liquid {

std::size_t ConvHead::flattened_size() const {
    if (layers.empty()) {
        return config.in_channels * config.height * config.width;
    }
    const ConvLayer& last = layers.back();
    return last.spec.channels * last.out_height * last.out_width;
}

ConvHead make_conv_head(const ConvHeadConfig& config) {
    if (config.layers.size() > 6) {
        throw DimensionError("conv head supports at most 6 layers");
    }
    ConvHead head;
    head.config = config;
    std::size_t channels = config.in_channels;
    std::size_t height = config.height;
    std::size_t width = config.width;
    for (const ConvLayerSpec& spec : config.layers) {
        if (spec.kernel == 0 || spec.stride == 0 || spec.channels == 0) {
            throw DimensionError("conv layer needs positive kernel, stride and channels");
        }
        if (spec.kernel > height || spec.kernel > width) {
            throw DimensionError("conv kernel " + std::to_string(spec.kernel) +
                                 " larger than its input " + std::to_string(height) + "x" +
                                 std::to_string(width));
        }
        ConvLayer layer;
        layer.spec = spec;
        layer.in_channels = channels;
        layer.in_height = height;
        layer.in_width = width;
        layer.out_height = (height - spec.kernel) / spec.stride + 1;
        layer.out_width = (width - spec.kernel) / spec.stride + 1;
        layer.kernel.assign(spec.channels * channels * spec.kernel * spec.kernel, 0.0);
        layer.bias.assign(spec.channels, 0.0);
        channels = spec.channels;
        height = layer.out_height;
        width = layer.out_width;
        head.layers.push_back(std::move(layer));
    }
    head.dense_w.assign(config.features * head.flattened_size(), 0.0);
    head.dense_b.assign(config.features, 0.0);
    return head;
}

ConvHead init_conv_head(const ConvHeadConfig& config, std::mt19937_64& rng) {
    ConvHead head = make_conv_head(config);
    for (ConvLayer& layer : head.layers) {
        const double fan_in =
            static_cast<double>(layer.in_channels * layer.spec.kernel * layer.spec.kernel);
        std::uniform_real_distribution<double> dist(-std::sqrt(6.0 / fan_in),
                                                    std::sqrt(6.0 / fan_in));
        for (double& v : layer.kernel) {
            v = dist(rng);
        }
    }
    const double fan_in = static_cast<double>(head.flattened_size());
    std::uniform_real_distribution<double> dist(-std::sqrt(3.0 / fan_in), std::sqrt(3.0 / fan_in));
    for (double& v : head.dense_w) {
        v = dist(rng);
    }
    return head;
}

namespace {

void conv_layer_forward(const ConvLayer& layer, const double* in, double* out) {
    const std::size_t k = layer.spec.kernel;
    const std::size_t s = layer.spec.stride;
    const std::size_t oh = layer.out_height;
    const std::size_t ow = layer.out_width;
    const std::size_t iw = layer.in_width;
    const std::size_t ih = layer.in_height;
    for (std::size_t oc = 0; oc < layer.spec.channels; ++oc) {
        double* out_c = out + oc * oh * ow;
        std::fill(out_c, out_c + oh * ow, layer.bias[oc]);
        for (std::size_t ic = 0; ic < layer.in_channels; ++ic) {
            const double* in_c = in + ic * ih * iw;
            const double* kern = layer.kernel.data() + (oc * layer.in_channels + ic) * k * k;
            for (std::size_t ky = 0; ky < k; ++ky) {
                for (std::size_t kx = 0; kx < k; ++kx) {
                    const double wv = kern[ky * k + kx];
                    for (std::size_t oy = 0; oy < oh; ++oy) {
                        const double* row = in_c + (oy * s + ky) * iw + kx;
                        double* orow = out_c + oy * ow;
                        for (std::size_t ox = 0; ox < ow; ++ox) {
                            orow[ox] += wv * row[ox * s];
                        }
                    }
                }
            }
        }
        for (std::size_t i = 0; i < oh * ow; ++i) {
            out_c[i] = std::max(0.0, out_c[i]);
        }
    }
}

} // namespace

ConvOutput conv_forward(const ConvHead& head, const Frame& frame, bool keep_maps) {
    const ConvHeadConfig& cfg = head.config;
    if (frame.channels != cfg.in_channels || frame.height != cfg.height ||
        frame.width != cfg.width) {
        throw DimensionError("frame is " + std::to_string(frame.channels) + "x" +
                             std::to_string(frame.height) + "x" + std::to_string(frame.width) +
                             ", conv head expects " + std::to_string(cfg.in_channels) + "x" +
                             std::to_string(cfg.height) + "x" + std::to_string(cfg.width));
    }
    ConvOutput result;
    std::vector<FeatureMap> maps;
    maps.reserve(head.layers.size());
    const double* in = frame.pixels.data();
    for (const ConvLayer& layer : head.layers) {
        maps.emplace_back(layer.spec.channels, layer.out_height, layer.out_width);
        conv_layer_forward(layer, in, maps.back().pixels.data());
        in = maps.back().pixels.data();
    }
    const std::size_t flat = head.flattened_size();
    result.features.assign(head.dense_b.begin(), head.dense_b.end());
    for (std::size_t f = 0; f < cfg.features; ++f) {
        const double* wf = head.dense_w.data() + f * flat;
        double acc = 0.0;
        for (std::size_t q = 0; q < flat; ++q) {
            acc += wf[q] * in[q];
        }
        result.features[f] += acc;
    }
    for (std::size_t f = 0; f < result.features.size(); ++f) {
        if (!std::isfinite(result.features[f])) {
            throw NumericError("conv_forward produced a non-finite feature", f);
        }
    }
    if (keep_maps) {
        result.maps = std::move(maps);
    }
    return result;
}

void conv_backward(const ConvHead& head, const Frame& frame, std::span<const FeatureMap> maps,
                   std::span<const double> d_features, ConvHead& grad) {
    const std::size_t flat = head.flattened_size();
    const std::size_t nl = head.layers.size();
    if (maps.size() != nl || d_features.size() != head.config.features) {
        throw DimensionError("conv_backward: maps/feature gradient do not match the head");
    }
    const double* last = nl ? maps.back().pixels.data() : frame.pixels.data();

    std::vector<double> d_in(flat, 0.0);
    for (std::size_t f = 0; f < head.config.features; ++f) {
        const double df = d_features[f];
        if (df == 0.0) {
            continue;
        }
        grad.dense_b[f] += df;
        const double* wf = head.dense_w.data() + f * flat;
        double* gwf = grad.dense_w.data() + f * flat;
        for (std::size_t q = 0; q < flat; ++q) {
            gwf[q] += df * last[q];
            d_in[q] += df * wf[q];
        }
    }

    std::vector<double> d_out;
    for (std::size_t li = nl; li-- > 0;) {
        const ConvLayer& layer = head.layers[li];
        ConvLayer& glayer = grad.layers[li];
        d_out.swap(d_in);
        const FeatureMap& out_map = maps[li];
        for (std::size_t q = 0; q < d_out.size(); ++q) {
            if (out_map.pixels[q] <= 0.0) {
                d_out[q] = 0.0; // ReLU
            }
        }
        const double* in = li == 0 ? frame.pixels.data() : maps[li - 1].pixels.data();
        const bool need_input_grad = li > 0;
        if (need_input_grad) {
            d_in.assign(layer.in_channels * layer.in_height * layer.in_width, 0.0);
        }
        const std::size_t k = layer.spec.kernel;
        const std::size_t s = layer.spec.stride;
        const std::size_t oh = layer.out_height;
        const std::size_t ow = layer.out_width;
        const std::size_t ih = layer.in_height;
        const std::size_t iw = layer.in_width;
        for (std::size_t oc = 0; oc < layer.spec.channels; ++oc) {
            const double* dout_c = d_out.data() + oc * oh * ow;
            double db = 0.0;
            for (std::size_t q = 0; q < oh * ow; ++q) {
                db += dout_c[q];
            }
            glayer.bias[oc] += db;
            for (std::size_t ic = 0; ic < layer.in_channels; ++ic) {
                const double* in_c = in + ic * ih * iw;
                const std::size_t kbase = (oc * layer.in_channels + ic) * k * k;
                for (std::size_t ky = 0; ky < k; ++ky) {
                    for (std::size_t kx = 0; kx < k; ++kx) {
                        double acc = 0.0;
                        for (std::size_t oy = 0; oy < oh; ++oy) {
                            const double* row = in_c + (oy * s + ky) * iw + kx;
                            const double* drow = dout_c + oy * ow;
                            for (std::size_t ox = 0; ox < ow; ++ox) {
                                acc += drow[ox] * row[ox * s];
                            }
                        }
                        glayer.kernel[kbase + ky * k + kx] += acc;
                        if (need_input_grad) {
                            const double wv = layer.kernel[kbase + ky * k + kx];
                            double* din_c = d_in.data() + ic * ih * iw;
                            for (std::size_t oy = 0; oy < oh; ++oy) {
                                double* row = din_c + (oy * s + ky) * iw + kx;
                                const double* drow = dout_c + oy * ow;
                                for (std::size_t ox = 0; ox < ow; ++ox) {
                                    row[ox * s] += wv * drow[ox];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

double lipschitz_bound(const ConvHead& head) {
    double bound = 1.0;
    for (const ConvLayer& layer : head.layers) {
        const std::size_t per_out = layer.in_channels * layer.spec.kernel * layer.spec.kernel;
        double worst = 0.0;
        for (std::size_t oc = 0; oc < layer.spec.channels; ++oc) {
            double sum = 0.0;
            for (std::size_t q = 0; q < per_out; ++q) {
                sum += std::abs(layer.kernel[oc * per_out + q]);
            }
            worst = std::max(worst, sum);
        }
        bound *= worst;
    }
    const std::size_t flat = head.flattened_size();
    double worst = 0.0;
    for (std::size_t f = 0; f < head.config.features; ++f) {
        double sum = 0.0;
        for (std::size_t q = 0; q < flat; ++q) {
            sum += std::abs(head.dense_w[f * flat + q]);
        }
        worst = std::max(worst, sum);
    }
    return bound * worst;
}

Frame upsample_nearest(const Frame& src, std::size_t height, std::size_t width) {
    Frame dst(src.channels, height, width);
    for (std::size_t c = 0; c < src.channels; ++c) {
        for (std::size_t y = 0; y < height; ++y) {
            const std::size_t sy = y * src.height / height;
            for (std::size_t x = 0; x < width; ++x) {
                dst.at(c, y, x) = src.at(c, sy, x * src.width / width);
            }
        }
    }
    return dst;
}

Frame channel_mean(const FeatureMap& map) {
    Frame mean(1, map.height, map.width);
    const std::size_t plane = map.height * map.width;
    for (std::size_t c = 0; c < map.channels; ++c) {
        for (std::size_t q = 0; q < plane; ++q) {
            mean.pixels[q] += map.pixels[c * plane + q];
        }
    }
    for (double& v : mean.pixels) {
        v /= static_cast<double>(map.channels);
    }
    return mean;
}

void normalize_min_max(Frame& map) {
    if (map.pixels.empty()) {
        return;
    }
    const auto [lo_it, hi_it] = std::minmax_element(map.pixels.begin(), map.pixels.end());
    const double lo = *lo_it;
    const double range = *hi_it - lo;
    if (!(range > 0.0)) {
        std::fill(map.pixels.begin(), map.pixels.end(), 0.0);
        return;
    }
    for (double& v : map.pixels) {
        v = (v - lo) / range;
    }
}

SaliencyMap visual_backprop(std::span<const FeatureMap> maps, std::size_t out_height,
                            std::size_t out_width) {
    if (maps.empty()) {
        throw DimensionError("visual_backprop needs at least one layer");
    }
    Frame current = channel_mean(maps.back());
    for (std::size_t l = maps.size() - 1; l-- > 0;) {
        Frame shallower = channel_mean(maps[l]);
        Frame up = upsample_nearest(current, shallower.height, shallower.width);
        for (std::size_t q = 0; q < up.pixels.size(); ++q) {
            up.pixels[q] *= shallower.pixels[q];
        }
        current = std::move(up);
    }
    SaliencyMap out = upsample_nearest(current, out_height, out_width);
    normalize_min_max(out);
    return out;
}

std::vector<double> gaussian_noise_field(std::size_t count, double variance, std::uint64_t seed) {
    if (!(variance >= 0.0)) {
        throw NumericError("noise variance must be non-negative");
    }
    std::vector<double> noise(count, 0.0);
    if (variance == 0.0) {
        return noise;
    }
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> dist(0.0, std::sqrt(variance));
    for (double& v : noise) {
        v = dist(rng);
    }
    return noise;
}

Frame add_gaussian_noise(const Frame& frame, double variance, std::uint64_t seed) {
    const std::vector<double> noise = gaussian_noise_field(frame.pixels.size(), variance, seed);
    Frame out = frame;
    if (variance == 0.0) {
        return out;
    }
    for (std::size_t q = 0; q < out.pixels.size(); ++q) {
        out.pixels[q] = std::clamp(out.pixels[q] + noise[q], 0.0, 1.0);
    }
    return out;
}

} // namespace liquid
