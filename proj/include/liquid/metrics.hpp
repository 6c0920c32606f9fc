#pragma once

// Interpretability measurements: neuron/trajectory correlation, SSIM,
// saliency robustness under input noise, and the metrics report.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "liquid/perception.hpp"
#include "liquid/simulator.hpp"

namespace liquid {

struct Correlation {
    double value = 0.0;      // in [0,1]
    bool degenerate = false; // a constant input; value is then 0
};

/// |Pearson correlation at lag 0|. Throws DimensionError on a length
/// mismatch or fewer than two samples.
Correlation abs_correlation(std::span<const double> x, std::span<const double> y);

enum class CorrelationReference { Prediction, Curvature };

std::string_view to_string(CorrelationReference ref);
CorrelationReference parse_correlation_reference(std::string_view name);

struct CorrelationTable {
    CorrelationReference reference = CorrelationReference::Prediction;
    std::vector<std::vector<double>> values;   // [run][neuron]
    std::vector<std::vector<bool>> degenerate; // [run][neuron]
    double mean = 0.0; // over all runs and neurons
    double std = 0.0;  // population standard deviation

    std::size_t neurons() const { return values.empty() ? 0 : values.front().size(); }
    /// Per-neuron mean over runs.
    std::vector<double> neuron_means() const;
};

/// One run per trace. Throws DimensionError if traces is empty or hidden
/// sizes differ.
CorrelationTable correlation_table(std::span<const EpisodeTrace> traces,
                                   CorrelationReference reference);

struct Summary {
    double mean = 0.0;
    double std = 0.0; // population
    double median = 0.0;
    double q1 = 0.0, q3 = 0.0;
    double min = 0.0, max = 0.0;
};

/// Throws DimensionError on empty input. Quartiles by linear interpolation.
Summary summarize(std::span<const double> values);

/// Mean SSIM over valid 11x11 Gaussian windows (sigma 1.5), C1 = 0.01^2,
/// C2 = 0.03^2, per channel then averaged. Images smaller than the window
/// use a single unweighted window over the whole image.
double ssim(const Frame& a, const Frame& b);

using SaliencyFunction = std::function<SaliencyMap(const Frame&)>;

/// VisualBackprop through the given head.
SaliencyFunction head_saliency(const ConvHead& head);

struct SsimSamples {
    double variance = 0.0;
    std::vector<double> values; // one per frame
};

/// For every frame and variance: ssim(saliency(frame), saliency(frame +
/// noise)). Noise seeds derive from (seed, frame index, variance index).
std::vector<SsimSamples> ssim_robustness(const SaliencyFunction& saliency,
                                         std::span<const Frame> frames,
                                         std::span<const double> variances, std::uint64_t seed,
                                         std::size_t threads = 1);

struct ModelMetrics {
    std::string model;
    Season season = Season::Summer;
    double val_mse = 0.0;
    double val_weighted = 0.0;
    std::size_t best_epoch = 0;
    std::vector<double> completion; // per evaluation road
    std::vector<bool> crashed;
    CorrelationTable correlation;
    std::vector<SsimSamples> ssim;
};

struct MetricsReport {
    std::vector<ModelMetrics> entries;
    std::vector<std::uint64_t> seeds;
    std::string config_hash;
};

nlohmann::json report_to_json(const MetricsReport& report);
MetricsReport report_from_json(const nlohmann::json& doc);

/// Recomputes every stored aggregate from its samples; returns one message
/// per mismatch (empty when consistent).
std::vector<std::string> check_report_integrity(const nlohmann::json& doc);

/// header: model,season,variance,frame_index,ssim
std::string ssim_to_csv(const MetricsReport& report);

} // namespace liquid
