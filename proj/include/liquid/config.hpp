#pragma once

// Experiment configuration: one flat JSON object validated against a fixed
// schema, with key=value overrides.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "liquid/cells.hpp"
#include "liquid/metrics.hpp"
#include "liquid/simulator.hpp"
#include "liquid/training.hpp"

namespace liquid {

inline constexpr int kConfigFormatVersion = 1;

struct ExperimentConfig {
    CellKind kind = CellKind::LRC_SA;
    std::size_t m = 19;
    std::size_t n = 64; // conv feature size
    double dt = 1.0;
    TrainingConfig training;
    std::size_t stride = 16;

    RoadOptions road;
    std::vector<std::uint64_t> train_road_seeds = {0, 1, 2, 3};
    std::vector<std::uint64_t> eval_road_seeds = {1000};
    std::vector<Season> seasons = {Season::Summer, Season::Winter};
    double perturbation = 0.1;
    double perturbation_time_constant = 0.5;

    std::vector<double> noise_variances = {0.0, 0.1, 0.2};
    std::size_t ssim_frames = 1600;
    std::size_t saliency_images = 8;
    CorrelationReference correlation_reference = CorrelationReference::Prediction;

    std::string output_dir = "runs";
};

struct SchemaEntry {
    std::string_view key;
    std::string_view type;
    bool required;
    std::string_view description;
};

std::span<const SchemaEntry> config_schema();

/// Human-readable table of config_schema().
std::string schema_description();

/// Validates keys and types, then values. Throws ConfigError naming the
/// offending key.
ExperimentConfig config_from_json(const nlohmann::json& doc);
nlohmann::json config_to_json(const ExperimentConfig& config);

/// Applies "key=value"; the value is parsed as JSON when possible and as a
/// bare string otherwise.
void apply_override(nlohmann::json& doc, std::string_view assignment);

ExperimentConfig load_config(const std::filesystem::path& path,
                             std::span<const std::string> overrides = {});

/// SHA-256 of the canonical serialization.
std::string config_hash(const ExperimentConfig& config);

std::string sha256_hex(std::string_view bytes);

} // namespace liquid
