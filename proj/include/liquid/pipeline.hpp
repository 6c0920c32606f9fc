#pragma once

// End-to-end experiment steps shared by the command-line tool, the tests
// and the Python module: dataset generation and persistence, training,
// closed-loop evaluation and report assembly.

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "liquid/config.hpp"
#include "liquid/metrics.hpp"
#include "liquid/simulator.hpp"
#include "liquid/training.hpp"

namespace liquid {

struct Dataset {
    ExperimentConfig config;
    std::vector<RoadProfile> roads; // one per rollout
    std::vector<Rollout> rollouts;
    DatasetSplits splits;
};

/// Expert rollouts on every train road and season, windowed and split.
Dataset make_dataset(const ExperimentConfig& config);

/// Writes roads/, rollouts/, windows.csv and manifest.json (with SHA-256
/// of every file). Returns the manifest.
nlohmann::json write_dataset(const Dataset& dataset, const std::filesystem::path& dir);

/// Reads a dataset directory, verifying the checksums in the manifest.
Dataset read_dataset(const std::filesystem::path& dir);

/// Camera frames per rollout step, rendered once for training.
struct FrameStore {
    std::vector<std::vector<Frame>> frames; // [rollout][step]
};

FrameStore render_frames(const Dataset& dataset, const CameraConfig& camera = {});

/// Views into `frames` for the train and validation windows.
TrainingData training_views(const Dataset& dataset, const FrameStore& frames);

/// Validation MSE of predicting the mean training label everywhere.
double constant_baseline_mse(const Dataset& dataset);

/// Drives with a trained model; the hidden state persists across steps
/// until reset().
class NeuralPolicy final : public ClosedLoopPolicy {
public:
    explicit NeuralPolicy(PolicyModel model);
    void reset() override;
    PolicyOutput act(const Frame& frame, const RoadProfile& road,
                     const VehicleState& state) override;
    const PolicyModel& model() const { return model_; }

private:
    PolicyModel model_;
    HiddenState state_;
};

PolicyModel initial_policy(const ExperimentConfig& config);

struct TrainOutcome {
    TrainResult result;
    double baseline_val_mse = 0.0;
    double seconds = 0.0;
};

TrainOutcome train_policy(const ExperimentConfig& config, const Dataset& dataset,
                          const FrameStore& frames, const EpochCallback& on_epoch = {});

/// checkpoint.json, history.csv and summary.json.
void write_training_artifacts(const std::filesystem::path& dir, const ExperimentConfig& config,
                              const TrainOutcome& outcome);

struct EvalOutcome {
    std::vector<EpisodeTrace> traces; // [season][road] flattened
    MetricsReport report;
};

struct TrainingSummary {
    double val_mse = 0.0;
    double val_weighted = 0.0;
    std::size_t best_epoch = 0;
};

/// Closed-loop rollouts on the evaluation roads per season, correlation
/// tables and SSIM robustness. With an output directory, writes traces/,
/// saliency/, metrics.json, ssim.csv and one correlation CSV per season.
EvalOutcome evaluate_policy(const ExperimentConfig& config, const PolicyModel& model,
                            const TrainingSummary& summary,
                            const std::filesystem::path* out_dir = nullptr);

/// Markdown table over several metrics reports.
std::string render_report(std::span<const MetricsReport> reports);

} // namespace liquid
