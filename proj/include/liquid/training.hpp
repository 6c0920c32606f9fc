#pragma once

// Imitation training of a conv-head + recurrent-cell + linear-readout
// steering policy: losses, hand-derived backpropagation through time, a
// central-difference gradient oracle, AdamW and the epoch loop with
// best-validation checkpoint selection.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "liquid/cells.hpp"
#include "liquid/perception.hpp"

namespace liquid {

struct TrainingConfig {
    std::size_t epochs = 100;
    std::size_t batch_size = 32;
    std::size_t sequence_length = 32;
    double learning_rate = 5e-4;
    double weight_decay = 1e-6;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    double grad_clip = 10.0; // global-norm clip; <= 0 disables
    std::uint64_t seed = 0;
    std::size_t threads = 1;
    /// Arrays whose name starts with any of these prefixes are not updated.
    std::vector<std::string> frozen_prefixes;

    void validate() const;
};

/// Affine map from the hidden state to a scalar steering command.
struct Readout {
    std::vector<double> weight; // m
    std::vector<double> bias;   // 1

    template <class Visitor>
    void visit(Visitor&& visitor) {
        visitor(std::string_view("w"), weight, true);
        visitor(std::string_view("b"), bias, false);
    }
    template <class Visitor>
    void visit(Visitor&& visitor) const {
        visitor(std::string_view("w"), weight, true);
        visitor(std::string_view("b"), bias, false);
    }
};

/// Optional conv head (absent: inputs are feature vectors of length n),
/// recurrent cell and readout.
struct PolicyModel {
    std::optional<ConvHead> head;
    CellParameters cell;
    Readout readout;

    /// visitor(qualified_name, array, decays) over head, cell and readout
    /// arrays in a fixed order; names are prefixed "head.", "cell.",
    /// "readout.".
    template <class Visitor>
    void visit(Visitor&& visitor) {
        visit_impl(*this, visitor);
    }
    template <class Visitor>
    void visit(Visitor&& visitor) const {
        visit_impl(*this, visitor);
    }

    std::size_t parameter_count() const;

private:
    template <class Self, class Visitor>
    static void visit_impl(Self& self, Visitor& visitor) {
        auto prefixed = [&](std::string_view prefix) {
            return [&visitor, prefix](std::string_view name, auto& array, bool decays) {
                std::string full(prefix);
                full += name;
                visitor(std::string_view(full), array, decays);
            };
        };
        if (self.head) {
            self.head->visit(prefixed("head."));
        }
        self.cell.visit(prefixed("cell."));
        self.readout.visit(prefixed("readout."));
    }
};

PolicyModel init_policy(CellKind kind, std::size_t m, const ConvHeadConfig& head_config,
                        std::mt19937_64& rng, double dt = 1.0);
/// Policy without conv head; inputs are vectors of length n.
PolicyModel init_policy(CellKind kind, std::size_t m, std::size_t n, std::mt19937_64& rng,
                        double dt = 1.0);

/// Same shapes, all zeros.
PolicyModel zeros_like(const PolicyModel& model);

/// Non-owning view of one training sequence. Exactly one of frames /
/// features is non-empty, matching whether the model has a conv head.
struct SequenceView {
    std::span<const Frame> frames;
    std::span<const std::vector<double>> features;
    std::span<const double> targets;

    std::size_t length() const { return targets.size(); }
};

enum class LossKind { Mse, Weighted };

double mse_loss(std::span<const double> pred, std::span<const double> target);

/// sum_t w_t (pred_t - target_t)^2 with w_t = |target_t| / sum_s |target_s|;
/// uniform weights 1/T when the target is identically zero.
double weighted_loss(std::span<const double> pred, std::span<const double> target);

double sequence_loss(LossKind kind, std::span<const double> pred, std::span<const double> target);

/// Steering predictions for one sequence, hidden state reset to zero.
std::vector<double> predict_sequence(const PolicyModel& model, const SequenceView& seq);

/// Mean over sequences of the per-sequence loss.
double batch_loss(const PolicyModel& model, std::span<const SequenceView> batch, LossKind loss);

/// One array per model parameter array, congruent with PolicyModel::visit.
struct GradientSet {
    std::vector<std::string> names;
    std::vector<std::vector<double>> arrays;
    double loss = 0.0;

    const std::vector<double>& at(std::string_view name) const;
    double global_norm() const;
};

/// Reverse-mode gradients of one recurrent step.
struct StepAdjoint {
    HiddenState d_prev;
    std::vector<double> d_input;
};

/// Accumulates d(step)/d(params)^T d_next into `grad` (congruent with
/// params) and returns the adjoint of the previous state and the input.
StepAdjoint step_backward(const CellParameters& params, const HiddenState& prev,
                          std::span<const double> x, const HiddenState& d_next,
                          CellParameters& grad);

/// Gradient of batch_loss by backpropagation through time. Throws
/// NumericError naming the array on non-finite gradients.
GradientSet bptt_gradients(const PolicyModel& model, std::span<const SequenceView> batch,
                           LossKind loss, std::size_t threads = 1);

/// Central differences (L(theta+h) - L(theta-h)) / 2h per coordinate.
GradientSet finite_difference_gradients(const PolicyModel& model,
                                        std::span<const SequenceView> batch, LossKind loss,
                                        double step);

/// Central differences of an arbitrary scalar function of a flat vector.
std::vector<double> finite_difference(const std::function<double(std::span<const double>)>& f,
                                      std::span<const double> theta, double step);

struct GradcheckOptions {
    std::size_t instances = 10;
    std::size_t m = 4;
    std::size_t n = 3;
    std::size_t length = 7;
    std::size_t batch = 2;
    /// Base step of the Richardson-extrapolated central difference
    /// (4 D(h/2) - D(h)) / 3.
    double step = 1e-3;
    /// Gradients smaller than this are compared on an absolute scale.
    double floor = 1e-7;
    double tolerance = 1e-5;
    std::uint64_t seed = 0;
    /// Added to the first element of every BPTT gradient array; a
    /// negative control that must make the check fail.
    double inject = 0.0;
};

struct GradcheckResult {
    CellKind kind{};
    std::vector<std::string> names;  // parameter arrays
    std::vector<double> worst;       // worst relative error per array
    double max_error = 0.0;
    bool passed = false;
};

/// |a - b| / max(|a|, |b|, floor)
double gradient_relative_error(double a, double b, double floor);

/// BPTT against finite differences on random feature-input instances.
/// Instances keep |kappa_raw| away from the kink of |.| at zero.
GradcheckResult gradient_check(CellKind kind, const GradcheckOptions& options = {});

struct AdamWConfig {
    double learning_rate = 5e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-6;
};

/// One AdamW update of a flat array at step t >= 1:
///   m <- b1 m + (1-b1) g,  v <- b2 v + (1-b2) g^2,
///   theta <- theta - lr (m_hat / (sqrt(v_hat) + eps) + wd theta)
/// with the decay term only when `decays`.
void adamw_update(std::span<double> theta, std::span<const double> grad, std::span<double> m1,
                  std::span<double> m2, std::size_t t, const AdamWConfig& config, bool decays);

struct AdamWState {
    std::size_t t = 0;
    std::vector<std::vector<double>> m1;
    std::vector<std::vector<double>> m2;
};

AdamWState make_adamw_state(const PolicyModel& model);

/// Increments state.t and updates every array not matching `frozen`.
void adamw_step(PolicyModel& model, const GradientSet& grads, AdamWState& state,
                const AdamWConfig& config, std::span<const std::string> frozen = {});

/// Scales all gradients so the global norm is at most max_norm; returns
/// the norm before clipping.
double clip_global_norm(GradientSet& grads, double max_norm);

struct HistoryRow {
    std::size_t epoch = 0; // 1-based
    double train_mse = 0.0;
    double val_mse = 0.0;
    double val_weighted = 0.0;
};

struct TrainResult {
    PolicyModel best;
    std::size_t best_epoch = 0; // 0: initial model
    double best_val_mse = 0.0;
    std::vector<HistoryRow> history;
    AdamWState optimizer; // state after the best epoch
    bool diverged = false;
    std::string message;
};

struct TrainingData {
    std::vector<SequenceView> train;
    std::vector<SequenceView> validation;
};

using EpochCallback = std::function<void(const HistoryRow&)>;

/// Trains for config.epochs epochs of shuffled mini-batches and returns
/// the checkpoint with minimal validation MSE (no early stopping).
TrainResult train(const PolicyModel& initial, const TrainingData& data,
                  const TrainingConfig& config, const EpochCallback& on_epoch = {});

/// header: epoch,train_mse,val_mse,val_weighted,best
std::string history_to_csv(const std::vector<HistoryRow>& history, std::size_t best_epoch);

/// Full checkpoint document: cell document plus head, readout and
/// optional optimizer moments.
std::string policy_to_json(const PolicyModel& model, const AdamWState* optimizer = nullptr);
PolicyModel policy_from_json(const std::string& text, AdamWState* optimizer = nullptr);

} // namespace liquid
