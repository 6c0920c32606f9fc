#include <algorithm>
#include <cmath>
#include <random>

#include "liquid/training.hpp"

namespace liquid {

double gradient_relative_error(double a, double b, double floor) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

GradcheckResult gradient_check(CellKind kind, const GradcheckOptions& options) {
    GradcheckResult result;
    result.kind = kind;
    std::mt19937_64 rng(options.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (std::size_t inst = 0; inst < options.instances; ++inst) {
        PolicyModel model = init_policy(kind, options.m, options.n, rng);
        std::uniform_real_distribution<double> kappa(0.05, 0.5);
        for (double& k : model.cell.kappa_raw) {
            k = std::copysign(kappa(rng), k);
        }
        std::vector<std::vector<std::vector<double>>> inputs(options.batch);
        std::vector<std::vector<double>> targets(options.batch);
        std::vector<SequenceView> batch;
        for (std::size_t b = 0; b < options.batch; ++b) {
            for (std::size_t t = 0; t < options.length; ++t) {
                std::vector<double> x(options.n);
                for (double& v : x) {
                    v = normal(rng);
                }
                inputs[b].push_back(std::move(x));
                targets[b].push_back(0.5 * normal(rng));
            }
        }
        for (std::size_t b = 0; b < options.batch; ++b) {
            SequenceView view;
            view.features = inputs[b];
            view.targets = targets[b];
            batch.push_back(view);
        }
        GradientSet exact = bptt_gradients(model, batch, LossKind::Mse);
        const GradientSet coarse = finite_difference_gradients(model, batch, LossKind::Mse, options.step);
        const GradientSet fine =
            finite_difference_gradients(model, batch, LossKind::Mse, options.step / 2.0);
        if (result.names.empty()) {
            result.names = exact.names;
            result.worst.assign(exact.names.size(), 0.0);
        }
        for (std::size_t a = 0; a < exact.arrays.size(); ++a) {
            if (!exact.arrays[a].empty()) {
                exact.arrays[a][0] += options.inject;
            }
            for (std::size_t q = 0; q < exact.arrays[a].size(); ++q) {
                const double fd = (4.0 * fine.arrays[a][q] - coarse.arrays[a][q]) / 3.0;
                const double err = gradient_relative_error(exact.arrays[a][q], fd, options.floor);
                result.worst[a] = std::max(result.worst[a], err);
                result.max_error = std::max(result.max_error, err);
            }
        }
    }
    result.passed = result.max_error <= options.tolerance;
    return result;
}

} // namespace liquid
