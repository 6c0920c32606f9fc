#include "liquid/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "json_writer.hpp"
#include "liquid/cell_io.hpp"
#include "liquid/errors.hpp"

namespace liquid {

void TrainingConfig::validate() const {
    if (epochs < 1) {
        throw ConfigError("epochs must be >= 1");
    }
    if (batch_size < 1) {
        throw ConfigError("batch_size must be >= 1");
    }
    if (sequence_length < 1) {
        throw ConfigError("sequence_length must be >= 1");
    }
    if (!(learning_rate >= 0.0)) {
        throw ConfigError("learning_rate must be non-negative");
    }
    if (!(weight_decay >= 0.0)) {
        throw ConfigError("weight_decay must be non-negative");
    }
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
        throw ConfigError("adam betas must lie in [0,1)");
    }
    if (!(adam_eps > 0.0)) {
        throw ConfigError("adam_eps must be positive");
    }
}

std::size_t PolicyModel::parameter_count() const {
    std::size_t count = 0;
    visit([&](std::string_view, const std::vector<double>& v, bool) { count += v.size(); });
    return count;
}

namespace {

Readout init_readout(std::size_t m, std::mt19937_64& rng) {
    Readout r;
    const double s = m > 0 ? 1.0 / std::sqrt(static_cast<double>(m)) : 1.0;
    std::uniform_real_distribution<double> dist(-s, s);
    r.weight.resize(m);
    for (double& w : r.weight) {
        w = dist(rng);
    }
    r.bias.assign(1, 0.0);
    return r;
}

} // namespace

PolicyModel init_policy(CellKind kind, std::size_t m, const ConvHeadConfig& head_config,
                        std::mt19937_64& rng, double dt) {
    PolicyModel model;
    model.head = init_conv_head(head_config, rng);
    model.cell = init_parameters(kind, m, head_config.features, rng, dt);
    model.readout = init_readout(m, rng);
    return model;
}

PolicyModel init_policy(CellKind kind, std::size_t m, std::size_t n, std::mt19937_64& rng,
                        double dt) {
    PolicyModel model;
    model.cell = init_parameters(kind, m, n, rng, dt);
    model.readout = init_readout(m, rng);
    return model;
}

PolicyModel zeros_like(const PolicyModel& model) {
    PolicyModel out = model;
    out.visit([](std::string_view, std::vector<double>& v, bool) {
        std::fill(v.begin(), v.end(), 0.0);
    });
    return out;
}

double mse_loss(std::span<const double> pred, std::span<const double> target) {
    if (pred.size() != target.size()) {
        throw DimensionError("mse_loss: length mismatch");
    }
    if (pred.empty()) {
        throw DimensionError("mse_loss: empty sequence");
    }
    double sum = 0.0;
    for (std::size_t t = 0; t < pred.size(); ++t) {
        const double d = pred[t] - target[t];
        sum += d * d;
    }
    return sum / static_cast<double>(pred.size());
}

double weighted_loss(std::span<const double> pred, std::span<const double> target) {
    if (pred.size() != target.size()) {
        throw DimensionError("weighted_loss: length mismatch");
    }
    if (pred.empty()) {
        throw DimensionError("weighted_loss: empty sequence");
    }
    double total = 0.0;
    for (double t : target) {
        total += std::abs(t);
    }
    if (!(total > 0.0)) {
        return mse_loss(pred, target);
    }
    double sum = 0.0;
    for (std::size_t t = 0; t < pred.size(); ++t) {
        const double d = pred[t] - target[t];
        sum += std::abs(target[t]) / total * d * d;
    }
    return sum;
}

double sequence_loss(LossKind kind, std::span<const double> pred, std::span<const double> target) {
    return kind == LossKind::Mse ? mse_loss(pred, target) : weighted_loss(pred, target);
}

const std::vector<double>& GradientSet::at(std::string_view name) const {
    for (std::size_t a = 0; a < names.size(); ++a) {
        if (names[a] == name) {
            return arrays[a];
        }
    }
    throw DimensionError("no gradient array named '" + std::string(name) + "'");
}

double GradientSet::global_norm() const {
    double sq = 0.0;
    for (const auto& a : arrays) {
        for (double v : a) {
            sq += v * v;
        }
    }
    return std::sqrt(sq);
}

void adamw_update(std::span<double> theta, std::span<const double> grad, std::span<double> m1,
                  std::span<double> m2, std::size_t t, const AdamWConfig& config, bool decays) {
    if (theta.size() != grad.size() || theta.size() != m1.size() || theta.size() != m2.size()) {
        throw DimensionError("adamw_update: array shapes differ");
    }
    if (t < 1) {
        throw DimensionError("adamw_update: step index starts at 1");
    }
    const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(t));
    const double wd = decays ? config.weight_decay : 0.0;
    for (std::size_t q = 0; q < theta.size(); ++q) {
        const double g = grad[q];
        m1[q] = config.beta1 * m1[q] + (1.0 - config.beta1) * g;
        m2[q] = config.beta2 * m2[q] + (1.0 - config.beta2) * g * g;
        const double m_hat = m1[q] / bc1;
        const double v_hat = m2[q] / bc2;
        const double updated =
            theta[q] - config.learning_rate * (m_hat / (std::sqrt(v_hat) + config.eps) + wd * theta[q]);
        if (!std::isfinite(updated)) {
            throw NumericError("adamw produced a non-finite parameter", q);
        }
        theta[q] = updated;
    }
}

AdamWState make_adamw_state(const PolicyModel& model) {
    AdamWState state;
    model.visit([&](std::string_view, const std::vector<double>& v, bool) {
        state.m1.emplace_back(v.size(), 0.0);
        state.m2.emplace_back(v.size(), 0.0);
    });
    return state;
}

namespace {

bool is_frozen(std::string_view name, std::span<const std::string> frozen) {
    return std::any_of(frozen.begin(), frozen.end(),
                       [&](const std::string& prefix) { return name.starts_with(prefix); });
}

} // namespace

void adamw_step(PolicyModel& model, const GradientSet& grads, AdamWState& state,
                const AdamWConfig& config, std::span<const std::string> frozen) {
    if (state.m1.empty()) {
        state = make_adamw_state(model);
    }
    ++state.t;
    std::size_t a = 0;
    model.visit([&](std::string_view name, std::vector<double>& v, bool decays) {
        if (a >= grads.arrays.size() || grads.names[a] != name) {
            throw DimensionError("gradient set does not match the model at '" +
                                 std::string(name) + "'");
        }
        if (!is_frozen(name, frozen)) {
            adamw_update(v, grads.arrays[a], state.m1[a], state.m2[a], state.t, config, decays);
        }
        ++a;
    });
    if (a != grads.arrays.size()) {
        throw DimensionError("gradient set has extra arrays");
    }
}

double clip_global_norm(GradientSet& grads, double max_norm) {
    const double norm = grads.global_norm();
    if (max_norm > 0.0 && norm > max_norm) {
        const double scale = max_norm / norm;
        for (auto& a : grads.arrays) {
            for (double& v : a) {
                v *= scale;
            }
        }
    }
    return norm;
}

TrainResult train(const PolicyModel& initial, const TrainingData& data,
                  const TrainingConfig& config, const EpochCallback& on_epoch) {
    config.validate();
    if (data.train.empty() || data.validation.empty()) {
        throw DimensionError("training and validation sets must be non-empty");
    }
    const AdamWConfig opt{config.learning_rate, config.adam_beta1, config.adam_beta2,
                          config.adam_eps, config.weight_decay};

    TrainResult result;
    result.best = initial;
    result.optimizer = make_adamw_state(initial);
    result.best_val_mse = std::numeric_limits<double>::infinity();

    PolicyModel model = initial;
    AdamWState state = make_adamw_state(model);
    std::mt19937_64 rng(config.seed);
    std::vector<std::size_t> order(data.train.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<SequenceView> batch;

    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double train_sum = 0.0;
        try {
            for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
                const std::size_t stop = std::min(order.size(), start + config.batch_size);
                batch.clear();
                for (std::size_t q = start; q < stop; ++q) {
                    batch.push_back(data.train[order[q]]);
                }
                GradientSet grads = bptt_gradients(model, batch, LossKind::Mse, config.threads);
                if (!std::isfinite(grads.loss)) {
                    throw NumericError("non-finite training loss");
                }
                clip_global_norm(grads, config.grad_clip);
                adamw_step(model, grads, state, opt, config.frozen_prefixes);
                train_sum += grads.loss * static_cast<double>(batch.size());
            }
        } catch (const NumericError& e) {
            result.diverged = true;
            result.message = "epoch " + std::to_string(epoch) + ": " + e.what();
            break;
        }
        HistoryRow row;
        row.epoch = epoch;
        row.train_mse = train_sum / static_cast<double>(order.size());
        try {
            row.val_mse = batch_loss(model, data.validation, LossKind::Mse);
            row.val_weighted = batch_loss(model, data.validation, LossKind::Weighted);
        } catch (const NumericError& e) {
            result.diverged = true;
            result.message = "epoch " + std::to_string(epoch) + " validation: " + e.what();
            break;
        }
        if (!std::isfinite(row.train_mse) || !std::isfinite(row.val_mse) ||
            !std::isfinite(row.val_weighted)) {
            result.diverged = true;
            result.message = "epoch " + std::to_string(epoch) + ": non-finite loss";
            break;
        }
        result.history.push_back(row);
        if (row.val_mse < result.best_val_mse) {
            result.best_val_mse = row.val_mse;
            result.best_epoch = epoch;
            result.best = model;
            result.optimizer = state;
        }
        if (on_epoch) {
            on_epoch(row);
        }
    }
    if (result.best_epoch == 0) {
        result.best_val_mse = batch_loss(initial, data.validation, LossKind::Mse);
    }
    return result;
}

std::string history_to_csv(const std::vector<HistoryRow>& history, std::size_t best_epoch) {
    std::ostringstream out;
    out.precision(17);
    out << "epoch,train_mse,val_mse,val_weighted,best\n";
    for (const HistoryRow& row : history) {
        out << row.epoch << ',' << row.train_mse << ',' << row.val_mse << ',' << row.val_weighted
            << ',' << (row.epoch == best_epoch ? 1 : 0) << '\n';
    }
    return out.str();
}

namespace {

std::string arrays_json(const auto& container) {
    detail::JsonObjectWriter w;
    container.visit([&](std::string_view name, const std::vector<double>& v, bool) {
        w.field(name, std::span<const double>(v));
    });
    return w.str();
}

void load_arrays(auto& container, const nlohmann::json& arrays, std::string_view what) {
    std::size_t seen = 0;
    container.visit([&](std::string_view name, std::vector<double>& v, bool) {
        const auto it = arrays.find(std::string(name));
        if (it == arrays.end()) {
            throw IoError(std::string(what) + ": missing array '" + std::string(name) + "'");
        }
        auto values = it->template get<std::vector<double>>();
        if (values.size() != v.size()) {
            throw DimensionError(std::string(what) + ": array '" + std::string(name) +
                                 "' has the wrong length");
        }
        v = std::move(values);
        ++seen;
    });
    if (seen != arrays.size()) {
        throw IoError(std::string(what) + ": unexpected arrays");
    }
}

} // namespace

std::string policy_to_json(const PolicyModel& model, const AdamWState* optimizer) {
    detail::JsonObjectWriter doc;
    doc.field_int("format_version", kFormatVersion);
    doc.raw("cell", cell_to_json(model.cell));
    if (model.head) {
        const ConvHeadConfig& cfg = model.head->config;
        std::string layers = "[";
        for (std::size_t l = 0; l < cfg.layers.size(); ++l) {
            if (l) {
                layers += ',';
            }
            layers += "[" + std::to_string(cfg.layers[l].channels) + "," +
                      std::to_string(cfg.layers[l].kernel) + "," +
                      std::to_string(cfg.layers[l].stride) + "]";
        }
        layers += "]";
        detail::JsonObjectWriter head;
        head.field_int("height", static_cast<long long>(cfg.height))
            .field_int("width", static_cast<long long>(cfg.width))
            .field_int("in_channels", static_cast<long long>(cfg.in_channels))
            .field_int("features", static_cast<long long>(cfg.features))
            .raw("layers", layers)
            .raw("arrays", arrays_json(*model.head));
        doc.raw("head", head.str());
    } else {
        doc.raw("head", "null");
    }
    detail::JsonObjectWriter readout;
    readout.raw("arrays", arrays_json(model.readout));
    doc.raw("readout", readout.str());
    if (optimizer != nullptr && !optimizer->m1.empty()) {
        detail::JsonObjectWriter m1, m2;
        std::size_t a = 0;
        model.visit([&](std::string_view name, const std::vector<double>&, bool) {
            m1.field(name, std::span<const double>(optimizer->m1[a]));
            m2.field(name, std::span<const double>(optimizer->m2[a]));
            ++a;
        });
        detail::JsonObjectWriter opt;
        opt.field_int("t", static_cast<long long>(optimizer->t))
            .raw("m1", m1.str())
            .raw("m2", m2.str());
        doc.raw("optimizer", opt.str());
    }
    return doc.str();
}

PolicyModel policy_from_json(const std::string& text, AdamWState* optimizer) {
    try {
        const nlohmann::json doc = nlohmann::json::parse(text);
        if (doc.at("format_version").get<int>() != kFormatVersion) {
            throw IoError("unsupported checkpoint format_version");
        }
        PolicyModel model;
        model.cell = cell_from_json(doc.at("cell"));
        const auto& head = doc.at("head");
        if (!head.is_null()) {
            ConvHeadConfig cfg;
            cfg.height = head.at("height").get<std::size_t>();
            cfg.width = head.at("width").get<std::size_t>();
            cfg.in_channels = head.at("in_channels").get<std::size_t>();
            cfg.features = head.at("features").get<std::size_t>();
            cfg.layers.clear();
            for (const auto& l : head.at("layers")) {
                cfg.layers.push_back(
                    {l.at(0).get<std::size_t>(), l.at(1).get<std::size_t>(), l.at(2).get<std::size_t>()});
            }
            model.head = make_conv_head(cfg);
            load_arrays(*model.head, head.at("arrays"), "head");
            if (cfg.features != model.cell.n) {
                throw DimensionError("conv head features do not match the cell input size");
            }
        }
        model.readout.weight.assign(model.cell.m, 0.0);
        model.readout.bias.assign(1, 0.0);
        load_arrays(model.readout, doc.at("readout").at("arrays"), "readout");
        if (optimizer != nullptr) {
            *optimizer = make_adamw_state(model);
            if (doc.contains("optimizer")) {
                const auto& opt = doc.at("optimizer");
                optimizer->t = opt.at("t").get<std::size_t>();
                std::size_t a = 0;
                model.visit([&](std::string_view name, const std::vector<double>& v, bool) {
                    auto m1 = opt.at("m1").at(std::string(name)).get<std::vector<double>>();
                    auto m2 = opt.at("m2").at(std::string(name)).get<std::vector<double>>();
                    if (m1.size() != v.size() || m2.size() != v.size()) {
                        throw DimensionError("optimizer moments for '" + std::string(name) +
                                             "' have the wrong length");
                    }
                    optimizer->m1[a] = std::move(m1);
                    optimizer->m2[a] = std::move(m2);
                    ++a;
                });
            }
        }
        return model;
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("malformed checkpoint: ") + e.what());
    }
}

} // namespace liquid
