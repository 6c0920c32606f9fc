#include "liquid/cells.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <string>

#include "cell_math.hpp"
#include "liquid/errors.hpp"
#include "liquid/math.hpp"

namespace liquid {

namespace {

void require_dims(std::size_t got, std::size_t want, const char* what) {
    if (got != want) {
        throw DimensionError(std::string(what) + ": expected length " + std::to_string(want) +
                             ", got " + std::to_string(got));
    }
}

void require_bio(CellKind kind) {
    if (is_gated(kind)) {
        throw UnsupportedKindError(std::string(to_string(kind)) +
                                   " is a gated kind; use step_gated");
    }
}

} // namespace

CellTraits traits(CellKind kind) {
    switch (kind) {
    case CellKind::CTRNN:
        return {SynapseType::Electrical, ActivationType::Neural, CapacitanceType::Fixed};
    case CellKind::LC_NA:
        return {SynapseType::Electrical, ActivationType::Neural, CapacitanceType::Liquid};
    case CellKind::LC_SA:
        return {SynapseType::Electrical, ActivationType::Synaptic, CapacitanceType::Liquid};
    case CellKind::LTC:
        return {SynapseType::Chemical, ActivationType::Synaptic, CapacitanceType::Fixed};
    case CellKind::LRC_NA:
        return {SynapseType::Chemical, ActivationType::Neural, CapacitanceType::Liquid};
    case CellKind::LRC_SA:
        return {SynapseType::Chemical, ActivationType::Synaptic, CapacitanceType::Liquid};
    case CellKind::LSTM:
    case CellKind::GRU:
    case CellKind::MGU:
        return {SynapseType::Gated, ActivationType::Gated, CapacitanceType::Gated};
    }
    throw UnsupportedKindError("unknown cell kind");
}

bool is_gated(CellKind kind) { return traits(kind).synapse == SynapseType::Gated; }

bool has_liquid_capacitance(CellKind kind) {
    return traits(kind).capacitance == CapacitanceType::Liquid;
}

std::size_t gate_blocks(CellKind kind) {
    switch (kind) {
    case CellKind::LSTM:
        return 4;
    case CellKind::GRU:
        return 3;
    case CellKind::MGU:
        return 2;
    default:
        throw UnsupportedKindError(std::string(to_string(kind)) + " has no gate blocks");
    }
}

std::string_view to_string(CellKind kind) {
    switch (kind) {
    case CellKind::LSTM:
        return "LSTM";
    case CellKind::GRU:
        return "GRU";
    case CellKind::MGU:
        return "MGU";
    case CellKind::CTRNN:
        return "CTRNN";
    case CellKind::LTC:
        return "LTC";
    case CellKind::LC_NA:
        return "LC_NA";
    case CellKind::LC_SA:
        return "LC_SA";
    case CellKind::LRC_NA:
        return "LRC_NA";
    case CellKind::LRC_SA:
        return "LRC_SA";
    }
    return "?";
}

CellKind parse_cell_kind(std::string_view name) {
    std::string norm(name);
    std::transform(norm.begin(), norm.end(), norm.begin(), [](unsigned char c) {
        return c == '-' ? '_' : static_cast<char>(std::toupper(c));
    });
    if (norm == "CT_RNN") {
        norm = "CTRNN";
    }
    for (CellKind kind : kAllCellKinds) {
        if (to_string(kind) == norm) {
            return kind;
        }
    }
    throw UnsupportedKindError("unknown cell kind '" + std::string(name) + "'");
}

CellShapes cell_shapes(CellKind kind, std::size_t m, std::size_t n) {
    const std::size_t src = m + n;
    CellShapes s{};
    if (is_gated(kind)) {
        const std::size_t blocks = gate_blocks(kind);
        s.w = src * blocks * m;
        s.bias = blocks * m;
        return s;
    }
    const auto layout = detail::bio_layout(kind);
    s.g_l = m;
    s.e_l = m;
    s.g = src * m;
    s.k = src * m;
    if (layout.stores_activation) {
        s.a = layout.synaptic ? src * m : src;
        s.b = s.a;
    }
    if (layout.liquid) {
        s.o = src * m;
        s.p = m;
        s.kappa_raw = m;
    }
    return s;
}

CellParameters zero_parameters(CellKind kind, std::size_t m, std::size_t n, double dt) {
    const CellShapes s = cell_shapes(kind, m, n);
    CellParameters p;
    p.kind = kind;
    p.m = m;
    p.n = n;
    p.dt = dt;
    p.g_l.assign(s.g_l, 0.0);
    p.e_l.assign(s.e_l, 0.0);
    p.g.assign(s.g, 0.0);
    p.k.assign(s.k, 0.0);
    p.a.assign(s.a, 0.0);
    p.b.assign(s.b, 0.0);
    p.o.assign(s.o, 0.0);
    p.p.assign(s.p, 0.0);
    p.kappa_raw.assign(s.kappa_raw, 0.0);
    p.w.assign(s.w, 0.0);
    p.bias.assign(s.bias, 0.0);
    return p;
}

CellParameters init_parameters(CellKind kind, std::size_t m, std::size_t n, std::mt19937_64& rng,
                               double dt) {
    CellParameters p = zero_parameters(kind, m, n, dt);
    const double s = m + n > 0 ? 1.0 / std::sqrt(static_cast<double>(m + n)) : 1.0;
    auto fill = [&](std::vector<double>& v, double lo, double hi) {
        std::uniform_real_distribution<double> dist(lo, hi);
        for (double& x : v) {
            x = dist(rng);
        }
    };
    p.visit([&](std::string_view name, std::vector<double>& v, bool) {
        if (name == "e_l") {
            fill(v, -1.0, 1.0);
        } else if (name == "g_l") {
            fill(v, 0.0, 1.0);
        } else if (name == "g" || name == "k" || name == "o" || name == "w") {
            fill(v, -s, s);
        } else if (name == "a") {
            fill(v, 0.5, 1.5);
        } else if (name == "b" || name == "p" || name == "kappa_raw") {
            fill(v, -0.5, 0.5);
        }
        // gated biases start at zero
    });
    if (kind == CellKind::LSTM) {
        // forget-gate block
        std::fill(p.bias.begin() + static_cast<std::ptrdiff_t>(m),
                  p.bias.begin() + static_cast<std::ptrdiff_t>(2 * m), 1.0);
    }
    return p;
}

void CellParameters::validate() const {
    const CellShapes s = cell_shapes(kind, m, n);
    require_dims(g_l.size(), s.g_l, "g_l");
    require_dims(e_l.size(), s.e_l, "e_l");
    require_dims(g.size(), s.g, "g");
    require_dims(k.size(), s.k, "k");
    require_dims(a.size(), s.a, "a");
    require_dims(b.size(), s.b, "b");
    require_dims(o.size(), s.o, "o");
    require_dims(p.size(), s.p, "p");
    require_dims(kappa_raw.size(), s.kappa_raw, "kappa_raw");
    require_dims(w.size(), s.w, "w");
    require_dims(bias.size(), s.bias, "bias");
    if (!(dt > 0.0) || !std::isfinite(dt)) {
        throw NumericError("dt must be finite and positive");
    }
    visit([](std::string_view name, const std::vector<double>& v, bool) {
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (!std::isfinite(v[i])) {
                throw NumericError("non-finite entry in " + std::string(name), i);
            }
        }
    });
}

HiddenState zero_state(const CellParameters& params) {
    HiddenState s;
    s.h.assign(params.m, 0.0);
    if (params.kind == CellKind::LSTM) {
        s.aux.assign(params.m, 0.0);
    }
    return s;
}

std::vector<double> concat_inputs(const CellParameters& params, std::span<const double> h,
                                  std::span<const double> x) {
    require_dims(h.size(), params.m, "hidden state");
    require_dims(x.size(), params.n, "input");
    std::vector<double> y;
    y.reserve(h.size() + x.size());
    y.insert(y.end(), h.begin(), h.end());
    y.insert(y.end(), x.begin(), x.end());
    return y;
}

double elastance(const CellParameters& params, std::size_t neuron, std::span<const double> y) {
    require_bio(params.kind);
    if (neuron >= params.m) {
        throw DimensionError("neuron index out of range");
    }
    require_dims(y.size(), params.sources(), "y");
    if (!has_liquid_capacitance(params.kind)) {
        return 1.0;
    }
    const std::size_t m = params.m;
    double w = params.p[neuron];
    for (std::size_t j = 0; j < y.size(); ++j) {
        w += params.o[j * m + neuron] * y[j];
    }
    const double kappa = std::abs(params.kappa_raw[neuron]);
    return sigmoid(w + kappa) - sigmoid(w - kappa);
}

ForgetUpdate forget_update(const CellParameters& params, std::span<const double> y) {
    require_bio(params.kind);
    require_dims(y.size(), params.sources(), "y");
    detail::BioStepCache cache;
    detail::bio_forward(params, y.first(params.m), y.subspan(params.m), true, cache);
    return {std::move(cache.f), std::move(cache.u)};
}

namespace {

void check_finite(const std::vector<double>& v, const char* what) {
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (!std::isfinite(v[i])) {
            throw NumericError(std::string(what) + ": non-finite value at neuron " +
                                   std::to_string(i),
                               i);
        }
    }
}

} // namespace

std::vector<double> ode_rhs(const CellParameters& params, const HiddenState& state,
                            std::span<const double> x, StepOptions options) {
    require_bio(params.kind);
    detail::BioStepCache c;
    detail::bio_forward(params, state.h, x, options.unit_elastance, c);
    std::vector<double> out(params.m);
    for (std::size_t i = 0; i < params.m; ++i) {
        out[i] = -c.sf[i] * c.eps[i] * state.h[i] + c.tu[i] * c.eps[i] * params.e_l[i];
    }
    check_finite(out, "ode_rhs");
    return out;
}

HiddenState step(const CellParameters& params, const HiddenState& prev, std::span<const double> x,
                 StepOptions options) {
    require_bio(params.kind);
    detail::BioStepCache c;
    detail::bio_forward(params, prev.h, x, options.unit_elastance, c);
    HiddenState next;
    next.h.resize(params.m);
    const double dt = params.dt;
    for (std::size_t i = 0; i < params.m; ++i) {
        next.h[i] = (1.0 - c.sf[i] * c.eps[i] * dt) * prev.h[i] +
                    c.tu[i] * c.eps[i] * params.e_l[i] * dt;
    }
    check_finite(next.h, "step");
    return next;
}

HiddenState step_gated(const CellParameters& params, const HiddenState& prev,
                       std::span<const double> x) {
    if (!is_gated(params.kind)) {
        throw UnsupportedKindError(std::string(to_string(params.kind)) +
                                   " is not a gated kind; use step");
    }
    detail::GatedStepCache cache;
    HiddenState next;
    detail::gated_forward(params, prev, x, cache, next);
    check_finite(next.h, "step_gated");
    check_finite(next.aux, "step_gated");
    return next;
}

HiddenState advance(const CellParameters& params, const HiddenState& prev,
                    std::span<const double> x, StepOptions options) {
    return is_gated(params.kind) ? step_gated(params, prev, x) : step(params, prev, x, options);
}

std::vector<HiddenState> unroll(const CellParameters& params, const HiddenState& initial,
                                std::span<const std::vector<double>> inputs,
                                StepOptions options) {
    std::vector<HiddenState> out;
    out.reserve(inputs.size());
    const HiddenState* prev = &initial;
    for (std::size_t t = 0; t < inputs.size(); ++t) {
        try {
            out.push_back(advance(params, *prev, inputs[t], options));
        } catch (const NumericError& e) {
            throw NumericError("timestep " + std::to_string(t) + ": " + e.what(), t);
        }
        prev = &out.back();
    }
    return out;
}

namespace detail {

BioLayout bio_layout(CellKind kind) {
    const CellTraits t = traits(kind);
    BioLayout l;
    l.chemical = t.synapse == SynapseType::Chemical;
    l.synaptic = t.activation == ActivationType::Synaptic;
    l.stores_activation = l.chemical || l.synaptic;
    l.liquid = t.capacitance == CapacitanceType::Liquid;
    return l;
}

void bio_forward(const CellParameters& params, std::span<const double> h,
                 std::span<const double> x, bool unit_elastance, BioStepCache& c) {
    const std::size_t m = params.m;
    const std::size_t src = params.sources();
    require_dims(h.size(), m, "hidden state");
    require_dims(x.size(), params.n, "input");
    const BioLayout layout = bio_layout(params.kind);

    c.y.resize(src);
    std::copy(h.begin(), h.end(), c.y.begin());
    std::copy(x.begin(), x.end(), c.y.begin() + static_cast<std::ptrdiff_t>(m));

    c.f.assign(params.g_l.begin(), params.g_l.end());
    c.u.assign(params.g_l.begin(), params.g_l.end());
    const bool liquid = layout.liquid && !unit_elastance;
    if (liquid) {
        c.w.assign(params.p.begin(), params.p.end());
    } else {
        c.w.clear();
    }

    if (!layout.stores_activation) {
        c.act.clear();
    } else if (layout.synaptic) {
        c.act.resize(src * m);
    } else {
        c.act.resize(src);
    }

    for (std::size_t j = 0; j < src; ++j) {
        const double yj = c.y[j];
        const double* gj = params.g.data() + j * m;
        const double* kj = params.k.data() + j * m;
        if (!layout.stores_activation) {
            // electrical synapses, neural activation: u uses y_j directly
            for (std::size_t i = 0; i < m; ++i) {
                c.f[i] += gj[i];
                c.u[i] += kj[i] * yj;
            }
        } else if (layout.synaptic) {
            const double* aj = params.a.data() + j * m;
            const double* bj = params.b.data() + j * m;
            double* sj = c.act.data() + j * m;
            for (std::size_t i = 0; i < m; ++i) {
                sj[i] = sigmoid(aj[i] * yj + bj[i]);
                c.f[i] += layout.chemical ? gj[i] * sj[i] : gj[i];
                c.u[i] += kj[i] * sj[i];
            }
        } else {
            const double sj = sigmoid(params.a[j] * yj + params.b[j]);
            c.act[j] = sj;
            for (std::size_t i = 0; i < m; ++i) {
                c.f[i] += gj[i] * sj;
                c.u[i] += kj[i] * sj;
            }
        }
        if (liquid) {
            const double* oj = params.o.data() + j * m;
            for (std::size_t i = 0; i < m; ++i) {
                c.w[i] += oj[i] * yj;
            }
        }
    }

    c.sf.resize(m);
    c.tu.resize(m);
    c.eps.resize(m);
    c.sig_plus.resize(m);
    c.sig_minus.resize(m);
    for (std::size_t i = 0; i < m; ++i) {
        c.sf[i] = sigmoid(c.f[i]);
        c.tu[i] = std::tanh(c.u[i]);
        if (liquid) {
            const double kappa = std::abs(params.kappa_raw[i]);
            c.sig_plus[i] = sigmoid(c.w[i] + kappa);
            c.sig_minus[i] = sigmoid(c.w[i] - kappa);
            c.eps[i] = c.sig_plus[i] - c.sig_minus[i];
        } else {
            c.sig_plus[i] = 0.0;
            c.sig_minus[i] = 0.0;
            c.eps[i] = 1.0;
        }
    }
}

void gated_forward(const CellParameters& params, const HiddenState& prev,
                   std::span<const double> x, GatedStepCache& c, HiddenState& next) {
    const std::size_t m = params.m;
    const std::size_t src = params.sources();
    const std::size_t blocks = gate_blocks(params.kind);
    const std::size_t cols = blocks * m;
    require_dims(prev.h.size(), m, "hidden state");
    require_dims(x.size(), params.n, "input");
    if (params.kind == CellKind::LSTM) {
        require_dims(prev.aux.size(), m, "memory cell");
    }

    c.y.resize(src);
    std::copy(prev.h.begin(), prev.h.end(), c.y.begin());
    std::copy(x.begin(), x.end(), c.y.begin() + static_cast<std::ptrdiff_t>(m));

    // Pre-activations of every block from y. For GRU/MGU the candidate
    // block is recomputed below from the reset-scaled input.
    std::vector<double> z(params.bias.begin(), params.bias.end());
    const std::size_t direct_cols = params.kind == CellKind::LSTM ? cols : cols - m;
    for (std::size_t j = 0; j < src; ++j) {
        const double yj = c.y[j];
        const double* wj = params.w.data() + j * cols;
        for (std::size_t col = 0; col < direct_cols; ++col) {
            z[col] += wj[col] * yj;
        }
    }

    c.gates.resize(cols);
    next.h.resize(m);
    if (params.kind == CellKind::LSTM) {
        // blocks: input, forget, candidate, output
        for (std::size_t i = 0; i < m; ++i) {
            c.gates[i] = sigmoid(z[i]);
            c.gates[m + i] = sigmoid(z[m + i]);
            c.gates[2 * m + i] = std::tanh(z[2 * m + i]);
            c.gates[3 * m + i] = sigmoid(z[3 * m + i]);
        }
        c.c_new.resize(m);
        c.tanh_c.resize(m);
        next.aux.resize(m);
        for (std::size_t i = 0; i < m; ++i) {
            c.c_new[i] = c.gates[m + i] * prev.aux[i] + c.gates[i] * c.gates[2 * m + i];
            c.tanh_c[i] = std::tanh(c.c_new[i]);
            next.aux[i] = c.c_new[i];
            next.h[i] = c.gates[3 * m + i] * c.tanh_c[i];
        }
        c.y_reset.clear();
        return;
    }

    // GRU blocks: update z, reset r, candidate. MGU blocks: forget f, candidate.
    const std::size_t cand = cols - m;
    for (std::size_t col = 0; col < cand; ++col) {
        c.gates[col] = sigmoid(z[col]);
    }
    const double* reset = params.kind == CellKind::GRU ? c.gates.data() + m : c.gates.data();
    c.y_reset = c.y;
    for (std::size_t i = 0; i < m; ++i) {
        c.y_reset[i] = reset[i] * prev.h[i];
    }
    for (std::size_t j = 0; j < src; ++j) {
        const double yj = c.y_reset[j];
        const double* wj = params.w.data() + j * cols + cand;
        for (std::size_t i = 0; i < m; ++i) {
            z[cand + i] += wj[i] * yj;
        }
    }
    for (std::size_t i = 0; i < m; ++i) {
        c.gates[cand + i] = std::tanh(z[cand + i]);
    }
    next.aux.clear();
    for (std::size_t i = 0; i < m; ++i) {
        const double candidate = c.gates[cand + i];
        if (params.kind == CellKind::GRU) {
            const double upd = c.gates[i];
            next.h[i] = upd * prev.h[i] + (1.0 - upd) * candidate;
        } else {
            const double fg = c.gates[i];
            next.h[i] = (1.0 - fg) * prev.h[i] + fg * candidate;
        }
    }
}

} // namespace detail

} // namespace liquid
