#pragma once

// Unified family of bio-inspired recurrent cells (CT-RNN, LTC, LC and LRC
// with neural or synaptic activation) together with the gated baselines
// (LSTM, GRU, MGU) they are compared against.
//
// All bio-inspired kinds share the recurrence
//
//   h_i <- (1 - sigma(f_i) * eps_i * dt) * h_i + tanh(u_i) * eps_i * e_li * dt
//
// and differ only in how the forget term f, the update term u and the
// elastance eps are formed from y = [h, x].

#include <array>
#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace liquid {

enum class CellKind { LSTM, GRU, MGU, CTRNN, LTC, LC_NA, LC_SA, LRC_NA, LRC_SA };

inline constexpr std::array<CellKind, 9> kAllCellKinds = {
    CellKind::LSTM,  CellKind::GRU,   CellKind::MGU,    CellKind::CTRNN, CellKind::LTC,
    CellKind::LC_NA, CellKind::LC_SA, CellKind::LRC_NA, CellKind::LRC_SA};

enum class SynapseType { Electrical, Chemical, Gated };
enum class ActivationType { None, Neural, Synaptic, Gated };
enum class CapacitanceType { Fixed, Liquid, Gated };

struct CellTraits {
    SynapseType synapse;
    ActivationType activation;
    CapacitanceType capacitance;

    friend bool operator==(const CellTraits&, const CellTraits&) = default;
};

/// (synapse, activation, capacitance) triple of a kind. Electrical synapses
/// with neural activation use y_j directly, so CTRNN and LC_NA report
/// ActivationType::Neural even though they store no slope/offset.
CellTraits traits(CellKind kind);

bool is_gated(CellKind kind);
bool has_liquid_capacitance(CellKind kind);

/// Number of stacked weight blocks for a gated kind (LSTM 4, GRU 3, MGU 2).
std::size_t gate_blocks(CellKind kind);

std::string_view to_string(CellKind kind);
CellKind parse_cell_kind(std::string_view name);

/// Learnable arrays of one cell. Matrices indexed by (source j, target i)
/// are stored row-major with shape (m+n) x m, i.e. element [j * m + i].
/// Arrays a kind does not use are left empty.
struct CellParameters {
    CellKind kind = CellKind::LRC_SA;
    std::size_t m = 0;
    std::size_t n = 0;
    double dt = 1.0;

    std::vector<double> g_l;       // m
    std::vector<double> e_l;       // m
    std::vector<double> g;         // (m+n) x m
    std::vector<double> k;         // (m+n) x m
    std::vector<double> a;         // (m+n) x m synaptic, m+n neural
    std::vector<double> b;         // same shape as a
    std::vector<double> o;         // (m+n) x m, liquid kinds only
    std::vector<double> p;         // m, liquid kinds only
    std::vector<double> kappa_raw; // m, liquid kinds only

    // Gated baselines: w has shape (m+n) x (blocks*m), bias blocks*m.
    std::vector<double> w;
    std::vector<double> bias;

    std::size_t sources() const noexcept { return m + n; }

    /// Throws DimensionError on inconsistent shapes and NumericError on
    /// non-finite entries or dt <= 0.
    void validate() const;

    /// Calls visitor(name, array, decays) for every array the kind uses,
    /// in a fixed order. `decays` marks coupling matrices that receive
    /// decoupled weight decay.
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
        auto emit = [&](std::string_view name, auto& array, bool decays) {
            if (!array.empty()) {
                visitor(name, array, decays);
            }
        };
        emit("g_l", self.g_l, false);
        emit("e_l", self.e_l, false);
        emit("g", self.g, true);
        emit("k", self.k, true);
        emit("a", self.a, false);
        emit("b", self.b, false);
        emit("o", self.o, true);
        emit("p", self.p, false);
        emit("kappa_raw", self.kappa_raw, false);
        emit("w", self.w, true);
        emit("bias", self.bias, false);
    }
};

/// Expected length of every array for (kind, m, n); zero means unused.
struct CellShapes {
    std::size_t g_l, e_l, g, k, a, b, o, p, kappa_raw, w, bias;
};
CellShapes cell_shapes(CellKind kind, std::size_t m, std::size_t n);

/// All arrays allocated with the right shapes and filled with zeros.
CellParameters zero_parameters(CellKind kind, std::size_t m, std::size_t n, double dt = 1.0);

/// Random initialization: e_l ~ U[-1,1], g_l ~ U[0,1], g/k/o/w ~ U[-s,s]
/// with s = (m+n)^-1/2, a ~ U[0.5,1.5], b/p/kappa_raw ~ U[-0.5,0.5].
CellParameters init_parameters(CellKind kind, std::size_t m, std::size_t n, std::mt19937_64& rng,
                               double dt = 1.0);

/// Membrane potentials h, plus the LSTM memory cell in `aux`.
struct HiddenState {
    std::vector<double> h;
    std::vector<double> aux;

    friend bool operator==(const HiddenState&, const HiddenState&) = default;
};

HiddenState zero_state(const CellParameters& params);

struct ForgetUpdate {
    std::vector<double> f;
    std::vector<double> u;
};

struct StepOptions {
    /// Hardwire eps = 1 for liquid kinds, reducing LC_NA to CTRNN and
    /// LRC_SA to LTC.
    bool unit_elastance = false;
};

/// y = [h, x].
std::vector<double> concat_inputs(const CellParameters& params, std::span<const double> h,
                                  std::span<const double> x);

/// eps_i = sigmoid(w_i + |kappa_i|) - sigmoid(w_i - |kappa_i|) with
/// w_i = sum_j o_ji y_j + p_i. Fixed-capacitance kinds return 1.
double elastance(const CellParameters& params, std::size_t neuron, std::span<const double> y);

ForgetUpdate forget_update(const CellParameters& params, std::span<const double> y);

/// Right-hand side -sigma(f) eps h + tanh(u) eps e_l of the companion ODE.
std::vector<double> ode_rhs(const CellParameters& params, const HiddenState& state,
                            std::span<const double> x, StepOptions options = {});

/// One explicit-Euler step of a bio-inspired kind.
HiddenState step(const CellParameters& params, const HiddenState& prev, std::span<const double> x,
                 StepOptions options = {});

/// One step of LSTM, GRU or MGU.
HiddenState step_gated(const CellParameters& params, const HiddenState& prev,
                       std::span<const double> x);

/// Dispatches to step or step_gated.
HiddenState advance(const CellParameters& params, const HiddenState& prev,
                    std::span<const double> x, StepOptions options = {});

/// Element t is the state after t+1 steps. NumericError carries the timestep.
std::vector<HiddenState> unroll(const CellParameters& params, const HiddenState& initial,
                                std::span<const std::vector<double>> inputs,
                                StepOptions options = {});

} // namespace liquid
