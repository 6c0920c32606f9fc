#pragma once

// Forward intermediates shared by the cell forward pass and the hand-written
// reverse pass in bptt.cpp.

#include <span>
#include <vector>

#include "liquid/cells.hpp"

namespace liquid::detail {

struct BioLayout {
    bool chemical = false;        // forget term gated by the activation
    bool stores_activation = false;
    bool synaptic = false;        // per-synapse (j,i) activation
    bool liquid = false;
};

BioLayout bio_layout(CellKind kind);

struct BioStepCache {
    std::vector<double> y;    // m+n
    std::vector<double> act;  // m+n (neural) or (m+n)*m (synaptic)
    std::vector<double> f, u; // pre-saturation conductances
    std::vector<double> w;    // elastance pre-activation
    std::vector<double> sig_plus, sig_minus;
    std::vector<double> eps;
    std::vector<double> sf, tu; // sigma(f), tanh(u)
};

void bio_forward(const CellParameters& params, std::span<const double> h,
                 std::span<const double> x, bool unit_elastance, BioStepCache& cache);

struct GatedStepCache {
    std::vector<double> y;       // [h, x]
    std::vector<double> gates;   // post-activation, block-major (blocks*m)
    std::vector<double> y_reset; // [r*h, x] for GRU, [f*h, x] for MGU
    std::vector<double> c_new;   // LSTM only
    std::vector<double> tanh_c;  // LSTM only
};

/// Writes the next state into `next`.
void gated_forward(const CellParameters& params, const HiddenState& prev,
                   std::span<const double> x, GatedStepCache& cache, HiddenState& next);

} // namespace liquid::detail
