#include <algorithm>
#include <cmath>
#include <string>
#include <thread>

#include "cell_math.hpp"
#include "liquid/errors.hpp"
#include "liquid/training.hpp"

namespace liquid {

namespace {

double sign_of(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

StepAdjoint bio_backward(const CellParameters& P, const HiddenState& prev,
                         std::span<const double> x, const HiddenState& d_next,
                         CellParameters& G) {
    detail::BioStepCache c;
    detail::bio_forward(P, prev.h, x, false, c);
    const detail::BioLayout layout = detail::bio_layout(P.kind);
    const std::size_t m = P.m;
    const std::size_t src = P.sources();
    const double dt = P.dt;

    std::vector<double> dy(src, 0.0);
    std::vector<double> df(m), du(m), dw(m, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        const double dhn = d_next.h[i];
        const double h = prev.h[i];
        const double e = P.e_l[i];
        const double sf = c.sf[i];
        const double tu = c.tu[i];
        const double eps = c.eps[i];
        dy[i] += dhn * (1.0 - sf * eps * dt);
        const double dsf = -dhn * eps * dt * h;
        const double dtu = dhn * eps * e * dt;
        G.e_l[i] += dhn * tu * eps * dt;
        df[i] = dsf * sf * (1.0 - sf);
        du[i] = dtu * (1.0 - tu * tu);
        G.g_l[i] += df[i] + du[i];
        if (layout.liquid) {
            const double deps = dhn * dt * (-sf * h + tu * e);
            const double sp = c.sig_plus[i];
            const double sm = c.sig_minus[i];
            const double dsp = sp * (1.0 - sp);
            const double dsm = sm * (1.0 - sm);
            dw[i] = deps * (dsp - dsm);
            G.kappa_raw[i] += deps * (dsp + dsm) * sign_of(P.kappa_raw[i]);
            G.p[i] += dw[i];
        }
    }

    for (std::size_t j = 0; j < src; ++j) {
        const double yj = c.y[j];
        const std::size_t row = j * m;
        const double* gj = P.g.data() + row;
        const double* kj = P.k.data() + row;
        double* Ggj = G.g.data() + row;
        double* Gkj = G.k.data() + row;
        double dyj = 0.0;
        if (!layout.stores_activation) {
            for (std::size_t i = 0; i < m; ++i) {
                Ggj[i] += df[i];
                Gkj[i] += du[i] * yj;
                dyj += du[i] * kj[i];
            }
        } else if (layout.synaptic) {
            const double* aj = P.a.data() + row;
            const double* sj = c.act.data() + row;
            double* Gaj = G.a.data() + row;
            double* Gbj = G.b.data() + row;
            for (std::size_t i = 0; i < m; ++i) {
                const double s = sj[i];
                double ds = du[i] * kj[i];
                if (layout.chemical) {
                    Ggj[i] += df[i] * s;
                    ds += df[i] * gj[i];
                } else {
                    Ggj[i] += df[i];
                }
                Gkj[i] += du[i] * s;
                const double dz = ds * s * (1.0 - s);
                Gaj[i] += dz * yj;
                Gbj[i] += dz;
                dyj += dz * aj[i];
            }
        } else {
            const double s = c.act[j];
            double ds = 0.0;
            for (std::size_t i = 0; i < m; ++i) {
                Ggj[i] += df[i] * s;
                Gkj[i] += du[i] * s;
                ds += df[i] * gj[i] + du[i] * kj[i];
            }
            const double dz = ds * s * (1.0 - s);
            G.a[j] += dz * yj;
            G.b[j] += dz;
            dyj += dz * P.a[j];
        }
        if (layout.liquid) {
            const double* oj = P.o.data() + row;
            double* Goj = G.o.data() + row;
            for (std::size_t i = 0; i < m; ++i) {
                Goj[i] += dw[i] * yj;
                dyj += dw[i] * oj[i];
            }
        }
        dy[j] += dyj;
    }

    StepAdjoint out;
    out.d_prev.h.assign(dy.begin(), dy.begin() + static_cast<std::ptrdiff_t>(m));
    out.d_input.assign(dy.begin() + static_cast<std::ptrdiff_t>(m), dy.end());
    return out;
}

// Adds w^T dz (over the listed columns) into dy and dz y^T into G.w.
void accumulate_block(const CellParameters& P, CellParameters& G, std::span<const double> input,
                      std::size_t col_begin, std::span<const double> dz, std::span<double> dy) {
    const std::size_t cols = gate_blocks(P.kind) * P.m;
    for (std::size_t j = 0; j < input.size(); ++j) {
        const double yj = input[j];
        const double* wj = P.w.data() + j * cols + col_begin;
        double* Gwj = G.w.data() + j * cols + col_begin;
        double acc = 0.0;
        for (std::size_t c = 0; c < dz.size(); ++c) {
            Gwj[c] += dz[c] * yj;
            acc += wj[c] * dz[c];
        }
        dy[j] += acc;
    }
    for (std::size_t c = 0; c < dz.size(); ++c) {
        G.bias[col_begin + c] += dz[c];
    }
}

StepAdjoint gated_backward(const CellParameters& P, const HiddenState& prev,
                           std::span<const double> x, const HiddenState& d_next,
                           CellParameters& G) {
    detail::GatedStepCache c;
    HiddenState next;
    detail::gated_forward(P, prev, x, c, next);
    const std::size_t m = P.m;
    const std::size_t src = P.sources();
    std::vector<double> dy(src, 0.0);
    StepAdjoint out;

    if (P.kind == CellKind::LSTM) {
        std::vector<double> dz(4 * m);
        out.d_prev.aux.resize(m);
        for (std::size_t i = 0; i < m; ++i) {
            const double ig = c.gates[i];
            const double fg = c.gates[m + i];
            const double gg = c.gates[2 * m + i];
            const double og = c.gates[3 * m + i];
            const double dh = d_next.h[i];
            const double dc = d_next.aux[i] + dh * og * (1.0 - c.tanh_c[i] * c.tanh_c[i]);
            dz[i] = dc * gg * ig * (1.0 - ig);
            dz[m + i] = dc * prev.aux[i] * fg * (1.0 - fg);
            dz[2 * m + i] = dc * ig * (1.0 - gg * gg);
            dz[3 * m + i] = dh * c.tanh_c[i] * og * (1.0 - og);
            out.d_prev.aux[i] = dc * fg;
        }
        accumulate_block(P, G, c.y, 0, dz, dy);
        out.d_prev.h.assign(dy.begin(), dy.begin() + static_cast<std::ptrdiff_t>(m));
        out.d_input.assign(dy.begin() + static_cast<std::ptrdiff_t>(m), dy.end());
        return out;
    }

    const bool gru = P.kind == CellKind::GRU;
    const std::size_t cand = gru ? 2 * m : m;
    std::vector<double> d_direct_h(m);
    std::vector<double> dz_cand(m);
    std::vector<double> d_gate(m); // d(loss)/d(update gate) for GRU, forget gate for MGU
    for (std::size_t i = 0; i < m; ++i) {
        const double dh = d_next.h[i];
        const double gate = c.gates[i];
        const double n = c.gates[cand + i];
        double dn;
        if (gru) {
            d_gate[i] = dh * (prev.h[i] - n);
            dn = dh * (1.0 - gate);
            d_direct_h[i] = dh * gate;
        } else {
            d_gate[i] = dh * (n - prev.h[i]);
            dn = dh * gate;
            d_direct_h[i] = dh * (1.0 - gate);
        }
        dz_cand[i] = dn * (1.0 - n * n);
    }
    std::vector<double> dy_reset(src, 0.0);
    accumulate_block(P, G, c.y_reset, cand, dz_cand, dy_reset);

    // y_reset = [scale * h, x]; scale is r (GRU) or f (MGU)
    std::vector<double> d_scale(m);
    const double* scale = gru ? c.gates.data() + m : c.gates.data();
    for (std::size_t i = 0; i < m; ++i) {
        d_scale[i] = dy_reset[i] * prev.h[i];
        d_direct_h[i] += dy_reset[i] * scale[i];
    }
    for (std::size_t j = m; j < src; ++j) {
        dy[j] += dy_reset[j];
    }

    std::vector<double> dz(cand);
    if (gru) {
        for (std::size_t i = 0; i < m; ++i) {
            const double z = c.gates[i];
            const double r = c.gates[m + i];
            dz[i] = d_gate[i] * z * (1.0 - z);
            dz[m + i] = d_scale[i] * r * (1.0 - r);
        }
    } else {
        for (std::size_t i = 0; i < m; ++i) {
            const double f = c.gates[i];
            dz[i] = (d_gate[i] + d_scale[i]) * f * (1.0 - f);
        }
    }
    accumulate_block(P, G, c.y, 0, dz, dy);

    out.d_prev.h.resize(m);
    for (std::size_t i = 0; i < m; ++i) {
        out.d_prev.h[i] = dy[i] + d_direct_h[i];
    }
    out.d_input.assign(dy.begin() + static_cast<std::ptrdiff_t>(m), dy.end());
    return out;
}

double readout_forward(const Readout& r, std::span<const double> h) {
    double acc = r.bias[0];
    for (std::size_t i = 0; i < h.size(); ++i) {
        acc += r.weight[i] * h[i];
    }
    return acc;
}

void loss_gradient(LossKind kind, std::span<const double> pred, std::span<const double> target,
                   std::span<double> out) {
    const std::size_t T = pred.size();
    double total = 0.0;
    if (kind == LossKind::Weighted) {
        for (double t : target) {
            total += std::abs(t);
        }
    }
    for (std::size_t t = 0; t < T; ++t) {
        double w = 1.0 / static_cast<double>(T);
        if (kind == LossKind::Weighted && total > 0.0) {
            w = std::abs(target[t]) / total;
        }
        out[t] = 2.0 * w * (pred[t] - target[t]);
    }
}

void check_sequence(const PolicyModel& model, const SequenceView& seq) {
    const std::size_t T = seq.length();
    if (T == 0) {
        throw DimensionError("empty sequence");
    }
    if (model.head) {
        if (seq.frames.size() != T) {
            throw DimensionError("sequence needs one frame per target");
        }
    } else if (seq.features.size() != T) {
        throw DimensionError("sequence needs one feature vector per target");
    }
}

// Gradient of one sequence's loss, accumulated into `grad`; returns the loss.
double sequence_backward(const PolicyModel& model, const SequenceView& seq, LossKind loss,
                         double scale, PolicyModel& grad) {
    check_sequence(model, seq);
    const std::size_t T = seq.length();
    std::vector<ConvOutput> conv;
    std::vector<std::vector<double>> inputs(T);
    if (model.head) {
        conv.reserve(T);
        for (std::size_t t = 0; t < T; ++t) {
            conv.push_back(conv_forward(*model.head, seq.frames[t], true));
            inputs[t] = conv.back().features;
        }
    } else {
        for (std::size_t t = 0; t < T; ++t) {
            inputs[t] = seq.features[t];
        }
    }
    std::vector<HiddenState> states;
    states.reserve(T + 1);
    states.push_back(zero_state(model.cell));
    std::vector<double> pred(T);
    for (std::size_t t = 0; t < T; ++t) {
        states.push_back(advance(model.cell, states.back(), inputs[t]));
        pred[t] = readout_forward(model.readout, states.back().h);
    }
    const double value = sequence_loss(loss, pred, seq.targets);
    std::vector<double> dpred(T);
    loss_gradient(loss, pred, seq.targets, dpred);

    const std::size_t m = model.cell.m;
    HiddenState d_state = zero_state(model.cell);
    for (std::size_t t = T; t-- > 0;) {
        const double dp = dpred[t] * scale;
        const HiddenState& h_t = states[t + 1];
        grad.readout.bias[0] += dp;
        for (std::size_t i = 0; i < m; ++i) {
            grad.readout.weight[i] += dp * h_t.h[i];
            d_state.h[i] += dp * model.readout.weight[i];
        }
        const HiddenState& prev = states[t];
        StepAdjoint adj = is_gated(model.cell.kind)
                              ? gated_backward(model.cell, prev, inputs[t], d_state, grad.cell)
                              : bio_backward(model.cell, prev, inputs[t], d_state, grad.cell);
        if (model.head) {
            conv_backward(*model.head, seq.frames[t], conv[t].maps, adj.d_input, *grad.head);
        }
        d_state = std::move(adj.d_prev);
    }
    return value;
}

GradientSet to_gradient_set(const PolicyModel& grads) {
    GradientSet out;
    grads.visit([&](std::string_view name, const std::vector<double>& v, bool) {
        out.names.emplace_back(name);
        out.arrays.push_back(v);
    });
    return out;
}

void add_into(PolicyModel& dst, const PolicyModel& src) {
    std::vector<const std::vector<double>*> src_arrays;
    src.visit([&](std::string_view, const std::vector<double>& v, bool) {
        src_arrays.push_back(&v);
    });
    std::size_t idx = 0;
    dst.visit([&](std::string_view, std::vector<double>& v, bool) {
        const auto& s = *src_arrays[idx++];
        for (std::size_t q = 0; q < v.size(); ++q) {
            v[q] += s[q];
        }
    });
}

} // namespace

StepAdjoint step_backward(const CellParameters& params, const HiddenState& prev,
                          std::span<const double> x, const HiddenState& d_next,
                          CellParameters& grad) {
    if (d_next.h.size() != params.m) {
        throw DimensionError("state adjoint has the wrong length");
    }
    if (is_gated(params.kind)) {
        HiddenState d = d_next;
        if (params.kind == CellKind::LSTM && d.aux.empty()) {
            d.aux.assign(params.m, 0.0);
        }
        return gated_backward(params, prev, x, d, grad);
    }
    return bio_backward(params, prev, x, d_next, grad);
}

std::vector<double> predict_sequence(const PolicyModel& model, const SequenceView& seq) {
    check_sequence(model, seq);
    const std::size_t T = seq.length();
    std::vector<double> pred(T);
    HiddenState state = zero_state(model.cell);
    for (std::size_t t = 0; t < T; ++t) {
        if (model.head) {
            const ConvOutput out = conv_forward(*model.head, seq.frames[t], false);
            state = advance(model.cell, state, out.features);
        } else {
            state = advance(model.cell, state, seq.features[t]);
        }
        pred[t] = readout_forward(model.readout, state.h);
    }
    return pred;
}

double batch_loss(const PolicyModel& model, std::span<const SequenceView> batch, LossKind loss) {
    if (batch.empty()) {
        throw DimensionError("empty batch");
    }
    double total = 0.0;
    for (const SequenceView& seq : batch) {
        total += sequence_loss(loss, predict_sequence(model, seq), seq.targets);
    }
    return total / static_cast<double>(batch.size());
}

GradientSet bptt_gradients(const PolicyModel& model, std::span<const SequenceView> batch,
                           LossKind loss, std::size_t threads) {
    if (batch.empty()) {
        throw DimensionError("empty batch");
    }
    const std::size_t len = batch.front().length();
    for (const SequenceView& seq : batch) {
        if (seq.length() != len) {
            throw DimensionError("all sequences in a batch must have the same length");
        }
    }
    const double scale = 1.0 / static_cast<double>(batch.size());
    // One buffer per sequence, reduced in sequence order so the result does
    // not depend on the thread count.
    std::vector<PolicyModel> partial(batch.size(), zeros_like(model));
    std::vector<double> losses(batch.size(), 0.0);
    const std::size_t workers = std::max<std::size_t>(1, std::min(threads, batch.size()));
    if (workers == 1) {
        for (std::size_t s = 0; s < batch.size(); ++s) {
            losses[s] = sequence_backward(model, batch[s], loss, scale, partial[s]);
        }
    } else {
        std::vector<std::exception_ptr> errors(workers);
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&, w] {
                try {
                    for (std::size_t s = w; s < batch.size(); s += workers) {
                        losses[s] = sequence_backward(model, batch[s], loss, scale, partial[s]);
                    }
                } catch (...) {
                    errors[w] = std::current_exception();
                }
            });
        }
        for (auto& th : pool) {
            th.join();
        }
        for (auto& e : errors) {
            if (e) {
                std::rethrow_exception(e);
            }
        }
    }
    PolicyModel total = zeros_like(model);
    double loss_sum = 0.0;
    for (std::size_t s = 0; s < batch.size(); ++s) {
        add_into(total, partial[s]);
        loss_sum += losses[s];
    }
    GradientSet out = to_gradient_set(total);
    out.loss = loss_sum * scale;
    for (std::size_t a = 0; a < out.arrays.size(); ++a) {
        for (std::size_t q = 0; q < out.arrays[a].size(); ++q) {
            if (!std::isfinite(out.arrays[a][q])) {
                throw NumericError("non-finite gradient in " + out.names[a], q);
            }
        }
    }
    return out;
}

std::vector<double> finite_difference(const std::function<double(std::span<const double>)>& f,
                                      std::span<const double> theta, double step) {
    if (!(step > 0.0)) {
        throw NumericError("finite-difference step must be positive");
    }
    std::vector<double> x(theta.begin(), theta.end());
    std::vector<double> out(x.size());
    for (std::size_t q = 0; q < x.size(); ++q) {
        const double orig = x[q];
        x[q] = orig + step;
        const double plus = f(x);
        x[q] = orig - step;
        const double minus = f(x);
        x[q] = orig;
        out[q] = (plus - minus) / (2.0 * step);
    }
    return out;
}

GradientSet finite_difference_gradients(const PolicyModel& model,
                                        std::span<const SequenceView> batch, LossKind loss,
                                        double step) {
    if (!(step > 0.0)) {
        throw NumericError("finite-difference step must be positive");
    }
    PolicyModel probe = model;
    std::vector<std::vector<double>*> arrays;
    GradientSet out;
    probe.visit([&](std::string_view name, std::vector<double>& v, bool) {
        arrays.push_back(&v);
        out.names.emplace_back(name);
        out.arrays.emplace_back(v.size(), 0.0);
    });
    for (std::size_t a = 0; a < arrays.size(); ++a) {
        std::vector<double>& v = *arrays[a];
        for (std::size_t q = 0; q < v.size(); ++q) {
            const double orig = v[q];
            v[q] = orig + step;
            const double plus = batch_loss(probe, batch, loss);
            v[q] = orig - step;
            const double minus = batch_loss(probe, batch, loss);
            v[q] = orig;
            out.arrays[a][q] = (plus - minus) / (2.0 * step);
        }
    }
    out.loss = batch_loss(model, batch, loss);
    return out;
}

} // namespace liquid
