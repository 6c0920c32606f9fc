// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero if any fails. Criteria 7-9 share one desk-scale run.
//
//   acceptance [criterion numbers...]   (default: all)

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "liquid/cells.hpp"
#include "liquid/config.hpp"
#include "liquid/errors.hpp"
#include "liquid/metrics.hpp"
#include "liquid/pipeline.hpp"
#include "liquid/training.hpp"

using namespace liquid;
namespace fs = std::filesystem;

namespace {

struct Verdict {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::vector<double> uniform_vector(std::size_t n, double lo, double hi, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> d(lo, hi);
    std::vector<double> v(n);
    for (double& x : v) x = d(rng);
    return v;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

constexpr CellKind kBioKinds[] = {CellKind::CTRNN, CellKind::LTC,    CellKind::LC_NA,
                                  CellKind::LC_SA, CellKind::LRC_NA, CellKind::LRC_SA};
constexpr CellKind kLiquidKinds[] = {CellKind::LC_NA, CellKind::LC_SA, CellKind::LRC_NA,
                                     CellKind::LRC_SA};

// 1 ---------------------------------------------------------------------

Verdict gradient_suite() {
    const auto t0 = std::chrono::steady_clock::now();
    GradcheckOptions opts; // 10 instances, m 4, n 3, T 7
    double worst = 0.0;
    std::string worst_kind;
    bool all = true;
    for (CellKind kind : kAllCellKinds) {
        const GradcheckResult r = gradient_check(kind, opts);
        all = all && r.passed;
        if (r.max_error >= worst) {
            worst = r.max_error;
            worst_kind = std::string(to_string(kind));
        }
    }
    const double secs = seconds_since(t0);
    return {all && worst <= 1e-5 && secs < 60.0,
            fmt("max rel err %.3g (%s) <= 1e-5 over 9 kinds x %zu instances, %.1f s < 60 s", worst,
                worst_kind.c_str(), opts.instances, secs)};
}

// 2 ---------------------------------------------------------------------

Verdict euler_identity() {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> dt_dist(0.01, 1.0);
    double worst = 0.0;
    for (CellKind kind : kBioKinds) {
        for (int draw = 0; draw < 10000; ++draw) {
            const CellParameters p = init_parameters(kind, 4, 3, rng, dt_dist(rng));
            HiddenState h = zero_state(p);
            h.h = uniform_vector(4, -1.0, 1.0, rng);
            const auto x = uniform_vector(3, -1.0, 1.0, rng);
            const HiddenState next = step(p, h, x);
            const auto rhs = ode_rhs(p, h, x);
            for (std::size_t i = 0; i < 4; ++i) {
                worst = std::max(worst, std::abs(next.h[i] - (h.h[i] + p.dt * rhs[i])));
            }
        }
    }
    return {worst <= 1e-14, fmt("max |step - (h + dt*rhs)| = %.3g <= 1e-14 over 6 kinds x 1e4 draws", worst)};
}

// 3 ---------------------------------------------------------------------

Verdict reductions() {
    std::mt19937_64 rng(3);
    const std::size_t m = 4, n = 3, src = m + n;
    double tied = 0.0, lc = 0.0, lrc = 0.0;
    for (int inst = 0; inst < 20; ++inst) {
        std::vector<std::vector<double>> xs;
        for (int t = 0; t < 100; ++t) xs.push_back(uniform_vector(n, -1.0, 1.0, rng));
        const auto h0 = uniform_vector(m, -0.5, 0.5, rng);
        auto run = [&](const CellParameters& p, StepOptions o) {
            HiddenState s = zero_state(p);
            s.h = h0;
            return unroll(p, s, xs, o);
        };
        auto compare = [&](const std::vector<HiddenState>& a, const std::vector<HiddenState>& b) {
            double w = 0.0;
            for (std::size_t t = 0; t < a.size(); ++t) w = std::max(w, max_abs_diff(a[t].h, b[t].h));
            return w;
        };

        const CellParameters na = init_parameters(CellKind::LRC_NA, m, n, rng, 0.5);
        CellParameters sa = zero_parameters(CellKind::LRC_SA, m, n, 0.5);
        sa.g_l = na.g_l; sa.e_l = na.e_l; sa.g = na.g; sa.k = na.k;
        sa.o = na.o; sa.p = na.p; sa.kappa_raw = na.kappa_raw;
        for (std::size_t j = 0; j < src; ++j) {
            for (std::size_t i = 0; i < m; ++i) {
                sa.a[j * m + i] = na.a[j];
                sa.b[j * m + i] = na.b[j];
            }
        }
        tied = std::max(tied, compare(run(na, {}), run(sa, {})));

        const CellParameters lcna = init_parameters(CellKind::LC_NA, m, n, rng, 0.5);
        CellParameters ct = zero_parameters(CellKind::CTRNN, m, n, 0.5);
        ct.g_l = lcna.g_l; ct.e_l = lcna.e_l; ct.g = lcna.g; ct.k = lcna.k;
        lc = std::max(lc, compare(run(lcna, {.unit_elastance = true}), run(ct, {})));

        const CellParameters lrcsa = init_parameters(CellKind::LRC_SA, m, n, rng, 0.5);
        CellParameters ltc = zero_parameters(CellKind::LTC, m, n, 0.5);
        ltc.g_l = lrcsa.g_l; ltc.e_l = lrcsa.e_l; ltc.g = lrcsa.g; ltc.k = lrcsa.k;
        ltc.a = lrcsa.a; ltc.b = lrcsa.b;
        lrc = std::max(lrc, compare(run(lrcsa, {.unit_elastance = true}), run(ltc, {})));
    }
    const double worst = std::max({tied, lc, lrc});
    return {worst <= 1e-12,
            fmt("LRC_SA(tied)=LRC_NA %.2g, LC_NA(eps=1)=CTRNN %.2g, LRC_SA(eps=1)=LTC %.2g <= 1e-12 "
                "(20 x 100 steps)", tied, lc, lrc)};
}

// 4 ---------------------------------------------------------------------

Verdict elastance_properties() {
    std::mt19937_64 rng(4);
    std::normal_distribution<double> wide(0.0, 3.0);
    double lo = 1.0, hi = 0.0;
    for (int draw = 0; draw < 100000; ++draw) {
        CellParameters p = init_parameters(CellKind::LRC_SA, 3, 2, rng);
        for (double& v : p.o) v = wide(rng);
        for (double& v : p.p) v = wide(rng);
        for (double& v : p.kappa_raw) v = wide(rng);
        const auto y = uniform_vector(5, -3.0, 3.0, rng);
        const double e = elastance(p, draw % 3, y);
        lo = std::min(lo, e);
        hi = std::max(hi, e);
    }
    bool frozen = true;
    for (CellKind kind : kLiquidKinds) {
        CellParameters p = init_parameters(kind, 4, 3, rng);
        std::fill(p.kappa_raw.begin(), p.kappa_raw.end(), 0.0);
        HiddenState s = zero_state(p);
        s.h = uniform_vector(4, -1.0, 1.0, rng);
        const HiddenState start = s;
        for (int t = 0; t < 1000; ++t) s = step(p, s, uniform_vector(3, -1.0, 1.0, rng));
        frozen = frozen && s == start;
    }
    const bool range = lo >= 0.0 && hi < 1.0;
    return {range && frozen,
            fmt("eps in [%.3g, %.17g] on 1e5 draws; kappa_raw=0 frozen over 1e3 steps for 4 liquid "
                "kinds: %s", lo, hi, frozen ? "exact" : "NO")};
}

// 5 ---------------------------------------------------------------------

double correlation_reference(const std::vector<double>& x, const std::vector<double>& y) {
    long double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= x.size();
    my /= y.size();
    long double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    return static_cast<double>(std::fabs(sxy) / std::sqrt(sxx * syy));
}

double ssim_reference(const Frame& a, const Frame& b) {
    constexpr int R = 5;
    double g[2 * R + 1];
    double gs = 0.0;
    for (int i = -R; i <= R; ++i) {
        g[i + R] = std::exp(-(i * i) / (2.0 * 1.5 * 1.5));
        gs += g[i + R];
    }
    const double C1 = 1e-4, C2 = 9e-4;
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t y = 0; y + 2 * R < a.height; ++y) {
        for (std::size_t x = 0; x + 2 * R < a.width; ++x) {
            double ma = 0, mb = 0, aa = 0, bb = 0, ab = 0;
            for (int i = 0; i <= 2 * R; ++i) {
                for (int j = 0; j <= 2 * R; ++j) {
                    const double w = g[i] * g[j] / (gs * gs);
                    const double va = a.at(0, y + i, x + j), vb = b.at(0, y + i, x + j);
                    ma += w * va;
                    mb += w * vb;
                    aa += w * va * va;
                    bb += w * vb * vb;
                    ab += w * va * vb;
                }
            }
            const double sa = aa - ma * ma, sb = bb - mb * mb, sab = ab - ma * mb;
            total += ((2 * ma * mb + C1) * (2 * sab + C2)) /
                     ((ma * ma + mb * mb + C1) * (sa + sb + C2));
            ++count;
        }
    }
    return total / static_cast<double>(count);
}

Verdict metric_oracles() {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> nd;
    std::uniform_real_distribution<double> slope(-2.0, 2.0);
    double corr_err = 0.0;
    for (int pair = 0; pair < 100; ++pair) {
        const std::size_t len = 20 + pair;
        std::vector<double> x(len), y(len);
        const double s = slope(rng);
        for (std::size_t i = 0; i < len; ++i) {
            x[i] = nd(rng);
            y[i] = s * x[i] + nd(rng) + 3.0;
        }
        corr_err = std::max(corr_err, std::abs(abs_correlation(x, y).value - correlation_reference(x, y)));
    }
    double ssim_err = 0.0, self_err = 0.0;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int pair = 0; pair < 50; ++pair) {
        Frame a(1, 32, 32), b(1, 32, 32);
        const double mix = u(rng);
        for (std::size_t q = 0; q < a.pixels.size(); ++q) {
            a.pixels[q] = u(rng);
            b.pixels[q] = mix * a.pixels[q] + (1.0 - mix) * u(rng);
        }
        ssim_err = std::max(ssim_err, std::abs(ssim(a, b) - ssim_reference(a, b)));
        self_err = std::max(self_err, std::abs(ssim(a, a) - 1.0));
    }
    return {corr_err <= 1e-12 && ssim_err <= 1e-8 && self_err == 0.0,
            fmt("|corr| err %.2g <= 1e-12 (100 pairs); ssim err %.2g <= 1e-8 (50 pairs 32x32); "
                "max |ssim(x,x)-1| = %.2g", corr_err, ssim_err, self_err)};
}

// 6 ---------------------------------------------------------------------

Verdict simulator_soundness() {
    RoadOptions opts; // 1 km
    double worst = 0.0;
    std::size_t completed = 0, total = 0;
    bool deterministic = true;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        for (Season season : {Season::Summer, Season::Winter}) {
            ++total;
            const RoadProfile road = generate_road(seed, opts, season);
            const Rollout r = expert_rollout(road);
            const VehicleStep last = vehicle_step(r.states.back(), r.executed.back(), road);
            double md = 0.0;
            for (const VehicleState& s : r.states) md = std::max(md, std::abs(s.d));
            worst = std::max(worst, md);
            if (!r.crashed && last.terminal && md < 0.5) ++completed;

            ExpertRolloutOptions po;
            po.perturbation = 0.1;
            po.perturbation_time_constant = 0.5;
            po.perturbation_seed = seed;
            const RoadProfile again = generate_road(seed, opts, season);
            deterministic = deterministic && again.curvature == road.curvature &&
                            expert_rollout(again).states == r.states &&
                            expert_rollout(road, po).states == expert_rollout(again, po).states;
            const VehicleState mid = r.states[r.size() / 2];
            const auto fs = frame_seed(seed, season, r.size() / 2);
            deterministic = deterministic &&
                            render_camera(road, mid, season, fs) == render_camera(again, mid, season, fs);
        }
    }
    return {completed == total && deterministic,
            fmt("expert completed %zu/%zu roads (20 seeds x 2 seasons, 1 km), max |d| = %.3f m < 0.5; "
                "deterministic: %s", completed, total, worst, deterministic ? "yes" : "NO")};
}

// 7-9 -------------------------------------------------------------------

struct ModelRun {
    CellKind kind;
    TrainOutcome outcome;
    EvalOutcome eval;
    fs::path dir;
};

struct DeskRun {
    ExperimentConfig config;
    double baseline = 0.0;
    double seconds = 0.0;
    std::vector<ModelRun> models;
    std::string error;
};

DeskRun run_desk(const fs::path& root) {
    DeskRun run;
    const auto t0 = std::chrono::steady_clock::now();
    try {
        run.config = load_config(fs::path(LIQUID_SOURCE_DIR) / "configs" / "desk.json");
        const Dataset dataset = make_dataset(run.config);
        const FrameStore frames = render_frames(dataset);
        run.baseline = constant_baseline_mse(dataset);
        std::fprintf(stderr, "desk dataset: %zu train / %zu validation windows, baseline %.4f\n",
                     dataset.splits.train.size(), dataset.splits.validation.size(), run.baseline);
        for (CellKind kind : {CellKind::CTRNN, CellKind::LC_NA, CellKind::LRC_NA, CellKind::LRC_SA}) {
            ExperimentConfig cfg = run.config;
            cfg.kind = kind;
            ModelRun m{kind, {}, {}, root / std::string(to_string(kind))};
            fs::create_directories(m.dir);
            m.outcome = train_policy(cfg, dataset, frames, [&](const HistoryRow& row) {
                std::fprintf(stderr, "  %s epoch %2zu  train %.5f  val %.5f\n",
                             std::string(to_string(kind)).c_str(), row.epoch, row.train_mse,
                             row.val_mse);
            });
            write_training_artifacts(m.dir, cfg, m.outcome);
            const HistoryRow& best = m.outcome.result.history.at(m.outcome.result.best_epoch - 1);
            const TrainingSummary summary{best.val_mse, best.val_weighted, best.epoch};
            m.eval = evaluate_policy(cfg, m.outcome.result.best, summary, &m.dir);
            std::fprintf(stderr, "  %s done at %.0f s\n", std::string(to_string(kind)).c_str(),
                         seconds_since(t0));
            run.models.push_back(std::move(m));
        }
    } catch (const std::exception& e) {
        run.error = e.what();
    }
    run.seconds = seconds_since(t0);
    return run;
}

const ModelRun* find_model(const DeskRun& run, CellKind kind) {
    for (const ModelRun& m : run.models) {
        if (m.kind == kind) return &m;
    }
    return nullptr;
}

Verdict desk_end_to_end(const DeskRun& run) {
    if (!run.error.empty() || run.models.size() != 4) {
        return {false, "desk run failed: " + run.error};
    }
    std::ostringstream detail;
    bool pass = true;
    detail << "baseline " << fmt("%.4f", run.baseline) << "; best val";
    for (const ModelRun& m : run.models) {
        const double val = m.outcome.result.history.at(m.outcome.result.best_epoch - 1).val_mse;
        const bool ok = val <= 0.5 * run.baseline;
        pass = pass && ok;
        detail << ' ' << to_string(m.kind) << fmt(" %.4f", val) << (ok ? "" : "(FAIL)");
    }
    // Gate on the first held-out road in every season.
    const ModelRun* lrc = find_model(run, CellKind::LRC_SA);
    detail << "; LRC_SA completion on road " << run.config.eval_road_seeds.front();
    for (const ModelMetrics& e : lrc->eval.report.entries) {
        const double c = e.completion.front();
        pass = pass && c >= 0.9;
        detail << ' ' << to_string(e.season) << fmt(" %.0f%%", 100.0 * c);
    }
    detail << fmt("; runtime %.0f s <= 1800 s", run.seconds);
    pass = pass && run.seconds <= 1800.0;

    auto winter_corr = [&](CellKind kind) -> std::optional<CorrelationTable> {
        const ModelRun* m = find_model(run, kind);
        for (const ModelMetrics& e : m->eval.report.entries) {
            if (e.season == Season::Winter) return e.correlation;
        }
        return std::nullopt;
    };
    const auto lrc_corr = winter_corr(CellKind::LRC_SA);
    const auto ct_corr = winter_corr(CellKind::CTRNN);
    if (lrc_corr && ct_corr) {
        detail << fmt("; winter |corr| (reported, not gated): LRC_SA %.3f +- %.3f vs CTRNN %.3f +- %.3f "
                      "(published 0.766 +- 0.243 vs 0.315 +- 0.243)",
                      lrc_corr->mean, lrc_corr->std, ct_corr->mean, ct_corr->std);
    }
    return {pass, detail.str()};
}

Verdict ssim_pipeline(const DeskRun& run) {
    if (!run.error.empty() || run.models.empty()) {
        return {false, "desk run failed: " + run.error};
    }
    bool pass = true;
    std::ostringstream detail;
    detail << "median SSIM at 0.1 / 0.2:";
    for (const ModelRun& m : run.models) {
        for (const ModelMetrics& e : m.eval.report.entries) {
            std::map<double, const SsimSamples*> by_var;
            for (const SsimSamples& s : e.ssim) by_var[s.variance] = &s;
            if (!by_var.count(0.0) || !by_var.count(0.1) || !by_var.count(0.2)) {
                return {false, "missing noise variance in " + std::string(to_string(m.kind))};
            }
            for (double v : by_var[0.0]->values) pass = pass && v == 1.0;
            const auto& v1 = by_var[0.1]->values;
            const auto& v2 = by_var[0.2]->values;
            const double m1 = summarize(v1).median, m2 = summarize(v2).median;
            const bool ok = m1 >= m2 && v1.size() >= 100;
            pass = pass && ok;
            detail << ' ' << to_string(m.kind) << '/' << to_string(e.season)
                   << fmt(" %.3f/%.3f (n=%zu)", m1, m2, v1.size()) << (ok ? "" : "(FAIL)");
        }
    }
    detail << "; zero-variance column all 1: " << (pass ? "yes" : "see above");
    return {pass, detail.str()};
}

Verdict reporting_format(const DeskRun& run) {
    if (!run.error.empty() || run.models.empty()) {
        return {false, "desk run failed: " + run.error};
    }
    bool pass = true;
    for (const ModelRun& m : run.models) {
        std::ifstream in(m.dir / "history.csv");
        std::string header, line;
        std::getline(in, header);
        pass = pass && header == "epoch,train_mse,val_mse,val_weighted,best";
        std::size_t rows = 0, marked = 0, marked_epoch = 0;
        while (std::getline(in, line)) {
            ++rows;
            if (line.back() == '1') {
                ++marked;
                marked_epoch = std::stoul(line.substr(0, line.find(',')));
            }
        }
        pass = pass && rows == m.outcome.result.history.size() && marked == 1 &&
               marked_epoch == m.outcome.result.best_epoch;
        std::ifstream sj(m.dir / "summary.json");
        const nlohmann::json s = nlohmann::json::parse(sj);
        pass = pass && s.contains("best_epoch") && s.contains("best_val_mse") &&
               s.contains("best_val_weighted");
        const auto report = nlohmann::json::parse(std::ifstream(m.dir / "metrics.json"));
        pass = pass && check_report_integrity(report).empty();
    }
    std::ostringstream table;
    table << "history.csv epoch,train_mse,val_mse,val_weighted,best with one best row; "
             "best epoch / val / weighted:";
    for (const ModelRun& m : run.models) {
        const HistoryRow& b = m.outcome.result.history.at(m.outcome.result.best_epoch - 1);
        table << ' ' << to_string(m.kind) << fmt(" %zu/%.4f/%.4f", b.epoch, b.val_mse, b.val_weighted);
    }
    return {pass, table.str()};
}

} // namespace

int main(int argc, char** argv) {
    std::set<int> wanted;
    for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));
    auto want = [&](int c) { return wanted.empty() || wanted.count(c) > 0; };

    const std::vector<std::pair<int, std::function<Verdict()>>> fast = {
        {1, gradient_suite},     {2, euler_identity}, {3, reductions},
        {4, elastance_properties}, {5, metric_oracles}, {6, simulator_soundness},
    };
    bool all = true;
    auto report = [&](int c, const Verdict& v) {
        std::printf("criterion %d: %s  %s\n", c, v.pass ? "PASS" : "FAIL", v.detail.c_str());
        std::fflush(stdout);
        all = all && v.pass;
    };
    for (const auto& [c, fn] : fast) {
        if (!want(c)) continue;
        try {
            report(c, fn());
        } catch (const std::exception& e) {
            report(c, {false, std::string("threw: ") + e.what()});
        }
    }
    if (want(7) || want(8) || want(9)) {
        const fs::path root = fs::current_path() / "acceptance_runs";
        const DeskRun run = run_desk(root);
        const std::vector<std::pair<int, std::function<Verdict(const DeskRun&)>>> desk = {
            {7, desk_end_to_end}, {8, ssim_pipeline}, {9, reporting_format},
        };
        for (const auto& [c, fn] : desk) {
            if (!want(c)) continue;
            try {
                report(c, fn(run));
            } catch (const std::exception& e) {
                report(c, {false, std::string("threw: ") + e.what()});
            }
        }
    }
    return all ? 0 : 1;
}
