#include <algorithm>
#include <cmath>
#include <memory>
#include <random>

#include "doctest.h"
#include "liquid/errors.hpp"
#include "liquid/metrics.hpp"

using namespace liquid;

namespace {

Frame random_frame(std::size_t h, std::size_t w, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> d(0.0, 1.0);
    Frame f(1, h, w);
    for (double& v : f.pixels) v = d(rng);
    return f;
}

// Straight 2D evaluation of the windowed index, no separability.
double ssim_direct(const Frame& a, const Frame& b) {
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
                    const double va = a.at(0, y + i, x + j);
                    const double vb = b.at(0, y + i, x + j);
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

EpisodeTrace synthetic_trace(std::size_t m, std::size_t steps, std::mt19937_64& rng) {
    std::normal_distribution<double> nd;
    EpisodeTrace t;
    for (std::size_t k = 0; k < steps; ++k) {
        TraceStep s;
        s.prediction = nd(rng);
        s.kappa_ahead = nd(rng);
        s.hidden.resize(m);
        s.hidden[0] = 2.0 * s.prediction + 1.0;   // perfectly correlated
        s.hidden[1] = -0.5 * s.kappa_ahead;       // tracks curvature
        for (std::size_t i = 2; i < m; ++i) s.hidden[i] = 0.25;  // constant
        t.steps.push_back(std::move(s));
    }
    return t;
}

} // namespace

TEST_CASE("absolute correlation") {
    const std::vector<double> x = {1, 2, 3, 5}, y = {2, 1, 4, 4};
    const Correlation c = abs_correlation(x, y);
    CHECK(c.value == doctest::Approx(0.74819005592720877084).epsilon(1e-15));
    CHECK_FALSE(c.degenerate);
    CHECK(abs_correlation(y, x).value == c.value);
    for (double a : {-3.0, 0.5}) {
        for (double b : {0.0, 7.0}) {
            std::vector<double> z(x.size());
            for (std::size_t i = 0; i < x.size(); ++i) z[i] = a * x[i] + b;
            CHECK(abs_correlation(z, y).value == doctest::Approx(c.value).epsilon(1e-14));
        }
    }
    const std::vector<double> flat = {1, 1, 1, 1};
    const Correlation d = abs_correlation(flat, y);
    CHECK(d.degenerate);
    CHECK(d.value == 0.0);
    CHECK_THROWS_AS(abs_correlation(x, std::vector<double>{1, 2}), DimensionError);
    CHECK_THROWS_AS(abs_correlation(std::vector<double>{1}, std::vector<double>{1}), DimensionError);
}

TEST_CASE("correlation tables against both references") {
    std::mt19937_64 rng(3);
    std::vector<EpisodeTrace> traces = {synthetic_trace(4, 200, rng), synthetic_trace(4, 150, rng)};
    const CorrelationTable pred = correlation_table(traces, CorrelationReference::Prediction);
    REQUIRE(pred.values.size() == 2);
    CHECK(pred.neurons() == 4);
    for (std::size_t r = 0; r < 2; ++r) {
        CHECK(pred.values[r][0] == doctest::Approx(1.0));
        CHECK(pred.values[r][1] < 0.3);
        CHECK(pred.degenerate[r][2]);
        CHECK(pred.values[r][3] == 0.0);
    }
    const CorrelationTable curv = correlation_table(traces, CorrelationReference::Curvature);
    CHECK(curv.values[0][1] == doctest::Approx(1.0));

    double mean = 0.0;
    for (const auto& run : pred.values) for (double v : run) mean += v;
    mean /= 8.0;
    double var = 0.0;
    for (const auto& run : pred.values) for (double v : run) var += (v - mean) * (v - mean);
    CHECK(pred.mean == doctest::Approx(mean).epsilon(1e-14));
    CHECK(pred.std == doctest::Approx(std::sqrt(var / 8.0)).epsilon(1e-14));
    CHECK(pred.neuron_means()[0] == doctest::Approx(1.0));

    CHECK_THROWS_AS(correlation_table(std::span<const EpisodeTrace>{}, CorrelationReference::Prediction),
                    DimensionError);
    traces[1].steps[0].hidden.pop_back();
    CHECK_THROWS_AS(correlation_table(traces, CorrelationReference::Prediction), DimensionError);
    CHECK(parse_correlation_reference("curvature") == CorrelationReference::Curvature);
}

TEST_CASE("summary statistics") {
    const std::vector<double> v = {4, 1, 3, 2};
    const Summary s = summarize(v);
    CHECK(s.mean == 2.5);
    CHECK(s.std == doctest::Approx(std::sqrt(1.25)));
    CHECK(s.median == 2.5);
    CHECK(s.q1 == doctest::Approx(1.75));
    CHECK(s.q3 == doctest::Approx(3.25));
    CHECK(s.min == 1);
    CHECK(s.max == 4);
    CHECK_THROWS_AS(summarize(std::vector<double>{}), DimensionError);
}

TEST_CASE("SSIM of constant images") {
    const Frame zero(1, 20, 20, 0.0), one(1, 20, 20, 1.0);
    CHECK(ssim(zero, one) == doctest::Approx(0.000099990000999900009999).epsilon(1e-12));
    // below the window size a single global window is used
    const Frame small0(1, 5, 6, 0.0), small1(1, 5, 6, 1.0);
    CHECK(ssim(small0, small1) == doctest::Approx(0.000099990000999900009999).epsilon(1e-12));
    CHECK(ssim(zero, zero) == 1.0);
}

TEST_CASE("SSIM matches a direct windowed evaluation") {
    std::mt19937_64 rng(17);
    const Frame a = random_frame(24, 30, rng);
    Frame b = a;
    std::normal_distribution<double> nd(0.0, 0.2);
    for (double& v : b.pixels) v = std::clamp(v + nd(rng), 0.0, 1.0);
    CHECK(std::abs(ssim(a, b) - ssim_direct(a, b)) <= 1e-8);
    CHECK(ssim(a, b) == doctest::Approx(ssim(b, a)).epsilon(1e-14));
    CHECK(ssim(a, a) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(ssim(a, b) < 1.0);
    CHECK_THROWS_AS(ssim(a, Frame(1, 24, 31)), DimensionError);
}

TEST_CASE("SSIM robustness is exactly one without noise") {
    std::mt19937_64 rng(19);
    ConvHeadConfig cfg;
    cfg.height = 16;
    cfg.width = 20;
    cfg.layers = {{3, 3, 2}, {4, 3, 1}};
    cfg.features = 4;
    const ConvHead head = init_conv_head(cfg, rng);
    std::vector<Frame> frames;
    for (int i = 0; i < 4; ++i) frames.push_back(random_frame(16, 20, rng));
    const std::vector<double> variances = {0.0, 0.1, 0.2};
    const auto one = ssim_robustness(head_saliency(head), frames, variances, 5, 1);
    const auto two = ssim_robustness(head_saliency(head), frames, variances, 5, 2);
    REQUIRE(one.size() == 3);
    for (double v : one[0].values) CHECK(v == 1.0);
    CHECK(one[1].values.size() == 4);
    for (std::size_t k = 0; k < 3; ++k) CHECK(one[k].values == two[k].values);
}

TEST_CASE("metrics reports round-trip and pass the integrity check") {
    std::mt19937_64 rng(23);
    std::vector<EpisodeTrace> traces = {synthetic_trace(3, 50, rng)};
    MetricsReport report;
    report.config_hash = "abc";
    report.seeds = {1000};
    ModelMetrics e;
    e.model = "LRC_SA";
    e.season = Season::Winter;
    e.val_mse = 0.02;
    e.best_epoch = 4;
    e.completion = {1.0};
    e.crashed = {false};
    e.correlation = correlation_table(traces, CorrelationReference::Prediction);
    e.ssim = {{0.0, {1.0, 1.0}}, {0.1, {0.8, 0.7, 0.9}}};
    report.entries.push_back(e);

    nlohmann::json doc = report_to_json(report);
    CHECK(check_report_integrity(doc).empty());
    const MetricsReport back = report_from_json(doc);
    CHECK(report_to_json(back) == doc);
    CHECK(back.entries[0].season == Season::Winter);

    doc["entries"][0]["correlation"]["mean"] = 0.123;
    doc["entries"][0]["ssim"][1]["summary"]["median"] = 0.5;
    CHECK(check_report_integrity(doc).size() == 2);

    const std::string csv = ssim_to_csv(report);
    CHECK(csv.rfind("model,season,variance,frame_index,ssim\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 6);
}

TEST_CASE("absolute correlation of identical and mirrored series") {
    const std::vector<double> x = {0.3, -1.0, 2.5, 0.7, 0.0};
    std::vector<double> neg(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) neg[i] = -x[i];
    CHECK(abs_correlation(x, x).value == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(abs_correlation(x, neg).value == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("a hand-built three-neuron table matches element-wise correlations") {
    const std::vector<std::vector<double>> h = {
        {0.1, 0.4, 0.2, 0.9, 0.5, 0.3},
        {1.0, -1.0, 0.5, 0.0, 2.0, 1.5},
        {0.2, 0.2, 0.2, 0.2, 0.2, 0.2},
    };
    const std::vector<double> pred = {0.0, 0.5, 0.1, 1.0, 0.6, 0.2};
    EpisodeTrace trace;
    for (std::size_t t = 0; t < pred.size(); ++t) {
        TraceStep s;
        s.prediction = pred[t];
        s.hidden = {h[0][t], h[1][t], h[2][t]};
        trace.steps.push_back(s);
    }
    const std::vector<EpisodeTrace> traces = {trace};
    const CorrelationTable table = correlation_table(traces, CorrelationReference::Prediction);
    for (std::size_t i = 0; i < 3; ++i) {
        const Correlation c = abs_correlation(h[i], pred);
        CHECK(table.values[0][i] == c.value);
        CHECK(table.degenerate[0][i] == c.degenerate);
    }
    CHECK(table.degenerate[0][2]);
}

TEST_CASE("robustness samples compose saliency and ssim") {
    std::mt19937_64 rng(29);
    std::vector<Frame> frames;
    for (int i = 0; i < 3; ++i) frames.push_back(random_frame(16, 16, rng));
    auto seen = std::make_shared<std::vector<Frame>>();
    const SaliencyFunction identity = [seen](const Frame& f) {
        seen->push_back(f);
        return f;
    };
    const std::vector<double> variances = {0.0, 0.1};
    const auto samples = ssim_robustness(identity, frames, variances, 11, 1);
    // calls per frame: clean, then one noisy frame per variance
    REQUIRE(seen->size() == 9);
    for (std::size_t f = 0; f < 3; ++f) {
        const Frame& clean = (*seen)[3 * f];
        CHECK(clean == frames[f]);
        for (std::size_t v = 0; v < 2; ++v) {
            CHECK(samples[v].values[f] == ssim(clean, (*seen)[3 * f + 1 + v]));
        }
    }
}

TEST_CASE("median SSIM degrades with noise variance for a fixed head") {
    std::mt19937_64 rng(31);
    const ConvHead head = init_conv_head(ConvHeadConfig{}, rng);
    const RoadProfile road = generate_road(1000, RoadOptions{});
    const Rollout r = expert_rollout(road);
    std::vector<Frame> frames;
    for (std::size_t t = 0; frames.size() < 100; t += 7) {
        frames.push_back(render_camera(road, r.states[t], Season::Summer, frame_seed(1000, Season::Summer, t)));
    }
    const std::vector<double> variances = {0.0, 0.1, 0.2};
    const auto samples = ssim_robustness(head_saliency(head), frames, variances, 3, 1);
    for (double v : samples[0].values) CHECK(v == 1.0);
    CHECK(summarize(samples[1].values).median >= summarize(samples[2].values).median);
}
