#include "liquid/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <exception>
#include <functional>
#include <numeric>
#include <sstream>
#include <thread>

#include "json_writer.hpp"
#include "liquid/errors.hpp"

namespace liquid {

Correlation abs_correlation(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) {
        throw DimensionError("abs_correlation: lengths " + std::to_string(x.size()) + " and " +
                             std::to_string(y.size()) + " differ");
    }
    if (x.size() < 2) {
        throw DimensionError("abs_correlation needs at least two samples");
    }
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t t = 0; t < x.size(); ++t) {
        const double dx = x[t] - mx;
        const double dy = y[t] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    const auto constant = [](std::span<const double> v) {
        return std::adjacent_find(v.begin(), v.end(), std::not_equal_to<>()) == v.end();
    };
    // a constant series can leave round-off residue in the centred sums
    if (constant(x) || constant(y) || sxx == 0.0 || syy == 0.0) {
        return {0.0, true};
    }
    // product of square roots (not the root of the product) keeps
    // f(x, y) == f(y, x) bit-exact
    const double r = std::abs(sxy) / (std::sqrt(sxx) * std::sqrt(syy));
    return {std::min(r, 1.0), false};
}

std::string_view to_string(CorrelationReference ref) {
    return ref == CorrelationReference::Prediction ? "prediction" : "curvature";
}

CorrelationReference parse_correlation_reference(std::string_view name) {
    if (name == "prediction") {
        return CorrelationReference::Prediction;
    }
    if (name == "curvature") {
        return CorrelationReference::Curvature;
    }
    throw ConfigError("unknown correlation reference '" + std::string(name) + "'");
}

std::vector<double> CorrelationTable::neuron_means() const {
    std::vector<double> out(neurons(), 0.0);
    if (values.empty()) {
        return out;
    }
    for (const auto& run : values) {
        for (std::size_t i = 0; i < run.size(); ++i) {
            out[i] += run[i];
        }
    }
    for (double& v : out) {
        v /= static_cast<double>(values.size());
    }
    return out;
}

namespace {

void mean_std(const std::vector<std::vector<double>>& values, double& mean, double& std) {
    std::vector<double> flat;
    for (const auto& run : values) {
        flat.insert(flat.end(), run.begin(), run.end());
    }
    if (flat.empty()) {
        mean = std = 0.0;
        return;
    }
    const Summary s = summarize(flat);
    mean = s.mean;
    std = s.std;
}

} // namespace

CorrelationTable correlation_table(std::span<const EpisodeTrace> traces,
                                   CorrelationReference reference) {
    if (traces.empty()) {
        throw DimensionError("correlation_table needs at least one trace");
    }
    CorrelationTable table;
    table.reference = reference;
    const std::size_t m = traces.front().steps.empty() ? 0 : traces.front().steps.front().hidden.size();
    for (const EpisodeTrace& trace : traces) {
        const std::size_t T = trace.steps.size();
        std::vector<double> ref(T);
        std::vector<std::vector<double>> h(m, std::vector<double>(T));
        for (std::size_t t = 0; t < T; ++t) {
            const TraceStep& st = trace.steps[t];
            if (st.hidden.size() != m) {
                throw DimensionError("trace hidden sizes differ");
            }
            ref[t] = reference == CorrelationReference::Prediction ? st.prediction : st.kappa_ahead;
            for (std::size_t i = 0; i < m; ++i) {
                h[i][t] = st.hidden[i];
            }
        }
        std::vector<double> row(m);
        std::vector<bool> flags(m);
        for (std::size_t i = 0; i < m; ++i) {
            const Correlation c = abs_correlation(h[i], ref);
            row[i] = c.value;
            flags[i] = c.degenerate;
        }
        table.values.push_back(std::move(row));
        table.degenerate.push_back(std::move(flags));
    }
    mean_std(table.values, table.mean, table.std);
    return table;
}

Summary summarize(std::span<const double> values) {
    if (values.empty()) {
        throw DimensionError("summarize needs at least one value");
    }
    Summary s;
    const double n = static_cast<double>(values.size());
    s.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
    double ss = 0.0;
    for (double v : values) {
        ss += (v - s.mean) * (v - s.mean);
    }
    s.std = std::sqrt(ss / n);
    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    auto quantile = [&](double q) {
        const double pos = q * (n - 1.0);
        const auto lo = static_cast<std::size_t>(std::floor(pos));
        const auto hi = std::min(lo + 1, sorted.size() - 1);
        return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
    };
    s.median = quantile(0.5);
    s.q1 = quantile(0.25);
    s.q3 = quantile(0.75);
    s.min = sorted.front();
    s.max = sorted.back();
    return s;
}

namespace {

constexpr std::size_t kWindow = 11;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

std::array<double, kWindow> gaussian_taps() {
    std::array<double, kWindow> g{};
    double sum = 0.0;
    for (std::size_t i = 0; i < kWindow; ++i) {
        const double x = static_cast<double>(i) - 5.0;
        g[i] = std::exp(-x * x / (2.0 * 1.5 * 1.5));
        sum += g[i];
    }
    for (double& v : g) {
        v /= sum;
    }
    return g;
}

double ssim_index(double mu_a, double mu_b, double var_a, double var_b, double cov) {
    return ((2.0 * mu_a * mu_b + kC1) * (2.0 * cov + kC2)) /
           ((mu_a * mu_a + mu_b * mu_b + kC1) * (var_a + var_b + kC2));
}

double ssim_global(const double* a, const double* b, std::size_t count) {
    const double n = static_cast<double>(count);
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < count; ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= n;
    mb /= n;
    double va = 0.0, vb = 0.0, cab = 0.0;
    for (std::size_t i = 0; i < count; ++i) {
        va += (a[i] - ma) * (a[i] - ma);
        vb += (b[i] - mb) * (b[i] - mb);
        cab += (a[i] - ma) * (b[i] - mb);
    }
    return ssim_index(ma, mb, va / n, vb / n, cab / n);
}

// Separable valid filtering of the five moment images.
double ssim_channel(const double* a, const double* b, std::size_t h, std::size_t w) {
    if (h < kWindow || w < kWindow) {
        return ssim_global(a, b, h * w);
    }
    static const auto g = gaussian_taps();
    const std::size_t ow = w - kWindow + 1;
    const std::size_t oh = h - kWindow + 1;
    // horizontal pass: 5 moments, h x ow
    std::vector<double> hz(5 * h * ow, 0.0);
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < ow; ++x) {
            double s[5] = {0, 0, 0, 0, 0};
            for (std::size_t k = 0; k < kWindow; ++k) {
                const double va = a[y * w + x + k];
                const double vb = b[y * w + x + k];
                s[0] += g[k] * va;
                s[1] += g[k] * vb;
                s[2] += g[k] * va * va;
                s[3] += g[k] * vb * vb;
                s[4] += g[k] * va * vb;
            }
            for (int q = 0; q < 5; ++q) {
                hz[(q * h + y) * ow + x] = s[q];
            }
        }
    }
    double total = 0.0;
    for (std::size_t y = 0; y < oh; ++y) {
        for (std::size_t x = 0; x < ow; ++x) {
            double s[5] = {0, 0, 0, 0, 0};
            for (std::size_t k = 0; k < kWindow; ++k) {
                for (int q = 0; q < 5; ++q) {
                    s[q] += g[k] * hz[(q * h + y + k) * ow + x];
                }
            }
            const double var_a = s[2] - s[0] * s[0];
            const double var_b = s[3] - s[1] * s[1];
            const double cov = s[4] - s[0] * s[1];
            total += ssim_index(s[0], s[1], var_a, var_b, cov);
        }
    }
    return total / static_cast<double>(oh * ow);
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
    std::uint64_t z = seed ^ (a * 0x9E3779B97F4A7C15ULL) ^ (b * 0xC2B2AE3D27D4EB4FULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

} // namespace

double ssim(const Frame& a, const Frame& b) {
    if (a.channels != b.channels || a.height != b.height || a.width != b.width) {
        throw DimensionError("ssim: image dimensions differ");
    }
    if (a.pixels.empty()) {
        throw DimensionError("ssim: empty image");
    }
    const std::size_t plane = a.height * a.width;
    double total = 0.0;
    for (std::size_t c = 0; c < a.channels; ++c) {
        total += ssim_channel(a.pixels.data() + c * plane, b.pixels.data() + c * plane, a.height,
                              a.width);
    }
    return total / static_cast<double>(a.channels);
}

SaliencyFunction head_saliency(const ConvHead& head) {
    return [head](const Frame& frame) {
        const ConvOutput out = conv_forward(head, frame, true);
        return visual_backprop(out.maps, frame.height, frame.width);
    };
}

std::vector<SsimSamples> ssim_robustness(const SaliencyFunction& saliency,
                                         std::span<const Frame> frames,
                                         std::span<const double> variances, std::uint64_t seed,
                                         std::size_t threads) {
    std::vector<SsimSamples> out(variances.size());
    for (std::size_t v = 0; v < variances.size(); ++v) {
        out[v].variance = variances[v];
        out[v].values.assign(frames.size(), 0.0);
    }
    auto work = [&](std::size_t f) {
        const SaliencyMap clean = saliency(frames[f]);
        for (std::size_t v = 0; v < variances.size(); ++v) {
            const Frame noisy = add_gaussian_noise(frames[f], variances[v], mix_seed(seed, f, v));
            out[v].values[f] = ssim(clean, saliency(noisy));
        }
    };
    threads = std::max<std::size_t>(1, std::min(threads, frames.size()));
    if (threads == 1) {
        for (std::size_t f = 0; f < frames.size(); ++f) {
            work(f);
        }
        return out;
    }
    std::vector<std::exception_ptr> errors(threads);
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < threads; ++w) {
        pool.emplace_back([&, w] {
            try {
                for (std::size_t f = w; f < frames.size(); f += threads) {
                    work(f);
                }
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) {
        t.join();
    }
    for (auto& e : errors) {
        if (e) {
            std::rethrow_exception(e);
        }
    }
    return out;
}

namespace {

nlohmann::json summary_json(const Summary& s) {
    return {{"mean", s.mean}, {"std", s.std},       {"median", s.median}, {"q1", s.q1},
            {"q3", s.q3},     {"min", s.min},       {"max", s.max}};
}

} // namespace

nlohmann::json report_to_json(const MetricsReport& report) {
    nlohmann::json doc;
    doc["format_version"] = 1;
    doc["config_hash"] = report.config_hash;
    doc["seeds"] = report.seeds;
    doc["entries"] = nlohmann::json::array();
    for (const ModelMetrics& e : report.entries) {
        nlohmann::json j;
        j["model"] = e.model;
        j["season"] = std::string(to_string(e.season));
        j["val_mse"] = e.val_mse;
        j["val_weighted"] = e.val_weighted;
        j["best_epoch"] = e.best_epoch;
        j["completion"] = e.completion;
        j["crashed"] = e.crashed;
        nlohmann::json corr;
        corr["reference"] = std::string(to_string(e.correlation.reference));
        corr["values"] = e.correlation.values;
        corr["degenerate"] = e.correlation.degenerate;
        corr["neuron_means"] = e.correlation.neuron_means();
        corr["mean"] = e.correlation.mean;
        corr["std"] = e.correlation.std;
        j["correlation"] = std::move(corr);
        j["ssim"] = nlohmann::json::array();
        for (const SsimSamples& s : e.ssim) {
            nlohmann::json sj{{"variance", s.variance}, {"values", s.values}};
            if (!s.values.empty()) {
                sj["summary"] = summary_json(summarize(s.values));
            }
            j["ssim"].push_back(std::move(sj));
        }
        doc["entries"].push_back(std::move(j));
    }
    return doc;
}

MetricsReport report_from_json(const nlohmann::json& doc) {
    try {
        MetricsReport report;
        report.config_hash = doc.at("config_hash").get<std::string>();
        report.seeds = doc.at("seeds").get<std::vector<std::uint64_t>>();
        for (const auto& j : doc.at("entries")) {
            ModelMetrics e;
            e.model = j.at("model").get<std::string>();
            e.season = parse_season(j.at("season").get<std::string>());
            e.val_mse = j.at("val_mse").get<double>();
            e.val_weighted = j.at("val_weighted").get<double>();
            e.best_epoch = j.at("best_epoch").get<std::size_t>();
            e.completion = j.at("completion").get<std::vector<double>>();
            e.crashed = j.at("crashed").get<std::vector<bool>>();
            const auto& corr = j.at("correlation");
            e.correlation.reference =
                parse_correlation_reference(corr.at("reference").get<std::string>());
            e.correlation.values = corr.at("values").get<std::vector<std::vector<double>>>();
            e.correlation.degenerate = corr.at("degenerate").get<std::vector<std::vector<bool>>>();
            e.correlation.mean = corr.at("mean").get<double>();
            e.correlation.std = corr.at("std").get<double>();
            for (const auto& sj : j.at("ssim")) {
                e.ssim.push_back(
                    {sj.at("variance").get<double>(), sj.at("values").get<std::vector<double>>()});
            }
            report.entries.push_back(std::move(e));
        }
        return report;
    } catch (const nlohmann::json::exception& ex) {
        throw IoError(std::string("malformed metrics report: ") + ex.what());
    }
}

namespace {

bool close(double a, double b) { return std::abs(a - b) <= 1e-12 * std::max(1.0, std::abs(b)); }

} // namespace

std::vector<std::string> check_report_integrity(const nlohmann::json& doc) {
    std::vector<std::string> problems;
    const MetricsReport report = report_from_json(doc);
    for (std::size_t k = 0; k < report.entries.size(); ++k) {
        const ModelMetrics& e = report.entries[k];
        const nlohmann::json& j = doc.at("entries").at(k);
        const std::string where = e.model + "/" + std::string(to_string(e.season));
        for (const auto& run : e.correlation.values) {
            for (double v : run) {
                if (!(v >= 0.0 && v <= 1.0)) {
                    problems.push_back(where + ": correlation outside [0,1]");
                }
            }
        }
        double mean = 0.0, std = 0.0;
        mean_std(e.correlation.values, mean, std);
        if (!close(e.correlation.mean, mean) || !close(e.correlation.std, std)) {
            problems.push_back(where + ": correlation mean/std do not match samples");
        }
        const auto stored_means = j.at("correlation").at("neuron_means").get<std::vector<double>>();
        const auto means = e.correlation.neuron_means();
        if (stored_means.size() != means.size()) {
            problems.push_back(where + ": neuron_means has the wrong length");
        } else {
            for (std::size_t i = 0; i < means.size(); ++i) {
                if (!close(stored_means[i], means[i])) {
                    problems.push_back(where + ": neuron_means[" + std::to_string(i) + "] mismatch");
                }
            }
        }
        for (std::size_t v = 0; v < e.ssim.size(); ++v) {
            const SsimSamples& s = e.ssim[v];
            for (double x : s.values) {
                if (!(x >= -1.0 && x <= 1.0)) {
                    problems.push_back(where + ": SSIM outside [-1,1]");
                }
            }
            if (s.values.empty()) {
                continue;
            }
            const Summary sum = summarize(s.values);
            const auto& stored = j.at("ssim").at(v).at("summary");
            const double fields[] = {sum.mean, sum.std, sum.median, sum.q1, sum.q3, sum.min, sum.max};
            const char* names[] = {"mean", "std", "median", "q1", "q3", "min", "max"};
            for (std::size_t f = 0; f < 7; ++f) {
                if (!close(stored.at(names[f]).get<double>(), fields[f])) {
                    problems.push_back(where + ": SSIM " + names[f] + " at variance " +
                                       std::to_string(s.variance) + " mismatch");
                }
            }
        }
    }
    return problems;
}

std::string ssim_to_csv(const MetricsReport& report) {
    std::string out = "model,season,variance,frame_index,ssim\n";
    for (const ModelMetrics& e : report.entries) {
        for (const SsimSamples& s : e.ssim) {
            for (std::size_t f = 0; f < s.values.size(); ++f) {
                out += e.model;
                out += ',';
                out += to_string(e.season);
                out += ',';
                detail::append_double(out, s.variance);
                out += ',' + std::to_string(f) + ',';
                detail::append_double(out, s.values[f]);
                out += '\n';
            }
        }
    }
    return out;
}

} // namespace liquid
