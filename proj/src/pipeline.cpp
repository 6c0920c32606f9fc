#include "liquid/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <numeric>
#include <sstream>

#include "json_writer.hpp"
#include "liquid/cell_io.hpp"
#include "liquid/errors.hpp"
#include "liquid/image_io.hpp"

namespace liquid {

namespace fs = std::filesystem;

namespace {

std::uint64_t mix(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
    std::uint64_t z = a + 0x9E3779B97F4A7C15ULL * (b + 1) + 0xD6E8FEB86659FD93ULL * (c + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

std::string rollout_name(const Rollout& r) {
    return "road" + std::to_string(r.road_seed) + "_" + std::string(to_string(r.season));
}

std::string road_csv(const RoadProfile& road) {
    std::string out = "k,s,kappa\n";
    for (std::size_t k = 0; k < road.curvature.size(); ++k) {
        out += std::to_string(k) + ',';
        detail::append_double(out, static_cast<double>(k) * road.spacing);
        out += ',';
        detail::append_double(out, road.curvature[k]);
        out += '\n';
    }
    return out;
}

std::string rollout_csv(const Rollout& r) {
    std::string out = "t,s,d,psi,v,expert,executed,kappa\n";
    for (std::size_t t = 0; t < r.size(); ++t) {
        const VehicleState& st = r.states[t];
        out += std::to_string(t);
        for (double v : {st.s, st.d, st.psi, st.v, r.expert[t], r.executed[t], r.kappa_ahead[t]}) {
            out += ',';
            detail::append_double(out, v);
        }
        out += '\n';
    }
    return out;
}

std::vector<std::vector<double>> parse_csv(const std::string& text, std::size_t columns,
                                           const std::string& what) {
    std::vector<std::vector<double>> rows;
    std::istringstream in(text);
    std::string line;
    std::getline(in, line); // header
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        std::vector<double> row;
        const char* p = line.c_str();
        while (*p != '\0') {
            char* end = nullptr;
            row.push_back(std::strtod(p, &end));
            if (end == p) {
                throw IoError(what + ": malformed number in '" + line + "'");
            }
            p = end;
            if (*p == ',') {
                ++p;
            }
        }
        if (row.size() != columns) {
            throw IoError(what + ": expected " + std::to_string(columns) + " columns");
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

std::string windows_csv(const DatasetSplits& splits) {
    std::string out = "split,rollout,start,length\n";
    auto emit = [&](const char* name, const std::vector<WindowRef>& ws) {
        for (const WindowRef& w : ws) {
            out += std::string(name) + ',' + std::to_string(w.rollout) + ',' +
                   std::to_string(w.start) + ',' + std::to_string(w.length) + '\n';
        }
    };
    emit("train", splits.train);
    emit("validation", splits.validation);
    emit("test", splits.test);
    return out;
}

std::string timestamp() {
    const std::time_t now = std::time(nullptr);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    return buf;
}

} // namespace

Dataset make_dataset(const ExperimentConfig& config) {
    Dataset ds;
    ds.config = config;
    for (std::uint64_t seed : config.train_road_seeds) {
        for (Season season : config.seasons) {
            RoadProfile road = generate_road(seed, config.road, season);
            ExpertRolloutOptions opts;
            opts.perturbation = config.perturbation;
            opts.perturbation_time_constant = config.perturbation_time_constant;
            opts.perturbation_seed = mix(config.training.seed, seed, static_cast<std::uint64_t>(season));
            ds.rollouts.push_back(expert_rollout(road, opts));
            ds.roads.push_back(std::move(road));
        }
    }
    ds.splits = build_dataset(ds.rollouts, config.training.sequence_length, config.stride);
    return ds;
}

nlohmann::json write_dataset(const Dataset& ds, const fs::path& dir) {
    nlohmann::json files = nlohmann::json::object();
    auto put = [&](const std::string& rel, const std::string& contents) {
        write_text_file(dir / rel, contents);
        files[rel] = sha256_hex(contents);
    };
    nlohmann::json rollouts = nlohmann::json::array();
    for (std::size_t r = 0; r < ds.rollouts.size(); ++r) {
        const Rollout& ro = ds.rollouts[r];
        const std::string name = rollout_name(ro);
        put("roads/" + name + ".csv", road_csv(ds.roads[r]));
        put("rollouts/" + name + ".csv", rollout_csv(ro));
        rollouts.push_back({{"name", name},
                            {"road_seed", ro.road_seed},
                            {"season", std::string(to_string(ro.season))},
                            {"steps", ro.size()},
                            {"crashed", ro.crashed}});
    }
    put("windows.csv", windows_csv(ds.splits));

    const std::size_t window = ds.config.training.sequence_length;
    std::size_t expected_total = 0;
    for (const Rollout& ro : ds.rollouts) {
        const std::size_t n = ro.size();
        const auto a = static_cast<std::size_t>(std::floor(0.70 * static_cast<double>(n)));
        const auto b = static_cast<std::size_t>(std::floor(0.85 * static_cast<double>(n)));
        expected_total += count_windows(a, window, ds.config.stride) +
                          count_windows(b - a, window, ds.config.stride) +
                          count_windows(n - b, window, ds.config.stride);
    }
    nlohmann::json manifest;
    manifest["format_version"] = 1;
    manifest["config"] = config_to_json(ds.config);
    manifest["config_hash"] = config_hash(ds.config);
    manifest["rollouts"] = rollouts;
    manifest["windows"] = {{"train", ds.splits.train.size()},
                           {"validation", ds.splits.validation.size()},
                           {"test", ds.splits.test.size()},
                           {"total", expected_total}};
    manifest["files"] = files;
    manifest["generated_at"] = timestamp();
    write_text_file(dir / "manifest.json", manifest.dump(2) + "\n");
    return manifest;
}

Dataset read_dataset(const fs::path& dir) {
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(read_text_file(dir / "manifest.json"));
    } catch (const nlohmann::json::parse_error& e) {
        throw IoError("manifest.json: " + std::string(e.what()));
    }
    Dataset ds;
    ds.config = config_from_json(manifest.at("config"));
    for (const auto& [rel, digest] : manifest.at("files").items()) {
        const std::string text = read_text_file(dir / rel);
        if (sha256_hex(text) != digest.get<std::string>()) {
            throw IoError("checksum mismatch for " + rel);
        }
    }
    for (const auto& entry : manifest.at("rollouts")) {
        const std::string name = entry.at("name").get<std::string>();
        RoadProfile road;
        road.seed = entry.at("road_seed").get<std::uint64_t>();
        road.season = parse_season(entry.at("season").get<std::string>());
        for (const auto& row : parse_csv(read_text_file(dir / "roads" / (name + ".csv")), 3, name)) {
            road.curvature.push_back(row[2]);
        }
        reconstruct_centerline(road);
        Rollout ro;
        ro.road_seed = road.seed;
        ro.season = road.season;
        ro.crashed = entry.at("crashed").get<bool>();
        for (const auto& row :
             parse_csv(read_text_file(dir / "rollouts" / (name + ".csv")), 8, name)) {
            ro.states.push_back({row[1], row[2], row[3], row[4]});
            ro.expert.push_back(row[5]);
            ro.executed.push_back(row[6]);
            ro.kappa_ahead.push_back(row[7]);
        }
        ds.roads.push_back(std::move(road));
        ds.rollouts.push_back(std::move(ro));
    }
    ds.splits = build_dataset(ds.rollouts, ds.config.training.sequence_length, ds.config.stride);
    return ds;
}

FrameStore render_frames(const Dataset& ds, const CameraConfig& camera) {
    FrameStore store;
    for (std::size_t r = 0; r < ds.rollouts.size(); ++r) {
        const Rollout& ro = ds.rollouts[r];
        std::vector<Frame> frames;
        frames.reserve(ro.size());
        for (std::size_t t = 0; t < ro.size(); ++t) {
            frames.push_back(render_camera(ds.roads[r], ro.states[t], ro.season,
                                           frame_seed(ro.road_seed, ro.season, t), camera));
        }
        store.frames.push_back(std::move(frames));
    }
    return store;
}

TrainingData training_views(const Dataset& ds, const FrameStore& frames) {
    auto views = [&](const std::vector<WindowRef>& windows) {
        std::vector<SequenceView> out;
        for (const WindowRef& w : windows) {
            SequenceView v;
            v.frames = std::span<const Frame>(frames.frames[w.rollout]).subspan(w.start, w.length);
            v.targets = std::span<const double>(ds.rollouts[w.rollout].expert).subspan(w.start, w.length);
            out.push_back(v);
        }
        return out;
    };
    return {views(ds.splits.train), views(ds.splits.validation)};
}

double constant_baseline_mse(const Dataset& ds) {
    double sum = 0.0;
    std::size_t count = 0;
    for (const WindowRef& w : ds.splits.train) {
        for (std::size_t t = 0; t < w.length; ++t) {
            sum += ds.rollouts[w.rollout].expert[w.start + t];
            ++count;
        }
    }
    const double mean = sum / static_cast<double>(count);
    double total = 0.0;
    for (const WindowRef& w : ds.splits.validation) {
        const std::vector<double> pred(w.length, mean);
        total += mse_loss(pred, std::span<const double>(ds.rollouts[w.rollout].expert)
                                    .subspan(w.start, w.length));
    }
    return total / static_cast<double>(ds.splits.validation.size());
}

NeuralPolicy::NeuralPolicy(PolicyModel model)
    : model_(std::move(model)), state_(zero_state(model_.cell)) {}

void NeuralPolicy::reset() { state_ = zero_state(model_.cell); }

PolicyOutput NeuralPolicy::act(const Frame& frame, const RoadProfile&, const VehicleState&) {
    PolicyOutput out;
    if (model_.head) {
        out.features = conv_forward(*model_.head, frame, false).features;
    } else {
        out.features = frame.pixels;
    }
    state_ = advance(model_.cell, state_, out.features);
    double y = model_.readout.bias[0];
    for (std::size_t i = 0; i < state_.h.size(); ++i) {
        y += model_.readout.weight[i] * state_.h[i];
    }
    out.steering = y;
    out.hidden = state_.h;
    return out;
}

PolicyModel initial_policy(const ExperimentConfig& config) {
    std::mt19937_64 rng(config.training.seed);
    ConvHeadConfig head;
    head.features = config.n;
    return init_policy(config.kind, config.m, head, rng, config.dt);
}

TrainOutcome train_policy(const ExperimentConfig& config, const Dataset& ds,
                          const FrameStore& frames, const EpochCallback& on_epoch) {
    const auto start = std::chrono::steady_clock::now();
    TrainOutcome outcome;
    outcome.baseline_val_mse = constant_baseline_mse(ds);
    outcome.result = train(initial_policy(config), training_views(ds, frames), config.training, on_epoch);
    outcome.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return outcome;
}

void write_training_artifacts(const fs::path& dir, const ExperimentConfig& config,
                              const TrainOutcome& outcome) {
    const TrainResult& r = outcome.result;
    write_text_file(dir / "history.csv", history_to_csv(r.history, r.best_epoch));
    write_text_file(dir / "checkpoint.json", policy_to_json(r.best, &r.optimizer));
    nlohmann::json summary;
    summary["kind"] = std::string(to_string(config.kind));
    summary["config_hash"] = config_hash(config);
    summary["best_epoch"] = r.best_epoch;
    summary["best_val_mse"] = r.best_val_mse;
    double weighted = 0.0;
    for (const HistoryRow& row : r.history) {
        if (row.epoch == r.best_epoch) {
            weighted = row.val_weighted;
        }
    }
    summary["best_val_weighted"] = weighted;
    summary["baseline_val_mse"] = outcome.baseline_val_mse;
    summary["epochs_completed"] = r.history.size();
    summary["diverged"] = r.diverged;
    summary["message"] = r.message;
    write_text_file(dir / "summary.json", summary.dump(2) + "\n");
}

EvalOutcome evaluate_policy(const ExperimentConfig& config, const PolicyModel& model,
                            const TrainingSummary& summary, const fs::path* out_dir) {
    EvalOutcome outcome;
    outcome.report.config_hash = config_hash(config);
    outcome.report.seeds = config.eval_road_seeds;
    NeuralPolicy policy(model);
    const std::string name(to_string(model.cell.kind));
    for (Season season : config.seasons) {
        std::vector<EpisodeTrace> traces;
        for (std::uint64_t seed : config.eval_road_seeds) {
            const RoadProfile road = generate_road(seed, config.road, season);
            ClosedLoopOptions opts;
            opts.keep_frames = true;
            opts.seed = mix(config.training.seed, seed, static_cast<std::uint64_t>(season));
            traces.push_back(rollout_closed_loop(policy, road, opts));
            if (out_dir != nullptr) {
                write_text_file(*out_dir / "traces" /
                                    (std::string(to_string(season)) + "_road" +
                                     std::to_string(seed) + ".csv"),
                                trace_to_csv(traces.back()));
            }
        }
        ModelMetrics entry;
        entry.model = name;
        entry.season = season;
        entry.val_mse = summary.val_mse;
        entry.val_weighted = summary.val_weighted;
        entry.best_epoch = summary.best_epoch;
        for (const EpisodeTrace& tr : traces) {
            entry.completion.push_back(tr.completion());
            entry.crashed.push_back(tr.crashed);
        }
        if (!traces.empty()) {
            entry.correlation = correlation_table(traces, config.correlation_reference);
        }

        std::vector<const Frame*> pool;
        for (const EpisodeTrace& tr : traces) {
            for (const Frame& f : tr.frames) {
                pool.push_back(&f);
            }
        }
        const std::size_t count = std::min(config.ssim_frames, pool.size());
        std::vector<Frame> sampled;
        sampled.reserve(count);
        for (std::size_t k = 0; k < count; ++k) {
            sampled.push_back(*pool[k * pool.size() / count]);
        }
        if (!model.head) {
            throw DimensionError("evaluation needs a model with a conv head");
        }
        const SaliencyFunction saliency = head_saliency(*model.head);
        entry.ssim = ssim_robustness(saliency, sampled, config.noise_variances,
                                     mix(config.training.seed, 7, static_cast<std::uint64_t>(season)),
                                     config.training.threads);

        if (out_dir != nullptr) {
            std::string csv = "neuron,mean";
            for (std::size_t r = 0; r < entry.correlation.values.size(); ++r) {
                csv += ",run_" + std::to_string(r);
            }
            csv += '\n';
            const std::vector<double> means = entry.correlation.neuron_means();
            for (std::size_t i = 0; i < means.size(); ++i) {
                csv += std::to_string(i) + ',';
                detail::append_double(csv, means[i]);
                for (const auto& run : entry.correlation.values) {
                    csv += ',';
                    detail::append_double(csv, run[i]);
                }
                csv += '\n';
            }
            write_text_file(*out_dir / ("correlation_" + std::string(to_string(season)) + ".csv"), csv);
            const std::size_t images = std::min(config.saliency_images, sampled.size());
            for (std::size_t k = 0; k < images; ++k) {
                const Frame& f = sampled[k * sampled.size() / images];
                const std::string stem = std::string(to_string(season)) + "_" + std::to_string(k);
                write_pgm(*out_dir / "saliency" / (stem + "_frame.pgm"), f);
                write_pgm(*out_dir / "saliency" / (stem + "_saliency.pgm"), saliency(f));
            }
        }
        outcome.report.entries.push_back(std::move(entry));
        for (EpisodeTrace& tr : traces) {
            tr.frames.clear();
            outcome.traces.push_back(std::move(tr));
        }
    }
    if (out_dir != nullptr) {
        write_text_file(*out_dir / "metrics.json", report_to_json(outcome.report).dump(2) + "\n");
        write_text_file(*out_dir / "ssim.csv", ssim_to_csv(outcome.report));
    }
    return outcome;
}

std::string render_report(std::span<const MetricsReport> reports) {
    std::ostringstream out;
    out << "| model | season | best epoch | val MSE | weighted val | |corr| mean ± std | "
           "completion | SSIM median per variance |\n";
    out << "|---|---|---|---|---|---|---|---|\n";
    char buf[256];
    for (const MetricsReport& report : reports) {
        for (const ModelMetrics& e : report.entries) {
            double completion = 0.0;
            for (double c : e.completion) {
                completion += c;
            }
            if (!e.completion.empty()) {
                completion /= static_cast<double>(e.completion.size());
            }
            std::snprintf(buf, sizeof buf, "| %s | %s | %zu | %.4g | %.4g | %.3f ± %.3f | %.2f | ",
                          e.model.c_str(), std::string(to_string(e.season)).c_str(), e.best_epoch,
                          e.val_mse, e.val_weighted, e.correlation.mean, e.correlation.std,
                          completion);
            out << buf;
            for (std::size_t v = 0; v < e.ssim.size(); ++v) {
                const double med = e.ssim[v].values.empty() ? 0.0 : summarize(e.ssim[v].values).median;
                std::snprintf(buf, sizeof buf, "%sσ²=%g: %.3f", v ? ", " : "", e.ssim[v].variance, med);
                out << buf;
            }
            out << " |\n";
        }
    }
    return out.str();
}

} // namespace liquid
