// liquid: generate data, train, evaluate, check gradients, and summarize.
//
// Exit codes: 0 success, 2 configuration error, 3 numeric failure,
// 4 I/O error, 1 anything else.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "liquid/cell_io.hpp"
#include "liquid/config.hpp"
#include "liquid/errors.hpp"
#include "liquid/pipeline.hpp"

namespace fs = std::filesystem;
using namespace liquid;

namespace {

struct CommonOptions {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> threads;
    std::string out;
    std::vector<std::string> set;
};

void add_common(CLI::App* cmd, CommonOptions& o, bool needs_config) {
    auto* c = cmd->add_option("--config", o.config, "experiment config (JSON)");
    if (needs_config) {
        c->required();
    }
    cmd->add_option("--seed", o.seed, "override the master seed");
    cmd->add_option("--threads", o.threads, "worker threads");
    cmd->add_option("--out", o.out, "output directory");
    cmd->add_option("--set", o.set, "KEY=VALUE config override (repeatable)");
}

ExperimentConfig resolve_config(const CommonOptions& o) {
    std::vector<std::string> overrides = o.set;
    if (o.seed) {
        overrides.push_back("seed=" + std::to_string(*o.seed));
    }
    if (o.threads) {
        overrides.push_back("threads=" + std::to_string(*o.threads));
    }
    return load_config(o.config, overrides);
}

fs::path out_or(const CommonOptions& o, const fs::path& fallback) {
    return o.out.empty() ? fallback : fs::path(o.out);
}

int cmd_generate(const CommonOptions& o) {
    const ExperimentConfig config = resolve_config(o);
    const fs::path dir = out_or(o, fs::path(config.output_dir) / "dataset");
    const Dataset ds = make_dataset(config);
    const auto manifest = write_dataset(ds, dir);
    std::printf("dataset %s: %zu rollouts, windows train %zu / validation %zu / test %zu\n",
                dir.string().c_str(), ds.rollouts.size(), ds.splits.train.size(),
                ds.splits.validation.size(), ds.splits.test.size());
    for (const Rollout& r : ds.rollouts) {
        if (r.crashed) {
            std::printf("warning: expert left the lane on road %llu (%s)\n",
                        static_cast<unsigned long long>(r.road_seed),
                        std::string(to_string(r.season)).c_str());
        }
    }
    return 0;
}

int cmd_train(const CommonOptions& o, const std::string& dataset_dir) {
    const ExperimentConfig config = resolve_config(o);
    const fs::path data = dataset_dir.empty() ? fs::path(config.output_dir) / "dataset"
                                              : fs::path(dataset_dir);
    const fs::path dir =
        out_or(o, fs::path(config.output_dir) / std::string(to_string(config.kind)));
    Dataset ds = read_dataset(data);
    // The dataset defines the roads; the training fields come from this config.
    ds.config = config;
    ds.splits = build_dataset(ds.rollouts, config.training.sequence_length, config.stride);
    const FrameStore frames = render_frames(ds);
    const TrainOutcome outcome = train_policy(config, ds, frames, [](const HistoryRow& row) {
        std::printf("epoch %3zu  train %.6f  val %.6f  weighted %.6f\n", row.epoch, row.train_mse,
                    row.val_mse, row.val_weighted);
        std::fflush(stdout);
    });
    write_training_artifacts(dir, config, outcome);
    const TrainResult& r = outcome.result;
    std::printf("best epoch %zu  val %.6f  constant baseline %.6f  (%.1f s)\n", r.best_epoch,
                r.best_val_mse, outcome.baseline_val_mse, outcome.seconds);
    if (r.diverged) {
        std::fprintf(stderr, "training diverged: %s\n", r.message.c_str());
        return 3;
    }
    return 0;
}

int cmd_eval(const CommonOptions& o, const std::string& checkpoint_path) {
    const ExperimentConfig config = resolve_config(o);
    const fs::path model_dir = fs::path(config.output_dir) / std::string(to_string(config.kind));
    const fs::path checkpoint =
        checkpoint_path.empty() ? model_dir / "checkpoint.json" : fs::path(checkpoint_path);
    const fs::path dir = out_or(o, checkpoint.parent_path() / "eval");
    const PolicyModel model = policy_from_json(read_text_file(checkpoint));
    TrainingSummary summary;
    const fs::path summary_path = checkpoint.parent_path() / "summary.json";
    if (fs::exists(summary_path)) {
        const auto doc = nlohmann::json::parse(read_text_file(summary_path));
        summary.val_mse = doc.at("best_val_mse").get<double>();
        summary.val_weighted = doc.at("best_val_weighted").get<double>();
        summary.best_epoch = doc.at("best_epoch").get<std::size_t>();
    }
    const EvalOutcome outcome = evaluate_policy(config, model, summary, &dir);
    const MetricsReport reports[] = {outcome.report};
    std::cout << render_report(reports);
    return 0;
}

int cmd_gradcheck(const std::string& kind_name, std::size_t instances, std::uint64_t seed,
                  double inject) {
    std::vector<CellKind> kinds;
    if (kind_name == "all") {
        kinds.assign(kAllCellKinds.begin(), kAllCellKinds.end());
    } else {
        kinds.push_back(parse_cell_kind(kind_name));
    }
    bool ok = true;
    for (CellKind kind : kinds) {
        GradcheckOptions opts;
        opts.instances = instances;
        opts.seed = seed;
        opts.inject = inject;
        const auto start = std::chrono::steady_clock::now();
        const GradcheckResult r = gradient_check(kind, opts);
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::printf("%s %s  max relative error %.3e  (%zu instances, %.2f s)\n",
                    r.passed ? "PASS" : "FAIL", std::string(to_string(kind)).c_str(), r.max_error,
                    instances, secs);
        for (std::size_t a = 0; a < r.names.size(); ++a) {
            std::printf("    %-16s %.3e\n", r.names[a].c_str(), r.worst[a]);
        }
        ok = ok && r.passed;
    }
    return ok ? 0 : 3;
}

int cmd_report(const std::vector<std::string>& runs, const std::string& out) {
    std::vector<MetricsReport> reports;
    for (const std::string& run : runs) {
        fs::path path = run;
        if (fs::is_directory(path)) {
            path /= "metrics.json";
        }
        nlohmann::json doc;
        try {
            doc = nlohmann::json::parse(read_text_file(path));
        } catch (const nlohmann::json::parse_error& e) {
            throw IoError(path.string() + ": " + e.what());
        }
        const auto problems = check_report_integrity(doc);
        for (const auto& p : problems) {
            std::fprintf(stderr, "%s: %s\n", path.string().c_str(), p.c_str());
        }
        if (!problems.empty()) {
            throw NumericError(path.string() + ": aggregates do not match stored samples");
        }
        reports.push_back(report_from_json(doc));
    }
    const std::string table = render_report(reports);
    std::cout << table;
    if (!out.empty()) {
        write_text_file(out, table);
    }
    return 0;
}

int run(int argc, char** argv) {
    CLI::App app{"Liquid-resistance liquid-capacitance networks: lane-keeping experiments"};
    app.require_subcommand(1);

    CommonOptions common;

    auto* gen = app.add_subcommand("generate", "collect expert rollouts and write a dataset");
    add_common(gen, common, true);

    std::string dataset_dir;
    auto* tr = app.add_subcommand("train", "train a policy on a dataset");
    add_common(tr, common, true);
    tr->add_option("--dataset", dataset_dir, "dataset directory (default <output_dir>/dataset)");

    std::string checkpoint;
    auto* ev = app.add_subcommand("eval", "closed-loop evaluation and interpretability metrics");
    add_common(ev, common, true);
    ev->add_option("--checkpoint", checkpoint,
                   "checkpoint.json (default <output_dir>/<kind>/checkpoint.json)");

    std::string kind = "all";
    std::size_t instances = 10;
    std::uint64_t gc_seed = 0;
    double inject = 0.0;
    auto* gc = app.add_subcommand("gradcheck", "compare BPTT against finite differences");
    gc->add_option("--kind", kind, "cell kind or 'all'");
    gc->add_option("--instances", instances, "random instances per kind");
    gc->add_option("--seed", gc_seed, "instance seed");
    gc->add_option("--inject", inject, "add a constant to BPTT gradients (negative control)")
        ->group("");

    std::vector<std::string> runs;
    std::string report_out;
    auto* rep = app.add_subcommand("report", "tabulate metrics.json files");
    rep->add_option("runs", runs, "evaluation directories or metrics.json files")->required();
    rep->add_option("--out", report_out, "write the markdown table here");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    if (*gen) {
        return cmd_generate(common);
    }
    if (*tr) {
        return cmd_train(common, dataset_dir);
    }
    if (*ev) {
        return cmd_eval(common, checkpoint);
    }
    if (*gc) {
        return cmd_gradcheck(kind, instances, gc_seed, inject);
    }
    return cmd_report(runs, report_out);
}

} // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const UnsupportedKindError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const DimensionError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const NumericError& e) {
        std::fprintf(stderr, "numeric error: %s\n", e.what());
        return 3;
    } catch (const IoError& e) {
        std::fprintf(stderr, "I/O error: %s\n", e.what());
        return 4;
    } catch (const nlohmann::json::exception& e) {
        std::fprintf(stderr, "I/O error: %s\n", e.what());
        return 4;
    } catch (const std::filesystem::filesystem_error& e) {
        std::fprintf(stderr, "I/O error: %s\n", e.what());
        return 4;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
