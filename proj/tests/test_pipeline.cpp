#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "liquid/errors.hpp"
#include "liquid/pipeline.hpp"

using namespace liquid;
namespace fs = std::filesystem;

namespace {

ExperimentConfig small_config() {
    ExperimentConfig c;
    c.road.length = 300.0;
    c.train_road_seeds = {0, 1};
    c.seasons = {Season::Summer, Season::Winter};
    return c;
}

fs::path scratch(const char* name) {
    const fs::path dir = fs::temp_directory_path() / "liquid_tests" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

} // namespace

TEST_CASE("datasets round-trip through disk with stable checksums") {
    const ExperimentConfig cfg = small_config();
    const Dataset ds = make_dataset(cfg);
    CHECK(ds.rollouts.size() == 4);
    CHECK(ds.roads.size() == 4);

    const fs::path a = scratch("dataset_a");
    const fs::path b = scratch("dataset_b");
    const nlohmann::json ma = write_dataset(ds, a);
    const nlohmann::json mb = write_dataset(make_dataset(cfg), b);
    CHECK(ma.at("files") == mb.at("files"));
    CHECK(ma.at("config_hash") == config_hash(cfg));

    std::size_t expected_train = 0;
    for (const Rollout& r : ds.rollouts) {
        expected_train += count_windows(static_cast<std::size_t>(0.7 * static_cast<double>(r.size())), 32, 16);
    }
    CHECK(ma.at("windows").at("train") == expected_train);
    CHECK(ma.at("windows").at("total") ==
          ds.splits.train.size() + ds.splits.validation.size() + ds.splits.test.size());

    const Dataset back = read_dataset(a);
    REQUIRE(back.rollouts.size() == ds.rollouts.size());
    for (std::size_t r = 0; r < ds.rollouts.size(); ++r) {
        CHECK(back.rollouts[r].size() == ds.rollouts[r].size());
        CHECK(back.rollouts[r].expert == ds.rollouts[r].expert);
        CHECK(back.rollouts[r].season == ds.rollouts[r].season);
        CHECK(back.roads[r].curvature == ds.roads[r].curvature);
    }
    CHECK(back.splits.train.size() == ds.splits.train.size());

    // a tampered file fails verification
    const fs::path rollout = a / "rollouts" / fs::directory_iterator(a / "rollouts")->path().filename();
    std::ofstream(rollout, std::ios::app) << "0\n";
    CHECK_THROWS_AS(read_dataset(a), IoError);
}

TEST_CASE("frames and training views follow the windows") {
    ExperimentConfig cfg = small_config();
    cfg.train_road_seeds = {0};
    cfg.seasons = {Season::Summer};
    const Dataset ds = make_dataset(cfg);
    const FrameStore frames = render_frames(ds);
    REQUIRE(frames.frames.size() == 1);
    CHECK(frames.frames[0].size() == ds.rollouts[0].size());
    const TrainingData views = training_views(ds, frames);
    CHECK(views.train.size() == ds.splits.train.size());
    CHECK(views.validation.size() == ds.splits.validation.size());
    CHECK(views.train[0].frames.size() == 32);
    CHECK(views.train[0].targets[0] == ds.rollouts[0].expert[ds.splits.train[0].start]);
    CHECK(constant_baseline_mse(ds) > 0.0);
}

TEST_CASE("a fresh policy drives and resets deterministically") {
    ExperimentConfig cfg = small_config();
    cfg.m = 4;
    cfg.n = 8;
    NeuralPolicy policy(initial_policy(cfg));
    const RoadProfile road = generate_road(1000, cfg.road);
    ClosedLoopOptions opts;
    opts.max_steps = 20;
    const EpisodeTrace a = rollout_closed_loop(policy, road, opts);
    const EpisodeTrace b = rollout_closed_loop(policy, road, opts);
    REQUIRE(a.size() == b.size());
    for (std::size_t t = 0; t < a.size(); ++t) {
        CHECK(a.steps[t].prediction == b.steps[t].prediction);
        CHECK(a.steps[t].hidden.size() == 4);
    }
}
