#include "liquid/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>
#include <string>

#include "liquid/errors.hpp"

namespace liquid {

std::string_view to_string(Season season) {
    return season == Season::Summer ? "summer" : "winter";
}

Season parse_season(std::string_view name) {
    if (name == "summer") {
        return Season::Summer;
    }
    if (name == "winter") {
        return Season::Winter;
    }
    throw ConfigError("unknown season '" + std::string(name) + "'");
}

double RoadProfile::length() const {
    return curvature.empty() ? 0.0 : spacing * static_cast<double>(curvature.size() - 1);
}

double RoadProfile::curvature_at(double s) const {
    if (curvature.empty()) {
        return 0.0;
    }
    const double u = s / spacing;
    if (u <= 0.0) {
        return curvature.front();
    }
    const auto last = curvature.size() - 1;
    if (u >= static_cast<double>(last)) {
        return curvature.back();
    }
    const auto k = static_cast<std::size_t>(u);
    const double frac = u - static_cast<double>(k);
    return curvature[k] + frac * (curvature[k + 1] - curvature[k]);
}

double RoadProfile::heading_at(double s) const {
    // heading[k] is the direction of the polyline segment k -> k+1
    if (heading.empty()) {
        return 0.0;
    }
    const double u = std::max(0.0, s / spacing);
    const auto k = std::min(static_cast<std::size_t>(u), heading.size() - 1);
    return heading[k];
}

void RoadProfile::position_at(double s, double& px, double& py) const {
    if (x.empty()) {
        px = s;
        py = 0.0;
        return;
    }
    const double u = s / spacing;
    if (u <= 0.0) {
        px = x.front() + s * std::cos(heading.front());
        py = y.front() + s * std::sin(heading.front());
        return;
    }
    const auto last = x.size() - 1;
    if (u >= static_cast<double>(last)) {
        const double extra = s - spacing * static_cast<double>(last);
        px = x.back() + extra * std::cos(heading.back());
        py = y.back() + extra * std::sin(heading.back());
        return;
    }
    const auto k = static_cast<std::size_t>(u);
    const double frac = u - static_cast<double>(k);
    px = x[k] + frac * (x[k + 1] - x[k]);
    py = y[k] + frac * (y[k + 1] - y[k]);
}

void reconstruct_centerline(RoadProfile& road, double extension) {
    const std::size_t samples = road.curvature.size();
    const auto extra = static_cast<std::size_t>(std::ceil(extension / road.spacing));
    const std::size_t total = samples + extra;
    road.x.assign(total, 0.0);
    road.y.assign(total, 0.0);
    road.heading.assign(total, 0.0);
    double phi = 0.0;
    for (std::size_t k = 0; k < total; ++k) {
        const double kappa = k < samples ? road.curvature[k] : road.curvature.back();
        // turn by kappa * ds at vertex k, then travel along segment k
        phi += kappa * road.spacing;
        road.heading[k] = phi;
        if (k + 1 < total) {
            road.x[k + 1] = road.x[k] + road.spacing * std::cos(phi);
            road.y[k + 1] = road.y[k] + road.spacing * std::sin(phi);
        }
    }
}

RoadProfile generate_road(std::uint64_t seed, const RoadOptions& options, Season season) {
    if (!(options.length >= 10.0)) {
        throw ConfigError("road length must be at least 10 m");
    }
    if (!(options.kappa_max > 0.0) || !(options.max_curvature_step > 0.0)) {
        throw ConfigError("kappa_max and max_curvature_step must be positive");
    }
    if (!(options.smoothness > 0.0)) {
        throw ConfigError("smoothness must be positive");
    }
    RoadProfile road;
    road.season = season;
    road.seed = seed;
    const auto samples = static_cast<std::size_t>(std::floor(options.length / road.spacing)) + 1;
    road.curvature.assign(samples, 0.0);
    if (std::isinf(options.smoothness)) {
        reconstruct_centerline(road);
        return road;
    }

    const double kmax = options.kappa_max;
    const double clip = options.clip_fraction * kmax;
    // Overlapping bumps may not be steeper than one full-height bump of the
    // narrowest width; this bounds the expert's preview tracking error.
    const double slope_limit =
        std::min(options.max_curvature_step, kmax * std::numbers::pi / options.smoothness);
    const double min_turn = 0.5 * kmax;
    // The narrowest admissible bump must reach min_turn within the slope
    // limit, and a left and a right bump must fit side by side.
    if (min_turn * std::numbers::pi / options.smoothness > options.max_curvature_step) {
        throw ConfigError("infeasible road: smoothness too small for kappa_max under the "
                          "curvature-step limit");
    }
    if (2.0 * options.smoothness > options.length) {
        throw ConfigError("infeasible road: smoothness too large for the road length");
    }

    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> count_dist(8, 20);
    std::uniform_real_distribution<double> center_dist(0.0, options.length);
    std::uniform_real_distribution<double> width_dist(options.smoothness, 2.0 * options.smoothness);
    std::uniform_real_distribution<double> amp_dist(0.5, 1.0);
    std::bernoulli_distribution sign_dist(0.5);

    for (int attempt = 0; attempt < 1000; ++attempt) {
        std::fill(road.curvature.begin(), road.curvature.end(), 0.0);
        const int bumps = count_dist(rng);
        for (int b = 0; b < bumps; ++b) {
            const double center = center_dist(rng);
            const double width = width_dist(rng);
            // keep each bump's peak slope inside the limit
            const double amp_cap = options.max_curvature_step * width / std::numbers::pi;
            const double amp = std::min(amp_dist(rng) * kmax, amp_cap) * (sign_dist(rng) ? 1.0 : -1.0);
            const auto lo = static_cast<long>(std::ceil((center - width / 2) / road.spacing));
            const auto hi = static_cast<long>(std::floor((center + width / 2) / road.spacing));
            for (long k = std::max(0L, lo); k <= hi && k < static_cast<long>(samples); ++k) {
                const double s = static_cast<double>(k) * road.spacing;
                road.curvature[static_cast<std::size_t>(k)] +=
                    amp * 0.5 * (1.0 + std::cos(2.0 * std::numbers::pi * (s - center) / width));
            }
        }
        double max_step = 0.0;
        double hi_k = 0.0;
        double lo_k = 0.0;
        for (std::size_t k = 0; k < samples; ++k) {
            road.curvature[k] = std::clamp(road.curvature[k], -clip, clip);
            hi_k = std::max(hi_k, road.curvature[k]);
            lo_k = std::min(lo_k, road.curvature[k]);
            if (k > 0) {
                max_step = std::max(max_step, std::abs(road.curvature[k] - road.curvature[k - 1]));
            }
        }
        if (max_step <= slope_limit && hi_k >= min_turn && lo_k <= -min_turn) {
            reconstruct_centerline(road);
            return road;
        }
    }
    throw ConfigError("infeasible road: no valid curvature profile found for seed " +
                      std::to_string(seed));
}

VehicleStep vehicle_step(const VehicleState& state, double steering, const RoadProfile& road,
                         double dt) {
    const double u = std::clamp(steering, -1.0, 1.0);
    VehicleStep out;
    out.state = state;
    out.state.s += state.v * std::cos(state.psi) * dt;
    out.state.d += state.v * std::sin(state.psi) * dt;
    out.state.psi += (u * kMaxYawRate - road.curvature_at(state.s) * state.v) * dt;
    out.terminal = out.state.s >= road.length();
    return out;
}

double row_lookahead(const CameraConfig& camera, std::size_t row) {
    if (camera.height < 2) {
        return camera.near;
    }
    const double frac = static_cast<double>(camera.height - 1 - row) /
                        static_cast<double>(camera.height - 1);
    return camera.near * std::pow(camera.far / camera.near, frac);
}

double centerline_offset(const RoadProfile& road, const VehicleState& state, double lookahead) {
    double cx, cy;
    road.position_at(state.s, cx, cy);
    const double phi = road.heading_at(state.s);
    const double px = cx - state.d * std::sin(phi);
    const double py = cy + state.d * std::cos(phi);
    const double heading = phi + state.psi;
    double qx, qy;
    road.position_at(state.s + lookahead, qx, qy);
    const double dx = qx - px;
    const double dy = qy - py;
    return -std::sin(heading) * dx + std::cos(heading) * dy;
}

long boundary_column(const CameraConfig& camera, double offset, double lookahead, int side) {
    const double center = static_cast<double>(camera.width / 2);
    return static_cast<long>(center) +
           std::lround(camera.scale * (side * kLaneHalfWidth + offset) / lookahead);
}

Frame render_camera(const RoadProfile& road, const VehicleState& state, Season season,
                    std::uint64_t seed, const CameraConfig& camera) {
    Frame frame(1, camera.height, camera.width);
    const bool summer = season == Season::Summer;
    const double background = summer ? 0.45 : 0.85;
    const double surface = summer ? 0.78 : 0.74;
    const double edge = summer ? 0.08 : 0.5;
    for (std::size_t r = 0; r < camera.height; ++r) {
        const double lookahead = row_lookahead(camera, r);
        const double offset = centerline_offset(road, state, lookahead);
        const long left = boundary_column(camera, offset, lookahead, +1);
        const long right = boundary_column(camera, offset, lookahead, -1);
        for (std::size_t c = 0; c < camera.width; ++c) {
            const auto col = static_cast<long>(c);
            double v = (col > right && col < left) ? surface : background;
            if (std::abs(static_cast<double>(col - left)) <= camera.edge_width ||
                std::abs(static_cast<double>(col - right)) <= camera.edge_width) {
                v = edge;
            }
            frame.at(0, r, c) = v;
        }
    }
    if (!summer) {
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> speckle(0.0, 0.06);
        for (double& v : frame.pixels) {
            v = std::clamp(v + speckle(rng), 0.0, 1.0);
        }
    }
    return frame;
}

double expert_steer(const RoadProfile& road, const VehicleState& state, const ExpertGains& gains) {
    const double feedforward = road.curvature_at(state.s + gains.lookahead) * state.v;
    const double command = (feedforward - gains.k_d * state.d - gains.k_psi * state.psi) / kMaxYawRate;
    return std::clamp(command, -1.0, 1.0);
}

std::uint64_t frame_seed(std::uint64_t road_seed, Season season, std::size_t step) {
    // splitmix64 over the packed identifiers
    std::uint64_t z = road_seed * 0x9E3779B97F4A7C15ULL + (static_cast<std::uint64_t>(step) << 1) +
                      (season == Season::Winter ? 1U : 0U);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

Rollout expert_rollout(const RoadProfile& road, const ExpertRolloutOptions& options) {
    Rollout out;
    out.road_seed = road.seed;
    out.season = road.season;
    std::mt19937_64 rng(options.perturbation_seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    const double tau = options.perturbation_time_constant;
    double perturb = 0.0;
    VehicleState state;
    ExpertGains gains;
    while (out.states.size() < options.max_steps) {
        const double label = expert_steer(road, state, gains);
        double executed = label;
        if (options.perturbation > 0.0) {
            perturb += -perturb / tau * kSimStep +
                       options.perturbation * std::sqrt(2.0 * kSimStep / tau) * normal(rng);
            executed = std::clamp(label + perturb, -1.0, 1.0);
        }
        out.states.push_back(state);
        out.expert.push_back(label);
        out.executed.push_back(executed);
        out.kappa_ahead.push_back(road.curvature_at(state.s + gains.lookahead));
        const VehicleStep next = vehicle_step(state, executed, road);
        state = next.state;
        if (!state.in_lane()) {
            out.crashed = true;
            break;
        }
        if (next.terminal) {
            break;
        }
    }
    return out;
}

std::size_t count_windows(std::size_t steps, std::size_t window, std::size_t stride) {
    if (window == 0 || stride == 0 || steps < window) {
        return 0;
    }
    return (steps - window) / stride + 1;
}

std::vector<WindowRef> make_windows(std::size_t rollout, std::size_t begin, std::size_t end,
                                    std::size_t window, std::size_t stride) {
    std::vector<WindowRef> out;
    if (end <= begin) {
        return out;
    }
    const std::size_t count = count_windows(end - begin, window, stride);
    for (std::size_t w = 0; w < count; ++w) {
        out.push_back({rollout, begin + w * stride, window});
    }
    return out;
}

DatasetSplits build_dataset(const std::vector<Rollout>& rollouts, std::size_t window,
                            std::size_t stride, SplitFractions fractions) {
    if (window == 0 || stride == 0) {
        throw ConfigError("window and stride must be positive");
    }
    if (!(fractions.train > 0.0 && fractions.validation > 0.0 &&
          fractions.train + fractions.validation < 1.0)) {
        throw ConfigError("split fractions must be positive and leave room for a test split");
    }
    DatasetSplits splits;
    for (std::size_t r = 0; r < rollouts.size(); ++r) {
        const std::size_t n = rollouts[r].size();
        if (n < window) {
            throw DimensionError("rollout " + std::to_string(r) + " has " + std::to_string(n) +
                                 " steps, shorter than one window of " + std::to_string(window));
        }
        const auto train_end = static_cast<std::size_t>(std::floor(fractions.train * static_cast<double>(n)));
        const auto val_end = static_cast<std::size_t>(
            std::floor((fractions.train + fractions.validation) * static_cast<double>(n)));
        auto append = [](std::vector<WindowRef>& dst, std::vector<WindowRef> src) {
            dst.insert(dst.end(), src.begin(), src.end());
        };
        append(splits.train, make_windows(r, 0, train_end, window, stride));
        append(splits.validation, make_windows(r, train_end, val_end, window, stride));
        append(splits.test, make_windows(r, val_end, n, window, stride));
    }
    if (splits.train.empty() || splits.validation.empty()) {
        throw DimensionError("roads too short: no training or validation windows");
    }
    return splits;
}

double EpisodeTrace::completion() const {
    if (steps.empty() || road_length <= 0.0) {
        return 0.0;
    }
    if (completed) {
        return 1.0;
    }
    return std::clamp(steps.back().state.s / road_length, 0.0, 1.0);
}

EpisodeTrace rollout_closed_loop(ClosedLoopPolicy& policy, const RoadProfile& road,
                                 const ClosedLoopOptions& options) {
    EpisodeTrace trace;
    trace.road_seed = road.seed;
    trace.season = road.season;
    trace.noise_variance = options.noise_variance;
    trace.road_length = road.length();
    policy.reset();
    VehicleState state;
    const ExpertGains gains;
    for (std::size_t t = 0; t < options.max_steps; ++t) {
        Frame frame = render_camera(road, state, road.season,
                                    frame_seed(road.seed, road.season, t), options.camera);
        if (options.noise_variance > 0.0) {
            frame = add_gaussian_noise(frame, options.noise_variance,
                                       frame_seed(options.seed, road.season, t));
        }
        PolicyOutput out = policy.act(frame, road, state);
        TraceStep rec;
        rec.state = state;
        rec.prediction = out.steering;
        rec.expert = expert_steer(road, state, gains);
        rec.kappa_ahead = road.curvature_at(state.s + gains.lookahead);
        rec.features = std::move(out.features);
        rec.hidden = std::move(out.hidden);
        trace.steps.push_back(std::move(rec));
        if (options.keep_frames) {
            trace.frames.push_back(std::move(frame));
        }
        const VehicleStep next = vehicle_step(state, out.steering, road);
        state = next.state;
        if (!state.in_lane()) {
            trace.crashed = true;
            break;
        }
        if (next.terminal) {
            trace.completed = true;
            break;
        }
    }
    return trace;
}

std::string trace_to_csv(const EpisodeTrace& trace) {
    std::ostringstream out;
    out.precision(17);
    const std::size_t m = trace.steps.empty() ? 0 : trace.steps.front().hidden.size();
    out << "t,s,d,psi,pred,expert,kappa";
    for (std::size_t i = 0; i < m; ++i) {
        out << ",h_" << i;
    }
    out << '\n';
    for (std::size_t t = 0; t < trace.steps.size(); ++t) {
        const TraceStep& st = trace.steps[t];
        out << t << ',' << st.state.s << ',' << st.state.d << ',' << st.state.psi << ','
            << st.prediction << ',' << st.expert << ',' << st.kappa_ahead;
        for (double h : st.hidden) {
            out << ',' << h;
        }
        out << '\n';
    }
    return out.str();
}

} // namespace liquid
