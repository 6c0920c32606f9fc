#pragma once

// Procedural lane-keeping environment: curvature-profile roads, a strip
// camera, constant-speed kinematics, a scripted lookahead expert, dataset
// windows for open-loop training and closed-loop rollouts.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "liquid/perception.hpp"

namespace liquid {

enum class Season { Summer, Winter };

std::string_view to_string(Season season);
Season parse_season(std::string_view name);

struct RoadProfile {
    double spacing = 1.0;           // metres between samples
    std::vector<double> curvature;  // 1/m at s_k = k * spacing
    Season season = Season::Summer;
    std::uint64_t seed = 0;
    // Centreline reconstruction (x, y, heading) at the same samples,
    // extended past the end with the final curvature for look-ahead.
    std::vector<double> x, y, heading;

    double length() const;
    /// Linear interpolation; clamped to the end samples.
    double curvature_at(double s) const;
    double heading_at(double s) const;
    /// Centreline position at arc length s (extrapolated past the end).
    void position_at(double s, double& px, double& py) const;
};

struct RoadOptions {
    double length = 1000.0;
    double kappa_max = 0.05;
    /// Characteristic bump width in metres; bump widths are drawn from
    /// [smoothness, 2 * smoothness]. +infinity yields a straight road.
    double smoothness = 120.0;
    /// Largest allowed curvature change between adjacent 1 m samples.
    double max_curvature_step = 0.005;
    /// The summed profile is clipped at clip_fraction * kappa_max. Below 1
    /// it leaves the expert steering headroom, since kappa_max * v = u_max.
    double clip_fraction = 0.8;
};

/// Sum of 8-20 seeded raised-cosine bumps clipped to kappa_max, with at
/// least one left and one right turn of |kappa| >= kappa_max / 2.
RoadProfile generate_road(std::uint64_t seed, const RoadOptions& options,
                          Season season = Season::Summer);

/// Rebuilds the centreline polyline from the curvature samples.
void reconstruct_centerline(RoadProfile& road, double extension = 80.0);

inline constexpr double kLaneHalfWidth = 2.0;
inline constexpr double kMaxYawRate = 0.5; // rad/s at |steering| = 1
inline constexpr double kSimStep = 0.1;    // s

struct VehicleState {
    double s = 0.0;   // arc length
    double d = 0.0;   // lateral offset, positive to the left
    double psi = 0.0; // heading error, positive to the left
    double v = 10.0;  // m/s

    bool in_lane() const { return std::abs(d) < kLaneHalfWidth; }
    friend bool operator==(const VehicleState&, const VehicleState&) = default;
};

struct VehicleStep {
    VehicleState state;
    bool terminal = false; // s reached the end of the road
};

/// s += v cos(psi) dt; d += v sin(psi) dt;
/// psi += (steering * u_max - kappa(s) v) dt, steering clamped to [-1,1].
VehicleStep vehicle_step(const VehicleState& state, double steering, const RoadProfile& road,
                         double dt = kSimStep);

struct CameraConfig {
    std::size_t height = 48;
    std::size_t width = 160;
    double near = 2.0;    // look-ahead of the bottom row (m)
    double far = 50.0;    // look-ahead of the top row (m)
    double scale = 60.0;  // pixels per unit lateral/look-ahead ratio
    double edge_width = 1.5; // boundary half-width in pixels
};

/// Look-ahead distance of image row r (row 0 is the farthest).
double row_lookahead(const CameraConfig& camera, std::size_t row);

/// Lateral position (left positive) of the road centreline at look-ahead L
/// in the vehicle frame.
double centerline_offset(const RoadProfile& road, const VehicleState& state, double lookahead);

/// Column of the left (+1) or right (-1) lane boundary in a row:
/// width/2 + round(scale * (side * W + offset) / L).
long boundary_column(const CameraConfig& camera, double offset, double lookahead, int side);

Frame render_camera(const RoadProfile& road, const VehicleState& state, Season season,
                    std::uint64_t seed, const CameraConfig& camera = {});

struct ExpertGains {
    double lookahead = 8.0;
    double k_d = 0.4;
    double k_psi = 1.5;
};

/// clamp((kappa(s + L0) v - k_d d - k_psi psi) / u_max, -1, 1)
double expert_steer(const RoadProfile& road, const VehicleState& state,
                    const ExpertGains& gains = {});

/// Recorded drive along one road. `executed` is what the vehicle did,
/// `expert` the label; they differ when perturbations are injected.
struct Rollout {
    std::uint64_t road_seed = 0;
    Season season = Season::Summer;
    std::vector<VehicleState> states; // state at which each label was taken
    std::vector<double> expert;
    std::vector<double> executed;
    std::vector<double> kappa_ahead;
    bool crashed = false;

    std::size_t size() const { return states.size(); }
};

struct ExpertRolloutOptions {
    /// Amplitude of a seeded Ornstein-Uhlenbeck perturbation added to the
    /// executed steering (0: clean expert).
    double perturbation = 0.0;
    double perturbation_time_constant = 1.5; // s
    std::uint64_t perturbation_seed = 0;
    std::size_t max_steps = std::numeric_limits<std::size_t>::max();
};

Rollout expert_rollout(const RoadProfile& road, const ExpertRolloutOptions& options = {});

/// Deterministic per-step seed for rendering frame `step` of a road.
std::uint64_t frame_seed(std::uint64_t road_seed, Season season, std::size_t step);

struct WindowRef {
    std::size_t rollout = 0;
    std::size_t start = 0; // first step index
    std::size_t length = 0;
};

struct DatasetSplits {
    std::vector<WindowRef> train;
    std::vector<WindowRef> validation;
    std::vector<WindowRef> test;
};

/// floor((steps - window) / stride) + 1, or 0 if steps < window.
std::size_t count_windows(std::size_t steps, std::size_t window, std::size_t stride);

/// Windows of `window` steps with the given stride, entirely inside [begin, end).
std::vector<WindowRef> make_windows(std::size_t rollout, std::size_t begin, std::size_t end,
                                    std::size_t window, std::size_t stride);

struct SplitFractions {
    double train = 0.70;
    double validation = 0.15;
};

/// Each rollout is cut into contiguous train/validation/test segments and
/// windowed inside each segment, so no window crosses a split boundary.
DatasetSplits build_dataset(const std::vector<Rollout>& rollouts, std::size_t window = 32,
                            std::size_t stride = 16, SplitFractions fractions = {});

struct PolicyOutput {
    double steering = 0.0;
    std::vector<double> features;
    std::vector<double> hidden;
};

/// Anything that can steer from camera frames. The privileged road/state
/// arguments exist for scripted baselines; learned policies ignore them.
class ClosedLoopPolicy {
public:
    virtual ~ClosedLoopPolicy() = default;
    virtual void reset() = 0;
    virtual PolicyOutput act(const Frame& frame, const RoadProfile& road,
                             const VehicleState& state) = 0;
};

class ExpertPolicy final : public ClosedLoopPolicy {
public:
    explicit ExpertPolicy(ExpertGains gains = {}) : gains_(gains) {}
    void reset() override {}
    PolicyOutput act(const Frame&, const RoadProfile& road, const VehicleState& state) override {
        return {expert_steer(road, state, gains_), {}, {}};
    }

private:
    ExpertGains gains_;
};

class ConstantPolicy final : public ClosedLoopPolicy {
public:
    explicit ConstantPolicy(double steering) : steering_(steering) {}
    void reset() override {}
    PolicyOutput act(const Frame&, const RoadProfile&, const VehicleState&) override {
        return {steering_, {}, {}};
    }

private:
    double steering_;
};

struct TraceStep {
    VehicleState state;
    double prediction = 0.0;
    double expert = 0.0;
    double kappa_ahead = 0.0;
    std::vector<double> features;
    std::vector<double> hidden;
};

struct EpisodeTrace {
    std::uint64_t road_seed = 0;
    Season season = Season::Summer;
    double noise_variance = 0.0;
    std::vector<TraceStep> steps;
    std::vector<Frame> frames; // only when requested
    bool crashed = false;
    bool completed = false;
    double road_length = 0.0;

    std::size_t size() const { return steps.size(); }
    /// Fraction of the road length covered before the episode ended.
    double completion() const;
};

struct ClosedLoopOptions {
    double noise_variance = 0.0;
    std::uint64_t seed = 0;
    bool keep_frames = false;
    std::size_t max_steps = std::numeric_limits<std::size_t>::max();
    CameraConfig camera{};
};

/// render -> optional noise -> policy -> vehicle_step until the road ends
/// or |d| >= W. A crash is recorded in the trace, not thrown.
EpisodeTrace rollout_closed_loop(ClosedLoopPolicy& policy, const RoadProfile& road,
                                 const ClosedLoopOptions& options = {});

/// Header t,s,d,psi,pred,expert,kappa,h_0..h_{m-1}.
std::string trace_to_csv(const EpisodeTrace& trace);

} // namespace liquid
