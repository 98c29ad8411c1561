#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "georef/common.hpp"
#include "georef/imu_preint.hpp"
#include "georef/lie.hpp"
#include "georef/registration.hpp"
#include "georef/scan_pipeline.hpp"
#include "georef/spline.hpp"

namespace georef {

enum class EdgeKind {
    AbsolutePose,      // Log(T_abs^-1 T_a T_X(t)), 6-dof
    AbsolutePosition,  // T_a p_X(t) - p_abs, 3-dof
    Odometry,          // Log(T_o^-1 T_X(t_k)^-1 T_X(t_s)), 6-dof
    Imu,               // preintegrated 9-dof
    Relative,          // Log(T_rel^-1 T_X(t_0)^-1 T_X(t_1)), 6-dof
    BiasWalk,          // b_1 - b_0, 6-dof
    BiasPrior,         // b - b_prior, 6-dof
    AnchorPrior,       // Log(T_prior^-1 T_a), weak gauge regularization
};

const char* edge_kind_name(EdgeKind kind);

struct GraphEdge {
    EdgeKind kind = EdgeKind::AbsolutePose;
    double t0 = 0.0;          // stamp (absolute) / earlier stamp
    double t1 = 0.0;          // later stamp for two-time edges
    SE3 measurement;          // T_abs / T_o / T_rel / anchor prior
    Vec3 position = Vec3::Zero();   // p_abs
    PreintegratedDelta delta;       // imu
    ImuBias bias_prior;
    int bias0 = -1;
    int bias1 = -1;
    Eigen::MatrixXd covariance;     // symmetric positive definite
    double huber_delta = std::numeric_limits<double>::infinity();

    int residual_dim() const;
};

// Optimization state: spline knots, anchor pose and per-segment biases.
struct PoseGraph {
    SplineTrajectory spline;
    SE3 anchor;
    std::vector<ImuBias> biases;
    Vec3 gravity = Vec3(0.0, 0.0, -9.81);  // expressed in the spline frame
    std::vector<GraphEdge> edges;

    bool fix_spline = false;
    bool fix_anchor = false;
    bool fix_biases = false;
};

// Plain-double residuals (also used by the unit tests and the report).
Vec6 residual_absolute(const GraphEdge& edge, const PoseGraph& graph);
Vec3 residual_position(const GraphEdge& edge, const PoseGraph& graph);
Vec6 residual_odometry(const GraphEdge& edge, const PoseGraph& graph);
Vec6 residual_relative(const GraphEdge& edge, const PoseGraph& graph);
Eigen::VectorXd edge_residual(const GraphEdge& edge, const PoseGraph& graph);

struct OptimizeOptions {
    int max_iterations = 100;
    double cost_decrease_tolerance = 1e-9;   // relative, accepted steps
    double gradient_tolerance = 1e-10;       // inf-norm
    double initial_lambda = 1e-6;
    double max_lambda = 1e12;
    int threads = 1;
};

struct OptimizeReport {
    double initial_cost = 0.0;
    double final_cost = 0.0;
    int iterations = 0;
    int accepted_steps = 0;
    int rejected_steps = 0;
    std::string termination;
    std::map<std::string, double> final_cost_by_kind;

    std::string to_text() const;
};

// Levenberg-Marquardt on the Huber-robustified Mahalanobis objective.
// Jacobians come from forward-mode autodiff over the tangent perturbation of
// each active block; the normal equations are assembled sparsely along the
// spline's banded structure.
OptimizeReport optimize(PoseGraph& graph, const OptimizeOptions& options);

// Closed-form yaw + translation alignment of spline positions onto refined
// positions (2D least squares, vertical from the mean height difference).
SE3 initialize_anchor(const std::vector<std::pair<double, Vec3>>& refined_positions,
                      const SplineTrajectory& spline);

struct LoopClosureParams {
    double spatial_radius = 15.0;       // m between refined positions
    double path_fraction_gate = 0.05;   // of the odometry path length
    RegistrationParams registration;
    Vec6 sigma = (Vec6() << 0.05, 0.05, 0.05, 0.01, 0.01, 0.01).finished();
    double huber_delta = 1.0;
};

struct LoopClosureCandidate {
    int map_a = 0;
    int map_b = 0;
    bool accepted = false;
    std::string reason;
    GraphEdge edge;
};

// Relative-pose edges between time-adjacent maps and spatially neighboring
// refined maps, gated at the given fraction of the along-path distance.
std::vector<LoopClosureCandidate> propose_loop_closures(
    const std::vector<LocalMap>& maps, const std::map<int, SE3>& refined_poses,
    const std::vector<StampedPose>& odometry, const SplineTrajectory& spline,
    const LoopClosureParams& params);

// Line-oriented graph dump (see docs/graph_format.md); full round-trip.
void save_graph(const PoseGraph& graph, const std::string& path);
PoseGraph load_graph(const std::string& path);

}  // namespace georef
