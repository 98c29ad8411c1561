#pragma once

#include <optional>
#include <vector>

#include "georef/common.hpp"
#include "georef/lie.hpp"
#include "georef/model_builder.hpp"
#include "georef/registration.hpp"
#include "georef/scan_pipeline.hpp"

namespace georef {

struct PlausibilityParams {
    double w = 0.5;                 // ray/hit mixing weight
    double epsilon = 0.2;           // m, height slack of the hit score
    double theta = 1.0;             // m, endpoint distance gate
    double gamma = 0.6;             // acceptance threshold on s_W
    double tau_kappa = 100.0;       // condition-number ceiling
    double voxel_filter_size = 0.5; // m
};

struct RayScoreResult {
    double c_ray = 0.0;
    double c_hit = 0.0;
    bool origin_below_ground = false;
};

// Ray/hit scores of a single measured ray against the max-height map.
// Traversal walks the cells crossed by the horizontal projection of the
// ray; distances are measured between cell centers, so a measured endpoint
// inside the first obstructing cell scores c_ray == 1 exactly.
RayScoreResult ray_score(const Vec3& origin, const Vec3& endpoint, const HeightMap& hmap,
                         const PlausibilityParams& params);

// Mean of per-scan mean point scores, in [0,1]. `pose` maps the local map
// into the model frame. Throws when no point survives the voxel filter.
double plausibility(const LocalMap& map, const SE3& pose, const GeoModel& model,
                    const PlausibilityParams& params);

struct InitialPoseSource {
    Vec3 gnss_position = Vec3::Zero();  // projected frame
    Vec3 gnss_sigma = Vec3(3.0, 3.0, 3.0);
    bool trust_gnss_altitude = true;
    std::optional<double> magnetometer_yaw;  // rad, projected frame
    double imu_roll = 0.0;
    double imu_pitch = 0.0;
    std::optional<double> ultrasonic_height;  // m above ground
};

// Initial body pose in the model-local frame assembled from GNSS position,
// IMU roll/pitch and magnetometer yaw (0 when absent; enable the yaw grid
// search in that case). Height falls back to height map + ultrasonic when
// the GNSS altitude is not trusted.
SE3 initial_pose(const InitialPoseSource& source, const GeoModel& model);

struct GridSearchParams {
    double radius = 8.0;  // m
    double step = 4.0;    // m
    int yaw_steps = 0;    // 0/1: no yaw search
};

enum class RejectionReason { None, NoConvergence, ConditionNumber, Score };
const char* rejection_reason_name(RejectionReason reason);

struct Hypothesis {
    Vec2 grid_offset = Vec2::Zero();
    double yaw_offset = 0.0;
    RegistrationResult registration;
    double score = -1.0;  // s_W; -1 when not scored
};

struct RefinementOutcome {
    bool accepted = false;
    RejectionReason reason = RejectionReason::NoConvergence;
    int best_index = -1;           // into hypotheses
    SE3 refined_pose;              // model-local frame, valid when best_index >= 0
    double score = -1.0;
    double kappa_fwd = std::numeric_limits<double>::infinity();
    double kappa_bwd = std::numeric_limits<double>::infinity();
    std::vector<Hypothesis> hypotheses;
};

// Grid search over horizontal shifts (and optionally yaw) around `init`;
// each hypothesis is registered and the converged ones are scored. The best
// score wins (ties to the smallest offset); acceptance requires both
// condition numbers below tau_kappa and s_W above gamma, checked in that
// order.
RefinementOutcome grid_refine(const LocalMap& map, const SE3& init, const GeoModel& model,
                              const GridSearchParams& search, const PlausibilityParams& params,
                              const RegistrationParams& registration, int threads = 1);

}  // namespace georef
