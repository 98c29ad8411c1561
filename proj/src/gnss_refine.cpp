#include "georef/gnss_refine.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "georef/parallel.hpp"
#include "georef/surfel_map.hpp"

namespace georef {

const char* rejection_reason_name(RejectionReason reason) {
    switch (reason) {
        case RejectionReason::None: return "none";
        case RejectionReason::NoConvergence: return "no_convergence";
        case RejectionReason::ConditionNumber: return "condition_number";
        case RejectionReason::Score: return "score";
    }
    return "unknown";
}

RayScoreResult ray_score(const Vec3& origin, const Vec3& endpoint, const HeightMap& hmap,
                         const PlausibilityParams& params) {
    RayScoreResult result;

    std::int64_t oc, orow, ec, erow;
    hmap.cell_of(origin.head<2>(), oc, orow);
    hmap.cell_of(endpoint.head<2>(), ec, erow);

    const float origin_cell_height =
        hmap.in_bounds(oc, orow) ? hmap.value(oc, orow) : std::numeric_limits<float>::quiet_NaN();
    if (!std::isnan(origin_cell_height) && origin_cell_height > origin.z()) {
        result.origin_below_ground = true;
        return result;  // (0, 0), flagged
    }

    if (oc == ec && orow == erow) {
        result.c_ray = 1.0;  // zero-length convention
        return result;
    }

    const Vec2 origin_center = hmap.cell_center(oc, orow);
    const Vec2 endpoint_center = hmap.cell_center(ec, erow);
    const double d_p = (endpoint_center - origin_center).norm();

    // grid walk over all cells crossed by the horizontal ray projection
    const Vec2 start = origin.head<2>();
    const Vec2 dir = (endpoint - origin).head<2>();
    const double dir_norm = dir.norm();
    double d_p_m = std::numeric_limits<double>::infinity();

    std::int64_t cx = oc, cy = orow;
    const int step_x = dir.x() > 0.0 ? 1 : (dir.x() < 0.0 ? -1 : 0);
    const int step_y = dir.y() > 0.0 ? 1 : (dir.y() < 0.0 ? -1 : 0);
    const double inv_dx = step_x != 0 ? 1.0 / std::abs(dir.x()) : 0.0;
    const double inv_dy = step_y != 0 ? 1.0 / std::abs(dir.y()) : 0.0;
    // parametric distance (fraction of the segment) to the next cell border
    auto border_dist = [&](std::int64_t cell, int step, double start_v, double origin_v,
                           double cell_size, double inv_d) {
        if (step == 0) return std::numeric_limits<double>::infinity();
        const double border =
            origin_v + (static_cast<double>(cell) + (step > 0 ? 1.0 : 0.0)) * cell_size;
        return std::abs(border - start_v) * inv_d;
    };
    double t_max_x =
        border_dist(cx, step_x, start.x(), hmap.origin.x(), hmap.cell_size, inv_dx);
    double t_max_y =
        border_dist(cy, step_y, start.y(), hmap.origin.y(), hmap.cell_size, inv_dy);
    const double t_delta_x = step_x != 0 ? hmap.cell_size * inv_dx : 0.0;
    const double t_delta_y = step_y != 0 ? hmap.cell_size * inv_dy : 0.0;

    const int max_steps =
        static_cast<int>(std::abs(ec - oc) + std::abs(erow - orow)) + 4;
    for (int step = 0; step <= max_steps; ++step) {
        // check the current cell
        if (hmap.in_bounds(cx, cy)) {
            const float cell_height = hmap.value(cx, cy);
            if (!std::isnan(cell_height)) {
                const double dc = (hmap.cell_center(cx, cy) - origin_center).norm();
                const double fraction = std::clamp(dc / d_p, 0.0, 1.0);
                const double ray_height = origin.z() + (endpoint.z() - origin.z()) * fraction;
                if (static_cast<double>(cell_height) > ray_height) {
                    d_p_m = dc;
                    break;
                }
            }
        }
        if (cx == ec && cy == erow) break;
        if (t_max_x < t_max_y) {
            cx += step_x;
            t_max_x += t_delta_x;
        } else {
            cy += step_y;
            t_max_y += t_delta_y;
        }
        if (step == max_steps) break;  // safety against degenerate directions
    }
    (void)dir_norm;

    result.c_ray = std::min(d_p_m / d_p, 1.0);

    const float endpoint_cell_height =
        hmap.in_bounds(ec, erow) ? hmap.value(ec, erow) : std::numeric_limits<float>::quiet_NaN();
    const bool obstacle_at_endpoint =
        !std::isnan(endpoint_cell_height) &&
        static_cast<double>(endpoint_cell_height) > endpoint.z() + params.epsilon;
    const bool distance_consistent = std::abs(d_p_m - d_p) < params.theta;
    result.c_hit = (obstacle_at_endpoint && distance_consistent) ? 1.0 : 0.0;
    return result;
}

namespace {

// first point per voxel, scan order
std::vector<Vec3> voxel_filter(const LabeledPointCloud& scan, double voxel_size) {
    std::vector<Vec3> out;
    std::unordered_set<std::uint64_t> seen;
    seen.reserve(scan.points.size());
    for (const auto& p : scan.points) {
        const std::uint64_t key = voxel_key_of(p.position(), voxel_size);
        if (seen.insert(key).second) out.push_back(p.position());
    }
    return out;
}

}  // namespace

double plausibility(const LocalMap& map, const SE3& pose, const GeoModel& model,
                    const PlausibilityParams& params) {
    if (map.scans.empty()) throw std::runtime_error("plausibility: empty local map");
    double sum_scans = 0.0;
    int scored_scans = 0;
    for (std::size_t s = 0; s < map.scans.size(); ++s) {
        const std::vector<Vec3> points = voxel_filter(map.scans[s], params.voxel_filter_size);
        if (points.empty()) continue;
        const SE3 scan_to_model = pose * map.scan_poses[s];
        const Vec3 origin = scan_to_model.t;
        double sum_points = 0.0;
        for (const auto& p : points) {
            const RayScoreResult rs = ray_score(origin, scan_to_model * p, model.height_map, params);
            sum_points += params.w * rs.c_ray + (1.0 - params.w) * rs.c_hit;
        }
        sum_scans += sum_points / static_cast<double>(points.size());
        ++scored_scans;
    }
    if (scored_scans == 0)
        throw std::runtime_error("plausibility: all points removed by the voxel filter");
    return sum_scans / static_cast<double>(scored_scans);
}

SE3 initial_pose(const InitialPoseSource& source, const GeoModel& model) {
    const Vec3 local = model.to_local(source.gnss_position);
    std::int64_t col, row;
    model.height_map.cell_of(local.head<2>(), col, row);
    if (!model.height_map.in_bounds(col, row))
        throw std::runtime_error("initial_pose: GNSS position outside the model bounds");

    double height = local.z();
    if (!source.trust_gnss_altitude) {
        const float ground = model.height_map.value(col, row);
        if (std::isnan(ground))
            throw std::runtime_error("initial_pose: no height-map data at the GNSS position");
        height = static_cast<double>(ground) + source.ultrasonic_height.value_or(0.0);
    }
    const double yaw = source.magnetometer_yaw.value_or(0.0);
    return se3_from_rpy_yaw(source.imu_roll, source.imu_pitch, yaw,
                            Vec3(local.x(), local.y(), height));
}

RefinementOutcome grid_refine(const LocalMap& map, const SE3& init, const GeoModel& model,
                              const GridSearchParams& search, const PlausibilityParams& params,
                              const RegistrationParams& registration, int threads) {
    if (search.step <= 0.0 || search.radius < search.step)
        throw std::invalid_argument("grid_refine: need step > 0 and radius >= step");

    RefinementOutcome outcome;
    const auto half = static_cast<int>(std::floor(search.radius / search.step + 1e-9));
    std::vector<double> yaws;
    if (search.yaw_steps <= 1) {
        yaws.push_back(0.0);
    } else {
        for (int k = 0; k < search.yaw_steps; ++k)
            yaws.push_back(-kPi + 2.0 * kPi * k / search.yaw_steps);
    }
    for (double yaw : yaws)
        for (int ie = -half; ie <= half; ++ie)
            for (int in = -half; in <= half; ++in) {
                Hypothesis h;
                h.grid_offset = Vec2(ie * search.step, in * search.step);
                h.yaw_offset = yaw;
                outcome.hypotheses.push_back(std::move(h));
            }

    parallel_for(static_cast<std::int64_t>(outcome.hypotheses.size()), threads,
                 [&](std::int64_t i) {
                     Hypothesis& h = outcome.hypotheses[i];
                     SE3 start = init;
                     start.q = quat_mul<double>(
                         so3_exp<double>(Vec3(0.0, 0.0, h.yaw_offset)), start.q);
                     start.t.head<2>() += h.grid_offset;
                     h.registration =
                         register_surfel_maps(map.surfels, model.surfels, start, registration);
                     if (h.registration.converged) {
                         try {
                             h.score = plausibility(map, h.registration.pose, model, params);
                         } catch (const std::runtime_error&) {
                             h.score = -1.0;  // unscorable hypothesis
                         }
                     }
                 });

    // argmax score; ties within 1e-6 go to the smallest grid offset, then
    // to the lowest index for full determinism
    int best = -1;
    for (int i = 0; i < static_cast<int>(outcome.hypotheses.size()); ++i) {
        const Hypothesis& h = outcome.hypotheses[i];
        if (!h.registration.converged || h.score < 0.0) continue;
        if (best < 0) {
            best = i;
            continue;
        }
        const Hypothesis& b = outcome.hypotheses[best];
        if (h.score > b.score + 1e-6) {
            best = i;
        } else if (std::abs(h.score - b.score) <= 1e-6 &&
                   h.grid_offset.squaredNorm() < b.grid_offset.squaredNorm() - 1e-12) {
            best = i;
        }
    }

    if (best < 0) {
        outcome.reason = RejectionReason::NoConvergence;
        return outcome;
    }
    const Hypothesis& winner = outcome.hypotheses[best];
    outcome.best_index = best;
    outcome.refined_pose = winner.registration.pose;
    outcome.score = winner.score;
    outcome.kappa_fwd = winner.registration.cond_local_to_model;
    outcome.kappa_bwd = winner.registration.cond_model_to_local;

    // gates, condition number first
    if (!(outcome.kappa_fwd < params.tau_kappa) || !(outcome.kappa_bwd < params.tau_kappa)) {
        outcome.reason = RejectionReason::ConditionNumber;
        return outcome;
    }
    if (!(outcome.score > params.gamma)) {
        outcome.reason = RejectionReason::Score;
        return outcome;
    }
    outcome.accepted = true;
    outcome.reason = RejectionReason::None;
    return outcome;
}

}  // namespace georef
