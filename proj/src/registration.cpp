#include "georef/registration.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <cstdio>

namespace georef {

namespace {

struct Match {
    const Surfel* source;
    const Surfel* target;
};

// Nearest target surfel within a 1-voxel neighborhood at the same level,
// subject to the normal-agreement gate. `pose` maps source into the target
// frame.
void associate(const SurfelMap& source, const SurfelMap& target, const SE3& pose,
               double normal_agreement, std::vector<Match>& matches) {
    matches.clear();
    const Mat3 rot = pose.rotation_matrix();
    for (const auto& src_level : source.levels) {
        const SurfelLevel* tgt_level = nullptr;
        for (const auto& l : target.levels)
            if (std::abs(l.voxel_size - src_level.voxel_size) < 1e-9) tgt_level = &l;
        if (!tgt_level || tgt_level->surfels.empty()) continue;
        const double vs = src_level.voxel_size;

        for (const auto& s : src_level.surfels) {
            const Vec3 p = pose * s.mean;
            const Vec3 n = rot * s.normal;
            const auto ix = static_cast<std::int64_t>(std::floor(p.x() / vs));
            const auto iy = static_cast<std::int64_t>(std::floor(p.y() / vs));
            const auto iz = static_cast<std::int64_t>(std::floor(p.z() / vs));
            const Surfel* best = nullptr;
            double best_dist = std::numeric_limits<double>::infinity();
            for (std::int64_t dz = -1; dz <= 1; ++dz)
                for (std::int64_t dy = -1; dy <= 1; ++dy)
                    for (std::int64_t dx = -1; dx <= 1; ++dx) {
                        const Surfel* t =
                            tgt_level->find(pack_voxel(ix + dx, iy + dy, iz + dz));
                        if (!t) continue;
                        if (std::abs(n.dot(t->normal)) < normal_agreement) continue;
                        const double d = (t->mean - p).squaredNorm();
                        if (d < best_dist) {
                            best_dist = d;
                            best = t;
                        }
                    }
            if (best) matches.push_back({&s, best});
        }
    }
}

struct NormalEquations {
    Mat6 h = Mat6::Zero();
    Vec6 g = Vec6::Zero();
    double cost = 0.0;
    Mat3 translation_information = Mat3::Zero();
};

NormalEquations build_normal_equations(const std::vector<Match>& matches, const SE3& pose,
                                       double huber_delta) {
    NormalEquations eq;
    for (const auto& m : matches) {
        const Vec3 p = pose * m.source->mean;
        const Vec3& n = m.target->normal;
        const double r = n.dot(p - m.target->mean);
        const double abs_r = std::abs(r);
        const double w = abs_r <= huber_delta ? 1.0 : huber_delta / abs_r;
        eq.cost += abs_r <= huber_delta ? r * r : huber_delta * (2.0 * abs_r - huber_delta);

        Vec6 jac;
        jac.head<3>() = n;
        jac.tail<3>() = -skew<double>(p).transpose() * n;  // n^T * (-skew(p))
        eq.h.noalias() += w * jac * jac.transpose();
        eq.g.noalias() += w * r * jac;
        eq.translation_information.noalias() += w * n * n.transpose();
    }
    return eq;
}

double cost_of(const std::vector<Match>& matches, const SE3& pose, double huber_delta) {
    double cost = 0.0;
    for (const auto& m : matches) {
        const double r = m.target->normal.dot(pose * m.source->mean - m.target->mean);
        const double abs_r = std::abs(r);
        cost += abs_r <= huber_delta ? r * r : huber_delta * (2.0 * abs_r - huber_delta);
    }
    return cost;
}

double condition_number(const Mat3& information) {
    Eigen::SelfAdjointEigenSolver<Mat3> eig(information);
    const double lo = eig.eigenvalues()[0];
    const double hi = eig.eigenvalues()[2];
    if (lo <= 0.0 || hi <= 0.0) return std::numeric_limits<double>::infinity();
    return hi / lo;
}

// Translation information of matching `from` surfels against the `to` map
// under from->to transform `pose` (used for the reverse condition number).
Mat3 reverse_translation_information(const SurfelMap& from, const SurfelMap& to,
                                     const SE3& pose, const RegistrationParams& params) {
    // Cheap prefilter: only `from` surfels near the transformed `to` extent
    // can match anything.
    Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
    Vec3 hi = -lo;
    const SE3 inv = pose.inverse();
    for (const auto& level : to.levels)
        for (const auto& s : level.surfels) {
            const Vec3 p = inv * s.mean;  // `to` surfel expressed in `from` frame
            lo = lo.cwiseMin(p);
            hi = hi.cwiseMax(p);
        }

    Mat3 information = Mat3::Zero();
    const Mat3 rot = pose.rotation_matrix();
    for (const auto& from_level : from.levels) {
        const SurfelLevel* to_level = nullptr;
        for (const auto& l : to.levels)
            if (std::abs(l.voxel_size - from_level.voxel_size) < 1e-9) to_level = &l;
        if (!to_level || to_level->surfels.empty()) continue;
        const double vs = from_level.voxel_size;
        const Vec3 margin = Vec3::Constant(2.0 * vs);
        for (const auto& s : from_level.surfels) {
            if ((s.mean.array() < (lo - margin).array()).any() ||
                (s.mean.array() > (hi + margin).array()).any())
                continue;
            const Vec3 p = pose * s.mean;
            const Vec3 n = rot * s.normal;
            const auto ix = static_cast<std::int64_t>(std::floor(p.x() / vs));
            const auto iy = static_cast<std::int64_t>(std::floor(p.y() / vs));
            const auto iz = static_cast<std::int64_t>(std::floor(p.z() / vs));
            const Surfel* best = nullptr;
            double best_dist = std::numeric_limits<double>::infinity();
            for (std::int64_t dz = -1; dz <= 1; ++dz)
                for (std::int64_t dy = -1; dy <= 1; ++dy)
                    for (std::int64_t dx = -1; dx <= 1; ++dx) {
                        const Surfel* t = to_level->find(pack_voxel(ix + dx, iy + dy, iz + dz));
                        if (!t) continue;
                        if (std::abs(n.dot(t->normal)) < params.normal_agreement) continue;
                        const double d = (t->mean - p).squaredNorm();
                        if (d < best_dist) {
                            best_dist = d;
                            best = t;
                        }
                    }
            if (!best) continue;
            const double r = best->normal.dot(p - best->mean);
            const double abs_r = std::abs(r);
            const double w =
                abs_r <= params.huber_delta ? 1.0 : params.huber_delta / abs_r;
            information.noalias() += w * best->normal * best->normal.transpose();
        }
    }
    return information;
}

}  // namespace

RegistrationResult register_surfel_maps(const SurfelMap& source, const SurfelMap& target,
                                        const SE3& initial, const RegistrationParams& params) {
    RegistrationResult result;
    result.pose = initial;

    std::vector<Match> matches;
    double lambda = params.initial_lambda;
    bool reached_tolerance = false;

    for (int iter = 0; iter < params.max_iterations; ++iter) {
        result.iterations = iter + 1;
        associate(source, target, result.pose, params.normal_agreement, matches);
        result.matched_surfel_count = static_cast<int>(matches.size());
        if (result.matched_surfel_count < params.min_matches) {
            result.message = "too few matches (" + std::to_string(matches.size()) + ")";
            result.final_cost = cost_of(matches, result.pose, params.huber_delta);
            return result;
        }

        const NormalEquations eq =
            build_normal_equations(matches, result.pose, params.huber_delta);
        result.final_cost = eq.cost;

        bool accepted = false;
        for (int attempt = 0; attempt < 8 && !accepted; ++attempt) {
            Mat6 damped = eq.h;
            damped.diagonal() += lambda * eq.h.diagonal().cwiseMax(1e-12);
            Eigen::LDLT<Mat6> ldlt(damped);
            if (ldlt.info() != Eigen::Success) {
                lambda = std::max(lambda * 100.0, 1e-6);
                continue;
            }
            const Vec6 delta = ldlt.solve(-eq.g);
            if (!delta.allFinite()) {
                lambda = std::max(lambda * 100.0, 1e-6);
                continue;
            }
            const SE3 candidate = SE3::exp(delta) * result.pose;
            const double candidate_cost = cost_of(matches, candidate, params.huber_delta);
            if (candidate_cost <= eq.cost) {
                result.cost_history.push_back(eq.cost);
                result.cost_history.push_back(candidate_cost);
                result.pose = candidate;
                result.final_cost = candidate_cost;
                lambda = std::max(lambda / 3.0, 1e-12);
                accepted = true;
                if (delta.norm() < params.update_tolerance) reached_tolerance = true;
            } else {
                lambda = std::max(lambda * 10.0, 1e-8);
            }
        }
        if (!accepted) {
            // damping escalation exhausted; treat the current pose as final
            reached_tolerance = true;
        }
        if (reached_tolerance) break;
    }

    associate(source, target, result.pose, params.normal_agreement, matches);
    result.matched_surfel_count = static_cast<int>(matches.size());
    if (result.matched_surfel_count < params.min_matches) {
        result.message = "too few matches at convergence";
        return result;
    }
    const NormalEquations final_eq =
        build_normal_equations(matches, result.pose, params.huber_delta);
    result.final_cost = final_eq.cost;
    result.cond_local_to_model = condition_number(final_eq.translation_information);
    result.cond_model_to_local = condition_number(
        reverse_translation_information(target, source, result.pose.inverse(), params));
    result.converged = reached_tolerance;
    return result;
}

std::string matched_pairs_csv(const SurfelMap& source, const SurfelMap& target, const SE3& pose,
                              const RegistrationParams& params) {
    std::vector<Match> matches;
    associate(source, target, pose, params.normal_agreement, matches);
    std::string out =
        "source_x,source_y,source_z,target_x,target_y,target_z,target_nx,target_ny,target_nz,"
        "residual\n";
    char buf[320];
    for (const auto& m : matches) {
        const Vec3 p = pose * m.source->mean;
        const double r = m.target->normal.dot(p - m.target->mean);
        std::snprintf(buf, sizeof(buf), "%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f\n",
                      m.source->mean.x(), m.source->mean.y(), m.source->mean.z(),
                      m.target->mean.x(), m.target->mean.y(), m.target->mean.z(),
                      m.target->normal.x(), m.target->normal.y(), m.target->normal.z(), r);
        out += buf;
    }
    return out;
}

}  // namespace georef
