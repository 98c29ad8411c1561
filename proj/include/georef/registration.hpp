#pragma once

#include <vector>

#include "georef/common.hpp"
#include "georef/lie.hpp"
#include "georef/surfel_map.hpp"

namespace georef {

struct RegistrationParams {
    int max_iterations = 50;
    double update_tolerance = 1e-6;   // twist norm
    double huber_delta = 0.5;         // m, on the surfel-to-plane residual
    double normal_agreement = 0.7;    // |n_s . n_t| gate
    int min_matches = 10;
    double initial_lambda = 1e-8;     // Levenberg damping seed
};

struct RegistrationResult {
    SE3 pose;                       // source (local map) frame -> target (model) frame
    bool converged = false;
    int iterations = 0;
    double final_cost = 0.0;
    double cond_model_to_local = std::numeric_limits<double>::infinity();
    double cond_local_to_model = std::numeric_limits<double>::infinity();
    int matched_surfel_count = 0;
    // pre/post cost pairs of every accepted damped Gauss-Newton step
    std::vector<double> cost_history;
    std::string message;
};

// Aligns the source surfel map against the target map starting from
// `initial`, minimizing Huber-weighted surfel-to-plane distances over all
// resolution levels jointly. Association is nearest target surfel within
// one voxel at the same level, gated on normal agreement. The condition
// numbers are taken from the translation block of the final Hessian for
// both matching directions.
RegistrationResult register_surfel_maps(const SurfelMap& source, const SurfelMap& target,
                                        const SE3& initial, const RegistrationParams& params);

// Matched pair dump for offline inspection (debug aid):
// source_x,source_y,source_z,target_x,target_y,target_z,target_nx,target_ny,target_nz,residual
std::string matched_pairs_csv(const SurfelMap& source, const SurfelMap& target, const SE3& pose,
                              const RegistrationParams& params);

}  // namespace georef
