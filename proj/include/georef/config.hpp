#pragma once

#include <set>
#include <string>
#include <vector>

#include "georef/common.hpp"
#include "georef/gnss_refine.hpp"
#include "georef/imu_preint.hpp"
#include "georef/model_builder.hpp"
#include "georef/registration.hpp"
#include "georef/scan_pipeline.hpp"

namespace georef {

// All pipeline tunables in one place. Values are layered: built-in default
// < config file (JSON object of key/value) < GEOREF_<KEY> environment
// variables < explicit --set key=value flags.
struct PipelineConfig {
    // scan accumulation
    double tau_move = 0.5;
    int max_scans = 20;
    std::set<std::uint8_t> keep_classes{0, 1};  // ground, building

    // model build
    ModelParams model;

    // surfel maps of local maps (model uses model.surfels)
    SurfelMapParams surfels;

    // registration + plausibility + grid search
    RegistrationParams registration;
    PlausibilityParams plausibility;
    GridSearchParams search;
    bool trust_gnss_altitude = true;

    // trajectory / graph
    int spline_order = 4;
    double knot_dt = 0.1;
    ImuNoise imu_noise;
    Vec3 gravity = Vec3(0.0, 0.0, -9.81);
    double sigma_odom_translation = 0.02;          // m
    double sigma_odom_rotation = deg2rad(0.5);     // rad
    double sigma_refined_translation = 0.1;        // m
    double sigma_refined_rotation = deg2rad(2.0);  // rad
    double gnss_default_sigma = 3.0;               // m, when the CSV carries none
    double graph_huber_delta = 1.0;                // squared-Mahalanobis scale
    double loop_radius = 15.0;                     // m
    double loop_path_fraction = 0.05;
    double anchor_prior_sigma_translation = 30.0;  // weak gauge regularization
    double anchor_prior_sigma_rotation = 0.5;      // rad
    std::string raw_gnss_mode = "fallback";        // always | fallback | never
    int optimizer_max_iterations = 100;

    int threads = 1;

    // Applies "key=value"; throws on unknown keys or unparsable values.
    void set(const std::string& key, const std::string& value);

    // Layering helpers.
    void load_file(const std::string& path);   // JSON object {key: value}
    void load_environment();                   // GEOREF_<UPPERCASE_KEY>
    std::vector<std::string> echo() const;     // "key=value" lines, sorted
};

}  // namespace georef
