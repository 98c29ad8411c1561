// Timing harness comparing the serial reference path (threads = 1) of the
// parallel kernels against their OpenMP variants: surfel-map construction,
// the refinement grid search and one pose-graph iteration.
#include <chrono>
#include <cstdio>
#include <vector>

#include "georef/gnss_refine.hpp"
#include "georef/pipeline.hpp"
#include "georef/sim.hpp"

using namespace georef;

namespace {

double seconds_since(const std::chrono::steady_clock::time_point& t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

SyntheticScene bench_scene() {
    SyntheticScene scene;
    scene.rng_seed = 99;
    scene.ground.base_height = 60.0;
    scene.area_min = Vec2(-70.0, -70.0);
    scene.area_max = Vec2(70.0, 70.0);
    scene.buildings.push_back({Vec2(18.0, 6.0), 10.0, 8.0, 0.2, 18.0});
    scene.buildings.push_back({Vec2(-16.0, -10.0), 9.0, 12.0, -0.4, 22.0});
    scene.buildings.push_back({Vec2(-4.0, 26.0), 12.0, 7.0, 0.9, 15.0});
    return scene;
}

}  // namespace

int main() {
    const SyntheticScene scene = bench_scene();
    const std::vector<Vec3> waypoints = {Vec3(-25.0, -22.0, 72.0), Vec3(2.0, -4.0, 74.0),
                                         Vec3(6.0, 16.0, 73.0), Vec3(28.0, 24.0, 75.0)};
    SensorRig rig;
    FlightOptions options;
    options.duration = 30.0;
    options.odom_drift_per_m = 0.01;
    const FlightData flight = generate_flight(scene, waypoints, rig, options);

    PipelineConfig config;
    GeoModel model;
    {
        const TriangleMesh mesh = parse_citygml_subset(scene_to_citygml(scene));
        const DemGrid dem = parse_dem_xyz(scene_to_dem_xyz(scene));
        const auto t0 = std::chrono::steady_clock::now();
        model = assemble_model(mesh, dem, config.model);
        std::printf("model_build                 %8.3f s\n", seconds_since(t0));
    }

    AccumulationResult acc = accumulate_scans(flight.scans, flight.odometry, config);
    std::printf("local maps: %zu, merged points of map 0: %zu\n", acc.maps.size(),
                acc.maps.empty() ? 0 : acc.maps[0].merged_points.size());
    if (acc.maps.empty()) return 1;

    for (int threads : {1, 2, 4, 8}) {
        const auto t0 = std::chrono::steady_clock::now();
        const SurfelMap surfels = build_surfel_map(model.points, config.model.surfels, threads);
        std::printf("surfel_build   threads=%d    %8.3f s   (%zu surfels)\n", threads,
                    seconds_since(t0), surfels.total_surfels());
    }

    const LocalMap& map = acc.maps[acc.maps.size() / 2];
    const GnssSample fix = [&] {
        GnssSample s;
        s.position = interpolate_trajectory(flight.truth, map.reference_stamp).t;
        return s;
    }();
    InitialPoseSource source;
    source.gnss_position = fix.position;
    source.magnetometer_yaw = 0.0;
    const SE3 init = initial_pose(source, model);
    for (int threads : {1, 2, 4, 8}) {
        const auto t0 = std::chrono::steady_clock::now();
        const RefinementOutcome outcome = grid_refine(
            map, init, model, config.search, config.plausibility, config.registration, threads);
        std::printf("grid_search    threads=%d    %8.3f s   (%zu hypotheses, best %.3f)\n",
                    threads, seconds_since(t0), outcome.hypotheses.size(), outcome.score);
    }

    const auto refinements =
        refine_maps(acc.maps, model, flight.gnss, flight.mag, acc.odometry, config);
    for (int threads : {1, 2, 4, 8}) {
        PipelineConfig c = config;
        c.threads = threads;
        c.optimizer_max_iterations = 3;
        const auto t0 = std::chrono::steady_clock::now();
        const auto result =
            optimize_pipeline(flight.scans, flight.imu, flight.gnss, refinements,
                              flight.odometry, c);
        std::printf("graph_3_iters  threads=%d    %8.3f s   (cost %.3e -> %.3e)\n", threads,
                    seconds_since(t0), result.report.initial_cost, result.report.final_cost);
    }
    return 0;
}
