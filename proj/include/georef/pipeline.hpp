#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "georef/config.hpp"
#include "georef/gnss_refine.hpp"
#include "georef/io.hpp"
#include "georef/model_builder.hpp"
#include "georef/pose_graph.hpp"
#include "georef/scan_pipeline.hpp"
#include "georef/sim.hpp"

namespace georef {

// ---------------------------------------------------------------------------
// Building blocks shared by the CLI commands and the acceptance suite
// ---------------------------------------------------------------------------

GeoModel build_model_from_files(const std::vector<std::string>& citygml_paths,
                                const std::vector<std::string>& dem_paths,
                                const PipelineConfig& config);

DemGrid merge_dem_grids(const std::vector<DemGrid>& grids);

std::vector<LabeledPointCloud> load_scan_directory(const std::string& directory);

// Scan-to-map surfel odometry used when no external trajectory is given.
class InternalOdometry {
public:
    explicit InternalOdometry(const PipelineConfig& config);
    SE3 advance(const LabeledPointCloud& filtered_scan);

private:
    PipelineConfig config_;
    SE3 current_;
    std::vector<std::vector<Vec3>> window_;  // accepted scans, odometry frame
    SurfelMap window_surfels_;
    Vec3 last_window_position_ = Vec3::Zero();
    bool initialized_ = false;
};

struct AccumulationResult {
    std::vector<LocalMap> maps;
    std::vector<StampedPose> odometry;  // pose per scan stamp
    std::vector<double> scan_stamps;    // every scan, time order
    std::vector<int> scan_segment;      // local-map index per scan
};

// Filters scans to keep_classes and accumulates them into local maps. Pass
// an empty odometry vector to run the internal scan-to-map odometry.
AccumulationResult accumulate_scans(const std::vector<LabeledPointCloud>& scans,
                                    const std::vector<StampedPose>& external_odometry,
                                    const PipelineConfig& config);

struct MapRefinement {
    int map_id = 0;
    double stamp = 0.0;
    Vec2 grid_offset = Vec2::Zero();
    double yaw_offset = 0.0;
    bool converged = false;
    double score = -1.0;
    double kappa_fwd = std::numeric_limits<double>::infinity();
    double kappa_bwd = std::numeric_limits<double>::infinity();
    bool accepted = false;
    RejectionReason reason = RejectionReason::NoConvergence;
    SE3 pose;  // projected frame (frame_origin re-added)
};

std::vector<MapRefinement> refine_maps(const std::vector<LocalMap>& maps, const GeoModel& model,
                                       const std::vector<GnssSample>& gnss,
                                       const std::vector<MagSample>& mag,
                                       const std::vector<StampedPose>& odometry,
                                       const PipelineConfig& config);

// CSV "map_id, offset_e, offset_n, yaw, converged, s_W, kappa_fwd,
// kappa_bwd, accepted, t_ref_{x,y,z,qx,qy,qz,qw}"; header lines echo the
// config for provenance.
void write_refinements_csv(const std::string& path,
                           const std::vector<MapRefinement>& refinements,
                           const PipelineConfig& config);
std::vector<MapRefinement> read_refinements_csv(const std::string& path);

struct OptimizePipelineResult {
    std::vector<StampedPose> trajectory;  // projected frame, at scan stamps
    std::vector<Vec3> merged_map;         // projected frame
    OptimizeReport report;
    PoseGraph graph;
    SE3 anchor_initial;
};

OptimizePipelineResult optimize_pipeline(const std::vector<LabeledPointCloud>& scans,
                                         const std::vector<ImuSample>& imu,
                                         const std::vector<GnssSample>& gnss,
                                         const std::vector<MapRefinement>& refinements,
                                         const std::vector<StampedPose>& odometry,
                                         const PipelineConfig& config);

struct EvaluationResult {
    double rmse = 0.0;
    double max_error = 0.0;
    std::size_t count = 0;
};

// RMS positional error of the estimate against the (interpolated) reference
// at the estimate's stamps.
EvaluationResult evaluate_trajectory(const std::vector<StampedPose>& estimate,
                                     const std::vector<StampedPose>& truth);

// ---------------------------------------------------------------------------
// Scene configuration (JSON) for the simulate command
// ---------------------------------------------------------------------------

struct SceneSpec {
    SyntheticScene scene;
    std::vector<Vec3> waypoints;  // projected frame
    SensorRig rig;
    FlightOptions flight;
};

SceneSpec parse_scene_spec(const std::string& json_text);

// ---------------------------------------------------------------------------
// CLI commands; each validates inputs, writes its outputs and throws on any
// module error (the CLI maps exceptions to a nonzero exit)
// ---------------------------------------------------------------------------

struct BuildModelArgs {
    std::vector<std::string> citygml;
    std::vector<std::string> dem;
    std::string out;
};
void cmd_build_model(const BuildModelArgs& args, const PipelineConfig& config);

struct SimulateArgs {
    std::string scene_config;
    std::string out_dir;
};
void cmd_simulate(const SimulateArgs& args, const PipelineConfig& config);

struct RefineArgs {
    std::string model;
    std::string scans_dir;
    std::string gnss;
    std::string odometry;  // "internal" or a TUM file path
    std::string mag;       // optional
    std::string out;
};
void cmd_refine(const RefineArgs& args, const PipelineConfig& config);

struct OptimizeArgs {
    std::string scans_dir;
    std::string imu;
    std::string gnss;
    std::string refinements;  // optional
    std::string odometry;     // "internal" or a TUM file path
    std::string out_trajectory;
    std::string out_map;      // .xyz (ASCII) or .lpc (binary), optional
    std::string report;       // optional
    std::string dump_graph;   // optional
    std::string save_spline;  // optional
};
void cmd_optimize(const OptimizeArgs& args, const PipelineConfig& config);

struct EvaluateArgs {
    std::string estimate;
    std::string truth;
    std::string out;  // metrics text
};
EvaluationResult cmd_evaluate(const EvaluateArgs& args, const PipelineConfig& config);

}  // namespace georef
