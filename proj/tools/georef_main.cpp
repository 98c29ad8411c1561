#include <CLI11.hpp>
#include <exception>
#include <iostream>

#include "georef/pipeline.hpp"

namespace {

georef::PipelineConfig assemble_config(const std::string& config_file,
                                       const std::vector<std::string>& sets, int threads) {
    georef::PipelineConfig config;
    if (!config_file.empty()) config.load_file(config_file);
    config.load_environment();
    for (const auto& kv : sets) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("--set expects key=value, got: " + kv);
        config.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (threads >= 0) config.threads = threads;
    return config;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{
        "georef: refines coarse GNSS poses by registering LiDAR local maps against prior "
        "geospatial building/terrain models and optimizes a continuous-time trajectory"};
    app.require_subcommand(1);

    std::string config_file;
    std::vector<std::string> sets;
    int threads = -1;
    app.add_option("--config", config_file, "JSON config file (key/value)");
    app.add_option("--set", sets, "override a config key, e.g. --set tau_move=0.5");
    app.add_option("--threads", threads, "worker cap for parallel kernels (0 = all cores)");

    georef::BuildModelArgs build_args;
    auto* build = app.add_subcommand("build-model",
                                     "parse CityGML + DEM tiles into a registration model");
    build->add_option("--citygml", build_args.citygml, "CityGML-subset XML file(s)");
    build->add_option("--dem", build_args.dem, "DEM XYZ file(s)")->required();
    build->add_option("--out", build_args.out, "output model cache (GEOM1)")->required();
    double height_cell = -1.0;
    build->add_option("--height-cell", height_cell, "height map cell size (m), default 0.5");

    georef::SimulateArgs sim_args;
    auto* sim = app.add_subcommand("simulate", "generate a synthetic flight dataset");
    sim->add_option("--scene", sim_args.scene_config, "scene config JSON")->required();
    sim->add_option("--out", sim_args.out_dir, "output directory")->required();

    georef::RefineArgs refine_args;
    auto* refine = app.add_subcommand("refine", "grid-search GNSS refinement per local map");
    refine->add_option("--model", refine_args.model, "model cache (GEOM1)")->required();
    refine->add_option("--scans", refine_args.scans_dir, "directory of LPC1 scans")->required();
    refine->add_option("--gnss", refine_args.gnss, "GNSS CSV")->required();
    refine->add_option("--odometry", refine_args.odometry,
                       "TUM trajectory file or 'internal' (default)");
    refine->add_option("--mag", refine_args.mag, "magnetometer yaw CSV (optional)");
    refine->add_option("--out", refine_args.out, "refinement report CSV")->required();
    double search_radius = -1.0, search_step = -1.0;
    int yaw_steps = -1;
    refine->add_option("--search-radius", search_radius, "grid radius (m), default 8");
    refine->add_option("--search-step", search_step, "grid step (m), default 4");
    refine->add_option("--yaw-steps", yaw_steps, "yaw hypotheses over [-pi,pi), default 0");

    georef::OptimizeArgs opt_args;
    auto* opt = app.add_subcommand("optimize", "spline pose-graph trajectory optimization");
    opt->add_option("--scans", opt_args.scans_dir, "directory of LPC1 scans")->required();
    opt->add_option("--imu", opt_args.imu, "IMU CSV");
    opt->add_option("--gnss", opt_args.gnss, "GNSS CSV")->required();
    opt->add_option("--refinements", opt_args.refinements, "refinement CSV from 'refine'");
    opt->add_option("--odometry", opt_args.odometry, "TUM trajectory file or 'internal'");
    opt->add_option("--out", opt_args.out_trajectory, "output trajectory (TUM)")->required();
    opt->add_option("--map", opt_args.out_map, "georeferenced point map (.xyz or .lpc)");
    opt->add_option("--report", opt_args.report, "optimization report");
    opt->add_option("--dump-graph", opt_args.dump_graph, "write the pose graph (text)");
    opt->add_option("--save-spline", opt_args.save_spline, "write the spline (SPL1)");

    georef::EvaluateArgs eval_args;
    auto* eval = app.add_subcommand("evaluate", "RMSE of a trajectory against a reference");
    eval->add_option("--estimate", eval_args.estimate, "estimated trajectory (TUM)")->required();
    eval->add_option("--truth", eval_args.truth, "reference trajectory (TUM)")->required();
    eval->add_option("--out", eval_args.out, "metrics output")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        georef::PipelineConfig config = assemble_config(config_file, sets, threads);
        if (build->parsed()) {
            if (height_cell > 0.0) config.model.height_cell = height_cell;
            georef::cmd_build_model(build_args, config);
        } else if (sim->parsed()) {
            georef::cmd_simulate(sim_args, config);
        } else if (refine->parsed()) {
            if (search_radius > 0.0) config.search.radius = search_radius;
            if (search_step > 0.0) config.search.step = search_step;
            if (yaw_steps >= 0) config.search.yaw_steps = yaw_steps;
            if (refine_args.odometry.empty()) refine_args.odometry = "internal";
            georef::cmd_refine(refine_args, config);
        } else if (opt->parsed()) {
            if (opt_args.odometry.empty()) opt_args.odometry = "internal";
            georef::cmd_optimize(opt_args, config);
        } else if (eval->parsed()) {
            georef::cmd_evaluate(eval_args, config);
        }
    } catch (const std::exception& e) {
        std::cerr << "georef: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
