#include "georef/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "georef/io_util.hpp"
#include "georef/parallel.hpp"

namespace georef {

namespace {

std::ofstream open_text_out(const std::string& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    return os;
}

std::vector<std::string> config_header(const PipelineConfig& config) {
    std::vector<std::string> lines;
    for (const auto& kv : config.echo()) lines.push_back("config " + kv);
    return lines;
}

}  // namespace

// ---------------------------------------------------------------------------
// Model building
// ---------------------------------------------------------------------------

DemGrid merge_dem_grids(const std::vector<DemGrid>& grids) {
    if (grids.empty()) throw std::runtime_error("merge_dem_grids: no grids");
    if (grids.size() == 1) return grids.front();
    const double spacing = grids.front().spacing;
    Vec2 lo = grids.front().origin, hi = grids.front().origin;
    for (const auto& g : grids) {
        if (std::abs(g.spacing - spacing) > 1e-9)
            throw std::runtime_error("merge_dem_grids: tiles disagree on spacing");
        lo = lo.cwiseMin(g.origin);
        hi = hi.cwiseMax(g.origin +
                         Vec2((g.ncols - 1) * g.spacing, (g.nrows - 1) * g.spacing));
    }
    DemGrid out;
    out.origin = lo;
    out.spacing = spacing;
    out.ncols = static_cast<std::uint32_t>(std::llround((hi.x() - lo.x()) / spacing)) + 1;
    out.nrows = static_cast<std::uint32_t>(std::llround((hi.y() - lo.y()) / spacing)) + 1;
    out.heights.assign(static_cast<std::size_t>(out.ncols) * out.nrows, 0.0);
    out.valid.assign(out.heights.size(), 0);
    for (const auto& g : grids) {
        for (std::uint32_t r = 0; r < g.nrows; ++r)
            for (std::uint32_t c = 0; c < g.ncols; ++c) {
                if (!g.is_valid(c, r)) continue;
                const auto col = static_cast<std::size_t>(
                    std::llround((g.origin.x() + c * spacing - lo.x()) / spacing));
                const auto row = static_cast<std::size_t>(
                    std::llround((g.origin.y() + r * spacing - lo.y()) / spacing));
                const std::size_t idx = row * out.ncols + col;
                const double h = g.height_at(c, r);
                if (out.valid[idx] && out.heights[idx] != h)
                    throw std::runtime_error("merge_dem_grids: tiles conflict at a shared cell");
                out.heights[idx] = h;
                out.valid[idx] = 1;
            }
    }
    return out;
}

GeoModel build_model_from_files(const std::vector<std::string>& citygml_paths,
                                const std::vector<std::string>& dem_paths,
                                const PipelineConfig& config) {
    TriangleMesh mesh;
    for (const auto& path : citygml_paths) mesh.append(load_citygml_file(path));
    std::vector<DemGrid> grids;
    for (const auto& path : dem_paths) grids.push_back(load_dem_file(path));
    if (grids.empty()) throw std::runtime_error("build model: at least one DEM is required");
    return assemble_model(mesh, merge_dem_grids(grids), config.model);
}

// ---------------------------------------------------------------------------
// Scan loading and accumulation
// ---------------------------------------------------------------------------

std::vector<LabeledPointCloud> load_scan_directory(const std::string& directory) {
    std::vector<LabeledPointCloud> scans;
    for (const auto& file : list_scan_files(directory)) scans.push_back(read_lpc1(file));
    return scans;
}

InternalOdometry::InternalOdometry(const PipelineConfig& config) : config_(config) {}

SE3 InternalOdometry::advance(const LabeledPointCloud& filtered_scan) {
    std::vector<Vec3> points;
    points.reserve(filtered_scan.points.size());
    for (const auto& p : filtered_scan.points) points.push_back(p.position());

    if (!initialized_) {
        if (points.empty()) return current_;  // wait for geometry
        initialized_ = true;
        window_.push_back(points);  // identity pose: already in odometry frame
        window_surfels_ = build_surfel_map(points, config_.surfels, 1);
        last_window_position_ = Vec3::Zero();
        return current_;
    }
    if (points.empty()) return current_;

    const SurfelMap scan_surfels = build_surfel_map(points, config_.surfels, 1);
    RegistrationParams reg = config_.registration;
    reg.min_matches = std::max(6, reg.min_matches / 2);
    const RegistrationResult result =
        register_surfel_maps(scan_surfels, window_surfels_, current_, reg);
    if (result.converged) current_ = result.pose;

    if ((current_.t - last_window_position_).norm() > 0.5 * config_.tau_move) {
        std::vector<Vec3> world_points;
        world_points.reserve(points.size());
        for (const auto& p : points) world_points.push_back(current_ * p);
        window_.push_back(std::move(world_points));
        constexpr std::size_t kWindowScans = 12;
        if (window_.size() > kWindowScans) window_.erase(window_.begin());
        std::vector<Vec3> merged;
        std::size_t total = 0;
        for (const auto& w : window_) total += w.size();
        merged.reserve(total);
        for (const auto& w : window_) merged.insert(merged.end(), w.begin(), w.end());
        window_surfels_ = build_surfel_map(merged, config_.surfels, 1);
        last_window_position_ = current_.t;
    }
    return current_;
}

AccumulationResult accumulate_scans(const std::vector<LabeledPointCloud>& scans,
                                    const std::vector<StampedPose>& external_odometry,
                                    const PipelineConfig& config) {
    AccumulationResult result;
    AccumulatorParams params;
    params.tau_move = config.tau_move;
    params.max_scans = config.max_scans;
    params.surfels = config.surfels;
    params.threads = config.threads;
    LocalMapAccumulator accumulator(params);
    std::optional<InternalOdometry> internal;
    if (external_odometry.empty()) internal.emplace(config);

    for (const auto& scan : scans) {
        const LabeledPointCloud filtered = filter_scan(scan, config.keep_classes);
        const SE3 pose = internal ? internal->advance(filtered)
                                  : interpolate_trajectory(external_odometry, scan.stamp);
        result.scan_stamps.push_back(scan.stamp);
        result.odometry.push_back({scan.stamp, pose});
        result.scan_segment.push_back(static_cast<int>(result.maps.size()));
        if (auto map = accumulator.add(filtered, pose)) result.maps.push_back(std::move(*map));
    }
    if (auto map = accumulator.finish()) result.maps.push_back(std::move(*map));
    for (auto& segment : result.scan_segment)
        segment = std::min(segment, static_cast<int>(result.maps.size()) - 1);
    return result;
}

// ---------------------------------------------------------------------------
// Refinement
// ---------------------------------------------------------------------------

namespace {

GnssSample interpolate_gnss(const std::vector<GnssSample>& samples, double stamp) {
    if (samples.empty()) throw std::runtime_error("no GNSS samples");
    auto it = std::lower_bound(samples.begin(), samples.end(), stamp,
                               [](const GnssSample& s, double t) { return s.stamp < t; });
    if (it == samples.begin()) return samples.front();
    if (it == samples.end()) return samples.back();
    const GnssSample& hi = *it;
    const GnssSample& lo = *(it - 1);
    const double denom = hi.stamp - lo.stamp;
    const double alpha = denom > 0.0 ? (stamp - lo.stamp) / denom : 0.0;
    GnssSample out;
    out.stamp = stamp;
    out.position = (1.0 - alpha) * lo.position + alpha * hi.position;
    out.sigma = (1.0 - alpha) * lo.sigma + alpha * hi.sigma;
    return out;
}

std::optional<double> nearest_mag_yaw(const std::vector<MagSample>& mag, double stamp,
                                      double max_gap = 0.5) {
    if (mag.empty()) return std::nullopt;
    auto it = std::lower_bound(mag.begin(), mag.end(), stamp,
                               [](const MagSample& s, double t) { return s.stamp < t; });
    const MagSample* best = nullptr;
    if (it != mag.end()) best = &*it;
    if (it != mag.begin() && (!best || stamp - (it - 1)->stamp < best->stamp - stamp))
        best = &*(it - 1);
    if (!best || std::abs(best->stamp - stamp) > max_gap) return std::nullopt;
    return best->yaw;
}

void roll_pitch_of(const SE3& pose, double& roll, double& pitch) {
    const Mat3 r = pose.rotation_matrix();
    pitch = std::asin(std::clamp(-r(2, 0), -1.0, 1.0));
    roll = std::atan2(r(2, 1), r(2, 2));
}

}  // namespace

std::vector<MapRefinement> refine_maps(const std::vector<LocalMap>& maps, const GeoModel& model,
                                       const std::vector<GnssSample>& gnss,
                                       const std::vector<MagSample>& mag,
                                       const std::vector<StampedPose>& odometry,
                                       const PipelineConfig& config) {
    std::vector<MapRefinement> out;
    GridSearchParams search = config.search;
    if (mag.empty() && search.yaw_steps <= 1) search.yaw_steps = 12;

    for (const auto& map : maps) {
        MapRefinement r;
        r.map_id = map.id;
        r.stamp = map.reference_stamp;

        const GnssSample fix = interpolate_gnss(gnss, map.reference_stamp);
        InitialPoseSource source;
        source.gnss_position = fix.position;
        source.gnss_sigma = fix.sigma;
        source.trust_gnss_altitude = config.trust_gnss_altitude;
        source.magnetometer_yaw = nearest_mag_yaw(mag, map.reference_stamp);
        if (!odometry.empty()) {
            const SE3 odom = interpolate_trajectory(odometry, map.reference_stamp);
            roll_pitch_of(odom, source.imu_roll, source.imu_pitch);
        }

        const SE3 init = initial_pose(source, model);
        const RefinementOutcome outcome =
            grid_refine(map, init, model, search, config.plausibility, config.registration,
                        config.threads);

        r.converged = outcome.best_index >= 0;
        r.score = outcome.score;
        r.kappa_fwd = outcome.kappa_fwd;
        r.kappa_bwd = outcome.kappa_bwd;
        r.accepted = outcome.accepted;
        r.reason = outcome.reason;
        if (outcome.best_index >= 0) {
            const Hypothesis& best = outcome.hypotheses[outcome.best_index];
            r.grid_offset = best.grid_offset;
            r.yaw_offset = best.yaw_offset;
            SE3 projected = outcome.refined_pose;
            projected.t = model.to_projected(projected.t);
            r.pose = projected;
        }
        out.push_back(std::move(r));
    }
    return out;
}

void write_refinements_csv(const std::string& path,
                           const std::vector<MapRefinement>& refinements,
                           const PipelineConfig& config) {
    auto os = open_text_out(path);
    for (const auto& line : config_header(config)) os << "# " << line << "\n";
    os << "# map_id,offset_e,offset_n,yaw,converged,s_W,kappa_fwd,kappa_bwd,accepted,"
          "t_ref_x,t_ref_y,t_ref_z,t_ref_qx,t_ref_qy,t_ref_qz,t_ref_qw\n";
    char buf[512];
    for (const auto& r : refinements) {
        const Vec4& q = r.pose.q;
        std::snprintf(buf, sizeof(buf),
                      "%d,%.6f,%.6f,%.6f,%d,%.6f,%.6g,%.6g,%d,%.6f,%.6f,%.6f,%.9f,%.9f,%.9f,%.9f\n",
                      r.map_id, r.grid_offset.x(), r.grid_offset.y(), r.yaw_offset,
                      r.converged ? 1 : 0, r.score, r.kappa_fwd, r.kappa_bwd,
                      r.accepted ? 1 : 0, r.pose.t.x(), r.pose.t.y(), r.pose.t.z(), q[1], q[2],
                      q[3], q[0]);
        os << buf;
    }
}

std::vector<MapRefinement> read_refinements_csv(const std::string& path) {
    std::vector<MapRefinement> out;
    const std::string text = read_text_file(path);
    std::size_t pos = 0;
    while (pos < text.size()) {
        auto eol = text.find('\n', pos);
        if (eol == std::string::npos) eol = text.size();
        const std::string line = text.substr(pos, eol - pos);
        pos = eol + 1;
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') continue;
        std::vector<double> f;
        const char* p = line.c_str();
        while (*p != '\0') {
            while (*p == ' ' || *p == '\t' || *p == ',') ++p;
            if (*p == '\0') break;
            char* next = nullptr;
            f.push_back(std::strtod(p, &next));
            if (next == p) throw ParseError(path + ": bad refinement row");
            p = next;
        }
        if (f.size() != 16) throw ParseError(path + ": expected 16 fields per row");
        MapRefinement r;
        r.map_id = static_cast<int>(f[0]);
        r.grid_offset = Vec2(f[1], f[2]);
        r.yaw_offset = f[3];
        r.converged = f[4] != 0.0;
        r.score = f[5];
        r.kappa_fwd = f[6];
        r.kappa_bwd = f[7];
        r.accepted = f[8] != 0.0;
        r.pose = SE3(Eigen::Quaterniond(f[15], f[12], f[13], f[14]), Vec3(f[9], f[10], f[11]));
        out.push_back(r);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Global optimization
// ---------------------------------------------------------------------------

OptimizePipelineResult optimize_pipeline(const std::vector<LabeledPointCloud>& scans,
                                         const std::vector<ImuSample>& imu,
                                         const std::vector<GnssSample>& gnss,
                                         const std::vector<MapRefinement>& refinements,
                                         const std::vector<StampedPose>& odometry,
                                         const PipelineConfig& config) {
    OptimizePipelineResult result;
    AccumulationResult acc = accumulate_scans(scans, odometry, config);
    if (acc.maps.empty()) throw std::runtime_error("optimize: no local maps accumulated");

    PoseGraph& graph = result.graph;
    graph.spline = fit_initial_spline(acc.odometry, config.knot_dt, config.spline_order);
    graph.gravity = config.gravity;
    graph.biases.assign(acc.maps.size(), ImuBias{});

    std::map<int, double> map_stamp;  // id -> reference stamp
    for (const auto& map : acc.maps) map_stamp[map.id] = map.reference_stamp;

    // anchor initialization from accepted refinements; raw GNSS fallback
    std::vector<std::pair<double, Vec3>> anchor_pairs;
    for (const auto& r : refinements) {
        if (!r.accepted) continue;
        const auto it = map_stamp.find(r.map_id);
        if (it == map_stamp.end()) continue;
        anchor_pairs.emplace_back(it->second, r.pose.t);
    }
    const bool have_refined = anchor_pairs.size() >= 2;
    if (!have_refined) {
        anchor_pairs.clear();
        for (const auto& g : gnss) {
            if (g.stamp < graph.spline.support_begin() ||
                g.stamp >= graph.spline.support_end())
                continue;
            anchor_pairs.emplace_back(g.stamp, g.position);
        }
    }
    graph.anchor = initialize_anchor(anchor_pairs, graph.spline);
    result.anchor_initial = graph.anchor;

    // weak anchor prior fixes the internal anchor/knots gauge
    {
        GraphEdge edge;
        edge.kind = EdgeKind::AnchorPrior;
        edge.measurement = graph.anchor;
        Vec6 sigma;
        sigma.head<3>().setConstant(config.anchor_prior_sigma_translation);
        sigma.tail<3>().setConstant(config.anchor_prior_sigma_rotation);
        edge.covariance = sigma.array().square().matrix().asDiagonal();
        graph.edges.push_back(std::move(edge));
    }

    // bias priors and random walk chain
    {
        GraphEdge prior;
        prior.kind = EdgeKind::BiasPrior;
        prior.bias0 = 0;
        Vec6 sigma;
        sigma.head<3>().setConstant(0.02);
        sigma.tail<3>().setConstant(0.2);
        prior.covariance = sigma.array().square().matrix().asDiagonal();
        graph.edges.push_back(std::move(prior));
        for (std::size_t b = 1; b < graph.biases.size(); ++b) {
            GraphEdge walk;
            walk.kind = EdgeKind::BiasWalk;
            walk.bias0 = static_cast<int>(b - 1);
            walk.bias1 = static_cast<int>(b);
            const double gap = std::max(
                0.1, acc.maps[b].reference_stamp - acc.maps[b - 1].reference_stamp);
            Vec6 sigma_walk;
            sigma_walk.head<3>().setConstant(config.imu_noise.sigma_gyro_walk * std::sqrt(gap) +
                                             1e-6);
            sigma_walk.tail<3>().setConstant(config.imu_noise.sigma_accel_walk * std::sqrt(gap) +
                                             1e-5);
            walk.covariance = sigma_walk.array().square().matrix().asDiagonal();
            graph.edges.push_back(std::move(walk));
        }
    }

    // odometry edges: every scan against the keyframe (first scan) of its map
    {
        Vec6 sigma;
        sigma.head<3>().setConstant(config.sigma_odom_translation);
        sigma.tail<3>().setConstant(config.sigma_odom_rotation);
        const Eigen::MatrixXd cov = sigma.array().square().matrix().asDiagonal();
        for (std::size_t s = 0; s < acc.scan_stamps.size(); ++s) {
            const int segment = acc.scan_segment[s];
            const double t_key = acc.maps[segment].reference_stamp;
            const double t_scan = acc.scan_stamps[s];
            if (std::abs(t_scan - t_key) < 1e-9) continue;
            GraphEdge edge;
            edge.kind = EdgeKind::Odometry;
            edge.t0 = t_key;
            edge.t1 = t_scan;
            const SE3 pose_key = interpolate_trajectory(acc.odometry, t_key);
            const SE3 pose_scan = interpolate_trajectory(acc.odometry, t_scan);
            edge.measurement = pose_key.inverse() * pose_scan;
            edge.covariance = cov;
            edge.huber_delta = config.graph_huber_delta;
            graph.edges.push_back(std::move(edge));
        }
    }

    // preintegrated IMU between consecutive scans
    if (!imu.empty()) {
        for (std::size_t s = 0; s + 1 < acc.scan_stamps.size(); ++s) {
            const double t0 = acc.scan_stamps[s];
            const double t1 = acc.scan_stamps[s + 1];
            GraphEdge edge;
            edge.kind = EdgeKind::Imu;
            edge.t0 = t0;
            edge.t1 = t1;
            edge.bias0 = acc.scan_segment[s];
            edge.delta = preintegrate(slice_imu_interval(imu, t0, t1),
                                      graph.biases[edge.bias0], config.imu_noise);
            Mat9 cov = edge.delta.covariance;
            cov.diagonal().array() += 1e-10;
            edge.covariance = cov;
            edge.huber_delta = config.graph_huber_delta;
            graph.edges.push_back(std::move(edge));
        }
    }

    // absolute constraints: refined full poses, raw GNSS positions
    std::map<int, SE3> refined_by_map;
    int accepted_refinements = 0;
    for (const auto& r : refinements) {
        if (!r.accepted) continue;
        const auto it = map_stamp.find(r.map_id);
        if (it == map_stamp.end()) continue;
        ++accepted_refinements;
        refined_by_map[r.map_id] = r.pose;
        GraphEdge edge;
        edge.kind = EdgeKind::AbsolutePose;
        edge.t0 = it->second;
        edge.measurement = r.pose;
        Vec6 sigma;
        sigma.head<3>().setConstant(config.sigma_refined_translation);
        sigma.tail<3>().setConstant(config.sigma_refined_rotation);
        edge.covariance = sigma.array().square().matrix().asDiagonal();
        edge.huber_delta = config.graph_huber_delta;
        graph.edges.push_back(std::move(edge));
    }
    const bool use_raw = config.raw_gnss_mode == "always" ||
                         (config.raw_gnss_mode == "fallback" && accepted_refinements == 0);
    if (use_raw) {
        for (const auto& g : gnss) {
            if (g.stamp < graph.spline.support_begin() ||
                g.stamp >= graph.spline.support_end())
                continue;
            GraphEdge edge;
            edge.kind = EdgeKind::AbsolutePosition;
            edge.t0 = g.stamp;
            edge.position = g.position;
            Vec3 sigma = g.sigma;
            if (!(sigma.minCoeff() > 0.0)) sigma.setConstant(config.gnss_default_sigma);
            edge.covariance = sigma.array().square().matrix().asDiagonal();
            edge.huber_delta = config.graph_huber_delta;
            graph.edges.push_back(std::move(edge));
        }
    }

    // loop closures between neighboring maps
    {
        LoopClosureParams params;
        params.spatial_radius = config.loop_radius;
        params.path_fraction_gate = config.loop_path_fraction;
        params.registration = config.registration;
        params.huber_delta = config.graph_huber_delta;
        const auto candidates =
            propose_loop_closures(acc.maps, refined_by_map, acc.odometry, graph.spline, params);
        for (const auto& c : candidates)
            if (c.accepted) graph.edges.push_back(c.edge);
    }

    OptimizeOptions options;
    options.threads = config.threads;
    options.max_iterations = config.optimizer_max_iterations;
    result.report = optimize(graph, options);

    // trajectory and merged map in the projected frame
    result.trajectory.reserve(acc.scan_stamps.size());
    for (double t : acc.scan_stamps)
        result.trajectory.push_back({t, graph.anchor * graph.spline.evaluate(t)});

    std::size_t total_points = 0;
    for (const auto& scan : scans) total_points += scan.points.size();
    result.merged_map.reserve(total_points);
    for (std::size_t s = 0; s < scans.size(); ++s) {
        const LabeledPointCloud filtered = filter_scan(scans[s], config.keep_classes);
        const SE3& world_from_body = result.trajectory[s].pose;
        for (const auto& p : filtered.points)
            result.merged_map.push_back(world_from_body * p.position());
    }
    return result;
}

EvaluationResult evaluate_trajectory(const std::vector<StampedPose>& estimate,
                                     const std::vector<StampedPose>& truth) {
    if (estimate.empty()) throw std::runtime_error("evaluate: empty estimate");
    if (truth.empty()) throw std::runtime_error("evaluate: empty reference");
    EvaluationResult result;
    double sum_sq = 0.0;
    for (const auto& sp : estimate) {
        const SE3 ref = interpolate_trajectory(truth, sp.stamp, 0.5);
        const double err = (sp.pose.t - ref.t).norm();
        sum_sq += err * err;
        result.max_error = std::max(result.max_error, err);
    }
    result.count = estimate.size();
    result.rmse = std::sqrt(sum_sq / static_cast<double>(estimate.size()));
    return result;
}

// ---------------------------------------------------------------------------
// Scene spec (JSON)
// ---------------------------------------------------------------------------

SceneSpec parse_scene_spec(const std::string& json_text) {
    const auto j = nlohmann::json::parse(json_text);
    SceneSpec spec;
    const Vec2 origin(j.value("projected_origin", std::vector<double>{0.0, 0.0})[0],
                      j.value("projected_origin", std::vector<double>{0.0, 0.0})[1]);

    spec.scene.rng_seed = j.value("seed", 1ull);
    spec.scene.ground.base_height = j.value("ground_height", 60.0);
    spec.scene.ground.slope_x = j.value("ground_slope_x", 0.0);
    spec.scene.ground.slope_y = j.value("ground_slope_y", 0.0);
    spec.scene.ground.reference_xy = origin;
    const double half = j.value("area_half_extent", 60.0);
    spec.scene.area_min = origin - Vec2(half, half);
    spec.scene.area_max = origin + Vec2(half, half);

    if (j.contains("buildings")) {
        for (const auto& b : j.at("buildings")) {
            BuildingBox box;
            const auto center = b.at("center").get<std::vector<double>>();
            box.center = origin + Vec2(center.at(0), center.at(1));
            const auto size = b.at("size").get<std::vector<double>>();
            box.half_x = size.at(0) * 0.5;
            box.half_y = size.at(1) * 0.5;
            box.yaw = deg2rad(b.value("yaw_deg", 0.0));
            box.height = b.at("height").get<double>();
            spec.scene.buildings.push_back(box);
        }
    }
    if (j.contains("clutter")) {
        for (const auto& c : j.at("clutter")) {
            ClutterBlob blob;
            const auto center = c.at("center").get<std::vector<double>>();
            blob.center = Vec3(origin.x() + center.at(0), origin.y() + center.at(1), center.at(2));
            blob.radius = c.value("radius", 1.0);
            blob.label = static_cast<std::uint8_t>(
                c.value("label", static_cast<int>(PointClass::Vegetation)));
            spec.scene.clutter.push_back(blob);
        }
    }

    if (!j.contains("waypoints")) throw std::runtime_error("scene config: waypoints required");
    for (const auto& w : j.at("waypoints")) {
        const auto v = w.get<std::vector<double>>();
        spec.waypoints.emplace_back(origin.x() + v.at(0), origin.y() + v.at(1),
                                    spec.scene.ground.base_height + v.at(2));
    }

    spec.flight.start_time = j.value("start_time", 1000.0);
    spec.flight.duration = j.value("duration", 60.0);
    spec.flight.yaw_mode = j.value("yaw_mode", std::string("path")) == "fixed"
                               ? FlightTrajectory::YawMode::Fixed
                               : FlightTrajectory::YawMode::Path;
    spec.flight.odom_drift_per_m = j.value("odom_drift_per_m", 0.0);
    spec.flight.odom_yaw_drift_per_m = j.value("odom_yaw_drift_per_m", 0.0);

    spec.rig.scan_rate = j.value("scan_rate", 10.0);
    spec.rig.lidar.channels = j.value("lidar_channels", 16);
    spec.rig.lidar.azimuth_steps = j.value("lidar_azimuth_steps", 256);
    spec.rig.lidar.vfov_min = deg2rad(j.value("lidar_vfov_min_deg", -40.0));
    spec.rig.lidar.vfov_max = deg2rad(j.value("lidar_vfov_max_deg", 15.0));
    spec.rig.lidar.max_range = j.value("lidar_max_range", 80.0);
    spec.rig.lidar.sigma_range = j.value("lidar_sigma_range", 0.02);
    spec.rig.imu.rate = j.value("imu_rate", 200.0);
    if (j.contains("imu_gyro_bias")) {
        const auto v = j.at("imu_gyro_bias").get<std::vector<double>>();
        spec.rig.imu.gyro_bias = Vec3(v.at(0), v.at(1), v.at(2));
    }
    if (j.contains("imu_accel_bias")) {
        const auto v = j.at("imu_accel_bias").get<std::vector<double>>();
        spec.rig.imu.accel_bias = Vec3(v.at(0), v.at(1), v.at(2));
    }
    spec.rig.gnss.rate = j.value("gnss_rate", 5.0);
    if (j.contains("gnss_sigma")) {
        const auto v = j.at("gnss_sigma").get<std::vector<double>>();
        spec.rig.gnss.sigma = Vec3(v.at(0), v.at(1), v.at(2));
    }
    if (j.contains("gnss_offset")) {
        const auto v = j.at("gnss_offset").get<std::vector<double>>();
        spec.rig.gnss.offset = Vec3(v.at(0), v.at(1), v.size() > 2 ? v.at(2) : 0.0);
    }
    spec.rig.gnss.offset_start = j.value("gnss_offset_start", 0.0);
    spec.rig.mag.available = j.value("mag_available", true);
    spec.rig.mag.sigma_yaw = deg2rad(j.value("mag_sigma_yaw_deg", 3.0));
    return spec;
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

void cmd_build_model(const BuildModelArgs& args, const PipelineConfig& config) {
    const GeoModel model = build_model_from_files(args.citygml, args.dem, config);
    save_model(model, args.out);
}

void cmd_simulate(const SimulateArgs& args, const PipelineConfig& config) {
    (void)config;
    const SceneSpec spec = parse_scene_spec(read_text_file(args.scene_config));
    const FlightData flight =
        generate_flight(spec.scene, spec.waypoints, spec.rig, spec.flight);
    write_flight_dataset(spec.scene, flight, args.out_dir);
    std::filesystem::copy_file(args.scene_config, args.out_dir + "/scene.json",
                               std::filesystem::copy_options::overwrite_existing);
}

namespace {

std::vector<StampedPose> load_odometry_arg(const std::string& odometry) {
    if (odometry.empty() || odometry == "internal") return {};
    return read_tum(odometry);
}

}  // namespace

void cmd_refine(const RefineArgs& args, const PipelineConfig& config) {
    const GeoModel model = load_model(args.model, config.model);
    const auto scans = load_scan_directory(args.scans_dir);
    const auto gnss = read_gnss_csv(args.gnss);
    const std::vector<MagSample> mag =
        args.mag.empty() ? std::vector<MagSample>{} : read_mag_csv(args.mag);
    const auto odometry = load_odometry_arg(args.odometry);
    const AccumulationResult acc = accumulate_scans(scans, odometry, config);
    const auto refinements = refine_maps(acc.maps, model, gnss, mag, acc.odometry, config);
    write_refinements_csv(args.out, refinements, config);
}

void cmd_optimize(const OptimizeArgs& args, const PipelineConfig& config) {
    const auto scans = load_scan_directory(args.scans_dir);
    const auto imu = args.imu.empty() ? std::vector<ImuSample>{} : read_imu_csv(args.imu);
    const auto gnss = read_gnss_csv(args.gnss);
    const auto refinements = args.refinements.empty() ? std::vector<MapRefinement>{}
                                                      : read_refinements_csv(args.refinements);
    const auto odometry = load_odometry_arg(args.odometry);

    const OptimizePipelineResult result =
        optimize_pipeline(scans, imu, gnss, refinements, odometry, config);

    write_tum(args.out_trajectory, result.trajectory);
    if (!args.out_map.empty()) {
        if (args.out_map.size() >= 4 && args.out_map.substr(args.out_map.size() - 4) == ".lpc")
            write_lpc1_unlabeled(args.out_map, result.trajectory.front().stamp,
                                 result.merged_map);
        else
            write_xyz(args.out_map, result.merged_map);
    }
    if (!args.report.empty()) {
        auto os = open_text_out(args.report);
        for (const auto& line : config_header(config)) os << "# " << line << "\n";
        os << result.report.to_text();
    }
    if (!args.dump_graph.empty()) save_graph(result.graph, args.dump_graph);
    if (!args.save_spline.empty()) save_spline(result.graph.spline, args.save_spline);
}

EvaluationResult cmd_evaluate(const EvaluateArgs& args, const PipelineConfig& config) {
    const auto estimate = read_tum(args.estimate);
    const auto truth = read_tum(args.truth);
    const EvaluationResult result = evaluate_trajectory(estimate, truth);
    auto os = open_text_out(args.out);
    for (const auto& line : config_header(config)) os << "# " << line << "\n";
    char buf[128];
    std::snprintf(buf, sizeof(buf), "rmse_m %.3f\nrmse_m_full %.9f\nmax_error_m %.9f\ncount %zu\n",
                  result.rmse, result.rmse, result.max_error, result.count);
    os << buf;
    return result;
}

}  // namespace georef
