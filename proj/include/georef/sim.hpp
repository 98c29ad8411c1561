#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "georef/common.hpp"
#include "georef/io.hpp"
#include "georef/lie.hpp"
#include "georef/scan_pipeline.hpp"

namespace georef {

// Deterministic counter-based random stream (splitmix64 + Box-Muller), so
// that noise is reproducible independently of evaluation order.
class HashRng {
public:
    explicit HashRng(std::uint64_t seed) : state_(seed) {}
    static HashRng keyed(std::uint64_t seed, std::uint64_t a, std::uint64_t b);

    std::uint64_t next();
    double uniform();   // [0, 1)
    double gaussian();  // standard normal

private:
    std::uint64_t state_;
};

struct BuildingBox {
    Vec2 center = Vec2::Zero();  // projected frame (m)
    double half_x = 10.0;
    double half_y = 10.0;
    double yaw = 0.0;            // rad
    double height = 15.0;        // above ground at the building center
};

struct GroundModel {
    double base_height = 60.0;   // at reference_xy
    double slope_x = 0.0;
    double slope_y = 0.0;
    Vec2 reference_xy = Vec2::Zero();

    double height_at(const Vec2& p) const {
        return base_height + slope_x * (p.x() - reference_xy.x()) +
               slope_y * (p.y() - reference_xy.y());
    }
};

struct ClutterBlob {
    Vec3 center = Vec3::Zero();
    double radius = 1.0;
    std::uint8_t label = static_cast<std::uint8_t>(PointClass::Vegetation);
};

struct SyntheticScene {
    GroundModel ground;
    std::vector<BuildingBox> buildings;
    std::vector<ClutterBlob> clutter;
    Vec2 area_min = Vec2::Zero();  // DEM export extent, projected frame
    Vec2 area_max = Vec2::Zero();
    std::uint64_t rng_seed = 1;

    double building_base(const BuildingBox& b) const { return ground.height_at(b.center); }
};

struct LidarConfig {
    int channels = 16;
    int azimuth_steps = 256;
    double vfov_min = deg2rad(-40.0);
    double vfov_max = deg2rad(15.0);
    double max_range = 80.0;
    double sigma_range = 0.02;
};

struct ImuConfig {
    double rate = 200.0;
    double sigma_gyro = 1.7e-4;
    double sigma_accel = 2.0e-3;
    Vec3 gyro_bias = Vec3::Zero();
    Vec3 accel_bias = Vec3::Zero();
};

struct GnssConfig {
    double rate = 5.0;
    Vec3 sigma = Vec3(0.8, 0.8, 1.5);
    Vec3 offset = Vec3::Zero();        // constant injected bias
    double offset_start = 0.0;         // s from flight start; before: zero offset
};

struct MagConfig {
    double rate = 10.0;
    double sigma_yaw = deg2rad(3.0);
    bool available = true;
};

struct SensorRig {
    LidarConfig lidar;
    ImuConfig imu;
    GnssConfig gnss;
    MagConfig mag;
    double scan_rate = 10.0;
};

// Exact first intersection of a world-frame ray with the scene.
struct RayHit {
    double range = 0.0;
    std::uint8_t label = 0;
};
std::optional<RayHit> cast_ray(const SyntheticScene& scene, const Vec3& origin, const Vec3& dir,
                               double max_range);

// Renders one scan at the given body pose (sensor == body frame). Points are
// returned in the sensor frame; determinism is keyed on (seed, scan_index).
LabeledPointCloud render_scan(const SyntheticScene& scene, const SE3& pose,
                              const LidarConfig& lidar, std::uint64_t seed,
                              std::uint64_t scan_index, double stamp);

// C2-smooth trajectory through waypoints: natural cubic splines per axis
// plus a yaw spline (constant or path-following).
class FlightTrajectory {
public:
    enum class YawMode { Fixed, Path };

    FlightTrajectory(const std::vector<Vec3>& waypoints, double start_time, double duration,
                     YawMode yaw_mode, double fixed_yaw = 0.0);

    double start_time() const { return t_begin_; }
    double end_time() const { return t_end_; }

    Vec3 position(double t) const;
    Vec3 velocity(double t) const;
    Vec3 acceleration(double t) const;
    double yaw(double t) const;
    double yaw_rate(double t) const;
    SE3 pose(double t) const;

private:
    struct Cubic {
        std::vector<double> ts, ys, m;  // natural cubic second derivatives
        double value(double t) const;
        double deriv(double t) const;
        double deriv2(double t) const;
    };
    Cubic axes_[3];
    Cubic yaw_spline_;
    double t_begin_ = 0.0, t_end_ = 0.0;
};

struct FlightData {
    std::vector<LabeledPointCloud> scans;  // sensor frame
    std::vector<StampedPose> truth;        // body -> projected frame, at scan stamps
    std::vector<StampedPose> odometry;     // body -> odometry frame (drifting)
    std::vector<ImuSample> imu;
    std::vector<GnssSample> gnss;
    std::vector<MagSample> mag;
};

struct FlightOptions {
    double start_time = 1000.0;
    double duration = 60.0;
    FlightTrajectory::YawMode yaw_mode = FlightTrajectory::YawMode::Path;
    double odom_drift_per_m = 0.0;      // position drift fraction of distance
    double odom_yaw_drift_per_m = 0.0;  // rad per meter
};

FlightData generate_flight(const SyntheticScene& scene, const std::vector<Vec3>& waypoints,
                           const SensorRig& rig, const FlightOptions& options);

// Scene exporters producing exactly the external formats the pipeline
// ingests (CityGML-subset XML and DEM XYZ at 1 m pitch).
std::string scene_to_citygml(const SyntheticScene& scene);
std::string scene_to_dem_xyz(const SyntheticScene& scene, double pitch = 1.0);

// Writes citygml.xml, dem.xyz, scans/NNNNNN.lpc, imu.csv, gnss.csv, mag.csv,
// truth.tum and odometry.tum under out_dir.
void write_flight_dataset(const SyntheticScene& scene, const FlightData& flight,
                          const std::string& out_dir);

}  // namespace georef
