#pragma once

#include <functional>
#include <set>
#include <string>
#include <vector>

#include "georef/common.hpp"
#include "georef/lie.hpp"
#include "georef/surfel_map.hpp"

namespace georef {

struct LabeledPoint {
    float x = 0, y = 0, z = 0;
    std::uint8_t label = 0;

    Vec3 position() const { return Vec3(x, y, z); }
};

struct LabeledPointCloud {
    double stamp = 0.0;
    std::vector<LabeledPoint> points;
};

// Aggregation of motion-separated filtered scans, expressed in the frame of
// the first accepted scan.
struct LocalMap {
    int id = 0;
    double reference_stamp = 0.0;
    std::vector<LabeledPointCloud> scans;   // filtered, sensor frame
    std::vector<SE3> scan_poses;            // scan frame -> local-map frame
    std::vector<Vec3> merged_points;        // local-map frame
    SurfelMap surfels;
};

// Keeps points whose label is in keep_classes; order preserved.
LabeledPointCloud filter_scan(const LabeledPointCloud& scan,
                              const std::set<std::uint8_t>& keep_classes);

struct AccumulatorParams {
    double tau_move = 0.5;   // m moved since the last accepted scan
    int max_scans = 20;
    SurfelMapParams surfels;
    int threads = 1;
};

// Motion-gated local-map builder. Scans arrive filtered and time-ordered
// together with their odometry pose (scan frame -> odometry frame).
class LocalMapAccumulator {
public:
    explicit LocalMapAccumulator(const AccumulatorParams& params) : params_(params) {}

    // Returns a finished local map when max_scans accepted scans are reached.
    std::optional<LocalMap> add(const LabeledPointCloud& filtered_scan, const SE3& odom_pose);

    // Emits the partially filled map at end of stream, if any.
    std::optional<LocalMap> finish();

private:
    std::optional<LocalMap> emit();

    AccumulatorParams params_;
    LocalMap current_;
    std::vector<SE3> odom_poses_;  // odometry poses of accepted scans
    int next_id_ = 0;
    double last_stamp_ = -std::numeric_limits<double>::infinity();
    bool has_accepted_ = false;
    Vec3 last_accepted_position_ = Vec3::Zero();
};

// LPC1 scan file: magic "LPC1", stamp f64, count u32, then per point
// x,y,z f32 and label u8. Little-endian.
void write_lpc1(const std::string& path, const LabeledPointCloud& cloud);
LabeledPointCloud read_lpc1(const std::string& path);

// Unlabeled variant used for the exported georeferenced map: same framing
// without the per-point label byte.
void write_lpc1_unlabeled(const std::string& path, double stamp, const std::vector<Vec3>& points);
std::vector<Vec3> read_lpc1_unlabeled(const std::string& path);

// Lexicographically sorted *.lpc files of a directory (time order).
std::vector<std::string> list_scan_files(const std::string& directory);

}  // namespace georef
