#include "georef/scan_pipeline.hpp"

#include <algorithm>
#include <filesystem>

#include "georef/io_util.hpp"

namespace georef {

LabeledPointCloud filter_scan(const LabeledPointCloud& scan,
                              const std::set<std::uint8_t>& keep_classes) {
    LabeledPointCloud out;
    out.stamp = scan.stamp;
    out.points.reserve(scan.points.size());
    for (const auto& p : scan.points)
        if (keep_classes.count(p.label)) out.points.push_back(p);
    return out;
}

std::optional<LocalMap> LocalMapAccumulator::add(const LabeledPointCloud& filtered_scan,
                                                 const SE3& odom_pose) {
    if (filtered_scan.stamp <= last_stamp_)
        throw std::runtime_error("accumulate: non-monotonic timestamp " +
                                 std::to_string(filtered_scan.stamp));
    last_stamp_ = filtered_scan.stamp;

    if (has_accepted_ && (odom_pose.t - last_accepted_position_).norm() <= params_.tau_move)
        return std::nullopt;

    if (current_.scans.empty()) {
        current_.id = next_id_++;
        current_.reference_stamp = filtered_scan.stamp;
    }
    current_.scans.push_back(filtered_scan);
    odom_poses_.push_back(odom_pose);
    has_accepted_ = true;
    last_accepted_position_ = odom_pose.t;

    if (static_cast<int>(current_.scans.size()) >= params_.max_scans) return emit();
    return std::nullopt;
}

std::optional<LocalMap> LocalMapAccumulator::finish() {
    if (current_.scans.empty()) return std::nullopt;
    return emit();
}

std::optional<LocalMap> LocalMapAccumulator::emit() {
    LocalMap map = std::move(current_);
    current_ = LocalMap{};

    const SE3 world_from_ref = odom_poses_.front();
    const SE3 ref_from_world = world_from_ref.inverse();
    map.scan_poses.reserve(odom_poses_.size());
    for (const auto& pose : odom_poses_) map.scan_poses.push_back(ref_from_world * pose);
    odom_poses_.clear();

    std::size_t total = 0;
    for (const auto& s : map.scans) total += s.points.size();
    map.merged_points.reserve(total);
    for (std::size_t i = 0; i < map.scans.size(); ++i) {
        const SE3& pose = map.scan_poses[i];
        for (const auto& p : map.scans[i].points) map.merged_points.push_back(pose * p.position());
    }
    map.surfels = build_surfel_map(map.merged_points, params_.surfels, params_.threads);
    return map;
}

void write_lpc1(const std::string& path, const LabeledPointCloud& cloud) {
    check_little_endian();
    auto os = open_binary_out(path);
    write_magic(os, "LPC1");
    write_le<double>(os, cloud.stamp);
    write_le<std::uint32_t>(os, static_cast<std::uint32_t>(cloud.points.size()));
    for (const auto& p : cloud.points) {
        write_le<float>(os, p.x);
        write_le<float>(os, p.y);
        write_le<float>(os, p.z);
        write_le<std::uint8_t>(os, p.label);
    }
    if (!os) throw std::runtime_error("failed writing scan: " + path);
}

LabeledPointCloud read_lpc1(const std::string& path) {
    check_little_endian();
    auto is = open_binary_in(path);
    expect_magic(is, "LPC1", path);
    LabeledPointCloud cloud;
    cloud.stamp = read_le<double>(is);
    const auto n = read_le<std::uint32_t>(is);
    cloud.points.resize(n);
    for (auto& p : cloud.points) {
        p.x = read_le<float>(is);
        p.y = read_le<float>(is);
        p.z = read_le<float>(is);
        p.label = read_le<std::uint8_t>(is);
    }
    return cloud;
}

void write_lpc1_unlabeled(const std::string& path, double stamp,
                          const std::vector<Vec3>& points) {
    check_little_endian();
    auto os = open_binary_out(path);
    write_magic(os, "LPC1");
    write_le<double>(os, stamp);
    write_le<std::uint32_t>(os, static_cast<std::uint32_t>(points.size()));
    for (const auto& p : points) {
        write_le<float>(os, static_cast<float>(p.x()));
        write_le<float>(os, static_cast<float>(p.y()));
        write_le<float>(os, static_cast<float>(p.z()));
    }
    if (!os) throw std::runtime_error("failed writing point cloud: " + path);
}

std::vector<Vec3> read_lpc1_unlabeled(const std::string& path) {
    check_little_endian();
    auto is = open_binary_in(path);
    expect_magic(is, "LPC1", path);
    (void)read_le<double>(is);
    const auto n = read_le<std::uint32_t>(is);
    std::vector<Vec3> points(n);
    for (auto& p : points) {
        p.x() = read_le<float>(is);
        p.y() = read_le<float>(is);
        p.z() = read_le<float>(is);
    }
    return points;
}

std::vector<std::string> list_scan_files(const std::string& directory) {
    std::vector<std::string> files;
    for (const auto& entry : std::filesystem::directory_iterator(directory)) {
        if (entry.is_regular_file() && entry.path().extension() == ".lpc")
            files.push_back(entry.path().string());
    }
    std::sort(files.begin(), files.end());
    if (files.empty())
        throw std::runtime_error("no .lpc scan files in directory: " + directory);
    return files;
}

}  // namespace georef
