#pragma once

#include <string>
#include <vector>

#include "georef/common.hpp"
#include "georef/lie.hpp"

namespace georef {

struct StampedPose {
    double stamp = 0.0;
    SE3 pose;
};

struct GnssSample {
    double stamp = 0.0;
    Vec3 position = Vec3::Zero();  // easting, northing, height (projected frame)
    Vec3 sigma = Vec3(3.0, 3.0, 3.0);
};

struct ImuSample {
    double stamp = 0.0;
    Vec3 gyro = Vec3::Zero();   // rad/s
    Vec3 accel = Vec3::Zero();  // m/s^2, specific force
};

struct MagSample {
    double stamp = 0.0;
    double yaw = 0.0;  // rad, heading in the projected frame
};

// TUM trajectory text: "stamp tx ty tz qx qy qz qw", '#' comments skipped.
std::vector<StampedPose> read_tum(const std::string& path);
void write_tum(const std::string& path, const std::vector<StampedPose>& trajectory,
               const std::vector<std::string>& header_comments = {});

// Interpolates the trajectory at `stamp` (linear + slerp between brackets).
// Throws when the stamp is outside the covered range by more than `slack`.
SE3 interpolate_trajectory(const std::vector<StampedPose>& trajectory, double stamp,
                           double slack = 0.05);

// CSV "stamp, easting, northing, height, sigma_e, sigma_n, sigma_h"
std::vector<GnssSample> read_gnss_csv(const std::string& path);
void write_gnss_csv(const std::string& path, const std::vector<GnssSample>& samples,
                    const std::vector<std::string>& header_comments = {});

// CSV "stamp, gx, gy, gz, ax, ay, az"
std::vector<ImuSample> read_imu_csv(const std::string& path);
void write_imu_csv(const std::string& path, const std::vector<ImuSample>& samples,
                   const std::vector<std::string>& header_comments = {});

// CSV "stamp, yaw"
std::vector<MagSample> read_mag_csv(const std::string& path);
void write_mag_csv(const std::string& path, const std::vector<MagSample>& samples,
                   const std::vector<std::string>& header_comments = {});

// ASCII "x y z" point list.
void write_xyz(const std::string& path, const std::vector<Vec3>& points);

}  // namespace georef
