#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace georef {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Vec9 = Eigen::Matrix<double, 9, 1>;
using Mat3 = Eigen::Matrix3d;
using Mat6 = Eigen::Matrix<double, 6, 6>;
using Mat9 = Eigen::Matrix<double, 9, 9>;

// Thrown by the geodata / stream parsers. Carries enough context (byte
// offset or line number) to point at the offending input.
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& msg, std::int64_t byte_offset = -1, std::int64_t line = -1)
        : std::runtime_error(format(msg, byte_offset, line)),
          byte_offset_(byte_offset),
          line_(line) {}

    std::int64_t byte_offset() const { return byte_offset_; }
    std::int64_t line() const { return line_; }

private:
    static std::string format(const std::string& msg, std::int64_t off, std::int64_t line) {
        std::string s = msg;
        if (off >= 0) s += " (byte offset " + std::to_string(off) + ")";
        if (line >= 0) s += " (line " + std::to_string(line) + ")";
        return s;
    }
    std::int64_t byte_offset_;
    std::int64_t line_;
};

// Semantic class ids shared between the simulator, the scan filter and the
// LPC1 scan files.
enum class PointClass : std::uint8_t {
    Ground = 0,
    Building = 1,
    Vegetation = 2,
    Person = 3,
    Other = 4,
};

constexpr double kPi = 3.14159265358979323846;

inline double deg2rad(double d) { return d * kPi / 180.0; }
inline double rad2deg(double r) { return r * 180.0 / kPi; }

}  // namespace georef
