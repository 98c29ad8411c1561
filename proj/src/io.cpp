#include "georef/io.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>

#include "georef/io_util.hpp"

namespace georef {

namespace {

// Splits a text file into trimmed, non-empty, non-comment lines.
std::vector<std::pair<std::int64_t, std::string>> data_lines(const std::string& path) {
    const std::string text = read_text_file(path);
    std::vector<std::pair<std::int64_t, std::string>> lines;
    std::size_t pos = 0;
    std::int64_t line_no = 0;
    while (pos < text.size()) {
        auto eol = text.find('\n', pos);
        if (eol == std::string::npos) eol = text.size();
        std::string line = text.substr(pos, eol - pos);
        pos = eol + 1;
        ++line_no;
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') continue;
        const auto last = line.find_last_not_of(" \t\r");
        lines.emplace_back(line_no, line.substr(first, last - first + 1));
    }
    return lines;
}

std::vector<double> parse_fields(const std::string& line, std::size_t expected,
                                 const std::string& path, std::int64_t line_no) {
    std::vector<double> out;
    const char* p = line.c_str();
    while (*p != '\0') {
        while (*p == ' ' || *p == '\t' || *p == ',') ++p;
        if (*p == '\0') break;
        char* next = nullptr;
        const double v = std::strtod(p, &next);
        if (next == p) throw ParseError(path + ": non-numeric token", -1, line_no);
        out.push_back(v);
        p = next;
    }
    if (out.size() != expected)
        throw ParseError(path + ": expected " + std::to_string(expected) + " fields, got " +
                             std::to_string(out.size()),
                         -1, line_no);
    return out;
}

std::ofstream open_text_out(const std::string& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    return os;
}

void write_comments(std::ofstream& os, const std::vector<std::string>& comments) {
    for (const auto& c : comments) os << "# " << c << "\n";
}

}  // namespace

std::vector<StampedPose> read_tum(const std::string& path) {
    std::vector<StampedPose> out;
    for (const auto& [line_no, line] : data_lines(path)) {
        const auto f = parse_fields(line, 8, path, line_no);
        StampedPose sp;
        sp.stamp = f[0];
        sp.pose = SE3(Eigen::Quaterniond(f[7], f[4], f[5], f[6]), Vec3(f[1], f[2], f[3]));
        out.push_back(sp);
    }
    return out;
}

void write_tum(const std::string& path, const std::vector<StampedPose>& trajectory,
               const std::vector<std::string>& header_comments) {
    auto os = open_text_out(path);
    write_comments(os, header_comments);
    char buf[256];
    for (const auto& sp : trajectory) {
        const Vec4& q = sp.pose.q;
        std::snprintf(buf, sizeof(buf), "%.9f %.9f %.9f %.9f %.9f %.9f %.9f %.9f\n", sp.stamp,
                      sp.pose.t.x(), sp.pose.t.y(), sp.pose.t.z(), q[1], q[2], q[3], q[0]);
        os << buf;
    }
}

SE3 interpolate_trajectory(const std::vector<StampedPose>& trajectory, double stamp,
                           double slack) {
    if (trajectory.empty()) throw std::runtime_error("interpolate_trajectory: empty trajectory");
    if (stamp <= trajectory.front().stamp) {
        if (trajectory.front().stamp - stamp > slack)
            throw std::runtime_error("stamp " + std::to_string(stamp) +
                                     " before trajectory start");
        return trajectory.front().pose;
    }
    if (stamp >= trajectory.back().stamp) {
        if (stamp - trajectory.back().stamp > slack)
            throw std::runtime_error("stamp " + std::to_string(stamp) + " after trajectory end");
        return trajectory.back().pose;
    }
    auto it = std::lower_bound(trajectory.begin(), trajectory.end(), stamp,
                               [](const StampedPose& sp, double t) { return sp.stamp < t; });
    const auto& hi = *it;
    const auto& lo = *(it - 1);
    const double denom = hi.stamp - lo.stamp;
    const double alpha = denom > 0.0 ? (stamp - lo.stamp) / denom : 0.0;
    return se3_interpolate(lo.pose, hi.pose, alpha);
}

std::vector<GnssSample> read_gnss_csv(const std::string& path) {
    std::vector<GnssSample> out;
    for (const auto& [line_no, line] : data_lines(path)) {
        const auto f = parse_fields(line, 7, path, line_no);
        GnssSample s;
        s.stamp = f[0];
        s.position = Vec3(f[1], f[2], f[3]);
        s.sigma = Vec3(f[4], f[5], f[6]);
        out.push_back(s);
    }
    return out;
}

void write_gnss_csv(const std::string& path, const std::vector<GnssSample>& samples,
                    const std::vector<std::string>& header_comments) {
    auto os = open_text_out(path);
    write_comments(os, header_comments);
    os << "# stamp,easting,northing,height,sigma_e,sigma_n,sigma_h\n";
    char buf[256];
    for (const auto& s : samples) {
        std::snprintf(buf, sizeof(buf), "%.9f,%.9f,%.9f,%.9f,%.6f,%.6f,%.6f\n", s.stamp,
                      s.position.x(), s.position.y(), s.position.z(), s.sigma.x(), s.sigma.y(),
                      s.sigma.z());
        os << buf;
    }
}

std::vector<ImuSample> read_imu_csv(const std::string& path) {
    std::vector<ImuSample> out;
    for (const auto& [line_no, line] : data_lines(path)) {
        const auto f = parse_fields(line, 7, path, line_no);
        ImuSample s;
        s.stamp = f[0];
        s.gyro = Vec3(f[1], f[2], f[3]);
        s.accel = Vec3(f[4], f[5], f[6]);
        out.push_back(s);
    }
    return out;
}

void write_imu_csv(const std::string& path, const std::vector<ImuSample>& samples,
                   const std::vector<std::string>& header_comments) {
    auto os = open_text_out(path);
    write_comments(os, header_comments);
    os << "# stamp,gx,gy,gz,ax,ay,az\n";
    char buf[256];
    for (const auto& s : samples) {
        std::snprintf(buf, sizeof(buf), "%.9f,%.9f,%.9f,%.9f,%.9f,%.9f,%.9f\n", s.stamp,
                      s.gyro.x(), s.gyro.y(), s.gyro.z(), s.accel.x(), s.accel.y(),
                      s.accel.z());
        os << buf;
    }
}

std::vector<MagSample> read_mag_csv(const std::string& path) {
    std::vector<MagSample> out;
    for (const auto& [line_no, line] : data_lines(path)) {
        const auto f = parse_fields(line, 2, path, line_no);
        out.push_back({f[0], f[1]});
    }
    return out;
}

void write_mag_csv(const std::string& path, const std::vector<MagSample>& samples,
                   const std::vector<std::string>& header_comments) {
    auto os = open_text_out(path);
    write_comments(os, header_comments);
    os << "# stamp,yaw\n";
    char buf[128];
    for (const auto& s : samples) {
        std::snprintf(buf, sizeof(buf), "%.9f,%.9f\n", s.stamp, s.yaw);
        os << buf;
    }
}

void write_xyz(const std::string& path, const std::vector<Vec3>& points) {
    auto os = open_text_out(path);
    char buf[128];
    for (const auto& p : points) {
        std::snprintf(buf, sizeof(buf), "%.4f %.4f %.4f\n", p.x(), p.y(), p.z());
        os << buf;
    }
}

}  // namespace georef
