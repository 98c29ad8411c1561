#include "georef/sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "georef/io_util.hpp"

namespace georef {

namespace {
std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}
}  // namespace

HashRng HashRng::keyed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
    return HashRng(splitmix64(splitmix64(seed ^ (a * 0x9e3779b97f4a7c15ull)) ^
                              (b * 0xc2b2ae3d27d4eb4full)));
}

std::uint64_t HashRng::next() {
    state_ = splitmix64(state_);
    return state_;
}

double HashRng::uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

double HashRng::gaussian() {
    // Box-Muller; u1 in (0,1] to keep the log finite
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
}

// ---------------------------------------------------------------------------
// Ray casting
// ---------------------------------------------------------------------------

namespace {

std::optional<double> intersect_ground(const GroundModel& g, const Vec3& o, const Vec3& d) {
    const double den = d.z() - g.slope_x * d.x() - g.slope_y * d.y();
    if (std::abs(den) < 1e-12) return std::nullopt;
    const double num = g.base_height + g.slope_x * (o.x() - g.reference_xy.x()) +
                       g.slope_y * (o.y() - g.reference_xy.y()) - o.z();
    const double t = num / den;
    if (t <= 1e-6) return std::nullopt;
    return t;
}

std::optional<double> intersect_box(const SyntheticScene& scene, const BuildingBox& b,
                                    const Vec3& o, const Vec3& d) {
    const double c = std::cos(-b.yaw), s = std::sin(-b.yaw);
    const Vec2 rel(o.x() - b.center.x(), o.y() - b.center.y());
    const Vec3 ol(c * rel.x() - s * rel.y(), s * rel.x() + c * rel.y(), o.z());
    const Vec3 dl(c * d.x() - s * d.y(), s * d.x() + c * d.y(), d.z());

    const double z0 = scene.building_base(b);
    const double lo[3] = {-b.half_x, -b.half_y, z0};
    const double hi[3] = {b.half_x, b.half_y, z0 + b.height};
    double t_enter = -std::numeric_limits<double>::infinity();
    double t_exit = std::numeric_limits<double>::infinity();
    for (int a = 0; a < 3; ++a) {
        if (std::abs(dl[a]) < 1e-12) {
            if (ol[a] < lo[a] || ol[a] > hi[a]) return std::nullopt;
            continue;
        }
        double t1 = (lo[a] - ol[a]) / dl[a];
        double t2 = (hi[a] - ol[a]) / dl[a];
        if (t1 > t2) std::swap(t1, t2);
        t_enter = std::max(t_enter, t1);
        t_exit = std::min(t_exit, t2);
    }
    if (t_enter > t_exit || t_enter <= 1e-6) return std::nullopt;
    return t_enter;
}

std::optional<double> intersect_sphere(const ClutterBlob& blob, const Vec3& o, const Vec3& d) {
    const Vec3 oc = o - blob.center;
    const double b = oc.dot(d);
    const double c = oc.squaredNorm() - blob.radius * blob.radius;
    const double disc = b * b - c;
    if (disc < 0.0) return std::nullopt;
    const double t = -b - std::sqrt(disc);
    if (t <= 1e-6) return std::nullopt;
    return t;
}

}  // namespace

std::optional<RayHit> cast_ray(const SyntheticScene& scene, const Vec3& origin, const Vec3& dir,
                               double max_range) {
    std::optional<RayHit> best;
    auto consider = [&](std::optional<double> t, std::uint8_t label) {
        if (!t || *t > max_range) return;
        if (!best || *t < best->range) best = RayHit{*t, label};
    };
    consider(intersect_ground(scene.ground, origin, dir),
             static_cast<std::uint8_t>(PointClass::Ground));
    for (const auto& b : scene.buildings)
        consider(intersect_box(scene, b, origin, dir),
                 static_cast<std::uint8_t>(PointClass::Building));
    for (const auto& blob : scene.clutter) consider(intersect_sphere(blob, origin, dir), blob.label);
    return best;
}

LabeledPointCloud render_scan(const SyntheticScene& scene, const SE3& pose,
                              const LidarConfig& lidar, std::uint64_t seed,
                              std::uint64_t scan_index, double stamp) {
    LabeledPointCloud cloud;
    cloud.stamp = stamp;
    cloud.points.reserve(static_cast<std::size_t>(lidar.channels) * lidar.azimuth_steps / 2);
    const Mat3 rot = pose.rotation_matrix();
    for (int ch = 0; ch < lidar.channels; ++ch) {
        const double el = lidar.channels == 1
                              ? lidar.vfov_min
                              : lidar.vfov_min + (lidar.vfov_max - lidar.vfov_min) * ch /
                                                     (lidar.channels - 1.0);
        const double cos_el = std::cos(el), sin_el = std::sin(el);
        for (int a = 0; a < lidar.azimuth_steps; ++a) {
            const double az = 2.0 * kPi * a / lidar.azimuth_steps;
            const Vec3 dir_sensor(cos_el * std::cos(az), cos_el * std::sin(az), sin_el);
            const Vec3 dir_world = rot * dir_sensor;
            const auto hit = cast_ray(scene, pose.t, dir_world, lidar.max_range);
            if (!hit) continue;
            const std::uint64_t ray_index =
                static_cast<std::uint64_t>(ch) * lidar.azimuth_steps + a;
            HashRng rng = HashRng::keyed(seed, scan_index, ray_index);
            const double range =
                std::max(0.01, hit->range + lidar.sigma_range * rng.gaussian());
            const Vec3 p = dir_sensor * range;
            cloud.points.push_back({static_cast<float>(p.x()), static_cast<float>(p.y()),
                                    static_cast<float>(p.z()), hit->label});
        }
    }
    return cloud;
}

// ---------------------------------------------------------------------------
// Trajectory
// ---------------------------------------------------------------------------

namespace {

// natural cubic second derivatives (tridiagonal solve)
std::vector<double> natural_cubic_m(const std::vector<double>& ts,
                                    const std::vector<double>& ys) {
    const std::size_t n = ts.size();
    std::vector<double> m(n, 0.0);
    if (n < 3) return m;
    std::vector<double> a(n, 0.0), b(n, 0.0), c(n, 0.0), d(n, 0.0);
    for (std::size_t i = 1; i + 1 < n; ++i) {
        const double h0 = ts[i] - ts[i - 1];
        const double h1 = ts[i + 1] - ts[i];
        a[i] = h0 / 6.0;
        b[i] = (h0 + h1) / 3.0;
        c[i] = h1 / 6.0;
        d[i] = (ys[i + 1] - ys[i]) / h1 - (ys[i] - ys[i - 1]) / h0;
    }
    // Thomas algorithm on rows 1..n-2
    for (std::size_t i = 2; i + 1 < n; ++i) {
        const double f = a[i] / b[i - 1];
        b[i] -= f * c[i - 1];
        d[i] -= f * d[i - 1];
    }
    for (std::size_t i = n - 2; i >= 1; --i) {
        m[i] = (d[i] - c[i] * (i + 2 < n ? m[i + 1] : 0.0)) / b[i];
        if (i == 1) break;
    }
    return m;
}

}  // namespace

double FlightTrajectory::Cubic::value(double t) const {
    const auto it = std::upper_bound(ts.begin(), ts.end(), t);
    std::size_t i = it == ts.begin() ? 1 : static_cast<std::size_t>(it - ts.begin());
    i = std::min(i, ts.size() - 1);
    const double t0 = ts[i - 1], t1 = ts[i], h = t1 - t0;
    const double a = (t1 - t) / h, b = (t - t0) / h;
    return a * ys[i - 1] + b * ys[i] +
           ((a * a * a - a) * m[i - 1] + (b * b * b - b) * m[i]) * h * h / 6.0;
}

double FlightTrajectory::Cubic::deriv(double t) const {
    const auto it = std::upper_bound(ts.begin(), ts.end(), t);
    std::size_t i = it == ts.begin() ? 1 : static_cast<std::size_t>(it - ts.begin());
    i = std::min(i, ts.size() - 1);
    const double t0 = ts[i - 1], t1 = ts[i], h = t1 - t0;
    const double a = (t1 - t) / h, b = (t - t0) / h;
    return (ys[i] - ys[i - 1]) / h +
           h / 6.0 * (-(3.0 * a * a - 1.0) * m[i - 1] + (3.0 * b * b - 1.0) * m[i]);
}

double FlightTrajectory::Cubic::deriv2(double t) const {
    const auto it = std::upper_bound(ts.begin(), ts.end(), t);
    std::size_t i = it == ts.begin() ? 1 : static_cast<std::size_t>(it - ts.begin());
    i = std::min(i, ts.size() - 1);
    const double t0 = ts[i - 1], t1 = ts[i], h = t1 - t0;
    const double a = (t1 - t) / h, b = (t - t0) / h;
    return a * m[i - 1] + b * m[i];
}

FlightTrajectory::FlightTrajectory(const std::vector<Vec3>& waypoints, double start_time,
                                   double duration, YawMode yaw_mode, double fixed_yaw) {
    if (waypoints.size() < 2)
        throw std::runtime_error("flight trajectory: need at least 2 waypoints");
    std::vector<double> cumulative{0.0};
    for (std::size_t i = 1; i < waypoints.size(); ++i)
        cumulative.push_back(cumulative.back() + (waypoints[i] - waypoints[i - 1]).norm());
    if (cumulative.back() < 1e-6)
        throw std::runtime_error("flight trajectory: degenerate waypoints (zero path length)");

    t_begin_ = start_time;
    t_end_ = start_time + duration;
    std::vector<double> ts;
    ts.reserve(waypoints.size());
    for (double c : cumulative) ts.push_back(start_time + duration * c / cumulative.back());
    // guard against repeated waypoints collapsing knots
    for (std::size_t i = 1; i < ts.size(); ++i)
        if (ts[i] - ts[i - 1] < 1e-9)
            throw std::runtime_error("flight trajectory: coincident consecutive waypoints");

    for (int axis = 0; axis < 3; ++axis) {
        Cubic& c = axes_[axis];
        c.ts = ts;
        for (const auto& w : waypoints) c.ys.push_back(w[axis]);
        c.m = natural_cubic_m(c.ts, c.ys);
    }

    yaw_spline_.ts = ts;
    if (yaw_mode == YawMode::Fixed) {
        yaw_spline_.ys.assign(ts.size(), fixed_yaw);
    } else {
        double prev = 0.0;
        for (std::size_t i = 0; i < waypoints.size(); ++i) {
            const std::size_t lo = i == 0 ? 0 : i - 1;
            const std::size_t hi = std::min(i + 1, waypoints.size() - 1);
            const Vec2 d = (waypoints[hi] - waypoints[lo]).head<2>();
            double yaw = d.norm() > 1e-9 ? std::atan2(d.y(), d.x()) : prev;
            if (i > 0) {  // unwrap for spline continuity
                while (yaw - prev > kPi) yaw -= 2.0 * kPi;
                while (yaw - prev < -kPi) yaw += 2.0 * kPi;
            }
            yaw_spline_.ys.push_back(yaw);
            prev = yaw;
        }
    }
    yaw_spline_.m = natural_cubic_m(yaw_spline_.ts, yaw_spline_.ys);
}

Vec3 FlightTrajectory::position(double t) const {
    return Vec3(axes_[0].value(t), axes_[1].value(t), axes_[2].value(t));
}
Vec3 FlightTrajectory::velocity(double t) const {
    return Vec3(axes_[0].deriv(t), axes_[1].deriv(t), axes_[2].deriv(t));
}
Vec3 FlightTrajectory::acceleration(double t) const {
    return Vec3(axes_[0].deriv2(t), axes_[1].deriv2(t), axes_[2].deriv2(t));
}
double FlightTrajectory::yaw(double t) const { return yaw_spline_.value(t); }
double FlightTrajectory::yaw_rate(double t) const { return yaw_spline_.deriv(t); }

SE3 FlightTrajectory::pose(double t) const {
    return se3_from_rpy_yaw(0.0, 0.0, yaw(t), position(t));
}

// ---------------------------------------------------------------------------
// Flight generation
// ---------------------------------------------------------------------------

FlightData generate_flight(const SyntheticScene& scene, const std::vector<Vec3>& waypoints,
                           const SensorRig& rig, const FlightOptions& options) {
    const FlightTrajectory traj(waypoints, options.start_time, options.duration,
                                options.yaw_mode);
    FlightData flight;
    const Vec3 gravity(0.0, 0.0, -9.81);

    // scans + ground truth at scan times
    const double scan_dt = 1.0 / rig.scan_rate;
    std::uint64_t scan_index = 0;
    for (double t = traj.start_time(); t <= traj.end_time() + 1e-9; t += scan_dt) {
        const SE3 pose = traj.pose(t);
        flight.scans.push_back(
            render_scan(scene, pose, rig.lidar, scene.rng_seed, scan_index, t));
        flight.truth.push_back({t, pose});
        ++scan_index;
    }

    // drifting odometry, anchored at the first scan pose
    flight.odometry.resize(flight.truth.size());
    flight.odometry[0] = {flight.truth[0].stamp, SE3::identity()};
    HashRng drift_rng = HashRng::keyed(scene.rng_seed, 0xD81F7ull, 1);
    Vec3 drift_dir(drift_rng.gaussian(), drift_rng.gaussian(), 0.3 * drift_rng.gaussian());
    if (drift_dir.norm() < 1e-9) drift_dir = Vec3::UnitX();
    drift_dir.normalize();
    for (std::size_t k = 1; k < flight.truth.size(); ++k) {
        const SE3 rel = flight.truth[k - 1].pose.inverse() * flight.truth[k].pose;
        const double step = rel.t.norm();
        // slowly wandering drift direction keeps the error integrable
        Vec3 jitter(drift_rng.gaussian(), drift_rng.gaussian(), 0.3 * drift_rng.gaussian());
        drift_dir = (drift_dir + 0.05 * jitter).normalized();
        const Vec3 dp = options.odom_drift_per_m * step * drift_dir;
        const Vec3 dyaw(0.0, 0.0, options.odom_yaw_drift_per_m * step);
        const SE3 eps(so3_exp<double>(dyaw), dp);
        flight.odometry[k] = {flight.truth[k].stamp,
                              flight.odometry[k - 1].pose * rel * eps};
    }

    // IMU from exact trajectory derivatives
    const double imu_dt = 1.0 / rig.imu.rate;
    std::uint64_t imu_index = 0;
    const double imu_gyro_std = rig.imu.sigma_gyro * std::sqrt(rig.imu.rate);
    const double imu_accel_std = rig.imu.sigma_accel * std::sqrt(rig.imu.rate);
    for (double t = traj.start_time(); t <= traj.end_time() + 1e-9; t += imu_dt) {
        HashRng rng = HashRng::keyed(scene.rng_seed, 0x1A2Bull, imu_index);
        const Mat3 rot_t = traj.pose(t).rotation_matrix().transpose();
        ImuSample s;
        s.stamp = t;
        s.gyro = rot_t * Vec3(0.0, 0.0, traj.yaw_rate(t)) + rig.imu.gyro_bias +
                 imu_gyro_std * Vec3(rng.gaussian(), rng.gaussian(), rng.gaussian());
        s.accel = rot_t * (traj.acceleration(t) - gravity) + rig.imu.accel_bias +
                  imu_accel_std * Vec3(rng.gaussian(), rng.gaussian(), rng.gaussian());
        flight.imu.push_back(s);
        ++imu_index;
    }

    // GNSS with injected offset
    const double gnss_dt = 1.0 / rig.gnss.rate;
    std::uint64_t gnss_index = 0;
    for (double t = traj.start_time(); t <= traj.end_time() + 1e-9; t += gnss_dt) {
        HashRng rng = HashRng::keyed(scene.rng_seed, 0x6E55ull, gnss_index);
        GnssSample s;
        s.stamp = t;
        s.position = traj.position(t) +
                     Vec3(rig.gnss.sigma.x() * rng.gaussian(), rig.gnss.sigma.y() * rng.gaussian(),
                          rig.gnss.sigma.z() * rng.gaussian());
        if (t - traj.start_time() >= rig.gnss.offset_start) s.position += rig.gnss.offset;
        s.sigma = rig.gnss.sigma;
        flight.gnss.push_back(s);
        ++gnss_index;
    }

    // magnetometer yaw
    if (rig.mag.available) {
        const double mag_dt = 1.0 / rig.mag.rate;
        std::uint64_t mag_index = 0;
        for (double t = traj.start_time(); t <= traj.end_time() + 1e-9; t += mag_dt) {
            HashRng rng = HashRng::keyed(scene.rng_seed, 0x3A69ull, mag_index);
            MagSample s;
            s.stamp = t;
            s.yaw = traj.yaw(t) + rig.mag.sigma_yaw * rng.gaussian();
            flight.mag.push_back(s);
            ++mag_index;
        }
    }
    return flight;
}

// ---------------------------------------------------------------------------
// Scene exporters
// ---------------------------------------------------------------------------

std::string scene_to_citygml(const SyntheticScene& scene) {
    std::string out;
    out += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    out +=
        "<core:CityModel xmlns:core=\"http://www.opengis.net/citygml/2.0\" "
        "xmlns:bldg=\"http://www.opengis.net/citygml/building/2.0\" "
        "xmlns:gml=\"http://www.opengis.net/gml\">\n";
    char buf[64];
    auto coord = [&](double v) {
        std::snprintf(buf, sizeof(buf), "%.4f", v);
        out += buf;
    };
    auto ring = [&](const std::vector<Vec3>& pts, const char* surface) {
        out += "      <bldg:boundedBy><bldg:";
        out += surface;
        out +=
            "><bldg:lod2MultiSurface><gml:MultiSurface><gml:surfaceMember><gml:Polygon>"
            "<gml:exterior><gml:LinearRing><gml:posList>";
        for (std::size_t i = 0; i < pts.size(); ++i) {
            if (i) out += ' ';
            coord(pts[i].x());
            out += ' ';
            coord(pts[i].y());
            out += ' ';
            coord(pts[i].z());
        }
        out += "</gml:posList></gml:LinearRing></gml:exterior></gml:Polygon>"
               "</gml:surfaceMember></gml:MultiSurface></bldg:lod2MultiSurface></bldg:";
        out += surface;
        out += "></bldg:boundedBy>\n";
    };

    for (const auto& b : scene.buildings) {
        out += "  <core:cityObjectMember>\n    <bldg:Building>\n";
        const double z0 = scene.building_base(b);
        const double z1 = z0 + b.height;
        const double c = std::cos(b.yaw), s = std::sin(b.yaw);
        Vec2 corners[4];
        const double sx[4] = {-1.0, 1.0, 1.0, -1.0};
        const double sy[4] = {-1.0, -1.0, 1.0, 1.0};
        for (int i = 0; i < 4; ++i) {
            const double lx = sx[i] * b.half_x, ly = sy[i] * b.half_y;
            corners[i] = b.center + Vec2(c * lx - s * ly, s * lx + c * ly);
        }
        for (int i = 0; i < 4; ++i) {
            const Vec2& a = corners[i];
            const Vec2& d = corners[(i + 1) % 4];
            ring({Vec3(a.x(), a.y(), z0), Vec3(d.x(), d.y(), z0), Vec3(d.x(), d.y(), z1),
                  Vec3(a.x(), a.y(), z1), Vec3(a.x(), a.y(), z0)},
                 "WallSurface");
        }
        ring({Vec3(corners[0].x(), corners[0].y(), z1), Vec3(corners[1].x(), corners[1].y(), z1),
              Vec3(corners[2].x(), corners[2].y(), z1), Vec3(corners[3].x(), corners[3].y(), z1),
              Vec3(corners[0].x(), corners[0].y(), z1)},
             "RoofSurface");
        out += "    </bldg:Building>\n  </core:cityObjectMember>\n";
    }
    out += "</core:CityModel>\n";
    return out;
}

std::string scene_to_dem_xyz(const SyntheticScene& scene, double pitch) {
    std::string out;
    char buf[96];
    const auto nx = static_cast<std::int64_t>(

        std::floor((scene.area_max.x() - scene.area_min.x()) / pitch + 1e-9));
    const auto ny = static_cast<std::int64_t>(
        std::floor((scene.area_max.y() - scene.area_min.y()) / pitch + 1e-9));
    for (std::int64_t iy = 0; iy <= ny; ++iy) {
        for (std::int64_t ix = 0; ix <= nx; ++ix) {
            const Vec2 p = scene.area_min + Vec2(ix * pitch, iy * pitch);
            std::snprintf(buf, sizeof(buf), "%.3f %.3f %.4f\n", p.x(), p.y(),
                          scene.ground.height_at(p));
            out += buf;
        }
    }
    return out;
}

void write_flight_dataset(const SyntheticScene& scene, const FlightData& flight,
                          const std::string& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    fs::create_directories(out_dir + "/scans");

    {
        std::ofstream os(out_dir + "/citygml.xml", std::ios::binary | std::ios::trunc);
        os << scene_to_citygml(scene);
        if (!os) throw std::runtime_error("failed writing citygml.xml");
    }
    {
        std::ofstream os(out_dir + "/dem.xyz", std::ios::binary | std::ios::trunc);
        os << scene_to_dem_xyz(scene);
        if (!os) throw std::runtime_error("failed writing dem.xyz");
    }
    char name[64];
    for (std::size_t i = 0; i < flight.scans.size(); ++i) {
        std::snprintf(name, sizeof(name), "/scans/%06zu.lpc", i);
        write_lpc1(out_dir + name, flight.scans[i]);
    }
    write_tum(out_dir + "/truth.tum", flight.truth);
    write_tum(out_dir + "/odometry.tum", flight.odometry);
    write_imu_csv(out_dir + "/imu.csv", flight.imu);
    write_gnss_csv(out_dir + "/gnss.csv", flight.gnss);
    write_mag_csv(out_dir + "/mag.csv", flight.mag);
}

}  // namespace georef
