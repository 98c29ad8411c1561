#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <random>

#include "georef/io_util.hpp"
#include "georef/spline.hpp"

using namespace georef;

namespace {

std::mt19937_64 rng(5);
double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}
Vec3 random_vec3(double s) { return Vec3(uniform(-s, s), uniform(-s, s), uniform(-s, s)); }

SplineTrajectory random_spline(std::size_t knots, double dt = 0.1) {
    SplineTrajectory spline;
    spline.t0 = 10.0;
    spline.dt = dt;
    Vec4 q = quat_identity<double>();
    Vec3 p = Vec3::Zero();
    for (std::size_t i = 0; i < knots; ++i) {
        q = quat_mul<double>(q, so3_exp<double>(random_vec3(0.2)));
        p += random_vec3(0.5);
        spline.rotation_knots.push_back(q);
        spline.translation_knots.push_back(p);
    }
    spline.normalize_rotation_knots();
    return spline;
}

// independent Cox-de Boor evaluation: numeric basis recursion + cumulative
// sum, quaternion chain evaluated directly
double basis_value(int j, int order, double u) {
    // N_{j,order} on integer knots at t = u + order - 1
    const double t = u + order - 1.0;
    std::vector<double> n(2 * order, 0.0);
    for (int i = 0; i < 2 * order; ++i) n[i] = (t >= i && t < i + 1) ? 1.0 : 0.0;
    for (int m = 2; m <= order; ++m)
        for (int i = 0; i + 1 < 2 * order; ++i)
            n[i] = (t - i) / (m - 1) * n[i] + (i + m - t) / (m - 1) * n[i + 1];
    return n[j];
}

SE3 reference_evaluate(const SplineTrajectory& spline, double t) {
    const double s = (t - spline.t0) / spline.dt;
    const int i = static_cast<int>(std::floor(s));
    const double u = s - i;
    const int k = spline.order;
    std::vector<double> w(k);
    for (int j = 0; j < k; ++j) {
        w[j] = 0.0;
        for (int l = j; l < k; ++l) w[j] += basis_value(l, k, u);
    }
    Vec4 q = spline.rotation_knots[i];
    Vec3 p = spline.translation_knots[i];
    for (int j = 1; j < k; ++j) {
        const Vec4 rel = quat_mul<double>(quat_conjugate<double>(spline.rotation_knots[i + j - 1]),
                                          spline.rotation_knots[i + j]);
        q = quat_mul<double>(q, so3_exp<double>((w[j] * so3_log<double>(rel)).eval()));
        p += w[j] * (spline.translation_knots[i + j] - spline.translation_knots[i + j - 1]);
    }
    return SE3(q, p);
}

}  // namespace

TEST_CASE("identical knots give a constant pose everywhere in the support") {
    SplineTrajectory spline;
    spline.t0 = 0.0;
    spline.dt = 0.5;
    const SE3 pose(so3_exp<double>(Vec3(0.3, -0.2, 1.0)), Vec3(4, 5, 6));
    for (int i = 0; i < 10; ++i) {
        spline.rotation_knots.push_back(pose.q);
        spline.translation_knots.push_back(pose.t);
    }
    for (double t = 0.0; t < spline.support_end() - 1e-9; t += 0.037) {
        const SE3 e = spline.evaluate(t);
        CHECK((e.t - pose.t).norm() < 1e-12);
        CHECK((e.q - pose.q).norm() < 1e-12);
        Vec3 v, w;
        spline.evaluate_derivatives(t, v, w);
        CHECK(v.norm() < 1e-12);
        CHECK(w.norm() < 1e-12);
    }
}

TEST_CASE("linear knots: points on the line with constant speed") {
    SplineTrajectory spline;
    spline.t0 = 2.0;
    spline.dt = 0.25;
    const Vec3 dir(1.0, -2.0, 0.5);
    for (int i = 0; i < 12; ++i) {
        spline.rotation_knots.push_back(quat_identity<double>());
        spline.translation_knots.push_back(Vec3(1, 2, 3) + i * dir);
    }
    const Vec3 origin(1, 2, 3);
    double previous_speed = -1.0;
    for (double t = spline.t0; t < spline.support_end() - 1e-9; t += 0.0173) {
        const SE3 e = spline.evaluate(t);
        const Vec3 rel = e.t - origin;
        const double along = rel.dot(dir.normalized());
        CHECK((rel - along * dir.normalized()).norm() < 1e-9);  // on the line
        Vec3 v, w;
        spline.evaluate_derivatives(t, v, w);
        const double speed = v.norm();
        if (previous_speed >= 0.0) CHECK(speed == doctest::Approx(previous_speed).epsilon(1e-9));
        previous_speed = speed;
        CHECK(speed == doctest::Approx(dir.norm() / spline.dt).epsilon(1e-9));
    }
}

TEST_CASE("evaluation matches the independent cumulative-basis oracle to 1e-10") {
    const SplineTrajectory spline = random_spline(24);
    for (int trial = 0; trial < 100; ++trial) {
        const double t =
            uniform(spline.support_begin(), spline.support_end() - 1e-6);
        const SE3 a = spline.evaluate(t);
        const SE3 b = reference_evaluate(spline, t);
        CHECK((a.t - b.t).norm() < 1e-10);
        CHECK((a.q - b.q).norm() < 1e-10);
    }
}

TEST_CASE("derivatives match central finite differences") {
    const SplineTrajectory spline = random_spline(20);
    const double h = 1e-5;
    for (int trial = 0; trial < 50; ++trial) {
        const double t =
            uniform(spline.support_begin() + 2 * h, spline.support_end() - 2 * h - 1e-6);
        Vec3 v, w;
        spline.evaluate_derivatives(t, v, w);
        const SE3 before = spline.evaluate(t - h);
        const SE3 after = spline.evaluate(t + h);
        const Vec3 v_fd = (after.t - before.t) / (2.0 * h);
        CHECK((v - v_fd).norm() < 1e-5 * std::max(1.0, v_fd.norm()));
        // body angular velocity from the relative rotation
        const Vec3 w_fd =
            so3_log<double>(quat_mul<double>(quat_conjugate<double>(before.q), after.q)) /
            (2.0 * h);
        CHECK((w - w_fd).norm() < 1e-5 * std::max(1.0, w_fd.norm()));
    }
}

TEST_CASE("C2 continuity at knot boundaries") {
    const SplineTrajectory spline = random_spline(16);
    for (int i = 1; i < 10; ++i) {
        const double boundary = spline.t0 + i * spline.dt;
        if (boundary <= spline.support_begin() || boundary >= spline.support_end() - 1e-6)
            continue;
        const double eps = 1e-10;
        const SE3 left = spline.evaluate(boundary - eps);
        const SE3 right = spline.evaluate(boundary + eps);
        CHECK((left.t - right.t).norm() < 1e-8);
        CHECK((left.q - right.q).norm() < 1e-8);
        Vec3 vl, wl, vr, wr;
        spline.evaluate_derivatives(boundary - eps, vl, wl);
        spline.evaluate_derivatives(boundary + eps, vr, wr);
        CHECK((vl - vr).norm() < 1e-6);
        CHECK((wl - wr).norm() < 1e-6);
    }
}

TEST_CASE("evaluation outside the support names the valid range") {
    const SplineTrajectory spline = random_spline(8);
    CHECK_THROWS_WITH_AS(spline.evaluate(spline.t0 - 1.0), doctest::Contains("support"),
                         std::runtime_error);
    CHECK_THROWS_AS(spline.evaluate(spline.support_end() + 0.5), std::runtime_error);
}

TEST_CASE("fit_initial_spline reproduces constant and linear motion") {
    std::vector<StampedPose> constant;
    const SE3 pose(so3_exp<double>(Vec3(0, 0, 0.8)), Vec3(7, 8, 9));
    for (int i = 0; i <= 20; ++i) constant.push_back({i * 0.1, pose});
    const SplineTrajectory s1 = fit_initial_spline(constant, 0.1);
    for (const auto& q : s1.rotation_knots) CHECK(std::abs(std::abs(q.dot(pose.q)) - 1.0) < 1e-12);
    for (const auto& p : s1.translation_knots) CHECK((p - pose.t).norm() < 1e-12);

    std::vector<StampedPose> linear;
    for (int i = 0; i <= 30; ++i)
        linear.push_back({i * 0.1, SE3(quat_identity<double>(), Vec3(0.5 * i, -0.25 * i, 0))});
    const SplineTrajectory s2 = fit_initial_spline(linear, 0.1);
    for (std::size_t j = 1; j + 1 < s2.translation_knots.size(); ++j) {
        const Vec3 d1 = s2.translation_knots[j] - s2.translation_knots[j - 1];
        const Vec3 d2 = s2.translation_knots[j + 1] - s2.translation_knots[j];
        CHECK((d1.cross(d2)).norm() < 1e-9);  // collinear knots
    }
    // linear precision: evaluation reproduces the samples
    for (const auto& sp : linear) {
        if (sp.stamp >= s2.support_end()) continue;
        CHECK((s2.evaluate(sp.stamp).t - sp.pose.t).norm() < 1e-9);
    }
}

TEST_CASE("fit_initial_spline tracks a smooth trajectory within 1 cm") {
    std::vector<StampedPose> samples;
    for (int i = 0; i <= 400; ++i) {
        const double t = i * 0.01;
        const Vec3 p(2.0 * std::sin(0.4 * t), 1.5 * std::cos(0.3 * t), 0.2 * t);
        const Vec4 q = so3_exp<double>(Vec3(0, 0, 0.3 * std::sin(0.2 * t)));
        samples.push_back({t, SE3(q, p)});
    }
    const SplineTrajectory spline = fit_initial_spline(samples, 0.1);
    double worst = 0.0;
    for (const auto& sp : samples) {
        if (sp.stamp >= spline.support_end() - 1e-9) continue;
        worst = std::max(worst, (spline.evaluate(sp.stamp).t - sp.pose.t).norm());
    }
    CHECK(worst < 0.01);
    CHECK_THROWS_WITH_AS(fit_initial_spline({samples[0], samples[1]}, 0.1),
                         doctest::Contains("span"), std::runtime_error);
}

TEST_CASE("SPL1 checkpoint round-trips") {
    const SplineTrajectory spline = random_spline(9, 0.2);
    const auto dir = std::filesystem::temp_directory_path() / "georef_spline_test";
    std::filesystem::create_directories(dir);
    const std::string path = (dir / "s.spl").string();
    save_spline(spline, path);
    const SplineTrajectory back = load_spline(path);
    CHECK(back.order == spline.order);
    CHECK(back.t0 == spline.t0);
    CHECK(back.dt == spline.dt);
    REQUIRE(back.knot_count() == spline.knot_count());
    for (std::size_t i = 0; i < spline.knot_count(); ++i) {
        CHECK(back.rotation_knots[i] == spline.rotation_knots[i]);
        CHECK(back.translation_knots[i] == spline.translation_knots[i]);
    }
}
