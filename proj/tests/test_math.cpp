#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "georef/jet.hpp"
#include "georef/lie.hpp"
#include "georef/spline.hpp"

using namespace georef;

namespace {
std::mt19937_64 rng(42);
double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}
Vec3 random_vec3(double scale) {
    return Vec3(uniform(-scale, scale), uniform(-scale, scale), uniform(-scale, scale));
}
SE3 random_pose(double angle_scale = 1.5, double trans_scale = 5.0) {
    return SE3(so3_exp<double>(random_vec3(angle_scale)), random_vec3(trans_scale));
}
}  // namespace

TEST_CASE("jet arithmetic differentiates elementary expressions") {
    // f(x, y) = x * y + sin(x) / y
    auto f = [](auto x, auto y) { return x * y + sin(x) / y; };
    const double x0 = 0.7, y0 = 1.3;
    Jet x(x0, 2, 0), y(y0, 2, 1);
    const Jet r = f(x, y);
    const double h = 1e-7;
    const double dx = (f(x0 + h, y0) - f(x0 - h, y0)) / (2.0 * h);
    const double dy = (f(x0, y0 + h) - f(x0, y0 - h)) / (2.0 * h);
    CHECK(r.a == doctest::Approx(f(x0, y0)));
    CHECK(r.v[0] == doctest::Approx(dx).epsilon(1e-6));
    CHECK(r.v[1] == doctest::Approx(dy).epsilon(1e-6));
}

TEST_CASE("jet atan2 and sqrt derivatives") {
    auto f = [](auto x, auto y) { return atan2(y, x) * sqrt(x * x + y * y); };
    const double x0 = 0.9, y0 = -0.4;
    const Jet r = f(Jet(x0, 2, 0), Jet(y0, 2, 1));
    const double h = 1e-7;
    CHECK(r.v[0] ==
          doctest::Approx((f(x0 + h, y0) - f(x0 - h, y0)) / (2.0 * h)).epsilon(1e-6));
    CHECK(r.v[1] ==
          doctest::Approx((f(x0, y0 + h) - f(x0, y0 - h)) / (2.0 * h)).epsilon(1e-6));
}

TEST_CASE("so3 exp/log roundtrip on the principal branch") {
    CHECK(so3_log<double>(quat_identity<double>()).norm() == 0.0);
    for (int i = 0; i < 1000; ++i) {
        Vec3 phi = random_vec3(1.0);
        phi *= uniform(0.0, kPi - 0.1) / (phi.norm() + 1e-12);
        const Vec3 back = so3_log<double>(so3_exp<double>(phi));
        CHECK((back - phi).norm() < 1e-10);
    }
}

TEST_CASE("se3 log of identity and pure rotation") {
    CHECK(SE3::identity().log().norm() == 0.0);
    // pure rotation pi/2 about z: log = (0,0,0, 0,0,pi/2)
    const SE3 t(Eigen::Quaterniond(Eigen::AngleAxisd(kPi / 2.0, Vec3::UnitZ())), Vec3::Zero());
    const Vec6 log = t.log();
    CHECK(log.head<3>().norm() < 1e-15);
    CHECK(log[3] == doctest::Approx(0.0));
    CHECK(log[4] == doctest::Approx(0.0));
    CHECK(log[5] == doctest::Approx(kPi / 2.0));
}

TEST_CASE("se3 exp/log roundtrip for 1000 random transforms") {
    for (int i = 0; i < 1000; ++i) {
        Vec3 phi = random_vec3(1.0).normalized() * uniform(0.0, kPi - 0.1);
        const SE3 t(so3_exp<double>(phi), random_vec3(10.0));
        const SE3 back = SE3::exp(t.log());
        CHECK((back.t - t.t).norm() < 1e-9);
        CHECK((back.q - t.q).norm() < 1e-10);
    }
}

TEST_CASE("se3 composition against Eigen isometries") {
    for (int i = 0; i < 100; ++i) {
        const SE3 a = random_pose(), b = random_pose();
        Eigen::Isometry3d ia = Eigen::Isometry3d::Identity(), ib = ia;
        ia.linear() = a.rotation_matrix();
        ia.translation() = a.t;
        ib.linear() = b.rotation_matrix();
        ib.translation() = b.t;
        const SE3 c = a * b;
        const Eigen::Isometry3d ic = ia * ib;
        CHECK((c.rotation_matrix() - ic.linear()).norm() < 1e-12);
        CHECK((c.t - ic.translation()).norm() < 1e-12);
        const SE3 inv = a.inverse();
        CHECK((inv.rotation_matrix() - ia.inverse().linear()).norm() < 1e-12);
        CHECK((inv.t - ia.inverse().translation()).norm() < 1e-12);
    }
}

TEST_CASE("cubic blending matrix matches the textbook coefficients") {
    const SplineBasis basis(4);
    // uniform cubic B-spline matrix, power basis rows 1,u,u^2,u^3
    Eigen::Matrix4d m;
    m << 1, 4, 1, 0, -3, 0, 3, 0, 3, -6, 3, 0, -1, 3, -3, 1;
    m /= 6.0;
    CHECK((basis.matrix() - m).norm() < 1e-12);
    // cumulative columns: sum of trailing columns
    Eigen::Matrix4d mc = Eigen::Matrix4d::Zero();
    for (int j = 0; j < 4; ++j)
        for (int l = j; l < 4; ++l) mc.col(j) += m.col(l);
    CHECK((basis.cumulative_matrix() - mc).norm() < 1e-12);
}

TEST_CASE("blending weights: partition of unity across orders") {
    for (int order : {2, 3, 4, 5, 6}) {
        const SplineBasis basis(order);
        double w[16];
        for (double u : {0.0, 0.1, 0.25, 0.5, 0.75, 0.9999}) {
            basis.weights(u, w);
            CHECK(w[0] == doctest::Approx(1.0).epsilon(1e-12));  // cumulative first weight
            // non-cumulative partition of unity via the plain matrix
            double sum = 0.0;
            for (int j = 0; j < order; ++j) {
                double acc = 0.0, up = 1.0;
                for (int p = 0; p < order; ++p) {
                    acc += basis.matrix()(p, j) * up;
                    up *= u;
                }
                sum += acc;
            }
            CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
        }
    }
}
