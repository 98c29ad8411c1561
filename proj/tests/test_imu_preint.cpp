#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "georef/imu_preint.hpp"

using namespace georef;

namespace {

std::mt19937_64 rng(17);
double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}
Vec3 random_vec3(double s) { return Vec3(uniform(-s, s), uniform(-s, s), uniform(-s, s)); }

// smooth synthetic gyro/accel signals
std::vector<ImuSample> random_batch(int n, double rate, double gyro_scale, double accel_scale) {
    std::vector<ImuSample> samples;
    const Vec3 g_amp = random_vec3(gyro_scale), g_phase = random_vec3(3.0);
    const Vec3 a_amp = random_vec3(accel_scale), a_phase = random_vec3(3.0);
    for (int i = 0; i < n; ++i) {
        ImuSample s;
        s.stamp = i / rate;
        for (int k = 0; k < 3; ++k) {
            s.gyro[k] = g_amp[k] * std::sin(1.7 * s.stamp * (k + 1) + g_phase[k]);
            s.accel[k] = a_amp[k] * std::cos(2.3 * s.stamp * (k + 1) + a_phase[k]);
        }
        samples.push_back(s);
    }
    return samples;
}

// fine-step Euler oracle: 10x substeps, measurements linearly interpolated
// and sampled at the substep midpoint
struct EulerState {
    Vec4 q = Vec4(1, 0, 0, 0);
    Vec3 v = Vec3::Zero();
    Vec3 p = Vec3::Zero();
};

EulerState fine_euler(const std::vector<ImuSample>& samples, const ImuBias& bias,
                      int oversample = 10) {
    EulerState state;
    for (std::size_t i = 0; i + 1 < samples.size(); ++i) {
        const double dt = (samples[i + 1].stamp - samples[i].stamp) / oversample;
        for (int k = 0; k < oversample; ++k) {
            const double alpha = (k + 0.5) / oversample;
            const Vec3 w =
                ((1 - alpha) * samples[i].gyro + alpha * samples[i + 1].gyro) - bias.gyro;
            const Vec3 a =
                ((1 - alpha) * samples[i].accel + alpha * samples[i + 1].accel) - bias.accel;
            const Vec3 a_world = quat_rotate<double>(state.q, a);
            state.p += state.v * dt + 0.5 * a_world * dt * dt;
            state.v += a_world * dt;
            state.q = quat_normalized<double>(
                quat_mul<double>(state.q, so3_exp<double>((w * dt).eval())));
        }
    }
    return state;
}

}  // namespace

TEST_CASE("null motion gives the identity delta") {
    std::vector<ImuSample> samples;
    for (int i = 0; i <= 200; ++i) samples.push_back({i * 0.005, Vec3::Zero(), Vec3::Zero()});
    const PreintegratedDelta d = preintegrate(samples, ImuBias{}, ImuNoise{});
    CHECK(d.dt_total == doctest::Approx(1.0));
    CHECK((d.delta_q - Vec4(1, 0, 0, 0)).norm() < 1e-14);
    CHECK(d.delta_v.norm() == 0.0);
    CHECK(d.delta_p.norm() == 0.0);
}

TEST_CASE("constant gyro (0,0,0.5) for 2 s rotates 1 rad about z") {
    std::vector<ImuSample> samples;
    for (int i = 0; i <= 400; ++i)
        samples.push_back({i * 0.005, Vec3(0, 0, 0.5), Vec3::Zero()});
    const PreintegratedDelta d = preintegrate(samples, ImuBias{}, ImuNoise{});
    const Vec3 log = so3_log<double>(d.delta_q);
    CHECK((log - Vec3(0, 0, 1.0)).norm() < 1e-9);
}

TEST_CASE("random 200-sample batch matches the 10x-oversampled Euler oracle to 1e-6") {
    for (int trial = 0; trial < 5; ++trial) {
        const auto samples = random_batch(200, 200.0, 0.6, 2.0);
        const ImuBias bias{random_vec3(0.01), random_vec3(0.05)};
        const PreintegratedDelta d = preintegrate(samples, bias, ImuNoise{});
        const EulerState ref = fine_euler(samples, bias);
        const double rot_err =
            so3_log<double>(quat_mul<double>(quat_conjugate<double>(ref.q), d.delta_q)).norm();
        CHECK(rot_err < 1e-6);
        CHECK((d.delta_v - ref.v).norm() < 1e-6 * std::max(1.0, ref.v.norm()));
        CHECK((d.delta_p - ref.p).norm() < 1e-6 * std::max(1.0, ref.p.norm()));
    }
}

TEST_CASE("non-increasing stamps raise an error") {
    std::vector<ImuSample> samples{{0.0, Vec3::Zero(), Vec3::Zero()},
                                   {0.0, Vec3::Zero(), Vec3::Zero()}};
    CHECK_THROWS_AS(preintegrate(samples, ImuBias{}, ImuNoise{}), std::runtime_error);
}

TEST_CASE("covariance trace grows with appended samples") {
    const auto samples = random_batch(300, 200.0, 0.4, 1.5);
    double previous = 0.0;
    for (int n : {50, 100, 200, 300}) {
        const std::vector<ImuSample> head(samples.begin(), samples.begin() + n);
        const double trace = preintegrate(head, ImuBias{}, ImuNoise{}).covariance.trace();
        CHECK(trace >= previous);
        previous = trace;
    }
}

TEST_CASE("preintegration is independent of any global frame") {
    const auto samples = random_batch(150, 200.0, 0.5, 1.0);
    const PreintegratedDelta a = preintegrate(samples, ImuBias{}, ImuNoise{});
    const PreintegratedDelta b = preintegrate(samples, ImuBias{}, ImuNoise{});
    CHECK(a.delta_q == b.delta_q);
    CHECK(a.delta_v == b.delta_v);
    CHECK(a.delta_p == b.delta_p);
}

TEST_CASE("stationary spline with gravity-only accelerometer gives zero residual") {
    SplineTrajectory spline;
    spline.t0 = 0.0;
    spline.dt = 0.1;
    for (int i = 0; i < 20; ++i) {
        spline.rotation_knots.push_back(quat_identity<double>());
        spline.translation_knots.push_back(Vec3(3, 2, 1));
    }
    const Vec3 gravity(0, 0, -9.81);
    std::vector<ImuSample> samples;
    for (int i = 0; i <= 100; ++i)
        samples.push_back({0.2 + i * 0.005, Vec3::Zero(), Vec3(0, 0, 9.81)});
    const PreintegratedDelta d = preintegrate(samples, ImuBias{}, ImuNoise{});
    const Vec9 r = imu_residual(d, spline, 0.2, 0.7, ImuBias{}, gravity);
    CHECK(r.norm() < 1e-9);
}

TEST_CASE("spline built from the integrated IMU stream closes the residual") {
    // ground truth: smooth trajectory; IMU synthesized exactly from it, then
    // a dense spline is fitted; the preintegrated residual must stay small
    const double rate = 400.0;
    const Vec3 gravity(0, 0, -9.81);
    std::vector<StampedPose> poses;
    std::vector<ImuSample> samples;
    for (int i = 0; i <= 4000; ++i) {
        const double t = i / rate;
        const double yaw = 0.4 * std::sin(0.5 * t);
        const Vec3 p(2.0 * std::sin(0.6 * t), 1.2 * t, 0.3 * std::cos(0.8 * t));
        poses.push_back({t, se3_from_rpy_yaw(0, 0, yaw, p)});
        const Vec3 acc(-2.0 * 0.36 * std::sin(0.6 * t), 0.0, -0.3 * 0.64 * std::cos(0.8 * t));
        const double yaw_rate = 0.4 * 0.5 * std::cos(0.5 * t);
        ImuSample s;
        s.stamp = t;
        const Mat3 rot_t = poses.back().pose.rotation_matrix().transpose();
        s.gyro = rot_t * Vec3(0, 0, yaw_rate);
        s.accel = rot_t * (acc - gravity);
        samples.push_back(s);
    }
    const SplineTrajectory spline = fit_initial_spline(poses, 0.02);
    const double t0 = 2.0, t1 = 2.1;
    const PreintegratedDelta d =
        preintegrate(slice_imu_interval(samples, t0, t1), ImuBias{}, ImuNoise{});
    const Vec9 r = imu_residual(d, spline, t0, t1, ImuBias{}, gravity);
    CHECK(r.norm() < 1e-4);  // limited by spline fit and integration error
}

TEST_CASE("bias Jacobians predict the residual change to first order") {
    const auto samples = random_batch(100, 200.0, 0.5, 1.5);
    const ImuBias lin{Vec3(0.002, -0.001, 0.003), Vec3(0.01, 0.02, -0.015)};
    const PreintegratedDelta d = preintegrate(samples, lin, ImuNoise{});

    SplineTrajectory spline;
    spline.t0 = -0.5;
    spline.dt = 0.25;
    Vec4 q = quat_identity<double>();
    Vec3 p = Vec3::Zero();
    for (int i = 0; i < 12; ++i) {
        q = quat_mul<double>(q, so3_exp<double>(random_vec3(0.1)));
        p += random_vec3(0.3);
        spline.rotation_knots.push_back(q);
        spline.translation_knots.push_back(p);
    }
    spline.normalize_rotation_knots();
    const Vec3 gravity(0, 0, -9.81);
    const double t0 = samples.front().stamp, t1 = samples.back().stamp;

    // first-order bias correction vs. exact re-preintegration at the
    // perturbed bias: the gap must be second order in the perturbation
    const double delta = 1e-3;
    for (int axis = 0; axis < 6; ++axis) {
        ImuBias perturbed = lin;
        (axis < 3 ? perturbed.gyro[axis % 3] : perturbed.accel[axis % 3]) += delta;
        const Vec9 corrected = imu_residual(d, spline, t0, t1, perturbed, gravity);
        const PreintegratedDelta exact = preintegrate(samples, perturbed, ImuNoise{});
        const Vec9 reference = imu_residual(exact, spline, t0, t1, perturbed, gravity);
        CHECK((corrected - reference).norm() < 1e-4);
    }
}
