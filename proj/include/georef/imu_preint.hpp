#pragma once

#include <vector>

#include "georef/common.hpp"
#include "georef/io.hpp"
#include "georef/lie.hpp"
#include "georef/spline.hpp"

namespace georef {

struct ImuNoise {
    double sigma_gyro = 1.7e-4;    // rad/s/sqrt(Hz)
    double sigma_accel = 2.0e-3;   // m/s^2/sqrt(Hz)
    double sigma_gyro_walk = 1e-5;   // rad/s^2/sqrt(Hz), bias random walk
    double sigma_accel_walk = 1e-4;  // m/s^3/sqrt(Hz)
};

struct ImuBias {
    Vec3 gyro = Vec3::Zero();
    Vec3 accel = Vec3::Zero();
};

// Relative motion summary between two times: rotation/velocity/position
// deltas in the frame of the first sample, first-order bias Jacobians and
// the propagated 9x9 covariance (rotation, velocity, position order).
struct PreintegratedDelta {
    double dt_total = 0.0;
    Vec4 delta_q = Vec4(1, 0, 0, 0);
    Vec3 delta_v = Vec3::Zero();
    Vec3 delta_p = Vec3::Zero();
    Mat9 covariance = Mat9::Zero();
    Mat3 j_q_bg = Mat3::Zero();
    Mat3 j_v_bg = Mat3::Zero();
    Mat3 j_v_ba = Mat3::Zero();
    Mat3 j_p_bg = Mat3::Zero();
    Mat3 j_p_ba = Mat3::Zero();
    ImuBias bias_linearization;
};

// Midpoint integration of bias-corrected measurements. Gravity is handled
// at the residual level, not inside the delta. Samples must be strictly
// increasing in time; a single sample yields the identity delta.
PreintegratedDelta preintegrate(const std::vector<ImuSample>& samples, const ImuBias& bias,
                                const ImuNoise& noise);

// Samples covering [t_begin, t_end] with the boundary samples linearly
// interpolated at the exact interval ends.
std::vector<ImuSample> slice_imu_interval(const std::vector<ImuSample>& samples, double t_begin,
                                          double t_end);

// 9-dof residual comparing spline-implied relative motion against the
// preintegrated delta, gravity-compensated and bias-corrected to first
// order around the delta's linearization point. `gravity` is expressed in
// the spline frame, so the residual does not involve the anchor pose.
template <class S>
void imu_residual_core(const PreintegratedDelta& delta, const QuatT<S>& q0, const Vec3T<S>& p0,
                       const Vec3T<S>& v0, const QuatT<S>& q1, const Vec3T<S>& p1,
                       const Vec3T<S>& v1, const Vec3T<S>& bias_gyro,
                       const Vec3T<S>& bias_accel, const Vec3& gravity,
                       Eigen::Matrix<S, 9, 1>& residual) {
    const double dt = delta.dt_total;
    Vec3T<S> dbg, dba;
    for (int i = 0; i < 3; ++i) {
        dbg[i] = bias_gyro[i] - S(delta.bias_linearization.gyro[i]);
        dba[i] = bias_accel[i] - S(delta.bias_linearization.accel[i]);
    }

    QuatT<S> delta_q;
    for (int i = 0; i < 4; ++i) delta_q[i] = S(delta.delta_q[i]);
    Vec3T<S> corr;
    for (int i = 0; i < 3; ++i)
        corr[i] = S(delta.j_q_bg(i, 0)) * dbg[0] + S(delta.j_q_bg(i, 1)) * dbg[1] +
                  S(delta.j_q_bg(i, 2)) * dbg[2];
    const QuatT<S> delta_q_corr = quat_mul<S>(delta_q, so3_exp<S>(corr));

    Vec3T<S> delta_v_corr, delta_p_corr;
    for (int i = 0; i < 3; ++i) {
        delta_v_corr[i] = S(delta.delta_v[i]);
        delta_p_corr[i] = S(delta.delta_p[i]);
        for (int j = 0; j < 3; ++j) {
            delta_v_corr[i] += S(delta.j_v_bg(i, j)) * dbg[j] + S(delta.j_v_ba(i, j)) * dba[j];
            delta_p_corr[i] += S(delta.j_p_bg(i, j)) * dbg[j] + S(delta.j_p_ba(i, j)) * dba[j];
        }
    }

    Vec3T<S> g;
    for (int i = 0; i < 3; ++i) g[i] = S(gravity[i]);
    const QuatT<S> q0_inv = quat_conjugate<S>(q0);

    const QuatT<S> rel = quat_mul<S>(q0_inv, q1);
    residual.template segment<3>(0) =
        so3_log<S>(quat_mul<S>(quat_conjugate<S>(delta_q_corr), rel));
    residual.template segment<3>(3) =
        quat_rotate<S>(q0_inv, (v1 - v0 - g * S(dt)).eval()) - delta_v_corr;
    residual.template segment<3>(6) =
        quat_rotate<S>(q0_inv, (p1 - p0 - v0 * S(dt) - g * S(0.5 * dt * dt)).eval()) -
        delta_p_corr;
}

// Convenience wrapper evaluating the spline at both times (double only).
Vec9 imu_residual(const PreintegratedDelta& delta, const SplineTrajectory& spline,
                  double t_prev, double t_cur, const ImuBias& bias, const Vec3& gravity);

}  // namespace georef
