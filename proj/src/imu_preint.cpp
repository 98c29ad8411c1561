#include "georef/imu_preint.hpp"

#include <algorithm>
#include <cmath>

namespace georef {

PreintegratedDelta preintegrate(const std::vector<ImuSample>& samples, const ImuBias& bias,
                                const ImuNoise& noise) {
    if (samples.empty()) throw std::runtime_error("preintegrate: no samples");
    for (std::size_t i = 1; i < samples.size(); ++i)
        if (samples[i].stamp <= samples[i - 1].stamp)
            throw std::runtime_error("preintegrate: non-increasing stamp " +
                                     std::to_string(samples[i].stamp));

    PreintegratedDelta delta;
    delta.bias_linearization = bias;
    if (samples.size() == 1) return delta;

    Mat3 rot_k = Mat3::Identity();  // matrix form of delta_q
    for (std::size_t i = 0; i + 1 < samples.size(); ++i) {
        const ImuSample& s0 = samples[i];
        const ImuSample& s1 = samples[i + 1];
        const double dt = s1.stamp - s0.stamp;
        const double dt2 = dt * dt;

        const Vec3 w_mid = 0.5 * (s0.gyro + s1.gyro) - bias.gyro;
        const Vec3 a0 = s0.accel - bias.accel;
        const Vec3 a1 = s1.accel - bias.accel;

        const Vec3 dtheta = w_mid * dt;
        const Vec4 incr = so3_exp<double>(dtheta);
        const Mat3 incr_mat = quat_to_matrix<double>(incr);
        const Mat3 rot_k1 = rot_k * incr_mat;

        const Vec3 acc_mid = 0.5 * (rot_k * a0 + rot_k1 * a1);
        const Mat3 a_hat = skew<double>((0.5 * (a0 + a1)).eval());
        const Mat3 jr = so3_right_jacobian(dtheta);

        // state transition (rotation, velocity, position)
        Mat9 a = Mat9::Identity();
        a.block<3, 3>(0, 0) = incr_mat.transpose();
        a.block<3, 3>(3, 0) = -rot_k * a_hat * dt;
        a.block<3, 3>(6, 0) = -0.5 * rot_k * a_hat * dt2;
        a.block<3, 3>(6, 3) = Mat3::Identity() * dt;

        const double gyro_var = noise.sigma_gyro * noise.sigma_gyro / dt;
        const double accel_var = noise.sigma_accel * noise.sigma_accel / dt;
        Mat9 q = Mat9::Zero();
        const Mat3 b_theta = jr * dt;
        q.block<3, 3>(0, 0) = b_theta * gyro_var * b_theta.transpose();
        q.block<3, 3>(3, 3) = rot_k * accel_var * dt2 * rot_k.transpose();
        q.block<3, 3>(6, 6) = 0.25 * rot_k * accel_var * dt2 * dt2 * rot_k.transpose();

        delta.covariance = a * delta.covariance * a.transpose() + q;

        // bias Jacobians, position first so old v/q sensitivities are used
        delta.j_p_bg += delta.j_v_bg * dt - 0.5 * rot_k * a_hat * delta.j_q_bg * dt2;
        delta.j_p_ba += delta.j_v_ba * dt - 0.5 * rot_k * dt2;
        delta.j_v_bg += -rot_k * a_hat * delta.j_q_bg * dt;
        delta.j_v_ba += -rot_k * dt;
        delta.j_q_bg = incr_mat.transpose() * delta.j_q_bg - jr * dt;

        delta.delta_p += delta.delta_v * dt + 0.5 * acc_mid * dt2;
        delta.delta_v += acc_mid * dt;
        delta.delta_q = quat_normalized<double>(quat_mul<double>(delta.delta_q, incr));
        rot_k = rot_k1;
        delta.dt_total += dt;
    }
    return delta;
}

std::vector<ImuSample> slice_imu_interval(const std::vector<ImuSample>& samples, double t_begin,
                                          double t_end) {
    if (t_end <= t_begin) throw std::runtime_error("slice_imu_interval: empty interval");
    auto interp = [&](double t) {
        auto it = std::lower_bound(samples.begin(), samples.end(), t,
                                   [](const ImuSample& s, double v) { return s.stamp < v; });
        if (it == samples.begin()) return *it;
        if (it == samples.end()) return samples.back();
        const ImuSample& hi = *it;
        const ImuSample& lo = *(it - 1);
        const double alpha = (t - lo.stamp) / (hi.stamp - lo.stamp);
        ImuSample out;
        out.stamp = t;
        out.gyro = (1.0 - alpha) * lo.gyro + alpha * hi.gyro;
        out.accel = (1.0 - alpha) * lo.accel + alpha * hi.accel;
        return out;
    };

    std::vector<ImuSample> out;
    ImuSample first = interp(t_begin);
    first.stamp = t_begin;
    out.push_back(first);
    for (const auto& s : samples)
        if (s.stamp > t_begin + 1e-12 && s.stamp < t_end - 1e-12) out.push_back(s);
    ImuSample last = interp(t_end);
    last.stamp = t_end;
    out.push_back(last);
    return out;
}

Vec9 imu_residual(const PreintegratedDelta& delta, const SplineTrajectory& spline,
                  double t_prev, double t_cur, const ImuBias& bias, const Vec3& gravity) {
    const SE3 pose0 = spline.evaluate(t_prev);
    const SE3 pose1 = spline.evaluate(t_cur);
    Vec3 v0, v1, w_unused;
    spline.evaluate_derivatives(t_prev, v0, w_unused);
    spline.evaluate_derivatives(t_cur, v1, w_unused);
    Eigen::Matrix<double, 9, 1> r;
    imu_residual_core<double>(delta, pose0.q, pose0.t, v0, pose1.q, pose1.t, v1, bias.gyro,
                              bias.accel, gravity, r);
    return r;
}

}  // namespace georef
