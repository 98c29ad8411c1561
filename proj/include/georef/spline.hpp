#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

#include "georef/common.hpp"
#include "georef/io.hpp"
#include "georef/lie.hpp"

namespace georef {

// Power-basis blending matrix of a uniform B-spline of the given order and
// its cumulative form. Built once, shared by evaluation and optimization.
class SplineBasis {
public:
    explicit SplineBasis(int order);

    int order() const { return order_; }
    const Eigen::MatrixXd& matrix() const { return m_; }
    const Eigen::MatrixXd& cumulative_matrix() const { return cumulative_; }

    // b~_j(u) for j in [0, order); b~_0 == 1 for all u.
    void weights(double u, double* w) const;
    // d b~_j / du
    void derivative_weights(double u, double* dw) const;

private:
    int order_;
    Eigen::MatrixXd m_;           // (power, j)
    Eigen::MatrixXd cumulative_;  // (power, j)
};

// Cumulative-form window evaluation shared between double and Jet scalars.
// `qs`/`ps` hold `order` knots, `w` the cumulative weights at u.
template <class S>
void eval_window_pose(const QuatT<S>* qs, const Vec3T<S>* ps, int order, const double* w,
                      QuatT<S>& q_out, Vec3T<S>& p_out) {
    q_out = qs[0];
    p_out = ps[0];
    for (int j = 1; j < order; ++j) {
        const QuatT<S> rel = quat_mul<S>(quat_conjugate<S>(qs[j - 1]), qs[j]);
        const Vec3T<S> d = so3_log<S>(rel);
        q_out = quat_mul<S>(q_out, so3_exp<S>((d * S(w[j])).eval()));
        p_out += (ps[j] - ps[j - 1]) * S(w[j]);
    }
}

template <class S>
Vec3T<S> eval_window_linear_velocity(const Vec3T<S>* ps, int order, const double* dw,
                                     double inv_dt) {
    Vec3T<S> v = Vec3T<S>::Zero();
    for (int j = 1; j < order; ++j) v += (ps[j] - ps[j - 1]) * S(dw[j] * inv_dt);
    return v;
}

// Uniform-knot continuous-time pose with split translation/rotation
// representation. Supported times are [t0, t0 + (K - order + 1) * dt).
struct SplineTrajectory {
    int order = 4;
    double t0 = 0.0;
    double dt = 0.1;
    std::vector<Vec4> rotation_knots;    // unit quaternions (w,x,y,z)
    std::vector<Vec3> translation_knots;

    std::size_t knot_count() const { return rotation_knots.size(); }
    double support_begin() const { return t0; }
    double support_end() const {
        return t0 + (static_cast<double>(knot_count()) - order + 1) * dt;
    }

    // Window start index and normalized offset u in [0,1); throws when t is
    // outside the supported range.
    int window_index(double t, double& u) const;

    SE3 evaluate(double t) const;
    // Linear velocity in the spline frame; angular velocity in the body frame.
    void evaluate_derivatives(double t, Vec3& linear_velocity, Vec3& angular_velocity) const;

    void normalize_rotation_knots();
};

// Initializes knots by resampling a time-ordered pose sequence at the knot
// times (linear/slerp interpolation, Greville-shifted so that linear motion
// is reproduced exactly).
SplineTrajectory fit_initial_spline(const std::vector<StampedPose>& samples, double dt,
                                    int order = 4);

// SPL1 checkpoint: magic, order u32, t0 f64, dt f64, count u64, rotation
// knots (4 x f64, wxyz), translation knots (3 x f64). Little-endian.
void save_spline(const SplineTrajectory& spline, const std::string& path);
SplineTrajectory load_spline(const std::string& path);

const SplineBasis& spline_basis(int order);

}  // namespace georef
