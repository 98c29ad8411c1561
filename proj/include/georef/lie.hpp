#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <cmath>

#include "georef/common.hpp"
#include "georef/jet.hpp"

namespace georef {

// Quaternions are stored as (w, x, y, z) vectors so that the same code path
// works for double and Jet scalars.
template <class S> using QuatT = Eigen::Matrix<S, 4, 1>;
template <class S> using Vec3T = Eigen::Matrix<S, 3, 1>;
template <class S> using Vec6T = Eigen::Matrix<S, 6, 1>;

template <class S>
QuatT<S> quat_identity() {
    QuatT<S> q;
    q << S(1.0), S(0.0), S(0.0), S(0.0);
    return q;
}

template <class S>
QuatT<S> quat_mul(const QuatT<S>& a, const QuatT<S>& b) {
    QuatT<S> q;
    q[0] = a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3];
    q[1] = a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2];
    q[2] = a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1];
    q[3] = a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0];
    return q;
}

template <class S>
QuatT<S> quat_conjugate(const QuatT<S>& q) {
    QuatT<S> c;
    c << q[0], -q[1], -q[2], -q[3];
    return c;
}

template <class S>
QuatT<S> quat_normalized(const QuatT<S>& q) {
    using std::sqrt;
    using georef::sqrt;
    S n = sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]);
    return (q / n).eval();
}

// v' = v + 2 w (u x v) + 2 u x (u x v), u = vector part.
template <class S>
Vec3T<S> quat_rotate(const QuatT<S>& q, const Vec3T<S>& v) {
    Vec3T<S> u;
    u << q[1], q[2], q[3];
    Vec3T<S> uv = u.cross(v);
    return v + S(2.0) * (q[0] * uv + u.cross(uv));
}

// Exponential map of so(3); the small-angle branch keeps Jet derivatives
// finite at the identity.
template <class S>
QuatT<S> so3_exp(const Vec3T<S>& phi) {
    using std::sqrt; using std::sin; using std::cos;
    using georef::sqrt; using georef::sin; using georef::cos;
    const S theta_sq = phi.squaredNorm();
    QuatT<S> q;
    if (scalar_value(theta_sq) < 1e-14) {
        // sin(t/2)/t = 1/2 - t^2/48 + O(t^4), cos(t/2) = 1 - t^2/8 + O(t^4)
        const S k = S(0.5) - theta_sq * (1.0 / 48.0);
        q[0] = S(1.0) - theta_sq * (1.0 / 8.0);
        q[1] = k * phi[0];
        q[2] = k * phi[1];
        q[3] = k * phi[2];
    } else {
        const S theta = sqrt(theta_sq);
        const S half = theta * 0.5;
        const S k = sin(half) / theta;
        q[0] = cos(half);
        q[1] = k * phi[0];
        q[2] = k * phi[1];
        q[3] = k * phi[2];
    }
    return q;
}

// Logarithm map on the principal branch (rotation angle in [0, pi]).
template <class S>
Vec3T<S> so3_log(const QuatT<S>& q_in) {
    using std::sqrt; using std::atan2;
    using georef::sqrt; using georef::atan2;
    QuatT<S> q = q_in;
    if (scalar_value(q[0]) < 0.0) q = (-q).eval();
    Vec3T<S> u;
    u << q[1], q[2], q[3];
    const S s_sq = u.squaredNorm();
    if (scalar_value(s_sq) < 1e-18) {
        // theta/sin(theta/2) -> 2 as theta -> 0
        return (u * (S(2.0) / q[0])).eval();
    }
    const S s = sqrt(s_sq);
    const S theta = S(2.0) * atan2(s, q[0]);
    return (u * (theta / s)).eval();
}

template <class S>
Eigen::Matrix<S, 3, 3> skew(const Vec3T<S>& v) {
    Eigen::Matrix<S, 3, 3> m;
    m << S(0.0), -v[2], v[1],
         v[2], S(0.0), -v[0],
         -v[1], v[0], S(0.0);
    return m;
}

template <class S>
Eigen::Matrix<S, 3, 3> quat_to_matrix(const QuatT<S>& q) {
    const S w = q[0], x = q[1], y = q[2], z = q[3];
    Eigen::Matrix<S, 3, 3> m;
    m(0, 0) = S(1.0) - S(2.0) * (y * y + z * z);
    m(0, 1) = S(2.0) * (x * y - w * z);
    m(0, 2) = S(2.0) * (x * z + w * y);
    m(1, 0) = S(2.0) * (x * y + w * z);
    m(1, 1) = S(1.0) - S(2.0) * (x * x + z * z);
    m(1, 2) = S(2.0) * (y * z - w * x);
    m(2, 0) = S(2.0) * (x * z - w * y);
    m(2, 1) = S(2.0) * (y * z + w * x);
    m(2, 2) = S(1.0) - S(2.0) * (x * x + y * y);
    return m;
}

// SE(3) log with the (translation, rotation) component order used throughout:
// the first three entries are the V^-1-corrected translation, the last three
// the so(3) log.
template <class S>
Vec6T<S> se3_log(const QuatT<S>& q, const Vec3T<S>& t) {
    using std::sqrt; using std::sin; using std::cos;
    using georef::sqrt; using georef::sin; using georef::cos;
    const Vec3T<S> phi = so3_log(q);
    const S theta_sq = phi.squaredNorm();
    Eigen::Matrix<S, 3, 3> vinv;
    const Eigen::Matrix<S, 3, 3> hat = skew(phi);
    if (scalar_value(theta_sq) < 1e-12) {
        vinv = Eigen::Matrix<S, 3, 3>::Identity() - S(0.5) * hat +
               (hat * hat) * (1.0 / 12.0);
    } else {
        const S theta = sqrt(theta_sq);
        const S half = theta * 0.5;
        const S c = (S(1.0) - half * cos(half) / sin(half)) / theta_sq;
        vinv = Eigen::Matrix<S, 3, 3>::Identity() - S(0.5) * hat + (hat * hat) * c;
    }
    Vec6T<S> out;
    out.template head<3>() = vinv * t;
    out.template tail<3>() = phi;
    return out;
}

template <class S>
void se3_exp(const Vec6T<S>& xi, QuatT<S>& q, Vec3T<S>& t) {
    using std::sqrt; using std::sin; using std::cos;
    using georef::sqrt; using georef::sin; using georef::cos;
    const Vec3T<S> rho = xi.template head<3>();
    const Vec3T<S> phi = xi.template tail<3>();
    q = so3_exp(phi);
    const S theta_sq = phi.squaredNorm();
    const Eigen::Matrix<S, 3, 3> hat = skew(phi);
    Eigen::Matrix<S, 3, 3> v;
    if (scalar_value(theta_sq) < 1e-12) {
        v = Eigen::Matrix<S, 3, 3>::Identity() + S(0.5) * hat + (hat * hat) * (1.0 / 6.0);
    } else {
        const S theta = sqrt(theta_sq);
        const S a = (S(1.0) - cos(theta)) / theta_sq;
        const S b = (theta - sin(theta)) / (theta_sq * theta);
        v = Eigen::Matrix<S, 3, 3>::Identity() + a * hat + b * (hat * hat);
    }
    t = v * rho;
}

// (qc, tc) = (qa, ta) * (qb, tb)
template <class S>
void se3_compose(const QuatT<S>& qa, const Vec3T<S>& ta, const QuatT<S>& qb,
                 const Vec3T<S>& tb, QuatT<S>& qc, Vec3T<S>& tc) {
    qc = quat_mul<S>(qa, qb);
    tc = quat_rotate<S>(qa, tb) + ta;
}

template <class S>
void se3_invert(const QuatT<S>& q, const Vec3T<S>& t, QuatT<S>& qi, Vec3T<S>& ti) {
    qi = quat_conjugate<S>(q);
    ti = -quat_rotate<S>(qi, t);
}

// Right Jacobian of SO(3), double only (used by IMU preintegration).
inline Mat3 so3_right_jacobian(const Vec3& phi) {
    const double theta_sq = phi.squaredNorm();
    const Mat3 hat = skew<double>(phi);
    if (theta_sq < 1e-12) {
        return Mat3::Identity() - 0.5 * hat + (hat * hat) / 6.0;
    }
    const double theta = std::sqrt(theta_sq);
    return Mat3::Identity() - (1.0 - std::cos(theta)) / theta_sq * hat +
           (theta - std::sin(theta)) / (theta_sq * theta) * (hat * hat);
}

// Rigid transform with value semantics. Composition follows T_ab * T_bc.
struct SE3 {
    Vec4 q = Vec4(1, 0, 0, 0);  // (w, x, y, z), unit norm
    Vec3 t = Vec3::Zero();

    SE3() = default;
    SE3(const Vec4& q_in, const Vec3& t_in) : q(quat_normalized<double>(q_in)), t(t_in) {}
    SE3(const Eigen::Quaterniond& quat, const Vec3& t_in)
        : q(Vec4(quat.w(), quat.x(), quat.y(), quat.z())), t(t_in) {
        q = quat_normalized<double>(q);
    }

    static SE3 identity() { return SE3(); }
    static SE3 from_matrix(const Mat3& r, const Vec3& t_in) {
        Eigen::Quaterniond quat(r);
        return SE3(quat, t_in);
    }
    static SE3 exp(const Vec6& xi) {
        SE3 out;
        se3_exp<double>(xi, out.q, out.t);
        return out;
    }

    Vec6 log() const { return se3_log<double>(q, t); }
    Mat3 rotation_matrix() const { return quat_to_matrix<double>(q); }
    Eigen::Quaterniond eigen_quat() const { return Eigen::Quaterniond(q[0], q[1], q[2], q[3]); }

    SE3 inverse() const {
        SE3 out;
        out.q = quat_conjugate<double>(q);
        out.t = -quat_rotate<double>(out.q, t);
        return out;
    }

    SE3 operator*(const SE3& rhs) const {
        SE3 out;
        out.q = quat_normalized<double>(quat_mul<double>(q, rhs.q));
        out.t = quat_rotate<double>(q, rhs.t) + t;
        return out;
    }

    Vec3 operator*(const Vec3& p) const { return quat_rotate<double>(q, p) + t; }

    double rotation_angle() const { return so3_log<double>(q).norm(); }
};

inline SE3 se3_from_rpy_yaw(double roll, double pitch, double yaw, const Vec3& t) {
    Eigen::Quaterniond q = Eigen::AngleAxisd(yaw, Vec3::UnitZ()) *
                           Eigen::AngleAxisd(pitch, Vec3::UnitY()) *
                           Eigen::AngleAxisd(roll, Vec3::UnitX());
    return SE3(q, t);
}

// Geodesic interpolation, alpha in [0,1].
inline Vec4 quat_slerp(const Vec4& a, const Vec4& b, double alpha) {
    Vec4 rel = quat_mul<double>(quat_conjugate<double>(a), b);
    Vec3 d = so3_log<double>(rel);
    return quat_mul<double>(a, so3_exp<double>((alpha * d).eval()));
}

inline SE3 se3_interpolate(const SE3& a, const SE3& b, double alpha) {
    SE3 out;
    out.q = quat_slerp(a.q, b.q, alpha);
    out.t = (1.0 - alpha) * a.t + alpha * b.t;
    return out;
}

}  // namespace georef
