#include "georef/spline.hpp"

#include <cmath>
#include <map>
#include <mutex>

#include "georef/io_util.hpp"

namespace georef {

namespace {

// Ascending-power polynomial helpers for the Cox-de Boor expansion.
using Poly = std::vector<double>;

Poly poly_add(const Poly& a, const Poly& b) {
    Poly out(std::max(a.size(), b.size()), 0.0);
    for (std::size_t i = 0; i < a.size(); ++i) out[i] += a[i];
    for (std::size_t i = 0; i < b.size(); ++i) out[i] += b[i];
    return out;
}

// p(t) * (c0 + c1 t)
Poly poly_mul_linear(const Poly& p, double c0, double c1) {
    Poly out(p.size() + 1, 0.0);
    for (std::size_t i = 0; i < p.size(); ++i) {
        out[i] += c0 * p[i];
        out[i + 1] += c1 * p[i];
    }
    return out;
}

// p(u + shift)
Poly poly_shift(const Poly& p, double shift) {
    Poly out(p.size(), 0.0);
    for (std::size_t n = 0; n < p.size(); ++n) {
        double binom = 1.0;
        double pow_shift = 1.0;
        for (std::size_t i = 0; i <= n; ++i) {
            // coefficient of u^(n-i): C(n, i) * shift^i
            out[n - i] += p[n] * binom * pow_shift;
            binom *= static_cast<double>(n - i) / static_cast<double>(i + 1);
            pow_shift *= shift;
        }
    }
    return out;
}

}  // namespace

SplineBasis::SplineBasis(int order) : order_(order) {
    if (order < 2) throw std::invalid_argument("spline order must be >= 2");
    // Basis functions N_{i,order} on integer knots, restricted to the span
    // [order-1, order), expanded symbolically.
    const int k = order;
    std::vector<Poly> basis(2 * k);
    for (int i = 0; i < 2 * k; ++i) basis[i] = (i == k - 1) ? Poly{1.0} : Poly{0.0};
    for (int m = 2; m <= k; ++m) {
        std::vector<Poly> next(2 * k, Poly{0.0});
        for (int i = 0; i + 1 < 2 * k; ++i) {
            const double inv = 1.0 / (m - 1);
            // (t - i)/(m-1) * N_{i,m-1} + (i + m - t)/(m-1) * N_{i+1,m-1}
            next[i] = poly_add(poly_mul_linear(basis[i], -i * inv, inv),
                               poly_mul_linear(basis[i + 1], (i + m) * inv, -inv));
        }
        basis = std::move(next);
    }
    m_.setZero(k, k);
    for (int j = 0; j < k; ++j) {
        const Poly b = poly_shift(basis[j], k - 1.0);  // t = u + (k-1)
        for (int p = 0; p < k && p < static_cast<int>(b.size()); ++p) m_(p, j) = b[p];
    }
    cumulative_.setZero(k, k);
    for (int j = 0; j < k; ++j)
        for (int l = j; l < k; ++l) cumulative_.col(j) += m_.col(l);
}

void SplineBasis::weights(double u, double* w) const {
    const int k = order_;
    for (int j = 0; j < k; ++j) {
        double acc = 0.0, up = 1.0;
        for (int p = 0; p < k; ++p) {
            acc += cumulative_(p, j) * up;
            up *= u;
        }
        w[j] = acc;
    }
}

void SplineBasis::derivative_weights(double u, double* dw) const {
    const int k = order_;
    for (int j = 0; j < k; ++j) {
        double acc = 0.0, up = 1.0;
        for (int p = 1; p < k; ++p) {
            acc += cumulative_(p, j) * p * up;
            up *= u;
        }
        dw[j] = acc;
    }
}

const SplineBasis& spline_basis(int order) {
    static std::mutex mutex;
    static std::map<int, SplineBasis> cache;
    std::lock_guard<std::mutex> lock(mutex);
    auto it = cache.find(order);
    if (it == cache.end()) it = cache.emplace(order, SplineBasis(order)).first;
    return it->second;
}

int SplineTrajectory::window_index(double t, double& u) const {
    const double s = (t - t0) / dt;
    const auto max_window = static_cast<std::int64_t>(knot_count()) - order;
    if (max_window < 0)
        throw std::runtime_error("spline has fewer knots than its order");
    auto i = static_cast<std::int64_t>(std::floor(s));
    if (i == max_window + 1 && s - static_cast<double>(i) < 1e-12) {
        // allow evaluation exactly at the support end
        i = max_window;
    }
    if (i < 0 || i > max_window)
        throw std::runtime_error(
            "time " + std::to_string(t) + " outside spline support [" +
            std::to_string(support_begin()) + ", " + std::to_string(support_end()) + ")");
    u = s - static_cast<double>(i);
    return static_cast<int>(i);
}

SE3 SplineTrajectory::evaluate(double t) const {
    double u;
    const int i = window_index(t, u);
    const SplineBasis& basis = spline_basis(order);
    double w[16];
    basis.weights(u, w);
    QuatT<double> q;
    Vec3T<double> p;
    eval_window_pose<double>(&rotation_knots[i], &translation_knots[i], order, w, q, p);
    return SE3(q, p);
}

void SplineTrajectory::evaluate_derivatives(double t, Vec3& linear_velocity,
                                            Vec3& angular_velocity) const {
    double u;
    const int i = window_index(t, u);
    const SplineBasis& basis = spline_basis(order);
    double w[16], dw[16];
    basis.weights(u, w);
    basis.derivative_weights(u, dw);
    const double inv_dt = 1.0 / dt;

    linear_velocity =
        eval_window_linear_velocity<double>(&translation_knots[i], order, dw, inv_dt);

    // Body angular velocity: omega = sum_j Rot(A_{j+1}..A_{k-1})^T (w'_j d_j)
    Vec3 omega = Vec3::Zero();
    Vec4 suffix = quat_identity<double>();
    for (int j = order - 1; j >= 1; --j) {
        const Vec4 rel =
            quat_mul<double>(quat_conjugate<double>(rotation_knots[i + j - 1]),
                             rotation_knots[i + j]);
        const Vec3 d = so3_log<double>(rel);
        omega += quat_rotate<double>(quat_conjugate<double>(suffix), (dw[j] * inv_dt * d).eval());
        suffix = quat_mul<double>(so3_exp<double>((w[j] * d).eval()), suffix);
    }
    angular_velocity = omega;
}

void SplineTrajectory::normalize_rotation_knots() {
    for (auto& q : rotation_knots) {
        q = quat_normalized<double>(q);
        if (q[0] < 0.0) q = -q;
    }
}

SplineTrajectory fit_initial_spline(const std::vector<StampedPose>& samples, double dt,
                                    int order) {
    if (samples.size() < 2) throw std::runtime_error("fit_initial_spline: need >= 2 samples");
    for (std::size_t i = 1; i < samples.size(); ++i)
        if (samples[i].stamp <= samples[i - 1].stamp)
            throw std::runtime_error("fit_initial_spline: samples not time-ordered");
    const double t_first = samples.front().stamp;
    const double t_last = samples.back().stamp;
    if (t_last - t_first < order * dt)
        throw std::runtime_error("fit_initial_spline: span shorter than order * dt");

    SplineTrajectory spline;
    spline.order = order;
    spline.dt = dt;
    spline.t0 = t_first;
    const auto windows = static_cast<std::size_t>(std::ceil((t_last - t_first) / dt - 1e-9));
    const std::size_t knots = windows + order;

    // Greville shift: sampling knot j at t0 + (j - (order-2)/2) * dt makes the
    // cumulative spline reproduce linear motion exactly. Knot times beyond the
    // sample range extrapolate along the boundary segments.
    const double shift = (order - 2.0) / 2.0;
    auto sample_at = [&](double t) {
        std::size_t hi = 1;
        while (hi + 1 < samples.size() && samples[hi].stamp < t) ++hi;
        const StampedPose& a = samples[hi - 1];
        const StampedPose& b = samples[hi];
        const double alpha = (t - a.stamp) / (b.stamp - a.stamp);
        SE3 out;
        out.q = quat_slerp(a.pose.q, b.pose.q, alpha);
        out.t = (1.0 - alpha) * a.pose.t + alpha * b.pose.t;
        return out;
    };
    spline.rotation_knots.reserve(knots);
    spline.translation_knots.reserve(knots);
    for (std::size_t j = 0; j < knots; ++j) {
        const double t = t_first + (static_cast<double>(j) - shift) * dt;
        const SE3 pose = sample_at(t);
        spline.rotation_knots.push_back(pose.q);
        spline.translation_knots.push_back(pose.t);
    }
    spline.normalize_rotation_knots();
    return spline;
}

void save_spline(const SplineTrajectory& spline, const std::string& path) {
    check_little_endian();
    auto os = open_binary_out(path);
    write_magic(os, "SPL1");
    write_le<std::uint32_t>(os, static_cast<std::uint32_t>(spline.order));
    write_le<double>(os, spline.t0);
    write_le<double>(os, spline.dt);
    write_le<std::uint64_t>(os, spline.knot_count());
    for (const auto& q : spline.rotation_knots)
        for (int i = 0; i < 4; ++i) write_le<double>(os, q[i]);
    for (const auto& p : spline.translation_knots)
        for (int i = 0; i < 3; ++i) write_le<double>(os, p[i]);
    if (!os) throw std::runtime_error("failed writing spline: " + path);
}

SplineTrajectory load_spline(const std::string& path) {
    check_little_endian();
    auto is = open_binary_in(path);
    expect_magic(is, "SPL1", path);
    SplineTrajectory spline;
    spline.order = static_cast<int>(read_le<std::uint32_t>(is));
    spline.t0 = read_le<double>(is);
    spline.dt = read_le<double>(is);
    const auto n = read_le<std::uint64_t>(is);
    spline.rotation_knots.resize(n);
    spline.translation_knots.resize(n);
    for (auto& q : spline.rotation_knots)
        for (int i = 0; i < 4; ++i) q[i] = read_le<double>(is);
    for (auto& p : spline.translation_knots)
        for (int i = 0; i < 3; ++i) p[i] = read_le<double>(is);
    return spline;
}

}  // namespace georef
