#pragma once

#include <Eigen/Core>
#include <cmath>

namespace georef {

// Forward-mode dual number used to differentiate pose-graph residuals with
// respect to the tangent-space perturbation of their parameter blocks.
// The derivative vector has a fixed capacity so that arithmetic stays
// allocation free; the active dimension is set per residual.
inline constexpr int kMaxJetDim = 64;

struct Jet {
    using Grad = Eigen::Matrix<double, Eigen::Dynamic, 1, Eigen::ColMajor, kMaxJetDim, 1>;

    double a = 0.0;
    Grad v;

    Jet() : v(0) {}
    Jet(double value) : a(value), v(0) {}  // NOLINT: implicit by design
    Jet(double value, int dim, int index) : a(value), v(Grad::Zero(dim)) { v[index] = 1.0; }
    Jet(double value, Grad grad) : a(value), v(std::move(grad)) {}

    static Jet constant(double value, int dim) { return Jet(value, Grad::Zero(dim)); }
};

// Addition/subtraction tolerate operands with mismatched (zero) dimension so
// that plain double literals can participate without lifting.
inline Jet operator+(const Jet& x, const Jet& y) {
    if (x.v.size() == 0) return Jet(x.a + y.a, y.v);
    if (y.v.size() == 0) return Jet(x.a + y.a, x.v);
    return Jet(x.a + y.a, x.v + y.v);
}
inline Jet operator-(const Jet& x, const Jet& y) {
    if (x.v.size() == 0) return Jet(x.a - y.a, (-y.v).eval());
    if (y.v.size() == 0) return Jet(x.a - y.a, x.v);
    return Jet(x.a - y.a, x.v - y.v);
}
inline Jet operator-(const Jet& x) { return Jet(-x.a, (-x.v).eval()); }
inline Jet operator*(const Jet& x, const Jet& y) {
    if (x.v.size() == 0) return Jet(x.a * y.a, (x.a * y.v).eval());
    if (y.v.size() == 0) return Jet(x.a * y.a, (y.a * x.v).eval());
    return Jet(x.a * y.a, y.a * x.v + x.a * y.v);
}
inline Jet operator/(const Jet& x, const Jet& y) {
    const double inv = 1.0 / y.a;
    if (y.v.size() == 0) return Jet(x.a * inv, (inv * x.v).eval());
    if (x.v.size() == 0) return Jet(x.a * inv, (-x.a * inv * inv * y.v).eval());
    return Jet(x.a * inv, inv * x.v - (x.a * inv * inv) * y.v);
}

inline Jet operator+(const Jet& x, double y) { return Jet(x.a + y, x.v); }
inline Jet operator+(double x, const Jet& y) { return Jet(x + y.a, y.v); }
inline Jet operator-(const Jet& x, double y) { return Jet(x.a - y, x.v); }
inline Jet operator-(double x, const Jet& y) { return Jet(x - y.a, (-y.v).eval()); }
inline Jet operator*(const Jet& x, double y) { return Jet(x.a * y, (y * x.v).eval()); }
inline Jet operator*(double x, const Jet& y) { return Jet(x * y.a, (x * y.v).eval()); }
inline Jet operator/(const Jet& x, double y) { return Jet(x.a / y, (x.v / y).eval()); }
inline Jet operator/(double x, const Jet& y) {
    const double inv = 1.0 / y.a;
    return Jet(x * inv, (-x * inv * inv * y.v).eval());
}

inline Jet& operator+=(Jet& x, const Jet& y) { x = x + y; return x; }
inline Jet& operator-=(Jet& x, const Jet& y) { x = x - y; return x; }
inline Jet& operator*=(Jet& x, const Jet& y) { x = x * y; return x; }
inline Jet& operator/=(Jet& x, const Jet& y) { x = x / y; return x; }

inline bool operator<(const Jet& x, const Jet& y) { return x.a < y.a; }
inline bool operator>(const Jet& x, const Jet& y) { return x.a > y.a; }
inline bool operator<=(const Jet& x, const Jet& y) { return x.a <= y.a; }
inline bool operator>=(const Jet& x, const Jet& y) { return x.a >= y.a; }
inline bool operator==(const Jet& x, const Jet& y) { return x.a == y.a; }

inline Jet sqrt(const Jet& x) {
    const double s = std::sqrt(x.a);
    return Jet(s, (0.5 / s * x.v).eval());
}
inline Jet sin(const Jet& x) { return Jet(std::sin(x.a), (std::cos(x.a) * x.v).eval()); }
inline Jet cos(const Jet& x) { return Jet(std::cos(x.a), (-std::sin(x.a) * x.v).eval()); }
inline Jet atan2(const Jet& y, const Jet& x) {
    const double denom = x.a * x.a + y.a * y.a;
    Jet::Grad g;
    if (x.v.size() == 0 && y.v.size() == 0) {
        g.resize(0);
    } else if (x.v.size() == 0) {
        g = (x.a / denom) * y.v;
    } else if (y.v.size() == 0) {
        g = (-y.a / denom) * x.v;
    } else {
        g = (x.a / denom) * y.v - (y.a / denom) * x.v;
    }
    return Jet(std::atan2(y.a, x.a), std::move(g));
}
inline Jet abs(const Jet& x) { return x.a < 0.0 ? -x : x; }

// Helpers to treat double and Jet uniformly in templated geometry code.
inline double scalar_value(double x) { return x; }
inline double scalar_value(const Jet& x) { return x.a; }

}  // namespace georef

namespace Eigen {

template <typename BinaryOp>
struct ScalarBinaryOpTraits<georef::Jet, double, BinaryOp> {
    using ReturnType = georef::Jet;
};
template <typename BinaryOp>
struct ScalarBinaryOpTraits<double, georef::Jet, BinaryOp> {
    using ReturnType = georef::Jet;
};

template <>
struct NumTraits<georef::Jet> : NumTraits<double> {
    using Real = georef::Jet;
    using NonInteger = georef::Jet;
    using Nested = georef::Jet;
    using Literal = double;
    enum {
        IsComplex = 0,
        IsInteger = 0,
        IsSigned = 1,
        RequireInitialization = 1,
        ReadCost = 1,
        AddCost = 8,
        MulCost = 8,
    };
};

}  // namespace Eigen
