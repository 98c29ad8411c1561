#include "georef/pose_graph.hpp"

#include <Eigen/Cholesky>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "georef/io_util.hpp"
#include "georef/jet.hpp"
#include "georef/parallel.hpp"

namespace georef {

const char* edge_kind_name(EdgeKind kind) {
    switch (kind) {
        case EdgeKind::AbsolutePose: return "absolute_pose";
        case EdgeKind::AbsolutePosition: return "absolute_position";
        case EdgeKind::Odometry: return "odometry";
        case EdgeKind::Imu: return "imu";
        case EdgeKind::Relative: return "relative";
        case EdgeKind::BiasWalk: return "bias_walk";
        case EdgeKind::BiasPrior: return "bias_prior";
        case EdgeKind::AnchorPrior: return "anchor_prior";
    }
    return "unknown";
}

int GraphEdge::residual_dim() const {
    switch (kind) {
        case EdgeKind::AbsolutePosition: return 3;
        case EdgeKind::Imu: return 9;
        default: return 6;
    }
}

namespace {

// ---------------------------------------------------------------------------
// Templated residual cores
// ---------------------------------------------------------------------------

template <class S>
struct LiftedPose {
    QuatT<S> q;
    Vec3T<S> p;
};

template <class S>
Vec6T<S> log_of_product(const SE3& measurement_inv, const LiftedPose<S>& a,
                        const LiftedPose<S>& b) {
    // Log(M^-1 * a^-1 * b)
    QuatT<S> qa_inv;
    Vec3T<S> ta_inv;
    se3_invert<S>(a.q, a.p, qa_inv, ta_inv);
    QuatT<S> q_rel;
    Vec3T<S> t_rel;
    se3_compose<S>(qa_inv, ta_inv, b.q, b.p, q_rel, t_rel);

    QuatT<S> qm;
    Vec3T<S> tm;
    for (int i = 0; i < 4; ++i) qm[i] = S(measurement_inv.q[i]);
    for (int i = 0; i < 3; ++i) tm[i] = S(measurement_inv.t[i]);
    QuatT<S> q_err;
    Vec3T<S> t_err;
    se3_compose<S>(qm, tm, q_rel, t_rel, q_err, t_err);
    return se3_log<S>(q_err, t_err);
}

template <class S>
Vec6T<S> absolute_pose_residual(const SE3& t_abs_inv, const LiftedPose<S>& anchor,
                                const LiftedPose<S>& spline_pose) {
    QuatT<S> q_ax;
    Vec3T<S> t_ax;
    se3_compose<S>(anchor.q, anchor.p, spline_pose.q, spline_pose.p, q_ax, t_ax);
    QuatT<S> qm;
    Vec3T<S> tm;
    for (int i = 0; i < 4; ++i) qm[i] = S(t_abs_inv.q[i]);
    for (int i = 0; i < 3; ++i) tm[i] = S(t_abs_inv.t[i]);
    QuatT<S> q_err;
    Vec3T<S> t_err;
    se3_compose<S>(qm, tm, q_ax, t_ax, q_err, t_err);
    return se3_log<S>(q_err, t_err);
}

template <class S>
Vec3T<S> absolute_position_residual(const Vec3& p_abs, const LiftedPose<S>& anchor,
                                    const Vec3T<S>& spline_position) {
    Vec3T<S> out = quat_rotate<S>(anchor.q, spline_position) + anchor.p;
    for (int i = 0; i < 3; ++i) out[i] -= S(p_abs[i]);
    return out;
}

// ---------------------------------------------------------------------------
// Variable layout
// ---------------------------------------------------------------------------

struct Layout {
    std::vector<int> knot_col;   // 6 per knot (rot 0-2, trans 3-5), -1 if fixed
    int anchor_col = -1;
    std::vector<int> bias_col;   // 6 per segment
    int total = 0;
};

Layout make_layout(const PoseGraph& graph) {
    Layout layout;
    const std::size_t knots = graph.spline.knot_count();
    layout.knot_col.assign(knots, -1);
    int col = 0;
    if (!graph.fix_spline) {
        for (std::size_t j = 0; j < knots; ++j) {
            layout.knot_col[j] = col;
            col += 6;
        }
    }
    if (!graph.fix_anchor) {
        layout.anchor_col = col;
        col += 6;
    }
    layout.bias_col.assign(graph.biases.size(), -1);
    if (!graph.fix_biases) {
        for (std::size_t b = 0; b < graph.biases.size(); ++b) {
            layout.bias_col[b] = col;
            col += 6;
        }
    }
    layout.total = col;
    return layout;
}

// ---------------------------------------------------------------------------
// Edge evaluation
// ---------------------------------------------------------------------------

struct EdgeTimes {
    bool has_t0 = false, has_t1 = false;
    int window0 = 0, window1 = 0;
    double u0 = 0.0, u1 = 0.0;
};

EdgeTimes edge_times(const GraphEdge& edge, const SplineTrajectory& spline) {
    EdgeTimes times;
    switch (edge.kind) {
        case EdgeKind::AbsolutePose:
        case EdgeKind::AbsolutePosition:
            times.has_t0 = true;
            times.window0 = spline.window_index(edge.t0, times.u0);
            break;
        case EdgeKind::Odometry:
        case EdgeKind::Relative:
        case EdgeKind::Imu:
            times.has_t0 = times.has_t1 = true;
            times.window0 = spline.window_index(edge.t0, times.u0);
            times.window1 = spline.window_index(edge.t1, times.u1);
            break;
        default:
            break;
    }
    return times;
}

bool edge_uses_anchor(EdgeKind kind) {
    return kind == EdgeKind::AbsolutePose || kind == EdgeKind::AbsolutePosition ||
           kind == EdgeKind::AnchorPrior;
}

// Raw (unwhitened) residual with plain doubles; shared by cost-only passes
// and the public residual functions.
Eigen::VectorXd raw_residual(const GraphEdge& edge, const PoseGraph& graph) {
    const SplineTrajectory& spline = graph.spline;
    switch (edge.kind) {
        case EdgeKind::AbsolutePose: {
            const SE3 pose = spline.evaluate(edge.t0);
            return absolute_pose_residual<double>(edge.measurement.inverse(),
                                                  {graph.anchor.q, graph.anchor.t},
                                                  {pose.q, pose.t});
        }
        case EdgeKind::AbsolutePosition: {
            const SE3 pose = spline.evaluate(edge.t0);
            return absolute_position_residual<double>(
                edge.position, {graph.anchor.q, graph.anchor.t}, pose.t);
        }
        case EdgeKind::Odometry:
        case EdgeKind::Relative: {
            const SE3 p0 = spline.evaluate(edge.t0);
            const SE3 p1 = spline.evaluate(edge.t1);
            return log_of_product<double>(edge.measurement.inverse(), {p0.q, p0.t},
                                          {p1.q, p1.t});
        }
        case EdgeKind::Imu: {
            const ImuBias& bias = graph.biases.at(edge.bias0);
            return imu_residual(edge.delta, spline, edge.t0, edge.t1, bias, graph.gravity);
        }
        case EdgeKind::BiasWalk: {
            const ImuBias& b0 = graph.biases.at(edge.bias0);
            const ImuBias& b1 = graph.biases.at(edge.bias1);
            Vec6 r;
            r.head<3>() = b1.gyro - b0.gyro;
            r.tail<3>() = b1.accel - b0.accel;
            return r;
        }
        case EdgeKind::BiasPrior: {
            const ImuBias& b0 = graph.biases.at(edge.bias0);
            Vec6 r;
            r.head<3>() = b0.gyro - edge.bias_prior.gyro;
            r.tail<3>() = b0.accel - edge.bias_prior.accel;
            return r;
        }
        case EdgeKind::AnchorPrior: {
            const SE3 err = edge.measurement.inverse() * graph.anchor;
            return err.log();
        }
    }
    throw std::logic_error("unhandled edge kind");
}

// Tangent groups of 3 appended in a deterministic order; `col` is the global
// column of the group, `jet` the offset inside the edge-local jet vector.
struct TangentGroup {
    int col;
};

struct EdgeEval {
    Eigen::Matrix<double, Eigen::Dynamic, 1, 0, 9, 1> residual;       // whitened
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, 9, kMaxJetDim> jacobian;
    std::vector<int> cols;  // per tangent dim, global column
    double squared_norm = 0.0;
};

struct JetKnots {
    std::vector<int> indices;  // unique knot indices (sorted)
    std::vector<QuatT<Jet>> q;
    std::vector<Vec3T<Jet>> p;

    int local_of(int knot) const {
        return static_cast<int>(std::lower_bound(indices.begin(), indices.end(), knot) -
                                indices.begin());
    }
};

void lift_window(const JetKnots& knots, int window, int order, QuatT<Jet>* qs,
                 Vec3T<Jet>* ps) {
    for (int j = 0; j < order; ++j) {
        const int local = knots.local_of(window + j);
        qs[j] = knots.q[local];
        ps[j] = knots.p[local];
    }
}

EdgeEval evaluate_edge_jet(const GraphEdge& edge, const PoseGraph& graph, const Layout& layout,
                           const Eigen::MatrixXd& whitener) {
    const SplineTrajectory& spline = graph.spline;
    const int order = spline.order;
    const SplineBasis& basis = spline_basis(order);
    const EdgeTimes times = edge_times(edge, spline);

    // collect unique knots of the active windows
    JetKnots knots;
    if (times.has_t0 || times.has_t1) {
        std::set<int> unique;
        if (times.has_t0)
            for (int j = 0; j < order; ++j) unique.insert(times.window0 + j);
        if (times.has_t1)
            for (int j = 0; j < order; ++j) unique.insert(times.window1 + j);
        knots.indices.assign(unique.begin(), unique.end());
    }

    // tangent layout of this edge
    std::vector<int> cols;  // global column per tangent dim
    const bool knots_active = !graph.fix_spline && !knots.indices.empty();
    const bool anchor_active = edge_uses_anchor(edge.kind) && !graph.fix_anchor;
    const bool bias0_active = edge.bias0 >= 0 && !graph.fix_biases;
    const bool bias1_active = edge.bias1 >= 0 && !graph.fix_biases;
    int dim = 0;
    if (knots_active) dim += 6 * static_cast<int>(knots.indices.size());
    if (anchor_active) dim += 6;
    if (bias0_active) dim += 6;
    if (bias1_active) dim += 6;
    if (dim > kMaxJetDim)
        throw std::runtime_error("edge touches more tangent dimensions than kMaxJetDim");
    cols.resize(dim);

    int offset = 0;
    auto jet_vec3 = [&](const Vec3& value, int base) {
        Vec3T<Jet> out;
        for (int i = 0; i < 3; ++i) out[i] = Jet(value[i], dim, base + i);
        return out;
    };
    auto const_vec3 = [&](const Vec3& value) {
        Vec3T<Jet> out;
        for (int i = 0; i < 3; ++i) out[i] = Jet(value[i]);
        return out;
    };

    // knots: left-multiplicative rotation perturbation, additive translation
    if (times.has_t0 || times.has_t1) {
        knots.q.resize(knots.indices.size());
        knots.p.resize(knots.indices.size());
        for (std::size_t n = 0; n < knots.indices.size(); ++n) {
            const int j = knots.indices[n];
            const Vec4& q_const = spline.rotation_knots[j];
            const Vec3& p_const = spline.translation_knots[j];
            if (knots_active) {
                const int rot_base = offset;
                Vec3T<Jet> delta;
                for (int i = 0; i < 3; ++i) delta[i] = Jet(0.0, dim, rot_base + i);
                QuatT<Jet> qc;
                for (int i = 0; i < 4; ++i) qc[i] = Jet(q_const[i]);
                knots.q[n] = quat_mul<Jet>(so3_exp<Jet>(delta), qc);
                knots.p[n] = jet_vec3(p_const, offset + 3);
                const int gcol = layout.knot_col[j];
                for (int i = 0; i < 6; ++i) cols[offset + i] = gcol + i;
                offset += 6;
            } else {
                for (int i = 0; i < 4; ++i) knots.q[n][i] = Jet(q_const[i]);
                knots.p[n] = const_vec3(p_const);
            }
        }
    }

    LiftedPose<Jet> anchor;
    if (edge_uses_anchor(edge.kind)) {
        if (anchor_active) {
            Vec3T<Jet> delta;
            for (int i = 0; i < 3; ++i) delta[i] = Jet(0.0, dim, offset + i);
            QuatT<Jet> qc;
            for (int i = 0; i < 4; ++i) qc[i] = Jet(graph.anchor.q[i]);
            anchor.q = quat_mul<Jet>(so3_exp<Jet>(delta), qc);
            anchor.p = jet_vec3(graph.anchor.t, offset + 3);
            for (int i = 0; i < 6; ++i) cols[offset + i] = layout.anchor_col + i;
            offset += 6;
        } else {
            for (int i = 0; i < 4; ++i) anchor.q[i] = Jet(graph.anchor.q[i]);
            anchor.p = const_vec3(graph.anchor.t);
        }
    }

    Vec3T<Jet> bias0_g, bias0_a, bias1_g, bias1_a;
    if (edge.bias0 >= 0) {
        const ImuBias& b = graph.biases.at(edge.bias0);
        if (bias0_active) {
            bias0_g = jet_vec3(b.gyro, offset);
            bias0_a = jet_vec3(b.accel, offset + 3);
            for (int i = 0; i < 6; ++i) cols[offset + i] = layout.bias_col[edge.bias0] + i;
            offset += 6;
        } else {
            bias0_g = const_vec3(b.gyro);
            bias0_a = const_vec3(b.accel);
        }
    }
    if (edge.bias1 >= 0) {
        const ImuBias& b = graph.biases.at(edge.bias1);
        if (bias1_active) {
            bias1_g = jet_vec3(b.gyro, offset);
            bias1_a = jet_vec3(b.accel, offset + 3);
            for (int i = 0; i < 6; ++i) cols[offset + i] = layout.bias_col[edge.bias1] + i;
            offset += 6;
        } else {
            bias1_g = const_vec3(b.gyro);
            bias1_a = const_vec3(b.accel);
        }
    }

    // spline poses at the edge times
    double w0[16], w1[16], dw0[16], dw1[16];
    LiftedPose<Jet> pose0, pose1;
    Vec3T<Jet> vel0, vel1;
    QuatT<Jet> qs[16];
    Vec3T<Jet> ps[16];
    if (times.has_t0) {
        basis.weights(times.u0, w0);
        lift_window(knots, times.window0, order, qs, ps);
        eval_window_pose<Jet>(qs, ps, order, w0, pose0.q, pose0.p);
        if (edge.kind == EdgeKind::Imu) {
            basis.derivative_weights(times.u0, dw0);
            vel0 = eval_window_linear_velocity<Jet>(ps, order, dw0, 1.0 / spline.dt);
        }
    }
    if (times.has_t1) {
        basis.weights(times.u1, w1);
        lift_window(knots, times.window1, order, qs, ps);
        eval_window_pose<Jet>(qs, ps, order, w1, pose1.q, pose1.p);
        if (edge.kind == EdgeKind::Imu) {
            basis.derivative_weights(times.u1, dw1);
            vel1 = eval_window_linear_velocity<Jet>(ps, order, dw1, 1.0 / spline.dt);
        }
    }

    // residual
    Eigen::Matrix<Jet, Eigen::Dynamic, 1, 0, 9, 1> r;
    switch (edge.kind) {
        case EdgeKind::AbsolutePose:
            r = absolute_pose_residual<Jet>(edge.measurement.inverse(), anchor, pose0);
            break;
        case EdgeKind::AbsolutePosition:
            r = absolute_position_residual<Jet>(edge.position, anchor, pose0.p);
            break;
        case EdgeKind::Odometry:
        case EdgeKind::Relative:
            r = log_of_product<Jet>(edge.measurement.inverse(), pose0, pose1);
            break;
        case EdgeKind::Imu: {
            Eigen::Matrix<Jet, 9, 1> ri;
            imu_residual_core<Jet>(edge.delta, pose0.q, pose0.p, vel0, pose1.q, pose1.p, vel1,
                                   bias0_g, bias0_a, graph.gravity, ri);
            r = ri;
            break;
        }
        case EdgeKind::BiasWalk: {
            r.resize(6);
            for (int i = 0; i < 3; ++i) {
                r[i] = bias1_g[i] - bias0_g[i];
                r[i + 3] = bias1_a[i] - bias0_a[i];
            }
            break;
        }
        case EdgeKind::BiasPrior: {
            r.resize(6);
            for (int i = 0; i < 3; ++i) {
                r[i] = bias0_g[i] - Jet(edge.bias_prior.gyro[i]);
                r[i + 3] = bias0_a[i] - Jet(edge.bias_prior.accel[i]);
            }
            break;
        }
        case EdgeKind::AnchorPrior: {
            LiftedPose<Jet> identity;
            identity.q = quat_identity<Jet>();
            identity.p = const_vec3(Vec3::Zero());
            r = absolute_pose_residual<Jet>(edge.measurement.inverse(), anchor,
                                            identity);
            break;
        }
    }

    const int m = static_cast<int>(r.size());
    EdgeEval eval;
    eval.cols = std::move(cols);
    Eigen::Matrix<double, Eigen::Dynamic, 1, 0, 9, 1> raw(m);
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, 9, kMaxJetDim> raw_jac(m, dim);
    raw_jac.setZero();
    for (int i = 0; i < m; ++i) {
        raw[i] = r[i].a;
        if (r[i].v.size() > 0) raw_jac.row(i).head(r[i].v.size()) = r[i].v.transpose();
    }

    eval.residual = whitener * raw;
    eval.jacobian = whitener * raw_jac;
    eval.squared_norm = eval.residual.squaredNorm();
    return eval;
}

double huber_cost(double s, double delta) {
    if (!(s > delta)) return s;  // covers delta == inf
    return 2.0 * std::sqrt(delta * s) - delta;
}

double huber_weight(double s, double delta) {
    if (!(s > delta)) return 1.0;
    return std::sqrt(delta / s);
}

// Upper-triangular W with W^T W = Sigma^-1.
Eigen::MatrixXd whitener_of(const Eigen::MatrixXd& covariance, int dim) {
    if (covariance.size() == 0) return Eigen::MatrixXd::Identity(dim, dim);
    if (covariance.rows() != dim || covariance.cols() != dim)
        throw std::runtime_error("edge covariance dimension mismatch");
    const Eigen::MatrixXd info = covariance.inverse();
    Eigen::LLT<Eigen::MatrixXd> llt(info);
    if (llt.info() != Eigen::Success)
        throw std::runtime_error("edge covariance is not positive definite");
    return llt.matrixU();
}

}  // namespace

// ---------------------------------------------------------------------------
// Public residuals
// ---------------------------------------------------------------------------

Eigen::VectorXd edge_residual(const GraphEdge& edge, const PoseGraph& graph) {
    return raw_residual(edge, graph);
}

Vec6 residual_absolute(const GraphEdge& edge, const PoseGraph& graph) {
    return raw_residual(edge, graph);
}
Vec3 residual_position(const GraphEdge& edge, const PoseGraph& graph) {
    return raw_residual(edge, graph);
}
Vec6 residual_odometry(const GraphEdge& edge, const PoseGraph& graph) {
    return raw_residual(edge, graph);
}
Vec6 residual_relative(const GraphEdge& edge, const PoseGraph& graph) {
    return raw_residual(edge, graph);
}

// ---------------------------------------------------------------------------
// Optimization
// ---------------------------------------------------------------------------

namespace {

struct GraphState {
    std::vector<Vec4> rot;
    std::vector<Vec3> trans;
    SE3 anchor;
    std::vector<ImuBias> biases;

    static GraphState capture(const PoseGraph& g) {
        return {g.spline.rotation_knots, g.spline.translation_knots, g.anchor, g.biases};
    }
    void restore(PoseGraph& g) const {
        g.spline.rotation_knots = rot;
        g.spline.translation_knots = trans;
        g.anchor = anchor;
        g.biases = biases;
    }
};

void apply_step(PoseGraph& graph, const Layout& layout, const Eigen::VectorXd& delta) {
    if (!graph.fix_spline) {
        for (std::size_t j = 0; j < graph.spline.knot_count(); ++j) {
            const int col = layout.knot_col[j];
            const Vec3 dr = delta.segment<3>(col);
            const Vec3 dp = delta.segment<3>(col + 3);
            auto& q = graph.spline.rotation_knots[j];
            q = quat_normalized<double>(quat_mul<double>(so3_exp<double>(dr), q));
            graph.spline.translation_knots[j] += dp;
        }
    }
    if (!graph.fix_anchor) {
        const int col = layout.anchor_col;
        const Vec3 dr = delta.segment<3>(col);
        const Vec3 dp = delta.segment<3>(col + 3);
        graph.anchor.q =
            quat_normalized<double>(quat_mul<double>(so3_exp<double>(dr), graph.anchor.q));
        graph.anchor.t += dp;
    }
    if (!graph.fix_biases) {
        for (std::size_t b = 0; b < graph.biases.size(); ++b) {
            const int col = layout.bias_col[b];
            graph.biases[b].gyro += delta.segment<3>(col);
            graph.biases[b].accel += delta.segment<3>(col + 3);
        }
    }
}

}  // namespace

std::string OptimizeReport::to_text() const {
    std::ostringstream os;
    os << "initial_cost " << initial_cost << "\n";
    os << "final_cost " << final_cost << "\n";
    os << "iterations " << iterations << "\n";
    os << "accepted_steps " << accepted_steps << "\n";
    os << "rejected_steps " << rejected_steps << "\n";
    os << "termination " << termination << "\n";
    for (const auto& [kind, cost] : final_cost_by_kind)
        os << "cost_" << kind << " " << cost << "\n";
    return os.str();
}

OptimizeReport optimize(PoseGraph& graph, const OptimizeOptions& options) {
    OptimizeReport report;
    const Layout layout = make_layout(graph);
    if (layout.total == 0) throw std::runtime_error("optimize: all blocks are fixed");

    const std::size_t n_edges = graph.edges.size();
    if (n_edges == 0) throw std::runtime_error("optimize: graph has no edges");

    // whiteners and per-edge bookkeeping
    std::vector<Eigen::MatrixXd> whiteners(n_edges);
    for (std::size_t e = 0; e < n_edges; ++e)
        whiteners[e] = whitener_of(graph.edges[e].covariance, graph.edges[e].residual_dim());

    // connectivity check for free knots
    if (!graph.fix_spline) {
        std::vector<int> touched(graph.spline.knot_count(), 0);
        for (const auto& edge : graph.edges) {
            const EdgeTimes times = edge_times(edge, graph.spline);
            if (times.has_t0)
                for (int j = 0; j < graph.spline.order; ++j) touched[times.window0 + j] = 1;
            if (times.has_t1)
                for (int j = 0; j < graph.spline.order; ++j) touched[times.window1 + j] = 1;
        }
        std::string missing;
        for (std::size_t j = 0; j < touched.size(); ++j)
            if (!touched[j]) missing += (missing.empty() ? "" : ", ") + std::to_string(j);
        if (!missing.empty())
            throw std::runtime_error("optimize: disconnected spline knots: " + missing);
    }

    // cost-only evaluation (double path)
    auto total_cost = [&](std::vector<double>* by_edge = nullptr) {
        std::vector<double> costs(n_edges);
        parallel_for(static_cast<std::int64_t>(n_edges), options.threads, [&](std::int64_t e) {
            const GraphEdge& edge = graph.edges[e];
            const Eigen::VectorXd r = whiteners[e] * raw_residual(edge, graph);
            costs[e] = huber_cost(r.squaredNorm(), edge.huber_delta);
        });
        double sum = 0.0;
        for (std::size_t e = 0; e < n_edges; ++e) sum += costs[e];  // fixed order
        if (by_edge) *by_edge = std::move(costs);
        return sum;
    };

    report.initial_cost = total_cost();
    double cost = report.initial_cost;

    // sparse lower-triangular Hessian pattern
    Eigen::SparseMatrix<double> hessian(layout.total, layout.total);
    std::vector<EdgeEval> evals(n_edges);
    {
        std::vector<Eigen::Triplet<double>> pattern;
        for (std::size_t e = 0; e < n_edges; ++e) {
            EdgeEval eval = evaluate_edge_jet(graph.edges[e], graph, layout, whiteners[e]);
            for (int a = 0; a < static_cast<int>(eval.cols.size()); ++a)
                for (int b = 0; b < static_cast<int>(eval.cols.size()); ++b)
                    if (eval.cols[a] >= eval.cols[b])
                        pattern.emplace_back(eval.cols[a], eval.cols[b], 0.0);
            evals[e] = std::move(eval);
        }
        for (int c = 0; c < layout.total; ++c) pattern.emplace_back(c, c, 0.0);
        hessian.setFromTriplets(pattern.begin(), pattern.end());
        hessian.makeCompressed();
    }
    auto value_index = [&](int row, int col) {
        const int start = hessian.outerIndexPtr()[col];
        const int end = hessian.outerIndexPtr()[col + 1];
        const auto* inner = hessian.innerIndexPtr();
        const auto it = std::lower_bound(inner + start, inner + end, row);
        return static_cast<std::int64_t>(it - inner);
    };
    // cached scatter indices per edge (lower triangle, a >= b)
    std::vector<std::vector<std::int64_t>> scatter(n_edges);
    for (std::size_t e = 0; e < n_edges; ++e) {
        const auto& cols = evals[e].cols;
        auto& sc = scatter[e];
        sc.reserve(cols.size() * cols.size());
        for (std::size_t a = 0; a < cols.size(); ++a)
            for (std::size_t b = 0; b < cols.size(); ++b)
                sc.push_back(cols[a] >= cols[b] ? value_index(cols[a], cols[b]) : -1);
    }
    std::vector<std::int64_t> diag_index(layout.total);
    for (int c = 0; c < layout.total; ++c) diag_index[c] = value_index(c, c);

    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>, Eigen::Lower> solver;
    solver.analyzePattern(hessian);

    double lambda = options.initial_lambda;
    Eigen::VectorXd gradient(layout.total);
    Eigen::VectorXd diag_backup(layout.total);
    bool jacobians_fresh = true;

    for (int iter = 0; iter < options.max_iterations; ++iter) {
        report.iterations = iter + 1;
        if (!jacobians_fresh) {
            parallel_for(static_cast<std::int64_t>(n_edges), options.threads,
                         [&](std::int64_t e) {
                             evals[e] = evaluate_edge_jet(graph.edges[e], graph, layout, whiteners[e]);
                         });
            jacobians_fresh = true;
        }

        // assemble (serial, fixed edge order)
        double* values = hessian.valuePtr();
        std::fill(values, values + hessian.nonZeros(), 0.0);
        gradient.setZero();
        for (std::size_t e = 0; e < n_edges; ++e) {
            const EdgeEval& eval = evals[e];
            const double w = huber_weight(eval.squared_norm, graph.edges[e].huber_delta);
            const auto& jac = eval.jacobian;
            const int dim = static_cast<int>(eval.cols.size());
            const auto& sc = scatter[e];
            for (int a = 0; a < dim; ++a) {
                gradient[eval.cols[a]] += w * jac.col(a).dot(eval.residual);
                for (int b = 0; b < dim; ++b) {
                    const std::int64_t idx = sc[a * dim + b];
                    if (idx >= 0) values[idx] += w * jac.col(a).dot(jac.col(b));
                }
            }
        }

        if (gradient.lpNorm<Eigen::Infinity>() < options.gradient_tolerance) {
            report.termination = "gradient_tolerance";
            break;
        }

        for (int c = 0; c < layout.total; ++c) diag_backup[c] = values[diag_index[c]];

        bool accepted = false;
        while (!accepted) {
            for (int c = 0; c < layout.total; ++c)
                values[diag_index[c]] =
                    diag_backup[c] + lambda * std::max(diag_backup[c], 1e-12);
            solver.factorize(hessian);
            if (solver.info() != Eigen::Success) {
                lambda *= 10.0;
                if (lambda > options.max_lambda)
                    throw std::runtime_error(
                        "optimize: normal equations stay indefinite after damping "
                        "escalation (lambda " +
                        std::to_string(lambda) + ", iteration " + std::to_string(iter) + ")");
                continue;
            }
            const Eigen::VectorXd step = solver.solve(-gradient);
            const GraphState saved = GraphState::capture(graph);
            apply_step(graph, layout, step);
            const double candidate_cost = total_cost();
            if (candidate_cost <= cost && std::isfinite(candidate_cost)) {
                accepted = true;
                ++report.accepted_steps;
                const double decrease = cost - candidate_cost;
                cost = candidate_cost;
                lambda = std::max(lambda / 3.0, 1e-12);
                jacobians_fresh = false;
                if (decrease < options.cost_decrease_tolerance * std::max(cost, 1e-300)) {
                    report.termination = "cost_decrease_tolerance";
                }
            } else {
                saved.restore(graph);
                ++report.rejected_steps;
                lambda *= 10.0;
                if (lambda > options.max_lambda) {
                    report.termination = "lambda_limit";
                    break;
                }
            }
        }
        if (!report.termination.empty()) break;
    }
    if (report.termination.empty()) report.termination = "max_iterations";

    std::vector<double> final_costs;
    report.final_cost = total_cost(&final_costs);
    for (std::size_t e = 0; e < n_edges; ++e)
        report.final_cost_by_kind[edge_kind_name(graph.edges[e].kind)] += final_costs[e];
    return report;
}

// ---------------------------------------------------------------------------
// Anchor initialization and loop closures
// ---------------------------------------------------------------------------

SE3 initialize_anchor(const std::vector<std::pair<double, Vec3>>& refined_positions,
                      const SplineTrajectory& spline) {
    if (refined_positions.size() < 2)
        throw std::runtime_error("initialize_anchor: need at least 2 positions");

    std::vector<Vec3> spline_pos;
    spline_pos.reserve(refined_positions.size());
    for (const auto& [t, p] : refined_positions) spline_pos.push_back(spline.evaluate(t).t);

    Vec2 centroid_s = Vec2::Zero(), centroid_r = Vec2::Zero();
    double mean_dz = 0.0;
    for (std::size_t i = 0; i < refined_positions.size(); ++i) {
        centroid_s += spline_pos[i].head<2>();
        centroid_r += refined_positions[i].second.head<2>();
        mean_dz += refined_positions[i].second.z() - spline_pos[i].z();
    }
    const double n = static_cast<double>(refined_positions.size());
    centroid_s /= n;
    centroid_r /= n;
    mean_dz /= n;

    double dot = 0.0, cross = 0.0, spread = 0.0;
    for (std::size_t i = 0; i < refined_positions.size(); ++i) {
        const Vec2 a = spline_pos[i].head<2>() - centroid_s;
        const Vec2 b = refined_positions[i].second.head<2>() - centroid_r;
        dot += a.dot(b);
        cross += a.x() * b.y() - a.y() * b.x();
        spread += a.squaredNorm();
    }
    if (spread < 1e-12)
        throw std::runtime_error("initialize_anchor: positions coincide, yaw unobservable");

    const double yaw = std::atan2(cross, dot);
    const Eigen::Rotation2Dd rot(yaw);
    const Vec2 translation = centroid_r - rot * centroid_s;

    SE3 anchor = se3_from_rpy_yaw(0.0, 0.0, yaw, Vec3(translation.x(), translation.y(), mean_dz));
    return anchor;
}

std::vector<LoopClosureCandidate> propose_loop_closures(
    const std::vector<LocalMap>& maps, const std::map<int, SE3>& refined_poses,
    const std::vector<StampedPose>& odometry, const SplineTrajectory& spline,
    const LoopClosureParams& params) {
    std::vector<LoopClosureCandidate> out;
    if (maps.size() < 2) return out;

    // cumulative path length along the odometry samples
    std::vector<double> cum(odometry.size(), 0.0);
    for (std::size_t i = 1; i < odometry.size(); ++i)
        cum[i] = cum[i - 1] + (odometry[i].pose.t - odometry[i - 1].pose.t).norm();
    auto path_at = [&](double t) {
        auto it = std::lower_bound(odometry.begin(), odometry.end(), t,
                                   [](const StampedPose& sp, double v) { return sp.stamp < v; });
        if (it == odometry.begin()) return 0.0;
        if (it == odometry.end()) return cum.back();
        const std::size_t i = static_cast<std::size_t>(it - odometry.begin());
        const double denom = odometry[i].stamp - odometry[i - 1].stamp;
        const double alpha = denom > 0.0 ? (t - odometry[i - 1].stamp) / denom : 0.0;
        return cum[i - 1] + alpha * (cum[i] - cum[i - 1]);
    };

    std::vector<std::pair<int, int>> pairs;
    for (std::size_t i = 0; i + 1 < maps.size(); ++i)
        pairs.emplace_back(static_cast<int>(i), static_cast<int>(i + 1));
    for (std::size_t i = 0; i < maps.size(); ++i) {
        for (std::size_t j = i + 2; j < maps.size(); ++j) {
            const auto ri = refined_poses.find(maps[i].id);
            const auto rj = refined_poses.find(maps[j].id);
            if (ri == refined_poses.end() || rj == refined_poses.end()) continue;
            if ((ri->second.t - rj->second.t).norm() <= params.spatial_radius)
                pairs.emplace_back(static_cast<int>(i), static_cast<int>(j));
        }
    }

    for (const auto& [ia, ib] : pairs) {
        const LocalMap& ma = maps[ia];
        const LocalMap& mb = maps[ib];
        LoopClosureCandidate cand;
        cand.map_a = ma.id;
        cand.map_b = mb.id;

        const auto ra = refined_poses.find(ma.id);
        const auto rb = refined_poses.find(mb.id);
        SE3 rel_init;
        if (ra != refined_poses.end() && rb != refined_poses.end()) {
            rel_init = ra->second.inverse() * rb->second;
        } else {
            const SE3 oa = interpolate_trajectory(odometry, ma.reference_stamp);
            const SE3 ob = interpolate_trajectory(odometry, mb.reference_stamp);
            rel_init = oa.inverse() * ob;
        }

        // 5 % gate on the initial relative residual vs. along-path distance
        const SE3 pa = spline.evaluate(ma.reference_stamp);
        const SE3 pb = spline.evaluate(mb.reference_stamp);
        const Vec6 d_r = (rel_init.inverse() * (pa.inverse() * pb)).log();
        const double path =
            std::abs(path_at(mb.reference_stamp) - path_at(ma.reference_stamp));
        if (d_r.head<3>().norm() >= params.path_fraction_gate * path) {
            cand.reason = "gate: |d_r| " + std::to_string(d_r.head<3>().norm()) + " >= 5% of " +
                          std::to_string(path);
            out.push_back(std::move(cand));
            continue;
        }

        const RegistrationResult reg =
            register_surfel_maps(mb.surfels, ma.surfels, rel_init, params.registration);
        if (!reg.converged) {
            cand.reason = "registration: " + (reg.message.empty() ? "not converged" : reg.message);
            out.push_back(std::move(cand));
            continue;
        }

        GraphEdge edge;
        edge.kind = EdgeKind::Relative;
        edge.t0 = ma.reference_stamp;
        edge.t1 = mb.reference_stamp;
        edge.measurement = reg.pose;
        edge.covariance = params.sigma.array().square().matrix().asDiagonal();
        edge.huber_delta = params.huber_delta;
        cand.edge = std::move(edge);
        cand.accepted = true;
        out.push_back(std::move(cand));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Graph text dump
// ---------------------------------------------------------------------------

namespace {

void write_values(std::ostream& os, const double* v, int n) {
    char buf[32];
    for (int i = 0; i < n; ++i) {
        std::snprintf(buf, sizeof(buf), " %.17g", v[i]);
        os << buf;
    }
}

template <int N>
void write_values(std::ostream& os, const Eigen::Matrix<double, N, 1>& v) {
    write_values(os, v.data(), N);
}

}  // namespace

void save_graph(const PoseGraph& graph, const std::string& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    os << "GEOREF_GRAPH 1\n";
    char buf[128];
    std::snprintf(buf, sizeof(buf), "SPLINE %d %.17g %.17g %zu\n", graph.spline.order,
                  graph.spline.t0, graph.spline.dt, graph.spline.knot_count());
    os << buf;
    for (std::size_t j = 0; j < graph.spline.knot_count(); ++j) {
        os << "KNOT";
        write_values(os, graph.spline.rotation_knots[j].data(), 4);
        write_values(os, graph.spline.translation_knots[j].data(), 3);
        os << "\n";
    }
    os << "ANCHOR";
    write_values(os, graph.anchor.q.data(), 4);
    write_values(os, graph.anchor.t.data(), 3);
    os << "\nGRAVITY";
    write_values(os, graph.gravity.data(), 3);
    os << "\n";
    os << "FIX " << graph.fix_spline << " " << graph.fix_anchor << " " << graph.fix_biases
       << "\n";
    os << "NBIAS " << graph.biases.size() << "\n";
    for (const auto& b : graph.biases) {
        os << "BIAS";
        write_values(os, b.gyro.data(), 3);
        write_values(os, b.accel.data(), 3);
        os << "\n";
    }
    os << "NEDGES " << graph.edges.size() << "\n";
    for (const auto& e : graph.edges) {
        os << "EDGE " << edge_kind_name(e.kind);
        const double header[5] = {e.t0, e.t1, static_cast<double>(e.bias0),
                                  static_cast<double>(e.bias1), e.huber_delta};
        write_values(os, header, 5);
        os << "\n MEAS";
        write_values(os, e.measurement.q.data(), 4);
        write_values(os, e.measurement.t.data(), 3);
        os << "\n POS";
        write_values(os, e.position.data(), 3);
        os << "\n PRIOR";
        write_values(os, e.bias_prior.gyro.data(), 3);
        write_values(os, e.bias_prior.accel.data(), 3);
        os << "\n";
        if (e.kind == EdgeKind::Imu) {
            os << " DELTA";
            write_values(os, &e.delta.dt_total, 1);
            write_values(os, e.delta.delta_q.data(), 4);
            write_values(os, e.delta.delta_v.data(), 3);
            write_values(os, e.delta.delta_p.data(), 3);
            write_values(os, e.delta.covariance.data(), 81);
            write_values(os, e.delta.j_q_bg.data(), 9);
            write_values(os, e.delta.j_v_bg.data(), 9);
            write_values(os, e.delta.j_v_ba.data(), 9);
            write_values(os, e.delta.j_p_bg.data(), 9);
            write_values(os, e.delta.j_p_ba.data(), 9);
            write_values(os, e.delta.bias_linearization.gyro.data(), 3);
            write_values(os, e.delta.bias_linearization.accel.data(), 3);
            os << "\n";
        }
        const int m = e.residual_dim();
        Eigen::MatrixXd cov = e.covariance;
        if (cov.size() == 0) cov = Eigen::MatrixXd::Identity(m, m);
        os << " COV " << m;
        write_values(os, cov.data(), m * m);
        os << "\n";
    }
    if (!os) throw std::runtime_error("failed writing graph: " + path);
}

PoseGraph load_graph(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open for reading: " + path);
    std::string tag;
    int version;
    if (!(is >> tag >> version) || tag != "GEOREF_GRAPH" || version != 1)
        throw ParseError(path + ": not a GEOREF_GRAPH v1 file");

    PoseGraph graph;
    std::size_t nknots;
    if (!(is >> tag >> graph.spline.order >> graph.spline.t0 >> graph.spline.dt >> nknots) ||
        tag != "SPLINE")
        throw ParseError(path + ": bad SPLINE header");
    graph.spline.rotation_knots.resize(nknots);
    graph.spline.translation_knots.resize(nknots);
    for (std::size_t j = 0; j < nknots; ++j) {
        Vec4& q = graph.spline.rotation_knots[j];
        Vec3& p = graph.spline.translation_knots[j];
        if (!(is >> tag >> q[0] >> q[1] >> q[2] >> q[3] >> p[0] >> p[1] >> p[2]) ||
            tag != "KNOT")
            throw ParseError(path + ": bad KNOT line " + std::to_string(j));
    }
    Vec4 qa;
    Vec3 ta;
    if (!(is >> tag >> qa[0] >> qa[1] >> qa[2] >> qa[3] >> ta[0] >> ta[1] >> ta[2]) ||
        tag != "ANCHOR")
        throw ParseError(path + ": bad ANCHOR line");
    graph.anchor = SE3(qa, ta);
    if (!(is >> tag >> graph.gravity[0] >> graph.gravity[1] >> graph.gravity[2]) ||
        tag != "GRAVITY")
        throw ParseError(path + ": bad GRAVITY line");
    if (!(is >> tag >> graph.fix_spline >> graph.fix_anchor >> graph.fix_biases) || tag != "FIX")
        throw ParseError(path + ": bad FIX line");
    std::size_t nbias;
    if (!(is >> tag >> nbias) || tag != "NBIAS") throw ParseError(path + ": bad NBIAS line");
    graph.biases.resize(nbias);
    for (auto& b : graph.biases) {
        if (!(is >> tag >> b.gyro[0] >> b.gyro[1] >> b.gyro[2] >> b.accel[0] >> b.accel[1] >>
              b.accel[2]) ||
            tag != "BIAS")
            throw ParseError(path + ": bad BIAS line");
    }
    std::size_t nedges;
    if (!(is >> tag >> nedges) || tag != "NEDGES") throw ParseError(path + ": bad NEDGES line");
    graph.edges.resize(nedges);
    for (std::size_t e = 0; e < nedges; ++e) {
        GraphEdge& edge = graph.edges[e];
        std::string kind;
        double b0, b1;
        if (!(is >> tag >> kind >> edge.t0 >> edge.t1 >> b0 >> b1 >> edge.huber_delta) ||
            tag != "EDGE")
            throw ParseError(path + ": bad EDGE line " + std::to_string(e));
        edge.bias0 = static_cast<int>(b0);
        edge.bias1 = static_cast<int>(b1);
        bool found = false;
        for (EdgeKind k :
             {EdgeKind::AbsolutePose, EdgeKind::AbsolutePosition, EdgeKind::Odometry,
              EdgeKind::Imu, EdgeKind::Relative, EdgeKind::BiasWalk, EdgeKind::BiasPrior,
              EdgeKind::AnchorPrior}) {
            if (kind == edge_kind_name(k)) {
                edge.kind = k;
                found = true;
            }
        }
        if (!found) throw ParseError(path + ": unknown edge kind " + kind);
        Vec4 qm;
        Vec3 tm;
        if (!(is >> tag >> qm[0] >> qm[1] >> qm[2] >> qm[3] >> tm[0] >> tm[1] >> tm[2]) ||
            tag != "MEAS")
            throw ParseError(path + ": bad MEAS line");
        edge.measurement = SE3(qm, tm);
        if (!(is >> tag >> edge.position[0] >> edge.position[1] >> edge.position[2]) ||
            tag != "POS")
            throw ParseError(path + ": bad POS line");
        if (!(is >> tag >> edge.bias_prior.gyro[0] >> edge.bias_prior.gyro[1] >>
              edge.bias_prior.gyro[2] >> edge.bias_prior.accel[0] >> edge.bias_prior.accel[1] >>
              edge.bias_prior.accel[2]) ||
            tag != "PRIOR")
            throw ParseError(path + ": bad PRIOR line");
        if (edge.kind == EdgeKind::Imu) {
            auto& d = edge.delta;
            if (!(is >> tag >> d.dt_total) || tag != "DELTA")
                throw ParseError(path + ": bad DELTA line");
            for (int i = 0; i < 4; ++i) is >> d.delta_q[i];
            for (int i = 0; i < 3; ++i) is >> d.delta_v[i];
            for (int i = 0; i < 3; ++i) is >> d.delta_p[i];
            for (int i = 0; i < 81; ++i) is >> d.covariance.data()[i];
            for (int i = 0; i < 9; ++i) is >> d.j_q_bg.data()[i];
            for (int i = 0; i < 9; ++i) is >> d.j_v_bg.data()[i];
            for (int i = 0; i < 9; ++i) is >> d.j_v_ba.data()[i];
            for (int i = 0; i < 9; ++i) is >> d.j_p_bg.data()[i];
            for (int i = 0; i < 9; ++i) is >> d.j_p_ba.data()[i];
            for (int i = 0; i < 3; ++i) is >> d.bias_linearization.gyro[i];
            for (int i = 0; i < 3; ++i) is >> d.bias_linearization.accel[i];
            if (!is) throw ParseError(path + ": truncated DELTA block");
        }
        int m;
        if (!(is >> tag >> m) || tag != "COV") throw ParseError(path + ": bad COV line");
        edge.covariance.resize(m, m);
        for (int i = 0; i < m * m; ++i) is >> edge.covariance.data()[i];
        if (!is) throw ParseError(path + ": truncated COV block");
    }
    return graph;
}

}  // namespace georef
