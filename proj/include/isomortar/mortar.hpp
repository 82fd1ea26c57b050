#pragma once

// Mortar shape-function families, reference mass matrices, weighted nodal gaps and
// pressures, smoothed / mortar interpolation and the contact-potential identity.

#include "kinematics.hpp"
#include "quadrature.hpp"

namespace isomortar {

enum class MortarKind { GLS, GLSstar, LmLS, LmLSstar, LcLS, LcLSstar };

inline const char* to_string(MortarKind k) {
    switch (k) {
        case MortarKind::GLS: return "gls";
        case MortarKind::GLSstar: return "gls*";
        case MortarKind::LmLS: return "lmls";
        case MortarKind::LmLSstar: return "lmls*";
        case MortarKind::LcLS: return "lcls";
        case MortarKind::LcLSstar: return "lcls*";
    }
    return "?";
}

inline MortarKind parse_mortar_kind(const std::string& s) {
    for (MortarKind k : {MortarKind::GLS, MortarKind::GLSstar, MortarKind::LmLS, MortarKind::LmLSstar, MortarKind::LcLS,
                         MortarKind::LcLSstar})
        if (s == to_string(k)) return k;
    throw Error(ErrorKind::Config, "unknown mortar kind '" + s + "' (gls|gls*|lmls|lmls*|lcls|lcls*)");
}

/// Partition-of-unity families.
inline bool is_starred(MortarKind k) {
    return k == MortarKind::GLSstar || k == MortarKind::LmLSstar || k == MortarKind::LcLSstar;
}

/// Index of the element (nonzero span) containing a basis evaluation.
inline int element_index(const KnotVector& kv, int span) {
    const auto spans = kv.element_spans();
    const auto it = std::lower_bound(spans.begin(), spans.end(), span);
    if (it == spans.end() || *it != span) throw Error(ErrorKind::Structural, "element_index: span is not an element");
    return static_cast<int>(it - spans.begin());
}

/// Gauss points on the reference surface; w carries the reference measure |A1| dxi.
struct SurfaceQuadPoint {
    int element = -1;
    double xi = 0;
    double w = 0;
    bool in_contact = false;   // partition status (frozen level-set sign)
};

inline double reference_measure(const SurfacePatch& s, std::span<const Vec2> X, const BasisEval& b) {
    return curve_eval(s, X, b).a1.norm();
}

/// Full parent rule on every element, or on every partition interval when given.
inline std::vector<SurfaceQuadPoint> surface_quadrature(const SurfacePatch& s, std::span<const Vec2> X, int n_gp,
                                                         const std::vector<ElementPartition>* partitions = nullptr) {
    const GaussRule& rule = gauss_rule(n_gp);
    const auto spans = s.kv.element_spans();
    const auto& U = s.kv.knots();
    std::vector<SurfaceQuadPoint> out;
    for (int e = 0; e < static_cast<int>(spans.size()); ++e) {
        std::vector<std::pair<double, double>> iv{{U[spans[e]], U[spans[e] + 1]}};
        std::vector<bool> flag{false};
        if (partitions) {
            iv = (*partitions)[e].intervals;
            flag = (*partitions)[e].in_contact;
        }
        for (std::size_t k = 0; k < iv.size(); ++k) {
            const double a = iv[k].first, b = iv[k].second, h = 0.5 * (b - a);
            for (int q = 0; q < rule.n; ++q) {
                // keep the point inside the element even after rounding at its right end
                const double xi = std::min(a + h * (rule.points[q] + 1), std::nextafter(U[spans[e] + 1], U[spans[e]]));
                const BasisEval be = basis_eval(s.kv, s.weights, xi);
                out.push_back({e, xi, h * rule.weights[q] * reference_measure(s, X, be), flag[k]});
            }
        }
    }
    return out;
}

/// Mortar values at one point: surface-local node indices (positions in patch.nodes).
struct MortarValues {
    std::vector<int> idx;
    std::vector<double> val;

    double dot(const Eigen::VectorXd& nodal) const {
        double s = 0;
        for (std::size_t k = 0; k < idx.size(); ++k) s += val[k] * nodal[idx[k]];
        return s;
    }
};

struct MortarOperators {
    MortarKind kind = MortarKind::LmLSstar;
    int n_nodes = 0;
    int n_gp = 0;
    Eigen::MatrixXd L;                  // global mass matrix
    Eigen::VectorXd W;                  // diagonal lumped mass
    std::vector<Eigen::MatrixXd> Le;    // element mass matrices
    std::vector<Eigen::VectorXd> We;    // element lumped masses
    std::vector<int> spans;             // knot span per element
    Eigen::MatrixXd C;                  // global coefficients, M_A = sum_B N_B C_BA (GLS, GLS*)
    std::vector<Eigen::MatrixXd> Ce;    // element coefficients (all other kinds)

    bool global_support() const { return kind == MortarKind::GLS || kind == MortarKind::GLSstar; }
};

inline MortarOperators build_mortar_operators(const SurfacePatch& s, std::span<const Vec2> X, MortarKind kind, int n_gp) {
    MortarOperators ops;
    ops.kind = kind;
    ops.n_nodes = s.n_nodes();
    ops.n_gp = n_gp;
    ops.spans = s.kv.element_spans();
    const int n = ops.n_nodes, p1 = s.kv.degree() + 1;
    ops.L = Eigen::MatrixXd::Zero(n, n);
    ops.W = Eigen::VectorXd::Zero(n);
    const int ne = static_cast<int>(ops.spans.size());
    ops.Le.assign(ne, Eigen::MatrixXd::Zero(p1, p1));
    ops.We.assign(ne, Eigen::VectorXd::Zero(p1));
    for (const SurfaceQuadPoint& q : surface_quadrature(s, X, n_gp)) {
        const BasisEval b = basis_eval(s.kv, s.weights, q.xi);
        const Eigen::Map<const Eigen::VectorXd> N(b.values.data(), b.size());
        ops.Le[q.element] += q.w * N * N.transpose();
        ops.We[q.element] += q.w * N;
    }
    for (int e = 0; e < ne; ++e) {
        const int first = ops.spans[e] - s.kv.degree();
        ops.L.block(first, first, p1, p1) += ops.Le[e];
        ops.W.segment(first, p1) += ops.We[e];
    }
    for (int A = 0; A < n; ++A)
        if (!(ops.W[A] > 0)) throw Error(ErrorKind::Singular, "build_mortar_operators: zero lumped mass at node " + std::to_string(A));

    const auto element_inverse = [&](int e) {
        Eigen::FullPivLU<Eigen::MatrixXd> lu(ops.Le[e]);
        if (!lu.isInvertible())
            throw Error(ErrorKind::Singular, "build_mortar_operators: singular element mass matrix in element " +
                                                 std::to_string(e));
        return Eigen::MatrixXd(lu.inverse());
    };
    switch (kind) {
        case MortarKind::GLS:
        case MortarKind::GLSstar: {
            Eigen::LLT<Eigen::MatrixXd> llt(ops.L);
            if (llt.info() != Eigen::Success)
                throw Error(ErrorKind::Singular, "build_mortar_operators: global mass matrix is not positive definite");
            ops.C = llt.solve(Eigen::MatrixXd::Identity(n, n));
            if (kind == MortarKind::GLSstar) ops.C = ops.C * ops.W.asDiagonal();
            break;
        }
        case MortarKind::LmLS:
        case MortarKind::LmLSstar:
            for (int e = 0; e < ne; ++e) {
                const int first = ops.spans[e] - s.kv.degree();
                Eigen::MatrixXd c = Eigen::MatrixXd::Identity(p1, p1);
                if (kind == MortarKind::LmLS)
                    for (int a = 0; a < p1; ++a) c(a, a) = 1.0 / ops.W[first + a];
                ops.Ce.push_back(c);
            }
            break;
        case MortarKind::LcLS:
        case MortarKind::LcLSstar:
            for (int e = 0; e < ne; ++e) {
                const int first = ops.spans[e] - s.kv.degree();
                Eigen::MatrixXd c = element_inverse(e) * ops.We[e].asDiagonal();
                if (kind == MortarKind::LcLS)
                    for (int a = 0; a < p1; ++a) c.col(a) /= ops.W[first + a];
                ops.Ce.push_back(c);
            }
            break;
    }
    return ops;
}

inline MortarValues mortar_shape_eval(const MortarOperators& ops, const BasisEval& b) {
    MortarValues m;
    if (ops.global_support()) {
        m.idx.resize(ops.n_nodes);
        m.val.assign(ops.n_nodes, 0.0);
        for (int A = 0; A < ops.n_nodes; ++A) {
            m.idx[A] = A;
            for (int j = 0; j < b.size(); ++j) m.val[A] += b.values[j] * ops.C(b.first + j, A);
        }
        return m;
    }
    const auto it = std::lower_bound(ops.spans.begin(), ops.spans.end(), b.span);
    const int e = static_cast<int>(it - ops.spans.begin());
    const Eigen::MatrixXd& c = ops.Ce.at(e);
    for (int a = 0; a < b.size(); ++a) {
        double v = 0;
        for (int j = 0; j < b.size(); ++j) v += b.values[j] * c(j, a);
        m.idx.push_back(b.first + a);
        m.val.push_back(v);
    }
    return m;
}

inline MortarValues mortar_shape_eval(const MortarOperators& ops, const SurfacePatch& s, double xi) {
    return mortar_shape_eval(ops, basis_eval(s.kv, s.weights, xi));
}

// ---------------------------------------------------------------------------
// Weighted nodal fields

/// Raw gap at one slave quadrature point; invalid samples are skipped everywhere.
struct GapSample {
    SurfaceQuadPoint qp;
    double g = 0;
    double J = 1;
    bool valid = false;
};

struct WeightedNodalField {
    Eigen::VectorXd g;      // weighted gaps
    Eigen::VectorXd p;      // weighted pressures
    std::vector<int> chi;   // active flags
    int skipped = 0;
};

/// Projects every quadrature point of the slave onto the master.
inline std::vector<GapSample> sample_gaps(const SurfacePatch& slave, const SurfacePatch& master,
                                          std::span<const Vec2> x, std::span<const Vec2> X,
                                          const std::vector<SurfaceQuadPoint>& qps) {
    std::vector<GapSample> out;
    out.reserve(qps.size());
    for (const SurfaceQuadPoint& q : qps) {
        const SurfacePointData sp = surface_point(slave, x, X, q.xi);
        const Projection pr = closest_point_projection(sp.x, master, x);
        out.push_back({q, pr.g_n, sp.J, pr.valid()});
    }
    return out;
}

inline WeightedNodalField weighted_nodal_gaps(const MortarOperators& ops, const SurfacePatch& slave,
                                              std::span<const GapSample> samples) {
    WeightedNodalField f;
    f.g = Eigen::VectorXd::Zero(ops.n_nodes);
    f.p = Eigen::VectorXd::Zero(ops.n_nodes);
    f.chi.assign(ops.n_nodes, 0);
    for (const GapSample& s : samples) {
        if (!s.valid) {
            ++f.skipped;
            continue;
        }
        const MortarValues m = mortar_shape_eval(ops, slave, s.qp.xi);
        for (std::size_t k = 0; k < m.idx.size(); ++k) f.g[m.idx[k]] += s.qp.w * m.val[k] * s.g;
    }
    for (int A = 0; A < ops.n_nodes; ++A) f.chi[A] = f.g[A] < 0 ? 1 : 0;
    return f;
}

/// p_A = eps chi_A g_A.
inline WeightedNodalField nodal_pressures_standard(WeightedNodalField f, double eps) {
    for (int A = 0; A < f.g.size(); ++A) f.p[A] = eps * f.chi[A] * f.g[A];
    return f;
}

enum class Interpolant { Smoothed, Mortar };

inline double field_eval(const Eigen::VectorXd& nodal, Interpolant kind, const MortarOperators& ops,
                         const SurfacePatch& s, double xi) {
    const BasisEval b = basis_eval(s.kv, s.weights, xi);
    if (kind == Interpolant::Mortar) return mortar_shape_eval(ops, b).dot(nodal);
    double v = 0;
    for (int j = 0; j < b.size(); ++j) v += b.values[j] * nodal[b.first + j];
    return v;
}

struct PotentialTriple {
    double nodal = 0;     // sum_A p_A g_A
    double mortar_p = 0;  // integral of p* g
    double mortar_g = 0;  // integral of p g*, g* built from the active weighted gaps
};

inline PotentialTriple contact_potential_triple(const MortarOperators& ops, const SurfacePatch& slave,
                                                std::span<const GapSample> samples, double eps) {
    const WeightedNodalField f = nodal_pressures_standard(weighted_nodal_gaps(ops, slave, samples), eps);
    Eigen::VectorXd g_active(ops.n_nodes);
    for (int A = 0; A < ops.n_nodes; ++A) g_active[A] = f.chi[A] * f.g[A];
    PotentialTriple t;
    t.nodal = f.p.dot(f.g);
    for (const GapSample& s : samples) {
        if (!s.valid) continue;
        const MortarValues m = mortar_shape_eval(ops, slave, s.qp.xi);
        t.mortar_p += s.qp.w * m.dot(f.p) * s.g;
        t.mortar_g += s.qp.w * eps * s.g * m.dot(g_active);
    }
    return t;
}

}  // namespace isomortar
