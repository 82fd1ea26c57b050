#pragma once

// Extended mortar: Heaviside-enriched mortar pressure recovered by a least-squares fit.
// The signed raw gap serves as level set; W_x = int H M^T M dA is inverted on the
// nodal active set.

#include "mortar.hpp"

namespace isomortar {

/// Enrichment function sign(phi).
inline double psi(double phi) { return phi > 0 ? 1.0 : (phi < 0 ? -1.0 : 0.0); }

/// H(phi) = 1 inside contact (phi < 0), 0 otherwise, including phi = 0.
inline double heaviside(double phi) { return phi < 0 ? 1.0 : 0.0; }

/// Signed gap of a slave parameter against the master; clamped foot points give the
/// (positive) distance to the master end.
inline double level_set_value(const SurfacePatch& slave, const SurfacePatch& master, std::span<const Vec2> x,
                              double xi, std::optional<double> seed = std::nullopt) {
    const Vec2 xs = curve_eval(slave, x, xi).x;
    return closest_point_projection(xs, master, x, seed).g_n;
}

struct LevelSetField {
    std::vector<ElementPartition> partitions;
    std::vector<SurfaceQuadPoint> qps;
    std::vector<double> phi;   // per quadrature point
    std::vector<double> H;

    int n_roots() const {
        int n = 0;
        for (auto& p : partitions) n += static_cast<int>(p.roots.size());
        return n;
    }
};

/// Scans every slave element for sign changes of the gap (RBQ) and evaluates phi and H
/// at the resulting quadrature points. Without RBQ every element keeps one interval.
inline LevelSetField level_set_eval(const SurfacePatch& slave, const SurfacePatch& master, std::span<const Vec2> x,
                                    std::span<const Vec2> X, int n_gp, bool rbq, const RbqOptions& opt = {}) {
    LevelSetField f;
    const auto& U = slave.kv.knots();
    const auto spans = slave.kv.element_spans();
    const GaussRule& rule = gauss_rule(n_gp);
    for (int e = 0; e < static_cast<int>(spans.size()); ++e) {
        const double a = U[spans[e]], b = U[spans[e] + 1];
        if (rbq) {
            const auto phi = [&](double xi) {
                return level_set_value(slave, master, x, std::clamp(xi, a, std::nextafter(b, a)));
            };
            f.partitions.push_back(rbq_partition(e, a, b, phi, rule, opt));
        } else {
            f.partitions.push_back(whole_element(e, a, b));
        }
    }
    f.qps = surface_quadrature(slave, X, n_gp, &f.partitions);
    for (SurfaceQuadPoint& q : f.qps) {
        const double phi = level_set_value(slave, master, x, q.xi);
        f.phi.push_back(phi);
        f.H.push_back(heaviside(phi));
        q.in_contact = phi_inside(phi, opt.zero_tol);
    }
    return f;
}

struct ExtendedState {
    Eigen::MatrixXd Wx;
    Eigen::VectorXd lambda;
    Eigen::VectorXd h;           // h_A = -int M_A H dA
    std::vector<int> chi;
    Eigen::MatrixXd G;           // inverse of W_x on the active set, zero elsewhere
    Eigen::VectorXd p;           // nodal pressures
    int rank_deficiency = 0;     // dropped directions of the active W_x block
};

/// W_x and h from frozen Heaviside values; reference measure only, so it stays fixed
/// while the active structure is frozen.
inline ExtendedState extended_operator(const MortarOperators& ops, const SurfacePatch& slave,
                                       std::span<const SurfaceQuadPoint> qps, std::span<const double> H,
                                       std::span<const char> skip = {}) {
    const int n = ops.n_nodes;
    ExtendedState st;
    st.Wx = Eigen::MatrixXd::Zero(n, n);
    st.h = Eigen::VectorXd::Zero(n);
    st.lambda = Eigen::VectorXd::Zero(n);
    st.p = Eigen::VectorXd::Zero(n);
    for (std::size_t k = 0; k < qps.size(); ++k) {
        if (H[k] == 0.0 || (!skip.empty() && skip[k])) continue;
        const MortarValues m = mortar_shape_eval(ops, slave, qps[k].xi);
        for (std::size_t a = 0; a < m.idx.size(); ++a) {
            st.h[m.idx[a]] -= qps[k].w * m.val[a] * H[k];
            for (std::size_t b = 0; b < m.idx.size(); ++b)
                st.Wx(m.idx[a], m.idx[b]) += qps[k].w * H[k] * m.val[a] * m.val[b];
        }
    }
    st.Wx = 0.5 * (st.Wx + st.Wx.transpose());
    st.chi.assign(n, 0);
    std::vector<int> act;
    for (int A = 0; A < n; ++A)
        if (st.h[A] < 0) {
            st.chi[A] = 1;
            act.push_back(A);
        }
    st.G = Eigen::MatrixXd::Zero(n, n);
    if (!act.empty()) {
        const int na = static_cast<int>(act.size());
        Eigen::MatrixXd Wa(na, na);
        for (int i = 0; i < na; ++i)
            for (int j = 0; j < na; ++j) Wa(i, j) = st.Wx(act[i], act[j]);
        if (!Wa.allFinite()) throw Error(ErrorKind::Singular, "extended_operator: non-finite W_x entries");
        Eigen::MatrixXd inv;
        Eigen::LDLT<Eigen::MatrixXd> ldlt(Wa);
        const Eigen::VectorXd d = ldlt.vectorD();
        const double dmax = d.cwiseAbs().maxCoeff();
        if (ldlt.info() == Eigen::Success && d.minCoeff() > 1e-12 * dmax) {
            inv = ldlt.solve(Eigen::MatrixXd::Identity(na, na));
        } else {
            // Fewer in-contact quadrature points than active nodes (a contact front
            // entering an element): minimum-norm least-squares solution.
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Wa);
            const Eigen::VectorXd ev = es.eigenvalues();
            const double cut = 1e-12 * ev.cwiseAbs().maxCoeff();
            Eigen::VectorXd evi = Eigen::VectorXd::Zero(na);
            for (int i = 0; i < na; ++i)
                if (ev[i] > cut) evi[i] = 1.0 / ev[i];
                else ++st.rank_deficiency;
            inv = es.eigenvectors() * evi.asDiagonal() * es.eigenvectors().transpose();
        }
        for (int i = 0; i < na; ++i)
            for (int j = 0; j < na; ++j) st.G(act[i], act[j]) = inv(i, j);
    }
    return st;
}

/// Full least-squares solve: lambda = int H M^T eps g dA and p = W_x^-1 lambda on the
/// active set. Samples flagged invalid are skipped.
inline ExtendedState assemble_extended_system(const MortarOperators& ops, const SurfacePatch& slave,
                                              const LevelSetField& field, std::span<const double> g, double eps,
                                              std::span<const char> valid = {}) {
    std::vector<char> skip(field.qps.size(), 0);
    if (!valid.empty())
        for (std::size_t k = 0; k < skip.size(); ++k) skip[k] = !valid[k];
    ExtendedState st = extended_operator(ops, slave, field.qps, field.H, skip);
    for (std::size_t k = 0; k < field.qps.size(); ++k) {
        if (field.H[k] == 0.0 || skip[k]) continue;
        const MortarValues m = mortar_shape_eval(ops, slave, field.qps[k].xi);
        for (std::size_t a = 0; a < m.idx.size(); ++a)
            st.lambda[m.idx[a]] += field.qps[k].w * m.val[a] * eps * field.H[k] * g[k];
    }
    st.p = st.G * st.lambda;
    return st;
}

/// p* = H(phi) sum_A M_A p_A.
inline double extended_pressure_eval(const ExtendedState& st, const MortarOperators& ops, const SurfacePatch& slave,
                                     double xi, double phi) {
    if (heaviside(phi) == 0.0) return 0.0;
    return mortar_shape_eval(ops, slave, xi).dot(st.p);
}

}  // namespace isomortar
