#include <isomortar/extended.hpp>

#include <gtest/gtest.h>

using namespace isomortar;

namespace {

// Straight quadratic line of ne elements between a and b; nodes numbered from `first`.
SurfacePatch line(int ne, int first, int orientation) {
    std::vector<double> U{0, 0, 0};
    for (int k = 1; k < ne; ++k) U.push_back(double(k) / ne);
    U.insert(U.end(), {1, 1, 1});
    SurfacePatch s{KnotVector(2, U), {}, std::vector<double>(ne + 2, 1.0), orientation};
    for (int k = 0; k < ne + 2; ++k) s.nodes.push_back(first + k);
    return s;
}

void place(const SurfacePatch& s, std::vector<Vec2>& x, Vec2 a, Vec2 b) {
    const auto& U = s.kv.knots();
    for (int k = 0; k < s.n_nodes(); ++k) {
        const double t = (U[k + 1] + U[k + 2]) / 2;   // Greville abscissa: affine placement
        x[s.nodes[k]] = a + t * (b - a);
    }
}

// Slave: bottom of an upper body (normal down). Master: top of a lower body (normal up).
struct Pair {
    SurfacePatch slave, master;
    std::vector<Vec2> X, x;
};

Pair tilted(double tilt, double cross, int ns = 4) {
    Pair p{line(ns, 0, 1), line(3, ns + 2, -1), {}, {}};
    p.X.resize(ns + 7);
    place(p.slave, p.X, {0, 0}, {1, 0});
    place(p.master, p.X, {-1, 0}, {2, 0});
    p.x = p.X;
    // slave y = tilt (x - cross): penetrating for x < cross
    place(p.slave, p.x, {0, -tilt * cross}, {1, tilt * (1 - cross)});
    return p;
}

}  // namespace

TEST(Xmortar, EnrichmentAndHeaviside) {
    EXPECT_EQ(psi(0.7), 1.0);
    EXPECT_EQ(psi(0.0), 0.0);
    EXPECT_EQ(psi(-0.3), -1.0);
    EXPECT_EQ(heaviside(0.0), 0.0);
    EXPECT_EQ(heaviside(-1.0), 1.0);
    for (double phi : {-2.0, -1e-9, 1e-9, 3.0}) EXPECT_EQ(psi(phi), 1 - 2 * heaviside(phi));
}

TEST(Xmortar, LevelSetRootAtCrossing) {
    Pair p{line(1, 0, 1), line(3, 3, -1), {}, {}};
    p.X.resize(8);
    place(p.slave, p.X, {0, 0}, {1, 0});
    place(p.master, p.X, {-1, 0}, {2, 0});
    p.x = p.X;
    place(p.slave, p.x, {0, -0.3 * 0.2}, {1, 0.7 * 0.2});
    const LevelSetField f = level_set_eval(p.slave, p.master, p.x, p.X, 5, true);
    ASSERT_EQ(f.partitions.size(), 1u);
    ASSERT_EQ(f.partitions[0].roots.size(), 1u);
    const double xr = curve_eval(p.slave, p.X, f.partitions[0].roots[0]).x.x();
    EXPECT_NEAR(xr, 0.3, 1e-8);
    for (std::size_t k = 0; k < f.qps.size(); ++k) {
        EXPECT_EQ(f.H[k], heaviside(f.phi[k]));
        if (f.phi[k] != 0) EXPECT_EQ(psi(f.phi[k]), 1 - 2 * f.H[k]);
    }
}

TEST(Xmortar, NoContactIsInert) {
    Pair p = tilted(0.0, 0.0);
    for (int k = 0; k < p.slave.n_nodes(); ++k) p.x[p.slave.nodes[k]].y() = 0.1;
    const MortarOperators ops = build_mortar_operators(p.slave, p.X, MortarKind::LmLSstar, 5);
    const LevelSetField f = level_set_eval(p.slave, p.master, p.x, p.X, 5, true);
    const ExtendedState st = assemble_extended_system(ops, p.slave, f, f.phi, 100.0);
    EXPECT_EQ(st.Wx.norm(), 0.0);
    EXPECT_EQ(st.p.norm(), 0.0);
    for (int c : st.chi) EXPECT_EQ(c, 0);
    EXPECT_EQ(extended_pressure_eval(st, ops, p.slave, 0.5, 0.1), 0.0);
}

TEST(Xmortar, FullContactCollapsesToMassMatrix) {
    Pair p = tilted(0.0, 0.0);
    for (int k = 0; k < p.slave.n_nodes(); ++k) p.x[p.slave.nodes[k]].y() = -0.02;
    const MortarOperators ops = build_mortar_operators(p.slave, p.X, MortarKind::LmLSstar, 5);
    const LevelSetField f = level_set_eval(p.slave, p.master, p.x, p.X, 5, true);
    const ExtendedState st = assemble_extended_system(ops, p.slave, f, f.phi, 100.0);
    EXPECT_LT((st.Wx - ops.L).norm(), 1e-12);
    for (int c : st.chi) EXPECT_EQ(c, 1);
    // uniform penetration delta = 0.02 reproduced: p* = eps g everywhere
    for (double xi : {0.05, 0.33, 0.71, 0.99}) EXPECT_NEAR(extended_pressure_eval(st, ops, p.slave, xi, -0.02), -2.0, 1e-10);
}

// Step pressure: penetration -delta for x < 0.5 (element boundary), separated beyond.
// The brute-force oracle solves the weighted least-squares problem directly by QR.
TEST(Xmortar, StepPressureMatchesLeastSquaresOracle) {
    const double eps = 100, delta = 0.01;
    for (MortarKind kind : {MortarKind::LmLSstar, MortarKind::GLSstar, MortarKind::LcLSstar, MortarKind::LmLS}) {
        Pair p = tilted(0.0, 0.0, 4);
        const MortarOperators ops = build_mortar_operators(p.slave, p.X, kind, 5);
        // frozen field with a root resolved at x = 0.5 (end of element 1)
        LevelSetField f;
        const auto& U = p.slave.kv.knots();
        const auto spans = p.slave.kv.element_spans();
        for (int e = 0; e < 4; ++e) {
            const double a = U[spans[e]], b = U[spans[e] + 1];
            f.partitions.push_back(rbq_partition(e, a, b, [](double xi) { return xi - 0.5; }, gauss_rule(5)));
        }
        f.qps = surface_quadrature(p.slave, p.X, 5, &f.partitions);
        std::vector<double> g;
        for (const auto& q : f.qps) {
            const double phi = q.xi - 0.5;
            f.phi.push_back(phi);
            f.H.push_back(heaviside(phi));
            g.push_back(phi < 0 ? -delta : 0.2);
        }
        const ExtendedState st = assemble_extended_system(ops, p.slave, f, g, eps);

        // symmetry and normal equations
        EXPECT_LT((st.Wx - st.Wx.transpose()).norm(), 1e-14);
        Eigen::VectorXd r = Eigen::VectorXd::Zero(ops.n_nodes);
        double l2 = 0;
        for (std::size_t k = 0; k < f.qps.size(); ++k) {
            const MortarValues m = mortar_shape_eval(ops, p.slave, f.qps[k].xi);
            const double pstar = extended_pressure_eval(st, ops, p.slave, f.qps[k].xi, f.phi[k]);
            const double pbar = eps * f.H[k] * g[k];
            l2 += f.qps[k].w * (pstar - pbar) * (pstar - pbar);
            for (std::size_t a = 0; a < m.idx.size(); ++a)
                if (st.chi[m.idx[a]]) r[m.idx[a]] += f.qps[k].w * f.H[k] * m.val[a] * (pstar - pbar);
        }
        EXPECT_LT(r.lpNorm<Eigen::Infinity>(), 1e-10) << to_string(kind);

        std::vector<int> act;
        for (int A = 0; A < ops.n_nodes; ++A)
            if (st.chi[A]) act.push_back(A);
        Eigen::MatrixXd D = Eigen::MatrixXd::Zero(f.qps.size(), act.size());
        Eigen::VectorXd rhs = Eigen::VectorXd::Zero(f.qps.size());
        for (std::size_t k = 0; k < f.qps.size(); ++k) {
            const double sw = std::sqrt(f.qps[k].w) * f.H[k];
            const Eigen::VectorXd M = [&] {
                Eigen::VectorXd v = Eigen::VectorXd::Zero(ops.n_nodes);
                const MortarValues m = mortar_shape_eval(ops, p.slave, f.qps[k].xi);
                for (std::size_t a = 0; a < m.idx.size(); ++a) v[m.idx[a]] += m.val[a];
                return v;
            }();
            for (std::size_t j = 0; j < act.size(); ++j) D(k, j) = sw * M[act[j]];
            rhs[k] = sw * eps * g[k];
        }
        const Eigen::VectorXd oracle = D.colPivHouseholderQr().solve(rhs);
        for (std::size_t j = 0; j < act.size(); ++j) EXPECT_NEAR(st.p[act[j]], oracle[j], 1e-12) << to_string(kind);
        for (int A = 0; A < ops.n_nodes; ++A)
            if (!st.chi[A]) EXPECT_EQ(st.p[A], 0.0);

        if (kind != MortarKind::LmLS) {   // partition-of-unity families reproduce the step
            EXPECT_LT(std::sqrt(l2), 1e-9) << to_string(kind);
            EXPECT_NEAR(extended_pressure_eval(st, ops, p.slave, 0.2, -delta), -eps * delta, 1e-10);
            // one-sided limits at the root differ by the full nodal value
            const double left = extended_pressure_eval(st, ops, p.slave, 0.5, -1e-12);
            const double right = extended_pressure_eval(st, ops, p.slave, 0.5, 0.0);
            EXPECT_NEAR(left - right, mortar_shape_eval(ops, p.slave, 0.5).dot(st.p), 1e-14);
            EXPECT_EQ(right, 0.0);
        }
    }
}

TEST(Xmortar, MonotoneActivation) {
    Pair p = tilted(0.1, 0.3, 6);
    const MortarOperators ops = build_mortar_operators(p.slave, p.X, MortarKind::LmLSstar, 5);
    std::vector<int> prev(ops.n_nodes, 0);
    for (double cross : {0.1, 0.3, 0.45, 0.7, 0.95}) {
        Pair q = tilted(0.1, cross, 6);
        const LevelSetField f = level_set_eval(q.slave, q.master, q.x, q.X, 5, true);
        const ExtendedState st = assemble_extended_system(ops, q.slave, f, f.phi, 100.0);
        for (int A = 0; A < ops.n_nodes; ++A) EXPECT_GE(st.chi[A], prev[A]);
        prev = st.chi;
    }
}
