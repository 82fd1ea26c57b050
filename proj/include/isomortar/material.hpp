#pragma once

// Plane-strain compressible Neo-Hookean law and total-Lagrangian bulk elements on
// bivariate NURBS patches.

#include "nurbs.hpp"
#include "quadrature.hpp"

namespace isomortar {

struct NeoHookean {
    double E = 1.0;
    double nu = 0.3;

    double lambda() const { return E * nu / ((1 + nu) * (1 - 2 * nu)); }
    double mu() const { return E / (2 * (1 + nu)); }

    void validate() const {
        if (!(E > 0)) throw Error(ErrorKind::Structural, "NeoHookean: E must be positive");
        if (!(nu >= 0 && nu < 0.5)) throw Error(ErrorKind::Structural, "NeoHookean: nu must lie in [0, 0.5)");
    }
};

using Mat4 = Eigen::Matrix4d;

/// Index of the pair (i, J) in the flattened 4x4 modulus.
inline constexpr int pair_index(int i, int J) { return 2 * i + J; }

struct MaterialPoint {
    double J = 1;
    Mat2 P;        // first Piola-Kirchhoff stress
    Mat2 sigma;    // Cauchy stress
    Mat4 A;        // dP_iJ / dF_kL
    Mat4 c;        // spatial tangent c_ijkl
    double W = 0;  // strain energy per reference area
};

/// W = mu/2 (tr b - 2 - 2 ln J) + lambda/2 (ln J)^2 with b = F F^T.
inline MaterialPoint stress_and_modulus(const NeoHookean& mat, const Mat2& F, int body = -1, int element = -1) {
    const double J = F.determinant();
    if (!(J > 0)) throw InversionError(body, element, J);
    const double mu = mat.mu(), lam = mat.lambda();
    const double lnJ = std::log(J);
    const Mat2 Finv = F.inverse();
    const Mat2 b = F * F.transpose();
    const Mat2 I = Mat2::Identity();

    MaterialPoint m;
    m.J = J;
    m.P = mu * (F - Finv.transpose()) + lam * lnJ * Finv.transpose();
    m.sigma = (mu / J) * (b - I) + (lam / J) * lnJ * I;
    m.W = 0.5 * mu * (b.trace() - 2 - 2 * lnJ) + 0.5 * lam * lnJ * lnJ;
    for (int i = 0; i < 2; ++i)
        for (int Jj = 0; Jj < 2; ++Jj)
            for (int k = 0; k < 2; ++k)
                for (int L = 0; L < 2; ++L) {
                    m.A(pair_index(i, Jj), pair_index(k, L)) = mu * I(i, k) * I(Jj, L) +
                                                               (mu - lam * lnJ) * Finv(Jj, k) * Finv(L, i) +
                                                               lam * Finv(Jj, i) * Finv(L, k);
                    m.c(pair_index(i, Jj), pair_index(k, L)) =
                        (lam / J) * I(i, Jj) * I(k, L) + ((mu - lam * lnJ) / J) * (I(i, k) * I(Jj, L) + I(i, L) * I(Jj, k));
                }
    return m;
}

/// One bulk element: node ids are global, forces/stiffness in (x0, y0, x1, y1, ...) order.
struct ElementContribution {
    std::vector<int> nodes;
    Eigen::VectorXd f;
    Eigen::MatrixXd K;
    double energy = 0;
};

/// Stress sample at a bulk quadrature point in the current configuration.
struct StressSample {
    int element = -1;
    Vec2 X, x;
    Mat2 sigma;
    double J = 1;
};

/// Element ranges of a patch as (u span, v span) pairs.
inline std::vector<std::pair<int, int>> patch_elements(const Patch2D& p) {
    std::vector<std::pair<int, int>> out;
    for (int sv : p.kv.element_spans())
        for (int su : p.ku.element_spans()) out.emplace_back(su, sv);
    return out;
}

/// Internal force and tangent of one element (thickness 1) by (p+1)^2 Gauss points.
inline ElementContribution bulk_element(const Patch2D& patch, const NeoHookean& mat, std::span<const Vec2> X,
                                        std::span<const Vec2> x, int su, int sv, int body = -1, int element = -1,
                                        bool with_tangent = true, std::vector<StressSample>* samples = nullptr) {
    const auto& U = patch.ku.knots();
    const auto& V = patch.kv.knots();
    const GaussRule& ru = gauss_rule(patch.ku.degree() + 1);
    const GaussRule& rv = gauss_rule(patch.kv.degree() + 1);
    const double hu = 0.5 * (U[su + 1] - U[su]), hv = 0.5 * (V[sv + 1] - V[sv]);

    ElementContribution e;
    bool first = true;
    for (int qv = 0; qv < rv.n; ++qv) {
        for (int qu = 0; qu < ru.n; ++qu) {
            const double u = U[su] + hu * (ru.points[qu] + 1);
            const double v = V[sv] + hv * (rv.points[qv] + 1);
            const Basis2D b = basis_eval_2d(patch, u, v);
            const int n = static_cast<int>(b.R.size());
            if (first) {
                for (int l : b.local) e.nodes.push_back(patch.nodes[l]);
                e.f = Eigen::VectorXd::Zero(2 * n);
                if (with_tangent) e.K = Eigen::MatrixXd::Zero(2 * n, 2 * n);
                first = false;
            }
            Mat2 J0 = Mat2::Zero();   // dX / d(u, v)
            for (int a = 0; a < n; ++a) {
                const Vec2& Xa = X[patch.nodes[b.local[a]]];
                J0.col(0) += b.dRdu[a] * Xa;
                J0.col(1) += b.dRdv[a] * Xa;
            }
            const double det0 = J0.determinant();
            if (!(std::abs(det0) > 0))
                throw Error(ErrorKind::Geometry, "bulk_element: singular reference map in element " +
                                                     std::to_string(element));
            const Mat2 J0inv = J0.inverse();
            Eigen::MatrixXd G(2, n);   // dR_a / dX_J
            for (int a = 0; a < n; ++a) G.col(a) = J0inv.transpose() * Vec2(b.dRdu[a], b.dRdv[a]);
            Mat2 F = Mat2::Zero();
            Vec2 xq = Vec2::Zero(), Xq = Vec2::Zero();
            for (int a = 0; a < n; ++a) {
                const Vec2& xa = x[patch.nodes[b.local[a]]];
                F += xa * G.col(a).transpose();
                xq += b.R[a] * xa;
                Xq += b.R[a] * X[patch.nodes[b.local[a]]];
            }
            const MaterialPoint m = stress_and_modulus(mat, F, body, element);
            const double dV = std::abs(det0) * hu * hv * ru.weights[qu] * rv.weights[qv];
            e.energy += m.W * dV;
            for (int a = 0; a < n; ++a) e.f.segment<2>(2 * a) += dV * (m.P * G.col(a));
            if (with_tangent) {
                for (int a = 0; a < n; ++a)
                    for (int c = 0; c < n; ++c)
                        for (int i = 0; i < 2; ++i)
                            for (int k = 0; k < 2; ++k) {
                                double s = 0;
                                for (int Jj = 0; Jj < 2; ++Jj)
                                    for (int L = 0; L < 2; ++L)
                                        s += G(Jj, a) * m.A(pair_index(i, Jj), pair_index(k, L)) * G(L, c);
                                e.K(2 * a + i, 2 * c + k) += dV * s;
                            }
            }
            if (samples) samples->push_back({element, Xq, xq, m.sigma, m.J});
        }
    }
    return e;
}

}  // namespace isomortar
