#pragma once

// Pointwise contact geometry: surface point data, closest-point projection, raw gap
// and the first-order variation / linearization of the projected quantities.

#include "nurbs.hpp"

#include <optional>

namespace isomortar {

/// Geometry at one parameter of a contact surface (2D: a single tangent).
struct SurfacePointData {
    double xi = 0;
    Vec2 x, a1, a1_deriv, n;
    double a11 = 0;   // metric a1.a1
    double b11 = 0;   // curvature n.a1,xi
    double J = 1;     // surface stretch |a1| / |A1|
    double ref_len = 1;  // |A1|, reference measure per unit parameter
    BasisEval basis;
};

inline Vec2 outward_normal(const SurfacePatch& patch, const Vec2& a1) {
    return patch.orientation * rotate_cw(a1) / a1.norm();
}

inline SurfacePointData surface_point(const SurfacePatch& patch, std::span<const Vec2> x_nodes,
                                      std::span<const Vec2> X_nodes, double xi) {
    SurfacePointData s;
    s.xi = xi;
    s.basis = basis_eval(patch.kv, patch.weights, xi);
    const CurvePoint c = curve_eval(patch, x_nodes, s.basis);
    const CurvePoint C = curve_eval(patch, X_nodes, s.basis);
    const double scale = std::max(1.0, C.a1.norm());
    if (c.a1.norm() < 1e-14 * scale || C.a1.norm() < 1e-14 * scale)
        throw Error(ErrorKind::Geometry, "surface_point: degenerate tangent at xi = " + std::to_string(xi));
    s.x = c.x;
    s.a1 = c.a1;
    s.a1_deriv = c.a1_deriv;
    s.n = outward_normal(patch, c.a1);
    s.a11 = c.a1.squaredNorm();
    s.b11 = s.n.dot(c.a1_deriv);
    s.ref_len = C.a1.norm();
    s.J = c.a1.norm() / s.ref_len;
    return s;
}

struct Projection {
    Vec2 x;               // source point
    double xi_p = 0;
    Vec2 x_p, n_p, a1_p, a1_deriv_p;
    double a11_p = 0;
    double b11_p = 0;
    double g_n = 0;       // signed raw gap (positive distance when clamped)
    double c_p = 0;       // 1 / (a11_p - g_n b11_p)
    bool converged = false;
    bool boundary_clamped = false;
    int iterations = 0;
    BasisEval basis_p;

    bool valid() const { return converged && !boundary_clamped; }
};

struct ProjectionOptions {
    int max_iterations = 30;
    int samples_per_span = 8;
    int n_seeds = 3;
    double tol = 1e-13;   // relative to the target's length scale
};

namespace detail {

inline double target_scale(const SurfacePatch& target, std::span<const Vec2> positions) {
    double s = 0;
    for (int k = 1; k < target.n_nodes(); ++k)
        s += (positions[target.nodes[k]] - positions[target.nodes[k - 1]]).norm();
    return std::max(s, 1e-300);
}

inline Projection finish_projection(const SurfacePatch& target, std::span<const Vec2> positions, const Vec2& x,
                                    double xi, bool converged, int iters, double scale) {
    Projection p;
    p.x = x;
    p.xi_p = xi;
    p.basis_p = basis_eval(target.kv, target.weights, xi);
    const CurvePoint c = curve_eval(target, positions, p.basis_p);
    p.x_p = c.x;
    p.a1_p = c.a1;
    p.a1_deriv_p = c.a1_deriv;
    p.n_p = outward_normal(target, c.a1);
    p.a11_p = c.a1.squaredNorm();
    p.b11_p = p.n_p.dot(c.a1_deriv);
    p.converged = converged;
    p.iterations = iters;
    const Vec2 d = x - c.x;
    const double resid = d.dot(c.a1);
    const bool at_front = xi <= target.kv.front();
    const bool at_back = xi >= target.kv.back();
    // The foot point sits on an end and the distance still decreases outward.
    const double tol = 1e-10 * c.a1.norm() * scale;
    p.boundary_clamped = (at_front && resid < -tol) || (at_back && resid > tol);
    if (p.boundary_clamped)
        p.g_n = d.norm();
    else
        p.g_n = p.n_p.dot(d);
    p.c_p = 1.0 / (p.a11_p - p.g_n * p.b11_p);
    return p;
}

/// Newton on f(xi) = (x - x_p(xi)).a1(xi) with the iterate clamped to the patch range.
inline Projection newton_projection(const Vec2& x, const SurfacePatch& target, std::span<const Vec2> positions,
                                    double xi, const ProjectionOptions& opt, double scale) {
    const double lo = target.kv.front(), hi = target.kv.back();
    xi = std::clamp(xi, lo, hi);
    for (int it = 0; it < opt.max_iterations; ++it) {
        const BasisEval b = basis_eval(target.kv, target.weights, xi);
        const CurvePoint c = curve_eval(target, positions, b);
        const Vec2 d = x - c.x;
        const double a11 = c.a1.squaredNorm();
        const double f = d.dot(c.a1);
        double fp = -a11 + d.dot(c.a1_deriv);
        if (fp > -0.1 * a11) fp = -a11;   // not a local minimum direction: Gauss-Newton step
        const double xi_new = std::clamp(xi - f / fp, lo, hi);
        const double step = std::abs(xi_new - xi) * std::sqrt(a11);
        const bool stuck = (xi_new == xi) && (xi == lo || xi == hi);
        xi = xi_new;
        if (step <= opt.tol * scale || std::abs(f) <= opt.tol * a11 * scale || stuck)
            return finish_projection(target, positions, x, xi, true, it + 1, scale);
    }
    return finish_projection(target, positions, x, xi, false, opt.max_iterations, scale);
}

}  // namespace detail

/// Closest-point projection of x onto the target curve. With a seed a single Newton
/// solve is tried first; otherwise (or on failure) the target is sampled and Newton is
/// run from the best seeds, keeping the nearest converged foot point.
inline Projection closest_point_projection(const Vec2& x, const SurfacePatch& target, std::span<const Vec2> positions,
                                           std::optional<double> seed = std::nullopt,
                                           const ProjectionOptions& opt = {}) {
    const double scale = detail::target_scale(target, positions);
    if (seed) {
        Projection p = detail::newton_projection(x, target, positions, *seed, opt, scale);
        if (p.converged) return p;
    }
    const auto& U = target.kv.knots();
    std::vector<std::pair<double, double>> samples;  // (distance^2, xi)
    for (int span : target.kv.element_spans()) {
        const double a = U[span], b = U[span + 1];
        for (int k = 0; k <= opt.samples_per_span; ++k) {
            const double xi = a + (b - a) * k / opt.samples_per_span;
            const Vec2 xp = curve_eval(target, positions, xi).x;
            samples.emplace_back((x - xp).squaredNorm(), xi);
        }
    }
    std::sort(samples.begin(), samples.end());
    std::vector<double> seeds;
    for (auto& [d2, xi] : samples) {
        bool dup = false;
        for (double s : seeds)
            if (std::abs(s - xi) < 1e-12) dup = true;
        if (!dup) seeds.push_back(xi);
        if (static_cast<int>(seeds.size()) >= opt.n_seeds) break;
    }
    std::optional<Projection> best;
    for (double s : seeds) {
        Projection p = detail::newton_projection(x, target, positions, s, opt, scale);
        if (!best) {
            best = p;
            continue;
        }
        const double dp = (p.x - p.x_p).norm(), db = (best->x - best->x_p).norm();
        const bool better_status = p.converged && !best->converged;
        if (better_status || (p.converged == best->converged && dp < db - 1e-14 * scale)) best = p;
    }
    return *best;
}

/// Rows of dg_n with respect to the slave-element and master-element node coordinates,
/// laid out (x0, y0, x1, y1, ...).
struct GapVariation {
    Eigen::RowVectorXd row_s;
    Eigen::RowVectorXd row_m;
};

inline GapVariation gap_variation_rows(const Projection& proj, const BasisEval& slave, const BasisEval& master) {
    GapVariation v{Eigen::RowVectorXd::Zero(2 * slave.size()), Eigen::RowVectorXd::Zero(2 * master.size())};
    for (int a = 0; a < slave.size(); ++a) v.row_s.segment<2>(2 * a) = slave.values[a] * proj.n_p.transpose();
    for (int b = 0; b < master.size(); ++b) v.row_m.segment<2>(2 * b) = -master.values[b] * proj.n_p.transpose();
    return v;
}

/// Derivatives of the projected normal (P_s, P_m) and of the foot-point parameter
/// with respect to slave-element and master-element coordinates. In 2D the 1/g_n
/// factor cancels: (I - n n - c a1 a1)/g_n = -(c b11 / a11) a1 a1.
struct ProjectionLinearization {
    Eigen::MatrixXd Ps;          // 2 x 2 n_s
    Eigen::MatrixXd Pm;          // 2 x 2 n_m
    Eigen::RowVectorXd dxi_s;    // 1 x 2 n_s
    Eigen::RowVectorXd dxi_m;    // 1 x 2 n_m
};

inline ProjectionLinearization projection_linearization(const Projection& proj, const BasisEval& slave,
                                                        const BasisEval& master) {
    const double denom = proj.a11_p - proj.g_n * proj.b11_p;
    if (!(std::abs(denom) > 1e-12 * proj.a11_p))
        throw Error(ErrorKind::Geometry, "projection_linearization: a11 - g b11 vanishes (point at curvature center)");
    const double c = 1.0 / denom;
    const Vec2& a1 = proj.a1_p;
    const Vec2& n = proj.n_p;
    const double g = proj.g_n;
    const Mat2 Taa = (c * proj.b11_p / proj.a11_p) * (a1 * a1.transpose());
    const Mat2 Tan = c * (a1 * n.transpose());

    ProjectionLinearization L;
    L.Ps = Eigen::MatrixXd::Zero(2, 2 * slave.size());
    L.dxi_s = Eigen::RowVectorXd::Zero(2 * slave.size());
    for (int a = 0; a < slave.size(); ++a) {
        L.Ps.block<2, 2>(0, 2 * a) = -slave.values[a] * Taa;
        L.dxi_s.segment<2>(2 * a) = c * slave.values[a] * a1.transpose();
    }
    L.Pm = Eigen::MatrixXd::Zero(2, 2 * master.size());
    L.dxi_m = Eigen::RowVectorXd::Zero(2 * master.size());
    for (int b = 0; b < master.size(); ++b) {
        L.Pm.block<2, 2>(0, 2 * b) = master.values[b] * Taa - master.d1[b] * Tan;
        L.dxi_m.segment<2>(2 * b) = c * (-master.values[b] * a1.transpose() + g * master.d1[b] * n.transpose());
    }
    return L;
}

}  // namespace isomortar
