#pragma once

// Univariate / bivariate NURBS basis evaluation and curve geometry.

#include "core.hpp"

#include <algorithm>
#include <span>
#include <vector>

namespace isomortar {

/// Clamped (open) knot vector of a given degree.
class KnotVector {
public:
    KnotVector() = default;
    KnotVector(int degree, std::vector<double> knots) : degree_(degree), knots_(std::move(knots)) { validate(); }

    int degree() const { return degree_; }
    const std::vector<double>& knots() const { return knots_; }
    int n_basis() const { return static_cast<int>(knots_.size()) - degree_ - 1; }
    double front() const { return knots_[degree_]; }
    double back() const { return knots_[n_basis()]; }

    /// Knot-span indices with nonzero length; each is one element.
    std::vector<int> element_spans() const {
        std::vector<int> spans;
        for (int i = degree_; i < n_basis(); ++i)
            if (knots_[i + 1] > knots_[i]) spans.push_back(i);
        return spans;
    }
    int n_elements() const { return static_cast<int>(element_spans().size()); }

    /// Span containing xi. Interior knots belong to the span on their right, the last
    /// knot to the last nonzero span.
    int find_span(double xi) const {
        const int n = n_basis();
        if (xi >= knots_[n]) {
            int s = n - 1;
            while (s > degree_ && knots_[s] == knots_[s + 1]) --s;
            return s;
        }
        if (xi <= knots_[degree_]) {
            int s = degree_;
            while (s < n - 1 && knots_[s] == knots_[s + 1]) ++s;
            return s;
        }
        auto it = std::upper_bound(knots_.begin() + degree_, knots_.begin() + n + 1, xi);
        return static_cast<int>(it - knots_.begin()) - 1;
    }

    double clamp(double xi) const { return std::clamp(xi, front(), back()); }

private:
    void validate() const {
        if (degree_ < 1) throw Error(ErrorKind::Structural, "KnotVector: degree must be >= 1");
        const int m = static_cast<int>(knots_.size());
        if (m < 2 * (degree_ + 1))
            throw Error(ErrorKind::Structural, "KnotVector: needs at least 2*(degree+1) knots");
        for (int i = 1; i < m; ++i)
            if (!(knots_[i] >= knots_[i - 1]))
                throw Error(ErrorKind::Structural, "KnotVector: knots must be nondecreasing");
        for (int i = 1; i <= degree_; ++i)
            if (knots_[i] != knots_[0] || knots_[m - 1 - i] != knots_[m - 1])
                throw Error(ErrorKind::Structural,
                            "KnotVector: end knots must be repeated degree+1 times (clamped)");
        if (!(knots_[m - 1] > knots_[0]))
            throw Error(ErrorKind::Structural, "KnotVector: needs at least one nonzero span");
    }

    int degree_ = 1;
    std::vector<double> knots_;
};

/// Nonzero basis functions at one parameter: indices first .. first+degree.
struct BasisEval {
    int span = 0;
    int first = 0;
    std::vector<double> values;
    std::vector<double> d1;
    std::vector<double> d2;

    int size() const { return static_cast<int>(values.size()); }
};

/// Polynomial B-spline values and derivatives up to order 2 (Cox-de Boor, triangular table).
inline BasisEval bspline_basis(const KnotVector& kv, double xi) {
    const int p = kv.degree();
    const auto& U = kv.knots();
    xi = kv.clamp(xi);
    const int span = kv.find_span(xi);

    // ndu(j, r): upper triangle basis values, lower triangle knot differences
    Eigen::MatrixXd ndu(p + 1, p + 1);
    std::vector<double> left(p + 1), right(p + 1);
    ndu(0, 0) = 1.0;
    for (int j = 1; j <= p; ++j) {
        left[j] = xi - U[span + 1 - j];
        right[j] = U[span + j] - xi;
        double saved = 0.0;
        for (int r = 0; r < j; ++r) {
            ndu(j, r) = right[r + 1] + left[j - r];
            const double tmp = ndu(r, j - 1) / ndu(j, r);
            ndu(r, j) = saved + right[r + 1] * tmp;
            saved = left[j - r] * tmp;
        }
        ndu(j, j) = saved;
    }

    const int nd = std::min(2, p);
    Eigen::MatrixXd ders = Eigen::MatrixXd::Zero(3, p + 1);
    for (int j = 0; j <= p; ++j) ders(0, j) = ndu(j, p);
    Eigen::MatrixXd a(2, p + 1);
    for (int r = 0; r <= p; ++r) {
        int s1 = 0, s2 = 1;
        a(0, 0) = 1.0;
        for (int k = 1; k <= nd; ++k) {
            double d = 0.0;
            const int rk = r - k, pk = p - k;
            if (r >= k) {
                a(s2, 0) = a(s1, 0) / ndu(pk + 1, rk);
                d = a(s2, 0) * ndu(rk, pk);
            }
            const int j1 = (rk >= -1) ? 1 : -rk;
            const int j2 = (r - 1 <= pk) ? k - 1 : p - r;
            for (int j = j1; j <= j2; ++j) {
                a(s2, j) = (a(s1, j) - a(s1, j - 1)) / ndu(pk + 1, rk + j);
                d += a(s2, j) * ndu(rk + j, pk);
            }
            if (r <= pk) {
                a(s2, k) = -a(s1, k - 1) / ndu(pk + 1, r);
                d += a(s2, k) * ndu(r, pk);
            }
            ders(k, r) = d;
            std::swap(s1, s2);
        }
    }
    double fac = p;
    for (int k = 1; k <= nd; ++k) {
        ders.row(k) *= fac;
        fac *= (p - k);
    }

    BasisEval b;
    b.span = span;
    b.first = span - p;
    b.values.resize(p + 1);
    b.d1.resize(p + 1);
    b.d2.resize(p + 1);
    for (int j = 0; j <= p; ++j) {
        b.values[j] = ders(0, j);
        b.d1[j] = ders(1, j);
        b.d2[j] = ders(2, j);
    }
    return b;
}

/// Rational basis with first and second derivatives. weights are indexed by global
/// basis-function index (size n_basis).
inline BasisEval basis_eval(const KnotVector& kv, std::span<const double> weights, double xi) {
    if (static_cast<int>(weights.size()) != kv.n_basis())
        throw Error(ErrorKind::Structural, "basis_eval: weight count does not match knot vector");
    const double tol = 1e-12 * std::max(1.0, std::abs(kv.back() - kv.front()));
    if (xi < kv.front() - tol || xi > kv.back() + tol)
        throw Error(ErrorKind::Structural, "basis_eval: parameter outside knot range");
    BasisEval b = bspline_basis(kv, xi);
    const int n = b.size();
    double W = 0, W1 = 0, W2 = 0;
    for (int j = 0; j < n; ++j) {
        const double w = weights[b.first + j];
        W += b.values[j] * w;
        W1 += b.d1[j] * w;
        W2 += b.d2[j] * w;
    }
    for (int j = 0; j < n; ++j) {
        const double w = weights[b.first + j];
        const double R = b.values[j] * w / W;
        const double R1 = (b.d1[j] * w - R * W1) / W;
        const double R2 = (b.d2[j] * w - 2.0 * R1 * W1 - R * W2) / W;
        b.values[j] = R;
        b.d1[j] = R1;
        b.d2[j] = R2;
    }
    return b;
}

/// A boundary curve of a body: knot vector, global control-point ids, weights and the
/// sign that makes rotate_cw(a1) point out of the body.
struct SurfacePatch {
    KnotVector kv;
    std::vector<int> nodes;
    std::vector<double> weights;
    int orientation = 1;
    int body = -1;

    int n_nodes() const { return static_cast<int>(nodes.size()); }

    void validate() const {
        if (static_cast<int>(nodes.size()) != kv.n_basis() || weights.size() != nodes.size())
            throw Error(ErrorKind::Structural, "SurfacePatch: control-point count does not match knot vector");
        for (double w : weights)
            if (!(w > 0)) throw Error(ErrorKind::Structural, "SurfacePatch: weights must be positive");
        if (orientation != 1 && orientation != -1)
            throw Error(ErrorKind::Structural, "SurfacePatch: orientation must be +1 or -1");
    }
};

struct CurvePoint {
    Vec2 x;
    Vec2 a1;
    Vec2 a1_deriv;
};

/// Position, tangent and second derivative from a precomputed basis.
inline CurvePoint curve_eval(const SurfacePatch& patch, std::span<const Vec2> positions, const BasisEval& b) {
    CurvePoint c{Vec2::Zero(), Vec2::Zero(), Vec2::Zero()};
    for (int j = 0; j < b.size(); ++j) {
        const Vec2& xa = positions[patch.nodes[b.first + j]];
        c.x += b.values[j] * xa;
        c.a1 += b.d1[j] * xa;
        c.a1_deriv += b.d2[j] * xa;
    }
    return c;
}

inline CurvePoint curve_eval(const SurfacePatch& patch, std::span<const Vec2> positions, double xi) {
    return curve_eval(patch, positions, basis_eval(patch.kv, patch.weights, xi));
}

/// Bivariate tensor-product patch. Control points are numbered u-fastest.
struct Patch2D {
    KnotVector ku;
    KnotVector kv;
    std::vector<int> nodes;
    std::vector<double> weights;

    int nu() const { return ku.n_basis(); }
    int nv() const { return kv.n_basis(); }
    int local(int i, int j) const { return i + j * nu(); }

    void validate() const {
        if (static_cast<int>(nodes.size()) != nu() * nv() || weights.size() != nodes.size())
            throw Error(ErrorKind::Structural, "Patch2D: control net size does not match knot vectors");
        for (double w : weights)
            if (!(w > 0)) throw Error(ErrorKind::Structural, "Patch2D: weights must be positive");
    }
};

/// Rational bivariate basis and first derivatives; `local` holds patch-local indices.
struct Basis2D {
    std::vector<int> local;
    std::vector<double> R;
    std::vector<double> dRdu;
    std::vector<double> dRdv;
};

inline Basis2D basis_eval_2d(const Patch2D& patch, double u, double v) {
    const BasisEval bu = bspline_basis(patch.ku, u);
    const BasisEval bv = bspline_basis(patch.kv, v);
    const int n = bu.size() * bv.size();
    Basis2D out;
    out.local.resize(n);
    out.R.resize(n);
    out.dRdu.resize(n);
    out.dRdv.resize(n);
    double W = 0, Wu = 0, Wv = 0;
    int k = 0;
    for (int j = 0; j < bv.size(); ++j) {
        for (int i = 0; i < bu.size(); ++i, ++k) {
            const int l = patch.local(bu.first + i, bv.first + j);
            const double w = patch.weights[l];
            out.local[k] = l;
            out.R[k] = bu.values[i] * bv.values[j] * w;
            out.dRdu[k] = bu.d1[i] * bv.values[j] * w;
            out.dRdv[k] = bu.values[i] * bv.d1[j] * w;
            W += out.R[k];
            Wu += out.dRdu[k];
            Wv += out.dRdv[k];
        }
    }
    for (int a = 0; a < n; ++a) {
        const double R = out.R[a] / W;
        out.dRdu[a] = (out.dRdu[a] - R * Wu) / W;
        out.dRdv[a] = (out.dRdv[a] - R * Wv) / W;
        out.R[a] = R;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Geometry construction helpers (homogeneous control nets) used by the scene
// generators: exact knot insertion and uniform h-refinement.

/// Homogeneous control point (w*x, w*y, w).
using HPoint = Eigen::Vector3d;

inline HPoint to_homogeneous(const Vec2& x, double w) { return {w * x.x(), w * x.y(), w}; }
inline Vec2 from_homogeneous(const HPoint& h) { return {h.x() / h.z(), h.y() / h.z()}; }

/// Inserts `knot` once into a curve (Boehm). Control points are homogeneous.
inline void insert_knot(std::vector<double>& U, int p, std::vector<HPoint>& P, double knot) {
    const KnotVector kv(p, U);
    const int k = kv.find_span(knot);
    std::vector<HPoint> Q(P.size() + 1);
    for (int i = 0; i <= k - p; ++i) Q[i] = P[i];
    for (int i = k; i < static_cast<int>(P.size()); ++i) Q[i + 1] = P[i];
    for (int i = k - p + 1; i <= k; ++i) {
        const double alpha = (knot - U[i]) / (U[i + p] - U[i]);
        Q[i] = alpha * P[i] + (1.0 - alpha) * P[i - 1];
    }
    U.insert(U.begin() + k + 1, knot);
    P = std::move(Q);
}

/// Knots that split every nonzero span of U into `parts` equal pieces.
inline std::vector<double> uniform_split_knots(const std::vector<double>& U, int parts) {
    std::vector<double> out;
    for (std::size_t i = 0; i + 1 < U.size(); ++i) {
        if (U[i + 1] > U[i])
            for (int k = 1; k < parts; ++k) out.push_back(U[i] + (U[i + 1] - U[i]) * k / parts);
    }
    return out;
}

/// Control net of a bivariate patch in homogeneous form, u-fastest.
struct NurbsGrid {
    int pu = 2, pv = 2;
    std::vector<double> U, V;
    std::vector<HPoint> P;

    int nu() const { return static_cast<int>(U.size()) - pu - 1; }
    int nv() const { return static_cast<int>(V.size()) - pv - 1; }

    void insert_u(double knot) {
        const int n_u = nu(), n_v = nv();
        std::vector<double> Unew;
        std::vector<HPoint> out;
        std::vector<std::vector<HPoint>> rows(n_v);
        for (int j = 0; j < n_v; ++j) {
            std::vector<double> Uj = U;
            rows[j].assign(P.begin() + j * n_u, P.begin() + (j + 1) * n_u);
            insert_knot(Uj, pu, rows[j], knot);
            Unew = Uj;
        }
        U = Unew;
        P.clear();
        for (auto& r : rows) P.insert(P.end(), r.begin(), r.end());
    }

    void insert_v(double knot) {
        const int n_u = nu(), n_v = nv();
        std::vector<double> Vnew;
        std::vector<std::vector<HPoint>> cols(n_u);
        for (int i = 0; i < n_u; ++i) {
            std::vector<double> Vi = V;
            for (int j = 0; j < n_v; ++j) cols[i].push_back(P[i + j * n_u]);
            insert_knot(Vi, pv, cols[i], knot);
            Vnew = Vi;
        }
        V = Vnew;
        const int nv2 = nv();
        P.assign(static_cast<std::size_t>(n_u) * nv2, HPoint::Zero());
        for (int i = 0; i < n_u; ++i)
            for (int j = 0; j < nv2; ++j) P[i + j * n_u] = cols[i][j];
    }

    void refine(int su, int sv) {
        for (double k : uniform_split_knots(U, su)) insert_u(k);
        for (double k : uniform_split_knots(V, sv)) insert_v(k);
    }
};

}  // namespace isomortar
