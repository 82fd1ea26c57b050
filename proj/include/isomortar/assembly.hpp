#pragma once

// Unified contact residual and consistent tangent for GPTS, standard mortar and
// extended mortar in full-pass and two-half-pass form. Every formulation evaluates a
// pointwise penalty pressure p = eps g at slave quadrature points and maps it to the
// pressure p* that enters the force integrals:
//   GPTS:     p* = chi_q p
//   standard: p* = M . G lambda,     lambda = int M^T p,   G = diag(chi)
//   extended: p* = H M . G lambda,   lambda = int H M^T p, G = W_x^-1 on the active set
// Active sets, Heaviside values and RBQ partitions are frozen in a ContactState.

#include "extended.hpp"
#include "mesh.hpp"

#include <Eigen/Sparse>

namespace isomortar {

enum class Formulation { GPTS, StandardMortar, ExtendedMortar };
enum class PassMode { Full, TwoHalf };
enum class PenaltyMode { Nominal, True };

inline Formulation parse_formulation(const std::string& s) {
    if (s == "gpts" || s == "gp") return Formulation::GPTS;
    if (s == "sm") return Formulation::StandardMortar;
    if (s == "xm") return Formulation::ExtendedMortar;
    throw Error(ErrorKind::Config, "unknown formulation '" + s + "' (gpts|sm|xm)");
}
inline PassMode parse_pass(const std::string& s) {
    if (s == "full" || s == "fp") return PassMode::Full;
    if (s == "2hp") return PassMode::TwoHalf;
    throw Error(ErrorKind::Config, "unknown pass '" + s + "' (full|2hp)");
}
inline PenaltyMode parse_penalty_mode(const std::string& s) {
    if (s == "nominal") return PenaltyMode::Nominal;
    if (s == "true") return PenaltyMode::True;
    throw Error(ErrorKind::Config, "unknown penalty_mode '" + s + "' (nominal|true)");
}
inline const char* to_string(Formulation f) {
    switch (f) {
        case Formulation::GPTS: return "gpts";
        case Formulation::StandardMortar: return "sm";
        case Formulation::ExtendedMortar: return "xm";
    }
    return "?";
}
inline const char* to_string(PassMode p) { return p == PassMode::Full ? "full" : "2hp"; }
inline const char* to_string(PenaltyMode p) { return p == PenaltyMode::Nominal ? "nominal" : "true"; }

struct ContactConfig {
    Formulation formulation = Formulation::ExtendedMortar;
    PassMode pass = PassMode::TwoHalf;
    MortarKind mortar = MortarKind::LmLSstar;
    double eps = 100;
    PenaltyMode penalty = PenaltyMode::Nominal;
    int n_gp = 5;
    bool rbq = false;
    RbqOptions rbq_opt;
    int rbq_scan_points = 10;          // abscissae scanned for sign changes per element
    double max_skip_fraction = 0.01;   // unconverged projections tolerated per evaluation

    /// Short label such as XM2HP or GPFP.
    std::string label() const {
        std::string f = formulation == Formulation::GPTS ? "GP" : formulation == Formulation::StandardMortar ? "SM" : "XM";
        return f + (pass == PassMode::Full ? "FP" : "2HP");
    }

    void validate() const {
        if (!(eps > 0)) throw Error(ErrorKind::Config, "eps_n must be positive");
        if (n_gp < 1 || n_gp > kMaxGaussPoints) throw Error(ErrorKind::Config, "ngp out of range");
        if (rbq_scan_points < 1) throw Error(ErrorKind::Config, "rbq_scan_points must be positive");
    }
};

inline bool parse_on_off(const std::string& s) {
    if (s == "on" || s == "true" || s == "1") return true;
    if (s == "off" || s == "false" || s == "0") return false;
    throw Error(ErrorKind::Config, "expected on|off, got '" + s + "'");
}

/// Applies key/value overrides (scene [contact] section or CLI).
inline void apply_contact_options(ContactConfig& c, const std::map<std::string, std::string>& kv) {
    for (const auto& [k, v] : kv) {
        try {
            if (k == "formulation") c.formulation = parse_formulation(v);
            else if (k == "pass") c.pass = parse_pass(v);
            else if (k == "mortar") c.mortar = parse_mortar_kind(v);
            else if (k == "eps_n" || k == "eps") c.eps = std::stod(v);
            else if (k == "penalty_mode") c.penalty = parse_penalty_mode(v);
            else if (k == "ngp") c.n_gp = std::stoi(v);
            else if (k == "rbq") c.rbq = parse_on_off(v);
            else if (k == "rbq_scan_points") c.rbq_scan_points = std::stoi(v);
            else if (k == "max_skip_fraction") c.max_skip_fraction = std::stod(v);
            else throw Error(ErrorKind::Config, "unknown contact option '" + k + "'");
        } catch (const std::logic_error&) {
            throw Error(ErrorKind::Config, "bad value for contact option '" + k + "': " + v);
        }
    }
    c.validate();
}

struct ContactSurface {
    int body = -1;
    Side side = Side::Top;
    SurfacePatch patch;
    MortarOperators ops;
};

/// Frozen discrete state of one pass.
struct PassState {
    int slave = -1, master = -1;   // surface indices
    std::vector<ElementPartition> partitions;
    std::vector<SurfaceQuadPoint> qps;   // in_contact = frozen chi_q / H_q
    std::vector<double> seed;            // master foot-point parameter
    std::vector<char> valid;
    std::vector<int> chi;                // nodal active set (mortar)
    Eigen::MatrixXd G;
    int n_roots = 0;
};

struct ContactState {
    std::vector<PassState> passes;

    /// Structural fingerprint used to detect active-set changes. Boundary-quadrature roots
    /// count as moved when they shift by more than root_tol of their element's span.
    bool same_structure(const ContactState& o, double root_tol = 1e-6) const {
        if (passes.size() != o.passes.size()) return false;
        for (std::size_t k = 0; k < passes.size(); ++k) {
            const PassState &a = passes[k], &b = o.passes[k];
            if (a.chi != b.chi || a.qps.size() != b.qps.size()) return false;
            if (a.partitions.size() != b.partitions.size()) return false;
            for (std::size_t e = 0; e < a.partitions.size(); ++e) {
                const ElementPartition &pa = a.partitions[e], &pb = b.partitions[e];
                if (pa.roots.size() != pb.roots.size() || pa.in_contact != pb.in_contact) return false;
                const double span = pa.intervals.back().second - pa.intervals.front().first;
                for (std::size_t r = 0; r < pa.roots.size(); ++r)
                    if (std::abs(pa.roots[r] - pb.roots[r]) > root_tol * span) return false;
            }
            for (std::size_t q = 0; q < a.qps.size(); ++q)
                if (a.qps[q].in_contact != b.qps[q].in_contact || a.valid[q] != b.valid[q]) return false;
        }
        return true;
    }
    int active_count() const {
        int n = 0;
        for (const PassState& p : passes)
            for (const auto& q : p.qps) n += q.in_contact;
        return n;
    }
};

struct ContactDiagnostics {
    int n_qp = 0;
    int active_qp = 0;
    int active_nodes = 0;
    int skipped = 0;    // unconverged projections
    int clamped = 0;    // foot point beyond a master end
    int roots = 0;
};

struct ContactSystem {
    Eigen::VectorXd f;                          // slot space (2 node + component)
    std::vector<Eigen::Triplet<double>> K;      // slot space
    std::vector<Eigen::VectorXd> nodal_p;       // per pass: p~ (mortar) or empty
    ContactDiagnostics diag;
};

class ContactModel {
  public:
    ContactModel(const Scene& scene, ContactConfig cfg) : scene_(&scene), cfg_(std::move(cfg)) {
        cfg_.validate();
        if (scene.contact_pairs.empty()) return;
        for (const ContactPairSpec& pr : scene.contact_pairs) {
            const int s1 = add_surface(pr.body1, pr.side1);
            const int s2 = add_surface(pr.body2, pr.side2);
            if (cfg_.pass == PassMode::Full) {
                passes_.push_back({s1, s2});
            } else {
                if (!scene.bodies[pr.body1].rigid) passes_.push_back({s1, s2});
                if (!scene.bodies[pr.body2].rigid) passes_.push_back({s2, s1});
            }
        }
    }

    const ContactConfig& config() const { return cfg_; }
    const std::vector<ContactSurface>& surfaces() const { return surfaces_; }
    const std::vector<std::pair<int, int>>& passes() const { return passes_; }

    /// Projections, partitions and active sets at the current configuration.
    ContactState update_state(std::span<const Vec2> x) const {
        ContactState st;
        for (auto [si, mi] : passes_) st.passes.push_back(pass_state(si, mi, x));
        return st;
    }

    ContactSystem evaluate(std::span<const Vec2> x, const ContactState& st, bool with_tangent = true) const {
        ContactSystem sys;
        sys.f = Eigen::VectorXd::Zero(2 * scene_->n_nodes());
        for (const PassState& ps : st.passes) evaluate_pass(x, ps, with_tangent, sys);
        if (sys.diag.n_qp > 0 && sys.diag.skipped > cfg_.max_skip_fraction * sys.diag.n_qp)
            throw Error(ErrorKind::Projection, std::to_string(sys.diag.skipped) + " of " + std::to_string(sys.diag.n_qp) +
                                                   " contact quadrature points failed to project");
        return sys;
    }

    struct TraceSample {
        int pass = 0;
        int body = -1;
        double xi = 0;
        Vec2 x;
        double g = 0;
        double p = 0;        // nominal p*
        double p_true = 0;   // p* / J_s
        bool in_contact = false;
    };

    /// Samples p* uniformly (per element) on every pass slave at the given state.
    std::vector<TraceSample> pressure_trace(std::span<const Vec2> x, const ContactState& st, const ContactSystem& sys,
                                            int per_element = 20) const {
        std::vector<TraceSample> out;
        for (std::size_t k = 0; k < st.passes.size(); ++k) {
            const PassState& ps = st.passes[k];
            const ContactSurface& S = surfaces_[ps.slave];
            const ContactSurface& Mst = surfaces_[ps.master];
            const auto& U = S.patch.kv.knots();
            for (int span : S.patch.kv.element_spans()) {
                const double a = U[span], b = U[span + 1];
                for (int j = 0; j < per_element; ++j) {
                    const double xi = a + (b - a) * (j + 0.5) / per_element;
                    const SurfacePointData sp = surface_point(S.patch, x, scene_->X, xi);
                    const Projection pr = closest_point_projection(sp.x, Mst.patch, x);
                    TraceSample t{static_cast<int>(k), S.body, xi, sp.x, pr.g_n, 0, 0, false};
                    const bool inside = pr.valid() && pr.g_n < 0;
                    t.in_contact = inside;
                    switch (cfg_.formulation) {
                        case Formulation::GPTS: t.p = inside ? penalty(pr.g_n, sp.J) : 0.0; break;
                        case Formulation::StandardMortar: t.p = mortar_shape_eval(S.ops, sp.basis).dot(sys.nodal_p[k]); break;
                        case Formulation::ExtendedMortar:
                            t.p = inside ? mortar_shape_eval(S.ops, sp.basis).dot(sys.nodal_p[k]) : 0.0;
                            break;
                    }
                    t.p_true = t.p / sp.J;
                    out.push_back(t);
                }
            }
        }
        return out;
    }

  private:
    const Scene* scene_;
    ContactConfig cfg_;
    std::vector<ContactSurface> surfaces_;
    std::vector<std::pair<int, int>> passes_;

    int add_surface(int body, Side side) {
        for (std::size_t k = 0; k < surfaces_.size(); ++k)
            if (surfaces_[k].body == body && surfaces_[k].side == side) return static_cast<int>(k);
        ContactSurface s;
        s.body = body;
        s.side = side;
        s.patch = extract_contact_face(*scene_, body, side);
        if (cfg_.formulation != Formulation::GPTS) s.ops = build_mortar_operators(s.patch, scene_->X, cfg_.mortar, cfg_.n_gp);
        surfaces_.push_back(std::move(s));
        return static_cast<int>(surfaces_.size()) - 1;
    }

    double penalty(double g, double J) const { return cfg_.penalty == PenaltyMode::True ? cfg_.eps * J * g : cfg_.eps * g; }

    PassState pass_state(int si, int mi, std::span<const Vec2> x) const {
        const SurfacePatch& S = surfaces_[si].patch;
        const SurfacePatch& Mst = surfaces_[mi].patch;
        PassState ps;
        ps.slave = si;
        ps.master = mi;
        const auto& U = S.kv.knots();
        const auto spans = S.kv.element_spans();
        std::optional<double> seed;
        const auto project = [&](double xi) {
            const Vec2 xs = curve_eval(S, x, xi).x;
            Projection p = closest_point_projection(xs, Mst, x, seed);
            if (!p.valid() && seed) p = closest_point_projection(xs, Mst, x);
            if (p.converged) seed = p.xi_p;
            return p;
        };
        if (cfg_.rbq) {
            const GaussRule& scan = gauss_rule(std::min(cfg_.n_gp, cfg_.rbq_scan_points));
            for (int e = 0; e < static_cast<int>(spans.size()); ++e) {
                const double a = U[spans[e]], b = U[spans[e] + 1];
                const auto phi = [&](double xi) { return project(std::clamp(xi, a, std::nextafter(b, a))).g_n; };
                ps.partitions.push_back(rbq_partition(e, a, b, phi, scan, cfg_.rbq_opt));
                ps.n_roots += static_cast<int>(ps.partitions.back().roots.size());
            }
        }
        ps.qps = surface_quadrature(S, scene_->X, cfg_.n_gp, cfg_.rbq ? &ps.partitions : nullptr);
        std::vector<double> H(ps.qps.size(), 0.0);
        std::vector<char> skip(ps.qps.size(), 0);
        std::vector<double> g(ps.qps.size(), 0.0);
        seed.reset();
        for (std::size_t q = 0; q < ps.qps.size(); ++q) {
            const Projection p = project(ps.qps[q].xi);
            ps.seed.push_back(p.xi_p);
            ps.valid.push_back(p.valid());
            ps.qps[q].in_contact = p.valid() && phi_inside(p.g_n, cfg_.rbq_opt.zero_tol);
            H[q] = ps.qps[q].in_contact ? 1.0 : 0.0;
            skip[q] = !p.valid();
            g[q] = p.g_n;
        }
        const int n = S.n_nodes();
        if (cfg_.formulation == Formulation::StandardMortar) {
            const MortarOperators& ops = surfaces_[si].ops;
            Eigen::VectorXd gt = Eigen::VectorXd::Zero(n);
            for (std::size_t q = 0; q < ps.qps.size(); ++q) {
                if (skip[q]) continue;
                const MortarValues m = mortar_shape_eval(ops, S, ps.qps[q].xi);
                for (std::size_t a = 0; a < m.idx.size(); ++a) gt[m.idx[a]] += ps.qps[q].w * m.val[a] * g[q];
            }
            ps.chi.assign(n, 0);
            ps.G = Eigen::MatrixXd::Zero(n, n);
            for (int A = 0; A < n; ++A)
                if (gt[A] < 0) {
                    ps.chi[A] = 1;
                    ps.G(A, A) = 1;
                }
        } else if (cfg_.formulation == Formulation::ExtendedMortar) {
            ExtendedState xs = extended_operator(surfaces_[si].ops, S, ps.qps, H, skip);
            ps.chi = std::move(xs.chi);
            ps.G = std::move(xs.G);
        }
        return ps;
    }

    // Cached data of one slave quadrature point during an evaluation.
    struct QpData {
        double w = 0, pen = 0, pstar = 0;
        BasisEval bs, bm;
        Projection proj;
        double J = 1;
        Vec2 a1s;
        MortarValues phi;
    };

    void evaluate_pass(std::span<const Vec2> x, const PassState& ps, bool with_tangent, ContactSystem& sys) const {
        const ContactSurface& SS = surfaces_[ps.slave];
        const ContactSurface& MS = surfaces_[ps.master];
        const SurfacePatch& S = SS.patch;
        const SurfacePatch& Mst = MS.patch;
        const int ns = S.n_nodes(), nm = Mst.n_nodes(), nd = 2 * (ns + nm);
        const bool mortar = cfg_.formulation != Formulation::GPTS;
        const bool full = cfg_.pass == PassMode::Full;

        std::vector<QpData> data;
        data.reserve(ps.qps.size());
        Eigen::VectorXd lambda = Eigen::VectorXd::Zero(ns);
        for (std::size_t q = 0; q < ps.qps.size(); ++q) {
            ++sys.diag.n_qp;
            const SurfaceQuadPoint& qp = ps.qps[q];
            if (!ps.valid[q]) continue;   // frozen as having no admissible foot point
            QpData d;
            const SurfacePointData sp = surface_point(S, x, scene_->X, qp.xi);
            d.proj = closest_point_projection(sp.x, Mst, x, ps.seed[q]);
            if (!d.proj.converged) {
                ++sys.diag.skipped;
                continue;
            }
            if (d.proj.boundary_clamped) {
                ++sys.diag.clamped;
                continue;
            }
            d.w = qp.w;
            d.bs = sp.basis;
            d.bm = d.proj.basis_p;
            d.J = sp.J;
            d.a1s = sp.a1;
            d.pen = penalty(d.proj.g_n, sp.J);
            if (qp.in_contact) ++sys.diag.active_qp;
            if (mortar) {
                d.phi = mortar_shape_eval(SS.ops, sp.basis);
                if (cfg_.formulation == Formulation::ExtendedMortar && !qp.in_contact) d.phi.val.assign(d.phi.val.size(), 0.0);
                for (std::size_t a = 0; a < d.phi.idx.size(); ++a) lambda[d.phi.idx[a]] += d.w * d.phi.val[a] * d.pen;
            } else {
                d.pstar = qp.in_contact ? d.pen : 0.0;
            }
            data.push_back(std::move(d));
        }
        sys.diag.roots += ps.n_roots;
        Eigen::VectorXd pt;
        if (mortar) {
            pt = ps.G * lambda;
            for (QpData& d : data) d.pstar = d.phi.dot(pt);
            for (int c : ps.chi) sys.diag.active_nodes += c;
        }
        sys.nodal_p.push_back(pt);

        const auto slave_local = [&](const BasisEval& b, int j) { return b.first + j; };
        const auto master_local = [&](const BasisEval& b, int j) { return ns + b.first + j; };

        Eigen::VectorXd f = Eigen::VectorXd::Zero(nd);
        Eigen::MatrixXd K;
        Eigen::MatrixXd Bmat, Cmat;
        if (with_tangent) {
            K = Eigen::MatrixXd::Zero(nd, nd);
            if (mortar) {
                Bmat = Eigen::MatrixXd::Zero(nd, ns);
                Cmat = Eigen::MatrixXd::Zero(ns, nd);
            }
        }
        for (const QpData& d : data) {
            const Vec2& n = d.proj.n_p;
            const int ms = d.bs.size(), mm = d.bm.size();
            // B = dg/dx: slave N n, master -N_p n
            for (int j = 0; j < ms; ++j) f.segment<2>(2 * slave_local(d.bs, j)) += d.w * d.pstar * d.bs.values[j] * n;
            for (int j = 0; j < mm; ++j) f.segment<2>(2 * master_local(d.bm, j)) -= d.w * d.pstar * d.bm.values[j] * n;
            if (!with_tangent) continue;

            // column map of the element-local linearization blocks
            std::vector<int> cols;
            for (int j = 0; j < ms; ++j) cols.insert(cols.end(), {2 * slave_local(d.bs, j), 2 * slave_local(d.bs, j) + 1});
            for (int j = 0; j < mm; ++j)
                cols.insert(cols.end(), {2 * master_local(d.bm, j), 2 * master_local(d.bm, j) + 1});
            const int nc = static_cast<int>(cols.size());

            if (d.pstar != 0.0) {
                const ProjectionLinearization L = projection_linearization(d.proj, d.bs, d.bm);
                Eigen::MatrixXd P(2, nc);
                P << L.Ps, L.Pm;
                Eigen::RowVectorXd dxi(nc);
                dxi << L.dxi_s, L.dxi_m;
                const double s = d.w * d.pstar;
                for (int j = 0; j < ms; ++j) {
                    const int r = 2 * slave_local(d.bs, j);
                    for (int c = 0; c < nc; ++c) K.block<2, 1>(r, cols[c]) += s * d.bs.values[j] * P.col(c);
                }
                for (int j = 0; j < mm; ++j) {
                    const int r = 2 * master_local(d.bm, j);
                    for (int c = 0; c < nc; ++c)
                        K.block<2, 1>(r, cols[c]) -= s * (d.bm.values[j] * P.col(c) + d.bm.d1[j] * dxi[c] * n);
                }
            }

            // dp/dx on the local columns
            Eigen::RowVectorXd dp = Eigen::RowVectorXd::Zero(nc);
            const double scale = cfg_.penalty == PenaltyMode::True ? cfg_.eps * d.J : cfg_.eps;
            for (int j = 0; j < ms; ++j) dp.segment<2>(2 * j) = scale * d.bs.values[j] * n.transpose();
            for (int j = 0; j < mm; ++j) dp.segment<2>(2 * (ms + j)) = -scale * d.bm.values[j] * n.transpose();
            if (cfg_.penalty == PenaltyMode::True) {
                const Vec2 a_up = d.a1s / d.a1s.squaredNorm();
                for (int j = 0; j < ms; ++j) dp.segment<2>(2 * j) += d.pen * d.bs.d1[j] * a_up.transpose();
            }
            // B entries on the same columns
            Eigen::VectorXd B = Eigen::VectorXd::Zero(nc);
            for (int j = 0; j < ms; ++j) B.segment<2>(2 * j) = d.bs.values[j] * n;
            for (int j = 0; j < mm; ++j) B.segment<2>(2 * (ms + j)) = -d.bm.values[j] * n;

            if (!mortar) {
                if (d.pstar == 0.0) continue;
                for (int r = 0; r < nc; ++r)
                    for (int c = 0; c < nc; ++c) K(cols[r], cols[c]) += d.w * B[r] * dp[c];
            } else {
                for (std::size_t a = 0; a < d.phi.idx.size(); ++a) {
                    const double v = d.w * d.phi.val[a];
                    if (v == 0.0) continue;
                    for (int r = 0; r < nc; ++r) {
                        Bmat(cols[r], d.phi.idx[a]) += v * B[r];
                        Cmat(d.phi.idx[a], cols[r]) += v * dp[r];
                    }
                }
            }
        }
        if (with_tangent && mortar) K += Bmat * ps.G * Cmat;

        // scatter: two-half-pass keeps the slave rows only
        const int rows = full ? nd : 2 * ns;
        const auto slot = [&](int l) {
            const int node = l / 2 < ns ? S.nodes[l / 2] : Mst.nodes[l / 2 - ns];
            return 2 * node + l % 2;
        };
        for (int r = 0; r < rows; ++r) {
            sys.f[slot(r)] += f[r];
            if (!with_tangent) continue;
            for (int c = 0; c < nd; ++c)
                if (K(r, c) != 0.0) sys.K.emplace_back(slot(r), slot(c), K(r, c));
        }
    }
};

/// Net contact force acting on each body (minus the sum of its contact residual).
inline std::vector<Vec2> body_contact_forces(const Scene& scene, const Eigen::VectorXd& f) {
    std::vector<Vec2> out(scene.bodies.size(), Vec2::Zero());
    for (std::size_t b = 0; b < scene.bodies.size(); ++b)
        for (int node : scene.bodies[b].nodes()) out[b] -= Vec2(f[2 * node], f[2 * node + 1]);
    return out;
}

}  // namespace isomortar
