#pragma once

// Load-stepped Newton-Raphson. Each step freezes projections, partitions and active
// sets, iterates to convergence, then refreshes the contact structure and repeats while
// it changes (hard-frozen after a fixed number of outer loops). Failed steps are cut.

#include "assembly.hpp"
#include "material.hpp"

#include <Eigen/SparseLU>

#include <functional>

namespace isomortar {

struct SolverSettings {
    double newton_tol = 1e-8;     // residual inf-norm relative to the force scale
    int max_iterations = 25;
    int max_outer = 5;
    double cut_factor = 0.5;
    int max_cuts = 6;
    int freeze_active_after = 3;
    bool predictor = true;
    double root_tol = 1e-6;       // boundary-quadrature root shift that counts as a structure change
    double divergence_floor = 1e-10;  // relative residual below which an increase counts as rounding

    void validate() const {
        if (!(newton_tol > 0)) throw Error(ErrorKind::Config, "newton_tol must be positive");
        if (max_iterations < 1 || max_outer < 1 || freeze_active_after < 1)
            throw Error(ErrorKind::Config, "iteration limits must be at least 1");
        if (!(cut_factor > 0 && cut_factor < 1)) throw Error(ErrorKind::Config, "cut_factor must lie in (0, 1)");
        if (max_cuts < 0) throw Error(ErrorKind::Config, "max_cuts must be non-negative");
        if (!(root_tol > 0)) throw Error(ErrorKind::Config, "root_tol must be positive");
        if (!(divergence_floor >= 0)) throw Error(ErrorKind::Config, "divergence_floor must be non-negative");
    }
};

inline void apply_solver_options(SolverSettings& s, const std::map<std::string, std::string>& kv) {
    for (const auto& [k, v] : kv) {
        try {
            if (k == "newton_tol") s.newton_tol = std::stod(v);
            else if (k == "max_iterations") s.max_iterations = std::stoi(v);
            else if (k == "max_outer") s.max_outer = std::stoi(v);
            else if (k == "cut_factor") s.cut_factor = std::stod(v);
            else if (k == "max_cuts") s.max_cuts = std::stoi(v);
            else if (k == "freeze_active_after") s.freeze_active_after = std::stoi(v);
            else if (k == "predictor") s.predictor = parse_on_off(v);
            else if (k == "root_tol") s.root_tol = std::stod(v);
            else if (k == "divergence_floor") s.divergence_floor = std::stod(v);
            else throw Error(ErrorKind::Config, "unknown solver option '" + k + "'");
        } catch (const std::logic_error&) {
            throw Error(ErrorKind::Config, "bad value for solver option '" + k + "': " + v);
        }
    }
    s.validate();
}

/// Direct sparse LU; throws Singular with the failing column when factorization breaks.
inline Eigen::VectorXd linear_solve(const Eigen::SparseMatrix<double>& K, const Eigen::VectorXd& rhs) {
    if (K.rows() != K.cols() || K.rows() != rhs.size()) throw Error(ErrorKind::Singular, "linear_solve: size mismatch");
    if (K.rows() == 0) return Eigen::VectorXd();
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    lu.analyzePattern(K);
    lu.factorize(K);
    if (lu.info() != Eigen::Success) throw Error(ErrorKind::Singular, "linear_solve: " + lu.lastErrorMessage());
    const Eigen::VectorXd x = lu.solve(rhs);
    const double rn = rhs.norm();
    const double res = (K * x - rhs).norm();
    if (!x.allFinite() || (rn > 0 && !(res <= 1e-10 * rn)))
        throw Error(ErrorKind::Singular, "linear_solve: inaccurate solution (relative residual " +
                                             std::to_string(rn > 0 ? res / rn : res) + ")");
    return x;
}

struct BulkSystem {
    Eigen::VectorXd f;                      // slot space
    std::vector<Eigen::Triplet<double>> K;  // slot space
    double energy = 0;
};

/// Internal forces of every deformable patch body.
inline BulkSystem assemble_bulk(const Scene& scene, std::span<const Vec2> x, bool with_tangent,
                                std::vector<std::vector<StressSample>>* samples = nullptr) {
    BulkSystem b;
    b.f = Eigen::VectorXd::Zero(2 * scene.n_nodes());
    if (samples) samples->assign(scene.bodies.size(), {});
    for (std::size_t bi = 0; bi < scene.bodies.size(); ++bi) {
        const Body& B = scene.bodies[bi];
        if (B.is_curve || B.rigid) continue;
        const NeoHookean& mat = scene.materials.at(B.material).law;
        int e = 0;
        for (auto [su, sv] : patch_elements(B.patch)) {
            const ElementContribution c = bulk_element(B.patch, mat, scene.X, x, su, sv, static_cast<int>(bi), e++,
                                                       with_tangent, samples ? &(*samples)[bi] : nullptr);
            b.energy += c.energy;
            const int n = static_cast<int>(c.nodes.size());
            for (int a = 0; a < n; ++a) b.f.segment<2>(2 * c.nodes[a]) += c.f.segment<2>(2 * a);
            if (!with_tangent) continue;
            for (int a = 0; a < 2 * n; ++a)
                for (int d = 0; d < 2 * n; ++d)
                    if (c.K(a, d) != 0.0) b.K.emplace_back(2 * c.nodes[a / 2] + a % 2, 2 * c.nodes[d / 2] + d % 2, c.K(a, d));
        }
    }
    return b;
}

struct StepReport {
    double load = 0;
    int iterations = 0;               // residual evaluations over all outer loops
    int outer = 0;
    bool frozen = false;              // outer loop stopped by the freeze limit
    bool converged = false;
    int cuts = 0;
    std::vector<double> residuals;    // relative residual history, all outer loops
    std::vector<double> abs_residuals;   // free-dof residual inf-norms, same indexing
    std::vector<int> outer_start;     // index into residuals where each outer loop starts
    int active_qp = 0;
    ContactDiagnostics diag;
};

struct SolveReport {
    std::vector<StepReport> steps;
    bool aborted = false;
    std::string message;
};

/// Converged step data handed to output callbacks.
struct StepOutput {
    double load = 0;
    std::span<const Vec2> x;
    const ContactState* state = nullptr;
    const ContactSystem* contact = nullptr;
    const Eigen::VectorXd* f_int = nullptr;   // slot space; reactions at prescribed slots
    const StepReport* report = nullptr;
};

class Solver {
  public:
    Solver(const Scene& scene, ContactConfig cfg, SolverSettings settings)
        : scene_(&scene), contact_(scene, std::move(cfg)), settings_(settings), dofs_(build_dof_map(scene)) {
        settings_.validate();
        u_free_ = Eigen::VectorXd::Zero(dofs_.n_free);
        double E = 0;
        for (const NamedMaterial& m : scene.materials) E = std::max(E, m.law.E);
        Vec2 lo = Vec2::Constant(1e300), hi = Vec2::Constant(-1e300);
        for (const Vec2& p : scene.X) {
            lo = lo.cwiseMin(p);
            hi = hi.cwiseMax(p);
        }
        force_floor_ = scene.X.empty() ? 0.0 : 1e-3 * E * (hi - lo).norm();
    }

    const DofMap& dofs() const { return dofs_; }
    const ContactModel& contact() const { return contact_; }
    const SolverSettings& settings() const { return settings_; }
    double load() const { return load_; }

    /// Current positions at load parameter s.
    std::vector<Vec2> positions(const Eigen::VectorXd& u_free, double s) const {
        std::vector<Vec2> x = scene_->X;
        for (int n = 0; n < scene_->n_nodes(); ++n)
            for (int c = 0; c < 2; ++c) {
                const int d = dofs_.dof[n][c];
                x[n][c] += d >= 0 ? u_free[d] : dofs_.prescribed_value(n, c, s);
            }
        return x;
    }
    std::vector<Vec2> positions() const { return positions(u_free_, load_); }

    struct Global {
        Eigen::VectorXd r;                       // slot space, f_int + f_c
        std::vector<Eigen::Triplet<double>> K;   // slot space
        Eigen::VectorXd f_int;
        ContactSystem contact;
    };

    Global assemble(std::span<const Vec2> x, const ContactState& st, bool with_tangent) const {
        Global g;
        BulkSystem b = assemble_bulk(*scene_, x, with_tangent);
        g.contact = contact_.evaluate(x, st, with_tangent);
        g.f_int = b.f;
        g.r = b.f + g.contact.f;
        if (with_tangent) {
            g.K = std::move(b.K);
            g.K.insert(g.K.end(), g.contact.K.begin(), g.contact.K.end());
        }
        return g;
    }

    Eigen::VectorXd reduce(const Eigen::VectorXd& slot_vec) const {
        Eigen::VectorXd r = Eigen::VectorXd::Zero(dofs_.n_free);
        for (int s = 0; s < slot_vec.size(); ++s)
            if (const int d = dofs_.slot_dof(s); d >= 0) r[d] += slot_vec[s];
        return r;
    }

    Eigen::SparseMatrix<double> reduce(const std::vector<Eigen::Triplet<double>>& K) const {
        std::vector<Eigen::Triplet<double>> t;
        t.reserve(K.size());
        for (const auto& e : K) {
            const int r = dofs_.slot_dof(e.row()), c = dofs_.slot_dof(e.col());
            if (r >= 0 && c >= 0) t.emplace_back(r, c, e.value());
        }
        Eigen::SparseMatrix<double> M(dofs_.n_free, dofs_.n_free);
        M.setFromTriplets(t.begin(), t.end());
        return M;
    }

    /// Force scale for the relative residual: largest nodal force magnitude in the system,
    /// floored at 1e-3 E_max L so that an unloaded state is not judged on rounding noise.
    double force_scale(const Global& g) const {
        return std::max({g.f_int.lpNorm<Eigen::Infinity>(), g.contact.f.lpNorm<Eigen::Infinity>(), force_floor_});
    }

    /// Solves the whole load schedule; on_step runs after every converged (sub)step.
    SolveReport run(const std::function<void(const StepOutput&)>& on_step = {}) {
        SolveReport rep;
        std::vector<double> schedule = scene_->load_steps;
        if (schedule.empty()) schedule = {1.0};
        ContactState st = contact_.update_state(positions());
        for (double target : schedule) {
            double h = target - load_;
            int cuts = 0;
            while (load_ < target) {
                const double next = std::min(load_ + h, target);
                const Eigen::VectorXd u_save = u_free_;
                const double load_save = load_;
                StepReport sr;
                sr.load = next;
                sr.cuts = cuts;
                std::string why;
                bool ok = false;
                try {
                    ok = solve_step(next, st, sr);
                    if (!ok) why = failure_;
                } catch (const InversionError& e) {
                    why = e.what();
                } catch (const Error& e) {
                    if (e.kind() == ErrorKind::Config || e.kind() == ErrorKind::Structural) throw;
                    why = e.what();
                }
                if (!ok) {
                    u_free_ = u_save;
                    load_ = load_save;
                    st = contact_.update_state(positions());
                    if (++cuts > settings_.max_cuts) {
                        sr.converged = false;
                        rep.steps.push_back(sr);
                        rep.aborted = true;
                        rep.message = "step to load " + std::to_string(next) + " failed after " +
                                      std::to_string(settings_.max_cuts) + " cuts: " + why;
                        return rep;
                    }
                    h *= settings_.cut_factor;
                    continue;
                }
                load_ = next;
                rep.steps.push_back(sr);
                if (on_step) {
                    const std::vector<Vec2> x = positions();
                    const Global g = assemble(x, st, false);
                    on_step({load_, x, &st, &g.contact, &g.f_int, &rep.steps.back()});
                }
            }
        }
        return rep;
    }

  private:
    const Scene* scene_;
    ContactModel contact_;
    SolverSettings settings_;
    DofMap dofs_;
    Eigen::VectorXd u_free_;
    double load_ = 0;
    double force_floor_ = 0;
    std::string failure_;             // why the last Newton attempt failed

    // Linear predictor for the prescribed increment: K_ff du_f = -K_fp du_p.
    void predict(double next, const ContactState& st) {
        const std::vector<Vec2> x = positions();
        Eigen::VectorXd du = Eigen::VectorXd::Zero(2 * scene_->n_nodes());
        bool any = false;
        for (int n = 0; n < scene_->n_nodes(); ++n)
            for (int c = 0; c < 2; ++c)
                if (dofs_.prescribed(n, c)) {
                    du[2 * n + c] = dofs_.prescribed_value(n, c, next) - dofs_.prescribed_value(n, c, load_);
                    any = any || du[2 * n + c] != 0.0;
                }
        if (!any || dofs_.n_free == 0) return;
        const Global g = assemble(x, st, true);
        Eigen::SparseMatrix<double> Ks(2 * scene_->n_nodes(), 2 * scene_->n_nodes());
        Ks.setFromTriplets(g.K.begin(), g.K.end());
        const Eigen::VectorXd b = reduce(Eigen::VectorXd(Ks * du));
        u_free_ -= linear_solve(reduce(g.K), b);
    }

    // Newton on the free dofs with the structure in st frozen. A residual that grows after the
    // first update counts as divergence and fails the attempt, so the step is cut.
    bool newton(double next, const ContactState& st, StepReport& sr) {
        double prev = std::numeric_limits<double>::infinity();
        for (int it = 0; it < settings_.max_iterations; ++it) {
            const std::vector<Vec2> x = positions(u_free_, next);
            const Global g = assemble(x, st, true);
            const Eigen::VectorXd r = reduce(g.r);
            const double scale = force_scale(g);
            const double rn = r.lpNorm<Eigen::Infinity>();
            const double rel = rn / scale;
            ++sr.iterations;
            sr.residuals.push_back(rel);
            sr.abs_residuals.push_back(rn);
            sr.diag = g.contact.diag;
            if (!std::isfinite(rel)) return fail("non-finite residual");
            if (rel <= settings_.newton_tol) return true;
            if (it >= 2 && rn > prev && rel > settings_.divergence_floor)
                return fail("residual grew at iteration " + std::to_string(it));
            prev = rn;
            u_free_ -= linear_solve(reduce(g.K), r);
        }
        return fail("no convergence in " + std::to_string(settings_.max_iterations) + " iterations");
    }

    bool fail(std::string why) {
        failure_ = std::move(why);
        return false;
    }

    bool solve_step(double next, ContactState& st, StepReport& sr) {
        if (settings_.predictor) predict(next, st);
        st = contact_.update_state(positions(u_free_, next));
        for (int outer = 1;; ++outer) {
            sr.outer = outer;
            sr.outer_start.push_back(static_cast<int>(sr.residuals.size()));
            if (!newton(next, st, sr)) return false;
            ContactState fresh = contact_.update_state(positions(u_free_, next));
            const bool same = fresh.same_structure(st, settings_.root_tol);
            if (same) {
                sr.converged = true;
                sr.active_qp = st.active_count();
                return true;
            }
            if (outer >= std::min(settings_.freeze_active_after, settings_.max_outer)) {
                sr.frozen = true;
                sr.converged = true;
                sr.active_qp = st.active_count();
                return true;
            }
            st = std::move(fresh);
        }
    }
};

}  // namespace isomortar
