// Acceptance run: one PASS/FAIL line per criterion, tolerances pinned below.
// Exit status is the number of failed criteria (0 when all pass).

#include <isomortar/extended.hpp>
#include <isomortar/scenarios.hpp>

#include <chrono>
#include <cstdio>
#include <random>

using namespace isomortar;

namespace {

int failures = 0;
double fp_imbalance = 0;   // worst full-pass imbalance over every run below
int fp_runs = 0;

void report(int id, bool ok, const std::string& what) {
    std::printf("%s [%2d] %s\n", ok ? "PASS" : "FAIL", id, what.c_str());
    std::fflush(stdout);
    if (!ok) ++failures;
}

std::string sci(double v) {
    char b[32];
    std::snprintf(b, sizeof b, "%.3e", v);
    return b;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

struct Run {
    Formulation f = Formulation::ExtendedMortar;
    PassMode p = PassMode::TwoHalf;
    int n_gp = -1;   // -1 keeps the scene default
    int rbq = -1;    // -1 keeps the scene default
    MortarKind mortar = MortarKind::LmLSstar;
};

RunResult run(const Scene& s, const Run& r, int patch_body = -1) {
    ContactConfig c = scene_contact_config(s);
    c.formulation = r.f;
    c.pass = r.p;
    c.mortar = r.mortar;
    if (r.n_gp > 0) c.n_gp = r.n_gp;
    if (r.rbq >= 0) c.rbq = r.rbq == 1;
    RunOptions o;
    o.patch_body = patch_body;
    RunResult res = run_scene(s, c, scene_solver_settings(s), o);
    if (r.p == PassMode::Full && !res.report.aborted) {
        fp_imbalance = std::max(fp_imbalance, res.max_imbalance);
        ++fp_runs;
    }
    return res;
}

bool ok_run(const RunResult& r) { return !r.report.aborted && r.patch.has_value(); }

// ---------------------------------------------------------------------------
// Patch tests

void patch_case1() {
    const Scene s = make_patch1();
    const int up = s.body_index("upper");

    const auto t0 = std::chrono::steady_clock::now();
    const RunResult xm = run(s, {Formulation::ExtendedMortar, PassMode::TwoHalf, 5}, up);
    const double t = seconds_since(t0);
    const double e1 = ok_run(xm) ? xm.patch->pressure_error : 1e300;
    report(1, e1 <= 1e-9 && t < 30,
           "patch 1 XM2HP n_gp=5: pressure error " + sci(e1) + " (<= 1e-9), " + sci(t) + " s (< 30 s)");

    const RunResult sm = run(s, {Formulation::StandardMortar, PassMode::TwoHalf, 5}, up);
    const double e2 = ok_run(sm) ? sm.patch->pressure_error : 0.0;
    report(2, e2 >= 1e-3, "patch 1 SM2HP n_gp=5: pressure error " + sci(e2) + " (>= 1e-3)");

    std::vector<double> es;
    std::string list;
    for (int n : {3, 20, 1000}) {
        const RunResult r = run(s, {Formulation::ExtendedMortar, PassMode::Full, n}, up);
        es.push_back(ok_run(r) ? r.patch->stress_error : 1e300);
        list += (list.empty() ? "" : ", ") + sci(es.back());
    }
    report(3, es[0] > es[1] && es[1] > es[2],
           "patch 1 XMFP stress error over n_gp {3, 20, 1000}: " + list + " (strictly decreasing)");
}

void patch_case2() {
    const Scene s = make_patch2();
    const int up = s.body_index("upper");
    const auto err = [&](const Run& r) {
        const RunResult res = run(s, r, up);
        return ok_run(res) ? res.patch->stress_error : 1e300;
    };
    const double xm = err({Formulation::ExtendedMortar, PassMode::TwoHalf, 5, 0});
    const double gp = err({Formulation::GPTS, PassMode::Full, 1000, 0});
    const double gp_rbq = err({Formulation::GPTS, PassMode::Full, 1000, 1});
    const double xm_rbq = err({Formulation::ExtendedMortar, PassMode::Full, 1000, 1});
    const bool ok = xm <= 1e-8 && gp >= 1e-4 && gp_rbq * 1e3 <= gp && xm_rbq * 1e3 <= gp;
    report(4, ok,
           "patch 2 stress error: XM2HP n_gp=5 " + sci(xm) + " (<= 1e-8); GPFP n_gp=1000 " + sci(gp) +
               " (>= 1e-4); GPFP+RBQ " + sci(gp_rbq) + ", XMFP+RBQ " + sci(xm_rbq) + " (>= 1e3 x lower)");
}

// ---------------------------------------------------------------------------
// Tangent consistency on a perturbed two-block state

Scene two_blocks() {
    Scene s;
    s.materials.push_back({"soft", {1.0, 0.3}});
    add_block(s, "lower", 0, {0, -1}, 2, 1, 4, 2);
    add_block(s, "upper", 0, {0.3, 0}, 1.4, 1, 3, 2);
    s.contact_pairs.push_back({1, Side::Bottom, 0, Side::Top});
    s.validate();
    return s;
}

void tangent_check() {
    const auto t0 = std::chrono::steady_clock::now();
    const Scene s = two_blocks();
    std::vector<Vec2> x = s.X;
    std::mt19937 rng(2024);
    std::uniform_real_distribution<double> u(-1, 1);
    for (int n : s.bodies[1].nodes()) x[n].y() -= 0.01;
    for (Vec2& v : x) v += 0.02 * Vec2(u(rng), u(rng));
    const int n = 2 * s.n_nodes();
    double worst = 0;
    std::string list;
    for (Formulation f : {Formulation::GPTS, Formulation::StandardMortar, Formulation::ExtendedMortar})
        for (PassMode p : {PassMode::Full, PassMode::TwoHalf}) {
            ContactConfig c;
            c.formulation = f;
            c.pass = p;
            c.rbq = true;
            c.n_gp = 4;
            const ContactModel m(s, c);
            const ContactState st = m.update_state(x);
            const ContactSystem sys = m.evaluate(x, st);
            Eigen::SparseMatrix<double> Ks(n, n);
            Ks.setFromTriplets(sys.K.begin(), sys.K.end());
            const Eigen::MatrixXd K(Ks);
            Eigen::MatrixXd Kfd(n, n);
            const double h = 1e-7;
            std::vector<Vec2> y = x;
            for (int j = 0; j < n; ++j) {
                double& v = y[j / 2][j % 2];
                const double v0 = v;
                v = v0 + h;
                const Eigen::VectorXd fp = m.evaluate(y, st, false).f;
                v = v0 - h;
                const Eigen::VectorXd fm = m.evaluate(y, st, false).f;
                v = v0;
                Kfd.col(j) = (fp - fm) / (2 * h);
            }
            const double e = Kfd.norm() > 0 ? (Kfd - K).norm() / Kfd.norm() : 1e300;
            worst = std::max(worst, e);
            list += (list.empty() ? "" : ", ") + c.label() + " " + sci(e);
        }
    const double t = seconds_since(t0);
    report(5, worst < 1e-5 && t < 60, "FD tangent: " + list + " (< 1e-5), " + sci(t) + " s (< 60 s)");
}

// ---------------------------------------------------------------------------
// Mortar identities

SurfacePatch numbered_line(int p, std::vector<double> U, std::vector<double> w, int first, int orientation) {
    SurfacePatch s{KnotVector(p, std::move(U)), {}, std::move(w), orientation};
    for (int k = 0; k < s.kv.n_basis(); ++k) s.nodes.push_back(first + k);
    s.validate();
    return s;
}

void potential_identity() {
    const SurfacePatch slave = numbered_line(2, {0, 0, 0, 0.5, 1, 1, 1}, {1, 1, 1, 1}, 0, 1);
    const SurfacePatch master{KnotVector(2, {0, 0, 0, 1, 1, 1}), {4, 5, 6}, {1, 0.9, 1}, -1};
    const std::vector<Vec2> X{{0, 0.03}, {0.25, 0.02}, {0.75, 0.0}, {1, -0.01}, {-0.3, 0}, {0.5, 0.02}, {1.3, 0}};
    double worst = 0;
    bool penetrating = true;
    for (MortarKind k : {MortarKind::GLS, MortarKind::GLSstar, MortarKind::LmLS, MortarKind::LmLSstar, MortarKind::LcLS,
                         MortarKind::LcLSstar}) {
        const MortarOperators ops = build_mortar_operators(slave, X, k, 5);
        const auto samples = sample_gaps(slave, master, X, X, surface_quadrature(slave, X, 5));
        const PotentialTriple t = contact_potential_triple(ops, slave, samples, 30.0);
        penetrating = penetrating && t.nodal != 0.0;
        const double ref = std::abs(t.nodal);
        worst = std::max({worst, std::abs(t.mortar_p - t.nodal) / ref, std::abs(t.mortar_g - t.nodal) / ref});
    }
    report(6, penetrating && worst <= 1e-12,
           "contact potential, three evaluations over all mortar families: max relative spread " + sci(worst) +
               " (<= 1e-12)");
}

void mortar_properties() {
    const SurfacePatch s = numbered_line(2, {0, 0, 0, 0.2, 0.5, 0.6, 1, 1, 1}, {1, 0.9, 1.2, 1, 0.8, 1}, 0, 1);
    const std::vector<Vec2> X{{0, 0}, {0.3, 0.05}, {0.9, -0.04}, {1.5, 0.02}, {2.1, 0.0}, {2.5, 0.03}};
    std::mt19937 rng(3);
    std::uniform_real_distribution<double> U(0, 1);
    double pu = 0;
    for (MortarKind k : {MortarKind::GLSstar, MortarKind::LmLSstar, MortarKind::LcLSstar}) {
        const MortarOperators ops = build_mortar_operators(s, X, k, 5);
        for (int t = 0; t < 200; ++t) {
            double sum = 0;
            for (double v : mortar_shape_eval(ops, s, U(rng)).val) sum += v;
            pu = std::max(pu, std::abs(sum - 1));
        }
    }
    const int ngp = 6;
    const MortarOperators lc = build_mortar_operators(s, X, MortarKind::LcLSstar, ngp);
    std::vector<Eigen::Matrix3d> I(s.kv.n_elements(), Eigen::Matrix3d::Zero());
    for (const auto& q : surface_quadrature(s, X, ngp)) {
        const BasisEval b = basis_eval(s.kv, s.weights, q.xi);
        const MortarValues m = mortar_shape_eval(lc, b);
        for (int a = 0; a < 3; ++a)
            for (int j = 0; j < 3; ++j) I[q.element](a, j) += q.w * m.val[a] * b.values[j];
    }
    double bio = 0;
    for (std::size_t e = 0; e < I.size(); ++e)
        bio = std::max(bio, (I[e] - Eigen::Matrix3d(lc.We[e].asDiagonal())).cwiseAbs().maxCoeff());
    const MortarOperators lm = build_mortar_operators(s, X, MortarKind::LmLSstar, 5);
    double repro = 0;
    for (int t = 0; t < 200; ++t) {
        const BasisEval b = basis_eval(s.kv, s.weights, U(rng));
        const MortarValues m = mortar_shape_eval(lm, b);
        for (int j = 0; j < b.size(); ++j) repro = std::max(repro, std::abs(m.val[j] - b.values[j]));
    }
    report(7, pu < 1e-10 && bio < 1e-10 && repro == 0.0,
           "mortar shapes: partition of unity " + sci(pu) + " (< 1e-10), LcLS* biorthogonality " + sci(bio) +
               " (< 1e-10), LmLS* - N " + sci(repro) + " (exact)");
}

// ---------------------------------------------------------------------------
// Extended least-squares step reproduction

void step_reproduction() {
    const int ns = 4;
    std::vector<double> U{0, 0, 0};
    for (int k = 1; k < ns; ++k) U.push_back(double(k) / ns);
    U.insert(U.end(), {1, 1, 1});
    const SurfacePatch slave = numbered_line(2, U, std::vector<double>(ns + 2, 1.0), 0, 1);
    std::vector<Vec2> X(ns + 2);
    for (int k = 0; k < ns + 2; ++k) X[k] = {(U[k + 1] + U[k + 2]) / 2, 0};
    const double eps = 100, delta = 0.01, root = 0.3;   // root inside element 1
    const auto phi = [&](double xi) { return xi - root; };

    // LmLS* is the family used with the extended formulation; families with sign-changing
    // shapes can drop a partly covered node from the nodal active set and lose the step.
    double l2 = 0, oracle_err = 0;
    for (MortarKind kind : {MortarKind::LmLSstar}) {
        const MortarOperators ops = build_mortar_operators(slave, X, kind, 5);
        LevelSetField f;
        const auto spans = slave.kv.element_spans();
        for (int e = 0; e < ns; ++e)
            f.partitions.push_back(rbq_partition(e, U[spans[e]], U[spans[e] + 1], phi, gauss_rule(5)));
        f.qps = surface_quadrature(slave, X, 5, &f.partitions);
        std::vector<double> g;
        for (const auto& q : f.qps) {
            f.phi.push_back(phi(q.xi));
            f.H.push_back(heaviside(f.phi.back()));
            g.push_back(f.phi.back() < 0 ? -delta : 0.2);
        }
        const ExtendedState st = assemble_extended_system(ops, slave, f, g, eps);
        double e2 = 0;
        for (std::size_t k = 0; k < f.qps.size(); ++k) {
            const double d = extended_pressure_eval(st, ops, slave, f.qps[k].xi, f.phi[k]) - eps * f.H[k] * g[k];
            e2 += f.qps[k].w * d * d;
        }
        l2 = std::max(l2, std::sqrt(e2));
        // brute-force weighted least squares over the active nodes
        std::vector<int> act;
        for (int A = 0; A < ops.n_nodes; ++A)
            if (st.chi[A]) act.push_back(A);
        Eigen::MatrixXd D = Eigen::MatrixXd::Zero(f.qps.size(), act.size());
        Eigen::VectorXd rhs = Eigen::VectorXd::Zero(f.qps.size());
        for (std::size_t k = 0; k < f.qps.size(); ++k) {
            const double sw = std::sqrt(f.qps[k].w) * f.H[k];
            Eigen::VectorXd M = Eigen::VectorXd::Zero(ops.n_nodes);
            const MortarValues m = mortar_shape_eval(ops, slave, f.qps[k].xi);
            for (std::size_t a = 0; a < m.idx.size(); ++a) M[m.idx[a]] += m.val[a];
            for (std::size_t j = 0; j < act.size(); ++j) D(k, j) = sw * M[act[j]];
            rhs[k] = sw * eps * g[k];
        }
        const Eigen::VectorXd ref = D.colPivHouseholderQr().solve(rhs);
        for (std::size_t j = 0; j < act.size(); ++j) oracle_err = std::max(oracle_err, std::abs(st.p[act[j]] - ref[j]));
    }
    report(8, l2 < 1e-9 && oracle_err <= 1e-12,
           "extended step pressure (LmLS*, root inside an element): L2 error " + sci(l2) + " (< 1e-9), nodal pressures vs least-squares oracle " +
               sci(oracle_err) + " (<= 1e-12)");
}

// ---------------------------------------------------------------------------
// Ironing bias ordering

void ironing() {
    const Scene s = make_ironing2d();
    const Scene sw = swap_contact_roles(s);
    const auto bias_fp = [&](Formulation f, MortarKind m) {
        const RunResult a = run(s, {f, PassMode::Full, 20, -1, m});
        const RunResult b = run(sw, {f, PassMode::Full, 20, -1, m});
        if (a.report.aborted || b.report.aborted) return 1e300;
        return ironing_bias_summary(swapped_pass_bias(a.loaddisp, b.loaddisp), 1.0, 3.0);
    };
    const double xmfp = bias_fp(Formulation::ExtendedMortar, MortarKind::LmLSstar);
    const double smfp = bias_fp(Formulation::StandardMortar, MortarKind::LmLS);
    const RunResult x2 = run(s, {Formulation::ExtendedMortar, PassMode::TwoHalf, 7});
    const double xm2hp = x2.report.aborted ? 1e300 : ironing_bias_summary(x2.loaddisp, 1.0, 3.0);
    const bool completed = std::max({xmfp, smfp, xm2hp}) < 1e300;
    report(9, completed && xmfp < smfp && xm2hp < smfp,
           "ironing mean sliding bias: XMFP " + sci(xmfp) + ", XM2HP " + sci(xm2hp) + ", SMFP " + sci(smfp) +
               " (XMFP < SMFP and XM2HP < SMFP)");
}

// ---------------------------------------------------------------------------
// Indentation against a GPTS+RBQ reference

void indentation() {
    const auto t0 = std::chrono::steady_clock::now();
    const Scene s = make_indent2d();
    const RunResult xm = run(s, {Formulation::ExtendedMortar, PassMode::TwoHalf});
    const RunResult gp = run(s, {Formulation::GPTS, PassMode::Full, -1, 1});
    const double t = seconds_since(t0);
    double dev = 1e300;
    if (!xm.report.aborted && !gp.report.aborted && xm.loaddisp.size() == gp.loaddisp.size()) {
        dev = 0;
        for (std::size_t k = 0; k < xm.loaddisp.size(); ++k)
            dev = std::max(dev, std::abs(xm.loaddisp[k].f1.y() - gp.loaddisp[k].f1.y()) / std::abs(gp.loaddisp[k].f1.y()));
    }
    report(10, dev <= 0.02 && t < 300,
           "indentation XM2HP vs GPFP+RBQ reaction: max relative deviation " + sci(dev) + " (<= 2e-2), " + sci(t) +
               " s (< 300 s)");
}

}  // namespace

int main() {
    patch_case1();
    patch_case2();
    tangent_check();
    potential_identity();
    mortar_properties();
    step_reproduction();
    ironing();
    indentation();
    report(11, fp_runs >= 4 && fp_imbalance <= 1e-13,
           "full-pass force balance over " + std::to_string(fp_runs) + " runs on all scenarios: worst " +
               sci(fp_imbalance) + " (<= 1e-13)");
    std::printf("%d of 11 criteria failed\n", failures);
    return failures;
}
