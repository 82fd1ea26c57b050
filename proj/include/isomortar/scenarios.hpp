#pragma once

// Benchmark scenes (contact patch tests, indentation, ironing), a run driver that
// collects load-displacement, pressure and stress data, and the derived metrics.

#include "solver.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace isomortar {

// ---------------------------------------------------------------------------
// Scene generators. Geometry not fixed by the benchmarks' descriptions is pinned here.

namespace detail {

inline DirichletSpec fix(int body, const std::string& where, int comp, PiecewiseLinear v = PiecewiseLinear::constant(0)) {
    DirichletSpec d;
    d.body = body;
    d.where = where;
    d.comp = comp;
    d.value = std::move(v);
    return d;
}

inline std::vector<double> uniform_steps(int n, double end = 1.0, double start = 0.0) {
    std::vector<double> s;
    for (int k = 1; k <= n; ++k) s.push_back(start + (end - start) * k / n);
    return s;
}

}  // namespace detail

/// Lower half of a circle (angles pi .. 2 pi), rational quadratic, 2 spans.
inline std::pair<std::vector<double>, std::vector<HPoint>> lower_half_circle(Vec2 c, double R) {
    const double w = std::sqrt(0.5);
    std::vector<double> U{0, 0, 0, 0.5, 0.5, 1, 1, 1};
    std::vector<HPoint> P{to_homogeneous(c + Vec2(-R, 0), 1), to_homogeneous(c + Vec2(-R, -R), w),
                          to_homogeneous(c + Vec2(0, -R), 1), to_homogeneous(c + Vec2(R, -R), w),
                          to_homogeneous(c + Vec2(R, 0), 1)};
    return {U, P};
}

/// Case 1: two stacked deformable blocks with non-conforming meshes over the full width.
/// Rollers on all vertical sides, lower bottom held vertically, upper top pushed down.
inline Scene make_patch1(double u_top = -0.02, int nx_low = 3, int nx_up = 4) {
    Scene s;
    s.materials.push_back({"soft", {1.0, 0.3}});
    const int low = add_block(s, "lower", 0, {0, 0}, 2, 1, nx_low, 2);
    const int up = add_block(s, "upper", 0, {0, 1}, 2, 1, nx_up, 2);
    for (int b : {low, up}) {
        s.dirichlet.push_back(detail::fix(b, "left", 0));
        s.dirichlet.push_back(detail::fix(b, "right", 0));
    }
    s.dirichlet.push_back(detail::fix(low, "bottom", 1));
    s.dirichlet.push_back(detail::fix(up, "top", 1, PiecewiseLinear::ramp(u_top)));
    s.contact_pairs.push_back({up, Side::Bottom, low, Side::Top});
    s.load_steps = detail::uniform_steps(2);
    s.contact_options = {{"eps_n", "100"}, {"ngp", "5"}, {"mortar", "lmls*"}};
    s.solver_options = {{"newton_tol", "1e-12"}};
    s.validate();
    return s;
}

/// Case 2: a narrow deformable block pressed on a wider rigid flat base whose elements
/// are only partly covered. The base comes first, so it is the full-pass slave.
inline Scene make_patch2(double u_top = -0.02, int n_base = 2, double x_left = 0.4, double width = 2.2) {
    Scene s;
    s.materials.push_back({"soft", {1.0, 0.3}});
    NurbsGrid line;
    line.pu = 2;
    line.U = {0, 0, 0, 1, 1, 1};
    const double x0 = 0.0, x1 = 3.0;
    line.P = {to_homogeneous({x0, 0}, 1), to_homogeneous({0.5 * (x0 + x1), 0}, 1), to_homogeneous({x1, 0}, 1)};
    std::vector<double> U = line.U;
    std::vector<HPoint> P = line.P;
    for (double k : uniform_split_knots(U, n_base)) insert_knot(U, 2, P, k);
    std::vector<Vec2> pts;
    std::vector<double> w;
    for (const HPoint& h : P) {
        pts.push_back(from_homogeneous(h));
        w.push_back(h.z());
    }
    const int base = s.add_curve_body("base", KnotVector(2, U), pts, w, -1);   // x-increasing, normal up
    const int up = add_block(s, "upper", 0, {x_left, 0}, width, 1, 3, 2);
    s.dirichlet.push_back(detail::fix(up, "left", 0));
    s.dirichlet.push_back(detail::fix(up, "right", 0));
    s.dirichlet.push_back(detail::fix(up, "top", 1, PiecewiseLinear::ramp(u_top)));
    s.contact_pairs.push_back({base, Side::Curve, up, Side::Bottom});
    s.load_steps = detail::uniform_steps(2);
    s.contact_options = {{"eps_n", "100"}, {"ngp", "5"}, {"mortar", "lmls*"}};
    s.solver_options = {{"newton_tol", "1e-12"}};
    s.validate();
    return s;
}

/// Rigid half-cylinder (R = 4) pressed into a clamped-bottom slab [-8, 8] x [-8, 0].
inline Scene make_indent2d(double depth = -2.0, int nx = 16, int ny = 8, int steps = 20) {
    Scene s;
    s.materials.push_back({"slab", {1.0, 0.3}});
    const int slab = add_block(s, "slab", 0, {-8, -8}, 16, 8, nx, ny);
    auto [U, P] = lower_half_circle({0, 4}, 4.0);
    for (double k : uniform_split_knots(U, 8)) insert_knot(U, 2, P, k);
    std::vector<Vec2> pts;
    std::vector<double> w;
    for (const HPoint& h : P) {
        pts.push_back(from_homogeneous(h));
        w.push_back(h.z());
    }
    const int cyl = s.add_curve_body("cylinder", KnotVector(2, U), pts, w, 1);   // counterclockwise: outward
    s.bodies[cyl].motion_x = PiecewiseLinear::constant(0);
    s.bodies[cyl].motion_y = PiecewiseLinear::ramp(depth);
    s.dirichlet.push_back(detail::fix(slab, "bottom", 2));
    s.contact_pairs.push_back({slab, Side::Top, cyl, Side::Curve});
    s.load_steps = detail::uniform_steps(steps);
    s.contact_options = {{"eps_n", "100"}, {"ngp", "5"}, {"rbq", "on"}};
    s.validate();
    return s;
}

/// Deformable half-annulus (r = 0.5 .. 1) pressed 0.6 into a periodic slab, then slid
/// along it. Load 0..1 presses, 1..3 slides by `slide`.
inline Scene make_ironing2d(double press = -0.6, double slide = 2.0, int press_steps = 6, int slide_steps = 40,
                            int nx = 24, int ny = 8, int n_arc = 6) {
    Scene s;
    s.materials.push_back({"slab", {1.0, 0.3}});
    s.materials.push_back({"indenter", {10.0, 0.3}});
    const int slab = add_block(s, "slab", 0, {-3, -2}, 6, 2, nx, ny);
    const Vec2 c(-1, 1);
    NurbsGrid g;
    g.pu = 2;
    g.pv = 2;
    auto [U, Pi] = lower_half_circle(c, 0.5);
    auto [U2, Po] = lower_half_circle(c, 1.0);
    g.U = U;
    g.V = {0, 0, 0, 1, 1, 1};
    for (int j = 0; j < 3; ++j)
        for (std::size_t i = 0; i < Pi.size(); ++i) {
            const double t = 0.5 * j;
            const Vec2 a = from_homogeneous(Pi[i]), b = from_homogeneous(Po[i]);
            g.P.push_back(to_homogeneous((1 - t) * a + t * b, Pi[i].z()));
        }
    g.refine(n_arc / 2, 2);
    const int ind = add_grid_body(s, "indenter", 1, g);
    s.periodic.push_back({slab, Side::Left, Side::Right});
    s.dirichlet.push_back(detail::fix(slab, "bottom", 2));
    const PiecewiseLinear ux{{0, 1, 3}, {0, 0, slide}};
    const PiecewiseLinear uy{{0, 1}, {0, press}};
    for (const char* side : {"left", "right"}) {
        s.dirichlet.push_back(detail::fix(ind, side, 0, ux));
        s.dirichlet.push_back(detail::fix(ind, side, 1, uy));
    }
    s.contact_pairs.push_back({ind, Side::Top, slab, Side::Top});
    s.load_steps = detail::uniform_steps(press_steps);
    for (double v : detail::uniform_steps(slide_steps, 3.0, 1.0)) s.load_steps.push_back(v);
    // The slab surface stretches strongly under the indenter, so pressures are penalized per
    // current area; a nominal penalty makes the two half passes disagree by the stretch ratio.
    s.contact_options = {{"eps_n", "100"}, {"ngp", "20"}, {"rbq", "on"}, {"penalty_mode", "true"}};
    s.validate();
    return s;
}

inline Scene make_scenario(const std::string& name) {
    if (name == "patch1") return make_patch1();
    if (name == "patch2") return make_patch2();
    if (name == "indent2d") return make_indent2d();
    if (name == "ironing2d") return make_ironing2d();
    throw Error(ErrorKind::Config, "unknown scenario '" + name + "' (patch1|patch2|indent2d|ironing2d)");
}

/// Swaps the roles in every contact pair (full-pass slave becomes master).
inline Scene swap_contact_roles(Scene s) {
    for (ContactPairSpec& p : s.contact_pairs) {
        std::swap(p.body1, p.body2);
        std::swap(p.side1, p.side2);
    }
    return s;
}

// ---------------------------------------------------------------------------
// Metrics

struct PatchError {
    double p_bar = 0;
    double stress_error = 0;     // max |sigma_yy + p_bar| / p_bar over bulk quadrature points
    double pressure_error = 0;   // max |-p*_true - p_bar| / p_bar over contact samples
};

/// Errors against the uniform solution sigma_yy = -p_bar. Pressure samples outside the
/// contact region are ignored.
inline PatchError patch_error_metric(std::span<const StressSample> stress, std::span<const ContactModel::TraceSample> trace,
                                     double p_bar) {
    PatchError e;
    e.p_bar = p_bar;
    for (const StressSample& s : stress) e.stress_error = std::max(e.stress_error, std::abs(s.sigma(1, 1) + p_bar) / p_bar);
    for (const auto& t : trace)
        if (t.in_contact) e.pressure_error = std::max(e.pressure_error, std::abs(-t.p_true - p_bar) / p_bar);
    return e;
}

struct LoadDispRow {
    int step = 0;
    double load = 0;
    Vec2 f1 = Vec2::Zero();   // contact force on the first body of the first pair
    Vec2 f2 = Vec2::Zero();   // contact force on the second body
    double bias = 0;          // |R_UB - R_LB| with R_UB = f1, R_LB = -f2
    int iterations = 0;
    int active_qp = 0;
    double imbalance = 0;     // |sum f_c| / sum |f_c| over all nodes
};

/// Mean bias over the rows with load in [s_begin, s_end].
inline double ironing_bias_summary(std::span<const LoadDispRow> rows, double s_begin, double s_end) {
    double sum = 0;
    int n = 0;
    for (const LoadDispRow& r : rows)
        if (r.load >= s_begin && r.load <= s_end) {
            sum += r.bias;
            ++n;
        }
    if (n == 0) throw Error(ErrorKind::Config, "ironing_bias_summary: empty sliding window");
    return sum / n;
}

/// Bias between two full-pass runs with swapped slave roles: |R_UB(run a) - R_UB(run b)|.
/// Rows are matched by load (step cuts may add rows to either run); rows of a without a
/// partner in b are dropped. Body 1 of run a must be body 2 of run b.
inline std::vector<LoadDispRow> swapped_pass_bias(std::span<const LoadDispRow> a, std::span<const LoadDispRow> b,
                                                  double load_tol = 1e-12) {
    std::vector<LoadDispRow> out;
    std::size_t j = 0;
    for (const LoadDispRow& r : a) {
        while (j < b.size() && b[j].load < r.load - load_tol) ++j;
        if (j == b.size()) break;
        if (std::abs(b[j].load - r.load) > load_tol) continue;
        LoadDispRow m = r;
        m.bias = (r.f1 - b[j].f2).norm();
        out.push_back(m);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Run driver

struct RunResult {
    SolveReport report;
    std::vector<LoadDispRow> loaddisp;
    std::vector<ContactModel::TraceSample> trace;    // final step
    std::vector<StressSample> stress;                // final step, deformable bodies
    std::vector<Vec2> x;                              // final positions
    std::optional<PatchError> patch;
    double max_imbalance = 0;                        // full pass only
    double seconds = 0;
    std::vector<std::vector<Vec2>> snapshots;        // positions per converged step if requested
};

struct RunOptions {
    bool keep_snapshots = false;
    int trace_per_element = 20;
    /// Body whose top side carries the prescribed patch load; -1 disables the patch metric.
    int patch_body = -1;
};

/// -sum f_int,y over the top side of a body divided by its current top width.
inline double applied_top_pressure(const Scene& s, int body, const Eigen::VectorXd& f_int, std::span<const Vec2> x) {
    const Body& B = s.bodies.at(body);
    double fy = 0;
    double xmin = 1e300, xmax = -1e300;
    for (int l : side_local_nodes(B.patch, Side::Top)) {
        const int n = B.patch.nodes[l];
        fy += f_int[2 * n + 1];
        xmin = std::min(xmin, x[n].x());
        xmax = std::max(xmax, x[n].x());
    }
    return -fy / (xmax - xmin);
}

inline RunResult run_scene(const Scene& scene, const ContactConfig& cfg, const SolverSettings& settings,
                           const RunOptions& opt = {}) {
    const auto t0 = std::chrono::steady_clock::now();
    RunResult res;
    Solver solver(scene, cfg, settings);
    const int b1 = scene.contact_pairs.empty() ? -1 : scene.contact_pairs[0].body1;
    const int b2 = scene.contact_pairs.empty() ? -1 : scene.contact_pairs[0].body2;
    int step = 0;
    const auto on_step = [&](const StepOutput& o) {
        LoadDispRow r;
        r.step = ++step;
        r.load = o.load;
        const auto F = body_contact_forces(scene, o.contact->f);
        if (b1 >= 0) {
            r.f1 = F[b1];
            r.f2 = F[b2];
        }
        r.bias = (r.f1 + r.f2).norm();
        r.iterations = o.report->iterations;
        r.active_qp = o.report->active_qp;
        double mag = 0;
        Vec2 sum = Vec2::Zero();
        for (int n = 0; n < scene.n_nodes(); ++n) {
            sum += o.contact->f.segment<2>(2 * n);
            mag += o.contact->f.segment<2>(2 * n).norm();
        }
        r.imbalance = mag > 0 ? sum.norm() / mag : 0.0;
        if (cfg.pass == PassMode::Full) res.max_imbalance = std::max(res.max_imbalance, r.imbalance);
        res.loaddisp.push_back(r);
        if (opt.keep_snapshots) res.snapshots.emplace_back(o.x.begin(), o.x.end());
        res.x.assign(o.x.begin(), o.x.end());
        res.trace = solver.contact().pressure_trace(o.x, *o.state, *o.contact, opt.trace_per_element);
        if (opt.patch_body >= 0) {
            std::vector<std::vector<StressSample>> samples;
            assemble_bulk(scene, o.x, false, &samples);
            res.stress.clear();
            for (auto& v : samples) res.stress.insert(res.stress.end(), v.begin(), v.end());
            const double p_bar = applied_top_pressure(scene, opt.patch_body, *o.f_int, o.x);
            res.patch = patch_error_metric(res.stress, res.trace, p_bar);
        }
    };
    res.report = solver.run(on_step);
    if (opt.patch_body < 0 && !res.x.empty()) {
        std::vector<std::vector<StressSample>> samples;
        assemble_bulk(scene, res.x, false, &samples);
        for (auto& v : samples) res.stress.insert(res.stress.end(), v.begin(), v.end());
    }
    res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return res;
}

/// Contact and solver settings for a scene: defaults, then the scene's sections.
inline ContactConfig scene_contact_config(const Scene& s, ContactConfig base = {}) {
    apply_contact_options(base, s.contact_options);
    return base;
}
inline SolverSettings scene_solver_settings(const Scene& s, SolverSettings base = {}) {
    apply_solver_options(base, s.solver_options);
    return base;
}

// ---------------------------------------------------------------------------
// CSV output (17 significant digits, fixed column order)

inline std::string num(double v) {
    std::ostringstream o;
    o << std::setprecision(17) << v;
    return o.str();
}

inline void write_loaddisp_csv(std::ostream& os, std::span<const LoadDispRow> rows) {
    os << "step,load,f1_x,f1_y,f2_x,f2_y,bias,iterations,active_qp,imbalance\n";
    for (const LoadDispRow& r : rows)
        os << r.step << ',' << num(r.load) << ',' << num(r.f1.x()) << ',' << num(r.f1.y()) << ',' << num(r.f2.x()) << ','
           << num(r.f2.y()) << ',' << num(r.bias) << ',' << r.iterations << ',' << r.active_qp << ',' << num(r.imbalance)
           << '\n';
}

inline std::vector<LoadDispRow> read_loaddisp_csv(std::istream& is) {
    std::vector<LoadDispRow> rows;
    std::string line;
    if (!std::getline(is, line) || line.rfind("step,load", 0) != 0)
        throw Error(ErrorKind::Parse, "loaddisp csv: missing header");
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::vector<std::string> c;
        std::stringstream ss(line);
        for (std::string f; std::getline(ss, f, ',');) c.push_back(f);
        if (c.size() != 10) throw Error(ErrorKind::Parse, "loaddisp csv: expected 10 columns");
        LoadDispRow r;
        r.step = std::stoi(c[0]);
        r.load = std::stod(c[1]);
        r.f1 = {std::stod(c[2]), std::stod(c[3])};
        r.f2 = {std::stod(c[4]), std::stod(c[5])};
        r.bias = std::stod(c[6]);
        r.iterations = std::stoi(c[7]);
        r.active_qp = std::stoi(c[8]);
        r.imbalance = std::stod(c[9]);
        rows.push_back(r);
    }
    return rows;
}

inline void write_trace_csv(std::ostream& os, std::span<const ContactModel::TraceSample> t) {
    os << "pass,body,xi,x,y,g,p,p_true,in_contact\n";
    for (const auto& s : t)
        os << s.pass << ',' << s.body << ',' << num(s.xi) << ',' << num(s.x.x()) << ',' << num(s.x.y()) << ',' << num(s.g)
           << ',' << num(s.p) << ',' << num(s.p_true) << ',' << (s.in_contact ? 1 : 0) << '\n';
}

inline void write_patch_error_csv(std::ostream& os, const PatchError& e) {
    os << "p_bar,stress_error,pressure_error\n" << num(e.p_bar) << ',' << num(e.stress_error) << ',' << num(e.pressure_error) << '\n';
}

inline void write_fields(std::ostream& os, std::span<const Vec2> X, std::span<const Vec2> x,
                         std::span<const StressSample> stress) {
    os << "# nodes: id X Y x y\n";
    for (std::size_t n = 0; n < X.size(); ++n)
        os << n << ' ' << num(X[n].x()) << ' ' << num(X[n].y()) << ' ' << num(x[n].x()) << ' ' << num(x[n].y()) << '\n';
    os << "# stress: element X Y x y sxx syy sxy J mises\n";
    for (const StressSample& s : stress) {
        const double sxx = s.sigma(0, 0), syy = s.sigma(1, 1), sxy = s.sigma(0, 1);
        const double mises = std::sqrt(sxx * sxx - sxx * syy + syy * syy + 3 * sxy * sxy);
        os << s.element << ' ' << num(s.X.x()) << ' ' << num(s.X.y()) << ' ' << num(s.x.x()) << ' ' << num(s.x.y()) << ' '
           << num(sxx) << ' ' << num(syy) << ' ' << num(sxy) << ' ' << num(s.J) << ' ' << num(mises) << '\n';
    }
}

}  // namespace isomortar
