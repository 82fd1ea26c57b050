// Scenario runner: solves a built-in benchmark or a scene file over a sweep of contact
// settings and writes CSV tables, field snapshots and a run manifest.
//
// Exit codes: 0 success, 1 configuration or input error, 2 solver abort.

#include <isomortar/scenarios.hpp>

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>

namespace fs = std::filesystem;
using namespace isomortar;

namespace {

struct Args {
    std::string scenario;
    std::string scene_file;
    std::vector<std::string> formulations;
    std::string pass;
    std::vector<std::string> mortars;
    std::vector<int> ngps;
    std::string eps;
    std::string rbq;
    std::string penalty_mode;
    std::string out = "out";
    std::string patch_body;
    bool swap_roles = false;
    bool all_fields = false;
};

int fail(int code, const std::string& msg) {
    std::cerr << "error: " << msg << '\n';
    return code;
}

void write_file(const fs::path& p, const std::function<void(std::ostream&)>& f) {
    std::ofstream os(p);
    if (!os) throw Error(ErrorKind::Config, "cannot write " + p.string());
    f(os);
}

std::string manifest(const std::string& source, const ContactConfig& c, const SolverSettings& s, const RunResult& r) {
    std::ostringstream o;
    o << "tool isomortar 1.0\n"
      << "source " << source << '\n'
      << "formulation " << to_string(c.formulation) << "\npass " << to_string(c.pass) << "\nmortar "
      << to_string(c.mortar) << "\neps_n " << num(c.eps) << "\npenalty_mode " << to_string(c.penalty) << "\nngp "
      << c.n_gp << "\nrbq " << (c.rbq ? "on" : "off") << "\nrbq_scan_points " << c.rbq_scan_points
      << "\nnewton_tol " << num(s.newton_tol) << "\nmax_iterations " << s.max_iterations << "\nmax_outer "
      << s.max_outer << "\ncut_factor " << num(s.cut_factor) << "\nmax_cuts " << s.max_cuts
      << "\nfreeze_active_after " << s.freeze_active_after << "\npredictor " << (s.predictor ? "on" : "off") << "\nroot_tol " << num(s.root_tol) << "\ndivergence_floor " << num(s.divergence_floor)
      << "\nsteps " << r.report.steps.size() << "\naborted " << (r.report.aborted ? 1 : 0) << '\n';
    if (r.report.aborted) o << "message " << r.report.message << '\n';
    int k = 0;
    for (const StepReport& st : r.report.steps) {
        o << "step " << ++k << " load " << num(st.load) << " iterations " << st.iterations << " outer " << st.outer
          << " frozen " << st.frozen << " cuts " << st.cuts << " active_qp " << st.active_qp << " skipped "
          << st.diag.skipped << " clamped " << st.diag.clamped << " roots " << st.diag.roots << " residuals";
        for (double v : st.residuals) o << ' ' << num(v);
        o << '\n';
    }
    return o.str();
}

int run(const Args& a) {
    if (a.scenario.empty() == a.scene_file.empty())
        throw Error(ErrorKind::Config, "give exactly one of --scenario or --scene");
    Scene scene;
    std::string source;
    int patch_body = -1;
    if (!a.scenario.empty()) {
        scene = make_scenario(a.scenario);
        source = "scenario " + a.scenario;
        if (a.scenario == "patch1" || a.scenario == "patch2") patch_body = scene.body_index("upper");
    } else {
        std::ifstream is(a.scene_file);
        if (!is) throw Error(ErrorKind::Config, "cannot read scene file " + a.scene_file);
        std::stringstream ss;
        ss << is.rdbuf();
        scene = load_scene(ss.str());
        source = "scene " + a.scene_file;
    }
    if (!a.patch_body.empty()) patch_body = scene.body_index(a.patch_body);
    if (a.swap_roles) scene = swap_contact_roles(scene);

    const ContactConfig base = scene_contact_config(scene);
    const SolverSettings settings = scene_solver_settings(scene);
    std::vector<std::string> forms = a.formulations, mortars = a.mortars;
    std::vector<int> ngps = a.ngps;
    if (forms.empty()) forms.push_back(to_string(base.formulation));
    if (mortars.empty()) mortars.push_back(to_string(base.mortar));
    if (ngps.empty()) ngps.push_back(base.n_gp);

    std::vector<ContactConfig> points;
    for (const auto& f : forms)
        for (const auto& m : mortars)
            for (int n : ngps) {
                ContactConfig c = base;
                std::map<std::string, std::string> kv{{"formulation", f}, {"mortar", m}, {"ngp", std::to_string(n)}};
                if (!a.pass.empty()) kv["pass"] = a.pass;
                if (!a.eps.empty()) kv["eps_n"] = a.eps;
                if (!a.rbq.empty()) kv["rbq"] = a.rbq;
                if (!a.penalty_mode.empty()) kv["penalty_mode"] = a.penalty_mode;
                apply_contact_options(c, kv);
                points.push_back(c);
            }

    int code = 0;
    for (const ContactConfig& c : points) {
        fs::path dir = a.out;
        if (points.size() > 1) {
            std::string m = to_string(c.mortar);
            for (char& ch : m)
                if (ch == '*') ch = 's';
            dir /= c.label() + "_" + m + "_ngp" + std::to_string(c.n_gp);
        }
        fs::create_directories(dir);
        RunOptions opt;
        opt.patch_body = patch_body;
        opt.keep_snapshots = a.all_fields;
        const RunResult r = run_scene(scene, c, settings, opt);
        write_file(dir / "loaddisp.csv", [&](std::ostream& os) { write_loaddisp_csv(os, r.loaddisp); });
        write_file(dir / "pressure_trace.csv", [&](std::ostream& os) { write_trace_csv(os, r.trace); });
        if (r.patch) write_file(dir / "patch_error.csv", [&](std::ostream& os) { write_patch_error_csv(os, *r.patch); });
        if (a.all_fields) {
            for (std::size_t k = 0; k < r.snapshots.size(); ++k) {
                std::vector<std::vector<StressSample>> s;
                assemble_bulk(scene, r.snapshots[k], false, &s);
                std::vector<StressSample> flat;
                for (auto& v : s) flat.insert(flat.end(), v.begin(), v.end());
                write_file(dir / ("fields_step" + std::to_string(k + 1) + ".txt"),
                           [&](std::ostream& os) { write_fields(os, scene.X, r.snapshots[k], flat); });
            }
        } else if (!r.x.empty()) {
            write_file(dir / ("fields_step" + std::to_string(r.loaddisp.size()) + ".txt"),
                       [&](std::ostream& os) { write_fields(os, scene.X, r.x, r.stress); });
        }
        write_file(dir / "manifest.txt", [&](std::ostream& os) { os << manifest(source, c, settings, r); });

        std::cout << c.label() << " " << to_string(c.mortar) << " ngp=" << c.n_gp << (c.rbq ? " rbq" : "") << ": "
                  << r.report.steps.size() << " steps";
        if (r.patch)
            std::cout << ", p_bar=" << num(r.patch->p_bar) << " stress_error=" << num(r.patch->stress_error)
                      << " pressure_error=" << num(r.patch->pressure_error);
        if (!r.loaddisp.empty()) std::cout << ", final f1=(" << num(r.loaddisp.back().f1.x()) << ", " << num(r.loaddisp.back().f1.y()) << ")";
        std::cout << " -> " << dir.string() << '\n';
        if (r.report.aborted) {
            std::cerr << "error: solver: " << r.report.message << '\n';
            code = 2;
        }
    }
    return code;
}

int write_scene(const std::string& scenario, const std::string& out) {
    const Scene s = make_scenario(scenario);
    if (out.empty() || out == "-") {
        std::cout << serialize_scene(s);
    } else {
        write_file(out, [&](std::ostream& os) { os << serialize_scene(s); });
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"isogeometric contact solver: GPTS, standard and extended mortar"};
    app.require_subcommand(1);
    Args a;

    CLI::App* run_cmd = app.add_subcommand("run", "solve a scenario or scene file");
    run_cmd->add_option("--scenario", a.scenario, "patch1|patch2|indent2d|ironing2d");
    run_cmd->add_option("--scene", a.scene_file, "scene file");
    run_cmd->add_option("--formulation", a.formulations, "gpts|sm|xm (several values sweep)")->delimiter(',');
    run_cmd->add_option("--pass", a.pass, "full|2hp");
    run_cmd->add_option("--mortar", a.mortars, "gls|gls*|lmls|lmls*|lcls|lcls* (several values sweep)")->delimiter(',');
    run_cmd->add_option("--ngp", a.ngps, "Gauss points per element or sub-interval (several values sweep)")->delimiter(',');
    run_cmd->add_option("--eps", a.eps, "penalty parameter eps_n");
    run_cmd->add_option("--rbq", a.rbq, "refined boundary quadrature on|off");
    run_cmd->add_option("--penalty-mode", a.penalty_mode, "nominal|true");
    run_cmd->add_option("--out", a.out, "output directory")->capture_default_str();
    run_cmd->add_option("--patch-body", a.patch_body, "body whose top carries the patch-test load");
    run_cmd->add_flag("--swap-roles", a.swap_roles, "swap slave and master in every contact pair");
    run_cmd->add_flag("--all-fields", a.all_fields, "write a field snapshot for every converged step");

    std::string scene_name, scene_out;
    CLI::App* scene_cmd = app.add_subcommand("scene", "write a built-in scenario as a scene file");
    scene_cmd->add_option("--scenario", scene_name, "patch1|patch2|indent2d|ironing2d")->required();
    scene_cmd->add_option("--out", scene_out, "output file (default stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: config: " << e.what() << '\n' << app.help();
        return 1;
    }
    try {
        if (*run_cmd) return run(a);
        return write_scene(scene_name, scene_out);
    } catch (const Error& e) {
        if (e.kind() == ErrorKind::Solver || e.kind() == ErrorKind::Singular || e.kind() == ErrorKind::Inversion ||
            e.kind() == ErrorKind::Projection)
            return fail(2, e.what());
        return fail(1, e.what());
    } catch (const std::exception& e) {
        return fail(1, std::string("config: ") + e.what());
    }
}
