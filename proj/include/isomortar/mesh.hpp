#pragma once

// Scene data model, line-oriented text format, dof numbering and contact-face extraction.

#include "material.hpp"

#include <array>
#include <cstdio>
#include <map>
#include <sstream>

namespace isomortar {

/// Piecewise-linear function of the load parameter; constant beyond the table ends.
struct PiecewiseLinear {
    std::vector<double> t;
    std::vector<double> v;

    static PiecewiseLinear ramp(double value) { return {{0.0, 1.0}, {0.0, value}}; }
    static PiecewiseLinear constant(double value) { return {{0.0}, {value}}; }

    bool empty() const { return t.empty(); }

    double at(double s) const {
        if (t.empty()) return 0.0;
        if (s <= t.front()) return v.front();
        if (s >= t.back()) return v.back();
        const auto it = std::upper_bound(t.begin(), t.end(), s);
        const std::size_t k = static_cast<std::size_t>(it - t.begin());
        const double r = (s - t[k - 1]) / (t[k] - t[k - 1]);
        return v[k - 1] + r * (v[k] - v[k - 1]);
    }

    bool operator==(const PiecewiseLinear&) const = default;
};

enum class Side { Bottom, Right, Top, Left, Curve };

inline const char* to_string(Side s) {
    switch (s) {
        case Side::Bottom: return "bottom";
        case Side::Right: return "right";
        case Side::Top: return "top";
        case Side::Left: return "left";
        case Side::Curve: return "curve";
    }
    return "?";
}

inline Side parse_side(const std::string& s) {
    if (s == "bottom") return Side::Bottom;
    if (s == "right") return Side::Right;
    if (s == "top") return Side::Top;
    if (s == "left") return Side::Left;
    if (s == "curve") return Side::Curve;
    throw Error(ErrorKind::Parse, "unknown side '" + s + "'");
}

struct NamedMaterial {
    std::string name;
    NeoHookean law;
};

/// A deformable or rigid bivariate patch, or a rigid obstacle curve.
struct Body {
    std::string name;
    bool is_curve = false;
    Patch2D patch;           // bulk bodies
    SurfacePatch curve;      // obstacle curves
    int material = -1;
    bool rigid = false;
    PiecewiseLinear motion_x, motion_y;   // rigid translation vs load parameter
    int first_node = 0;
    int n_nodes = 0;

    const std::vector<int>& nodes() const { return is_curve ? curve.nodes : patch.nodes; }
    Vec2 rigid_displacement(double s) const { return {motion_x.at(s), motion_y.at(s)}; }
};

/// Prescribed displacement component on a set of nodes of one body.
struct DirichletSpec {
    int body = -1;
    std::string where;    // bottom|right|top|left|all|node
    int node = -1;        // body-local node index for where == "node"
    int comp = 0;         // 0 = x, 1 = y, 2 = both
    PiecewiseLinear value;
};

/// Ties the follower side of a body to its leader side, node by node.
struct PeriodicSpec {
    int body = -1;
    Side leader = Side::Left;
    Side follower = Side::Right;
};

/// First entry is the slave for full-pass runs.
struct ContactPairSpec {
    int body1 = -1;
    Side side1 = Side::Top;
    int body2 = -1;
    Side side2 = Side::Bottom;
};

struct Scene {
    std::vector<NamedMaterial> materials;
    std::vector<Body> bodies;
    std::vector<Vec2> X;    // reference control points, all bodies
    std::vector<DirichletSpec> dirichlet;
    std::vector<PeriodicSpec> periodic;
    std::vector<ContactPairSpec> contact_pairs;
    std::vector<double> load_steps;   // load parameter at the end of each step
    std::map<std::string, std::string> solver_options;
    std::map<std::string, std::string> contact_options;

    int n_nodes() const { return static_cast<int>(X.size()); }

    int body_index(const std::string& name) const {
        for (std::size_t b = 0; b < bodies.size(); ++b)
            if (bodies[b].name == name) return static_cast<int>(b);
        throw Error(ErrorKind::Parse, "unknown body '" + name + "'");
    }
    int material_index(const std::string& name) const {
        for (std::size_t m = 0; m < materials.size(); ++m)
            if (materials[m].name == name) return static_cast<int>(m);
        throw Error(ErrorKind::Parse, "unknown material '" + name + "'");
    }

    /// Appends a bulk body; control points u-fastest.
    int add_patch_body(const std::string& name, int material, KnotVector ku, KnotVector kv,
                       const std::vector<Vec2>& points, const std::vector<double>& weights, bool rigid = false) {
        Body b;
        b.name = name;
        b.material = material;
        b.rigid = rigid;
        b.patch.ku = std::move(ku);
        b.patch.kv = std::move(kv);
        b.first_node = n_nodes();
        b.n_nodes = static_cast<int>(points.size());
        for (int k = 0; k < b.n_nodes; ++k) b.patch.nodes.push_back(b.first_node + k);
        b.patch.weights = weights;
        b.patch.validate();
        X.insert(X.end(), points.begin(), points.end());
        bodies.push_back(std::move(b));
        return static_cast<int>(bodies.size()) - 1;
    }

    /// Appends a rigid obstacle curve with the given outward orientation.
    int add_curve_body(const std::string& name, KnotVector kv, const std::vector<Vec2>& points,
                       const std::vector<double>& weights, int orientation) {
        Body b;
        b.name = name;
        b.is_curve = true;
        b.rigid = true;
        b.curve.kv = std::move(kv);
        b.curve.weights = weights;
        b.curve.orientation = orientation;
        b.first_node = n_nodes();
        b.n_nodes = static_cast<int>(points.size());
        for (int k = 0; k < b.n_nodes; ++k) b.curve.nodes.push_back(b.first_node + k);
        b.curve.body = static_cast<int>(bodies.size());
        b.curve.validate();
        X.insert(X.end(), points.begin(), points.end());
        bodies.push_back(std::move(b));
        return static_cast<int>(bodies.size()) - 1;
    }

    void validate() const;
};

/// Body-local node indices on one side of a patch, in the side's parameter direction.
inline std::vector<int> side_local_nodes(const Patch2D& p, Side side) {
    std::vector<int> out;
    switch (side) {
        case Side::Bottom:
            for (int i = 0; i < p.nu(); ++i) out.push_back(p.local(i, 0));
            break;
        case Side::Top:
            for (int i = 0; i < p.nu(); ++i) out.push_back(p.local(i, p.nv() - 1));
            break;
        case Side::Left:
            for (int j = 0; j < p.nv(); ++j) out.push_back(p.local(0, j));
            break;
        case Side::Right:
            for (int j = 0; j < p.nv(); ++j) out.push_back(p.local(p.nu() - 1, j));
            break;
        case Side::Curve:
            throw Error(ErrorKind::Structural, "side 'curve' is only valid for obstacle curves");
    }
    return out;
}

/// Sign of the reference Jacobian of a patch (+1 for a right-handed parameterization).
inline int patch_handedness(const Patch2D& p, std::span<const Vec2> X) {
    const double u = 0.5 * (p.ku.front() + p.ku.back()), v = 0.5 * (p.kv.front() + p.kv.back());
    const Basis2D b = basis_eval_2d(p, u, v);
    Mat2 J0 = Mat2::Zero();
    for (std::size_t a = 0; a < b.R.size(); ++a) {
        const Vec2& Xa = X[p.nodes[b.local[a]]];
        J0.col(0) += b.dRdu[a] * Xa;
        J0.col(1) += b.dRdv[a] * Xa;
    }
    return J0.determinant() >= 0 ? 1 : -1;
}

/// Boundary curve of a body with the orientation that makes its normal point outward.
inline SurfacePatch extract_contact_face(const Scene& scene, int body, Side side) {
    const Body& B = scene.bodies.at(body);
    SurfacePatch s;
    if (B.is_curve) {
        if (side != Side::Curve)
            throw Error(ErrorKind::Structural, "body '" + B.name + "' is a curve; use side 'curve'");
        s = B.curve;
    } else {
        const Patch2D& p = B.patch;
        const std::vector<int> loc = side_local_nodes(p, side);
        const bool along_u = side == Side::Bottom || side == Side::Top;
        s.kv = along_u ? p.ku : p.kv;
        for (int l : loc) {
            s.nodes.push_back(p.nodes[l]);
            s.weights.push_back(p.weights[l]);
        }
        const int h = patch_handedness(p, scene.X);
        const int base = (side == Side::Bottom || side == Side::Right) ? 1 : -1;
        s.orientation = base * h;
    }
    s.body = body;
    s.validate();
    double len = 0;
    for (int k = 1; k < s.n_nodes(); ++k) len += (scene.X[s.nodes[k]] - scene.X[s.nodes[k - 1]]).norm();
    if (!(len > 0))
        throw Error(ErrorKind::Geometry, "extract_contact_face: zero-length " + std::string(to_string(side)) +
                                             " boundary on body '" + B.name + "'");
    return s;
}

inline void Scene::validate() const {
    for (auto& m : materials) m.law.validate();
    int expect = 0;
    for (std::size_t b = 0; b < bodies.size(); ++b) {
        const Body& B = bodies[b];
        if (B.first_node != expect) throw Error(ErrorKind::Structural, "Scene: bodies must own contiguous node ranges");
        expect += B.n_nodes;
        if (B.is_curve) {
            B.curve.validate();
            if (!B.rigid) throw Error(ErrorKind::Structural, "Scene: obstacle curve '" + B.name + "' must be rigid");
        } else {
            B.patch.validate();
            if (B.material < 0 || B.material >= static_cast<int>(materials.size()))
                throw Error(ErrorKind::Structural, "Scene: body '" + B.name + "' references a missing material");
        }
        for (int n : B.nodes())
            if (n < B.first_node || n >= B.first_node + B.n_nodes)
                throw Error(ErrorKind::Structural, "Scene: body '" + B.name + "' node ids out of range");
    }
    if (expect != n_nodes()) throw Error(ErrorKind::Structural, "Scene: node count mismatch");
    for (auto& d : dirichlet)
        if (d.body < 0 || d.body >= static_cast<int>(bodies.size()))
            throw Error(ErrorKind::Structural, "Scene: dirichlet references a missing body");
    for (auto& c : contact_pairs) {
        if (c.body1 < 0 || c.body2 < 0 || c.body1 >= static_cast<int>(bodies.size()) ||
            c.body2 >= static_cast<int>(bodies.size()) || c.body1 == c.body2)
            throw Error(ErrorKind::Structural, "Scene: contact pair must reference two distinct bodies");
        extract_contact_face(*this, c.body1, c.side1);
        extract_contact_face(*this, c.body2, c.side2);
    }
    for (std::size_t k = 0; k < load_steps.size(); ++k)
        if (k > 0 && !(load_steps[k] > load_steps[k - 1]))
            throw Error(ErrorKind::Structural, "Scene: load steps must increase");
}

/// Adds a bulk body from a homogeneous control net.
inline int add_grid_body(Scene& s, const std::string& name, int material, const NurbsGrid& g, bool rigid = false) {
    std::vector<Vec2> pts;
    std::vector<double> w;
    for (const HPoint& h : g.P) {
        pts.push_back(from_homogeneous(h));
        w.push_back(h.z());
    }
    return s.add_patch_body(name, material, KnotVector(g.pu, g.U), KnotVector(g.pv, g.V), pts, w, rigid);
}

/// Axis-aligned rectangle [x0, x0 + w] x [y0, y0 + h] with nx x ny elements of the given
/// degree and an affine parameterization.
inline NurbsGrid block_grid(Vec2 origin, double w, double h, int nx, int ny, int degree = 2) {
    NurbsGrid g;
    g.pu = g.pv = degree;
    g.U.assign(degree + 1, 0.0);
    g.U.insert(g.U.end(), degree + 1, 1.0);
    g.V = g.U;
    for (int j = 0; j <= degree; ++j)
        for (int i = 0; i <= degree; ++i)
            g.P.push_back(to_homogeneous(origin + Vec2(w * i / degree, h * j / degree), 1.0));
    g.refine(nx, ny);
    return g;
}

inline int add_block(Scene& s, const std::string& name, int material, Vec2 origin, double w, double h, int nx, int ny,
                     int degree = 2) {
    return add_grid_body(s, name, material, block_grid(origin, w, h, nx, ny, degree));
}

// ---------------------------------------------------------------------------
// Dof numbering

struct DofMap {
    /// Free dof index per (node, component), -1 when prescribed.
    std::vector<std::array<int, 2>> dof;
    /// Prescribed-value table per (node, component), -1 when free.
    std::vector<std::array<int, 2>> presc;
    std::vector<PiecewiseLinear> tables;
    /// (follower slot, leader slot) with slot = 2 node + component.
    std::vector<std::pair<int, int>> ties;
    int n_free = 0;

    int slot_dof(int slot) const { return dof[slot / 2][slot % 2]; }
    bool prescribed(int node, int c) const { return presc[node][c] >= 0; }
    double prescribed_value(int node, int c, double s) const { return tables[presc[node][c]].at(s); }
};

inline std::vector<int> dirichlet_nodes(const Scene& scene, const DirichletSpec& d) {
    const Body& B = scene.bodies.at(d.body);
    std::vector<int> out;
    if (d.where == "all") {
        out = B.nodes();
    } else if (d.where == "node") {
        if (d.node < 0 || d.node >= B.n_nodes)
            throw Error(ErrorKind::Structural, "dirichlet: node index out of range on body '" + B.name + "'");
        out.push_back(B.first_node + d.node);
    } else {
        if (B.is_curve) throw Error(ErrorKind::Structural, "dirichlet: sides are not defined on obstacle curves");
        for (int l : side_local_nodes(B.patch, parse_side(d.where))) out.push_back(B.patch.nodes[l]);
    }
    return out;
}

/// Deterministic numbering by node id then component; rigid bodies and Dirichlet
/// components are prescribed, periodic followers share their leader's index.
inline DofMap build_dof_map(const Scene& scene) {
    const int n = scene.n_nodes();
    DofMap m;
    m.dof.assign(n, {-1, -1});
    m.presc.assign(n, {-1, -1});

    const auto set_presc = [&](int node, int c, const PiecewiseLinear& f) {
        if (m.presc[node][c] >= 0) {
            if (!(m.tables[m.presc[node][c]] == f))
                throw Error(ErrorKind::Structural, "build_dof_map: conflicting prescribed values on node " +
                                                       std::to_string(node));
            return;
        }
        m.presc[node][c] = static_cast<int>(m.tables.size());
        m.tables.push_back(f);
    };

    for (const Body& B : scene.bodies)
        if (B.rigid)
            for (int node : B.nodes()) {
                set_presc(node, 0, B.motion_x.empty() ? PiecewiseLinear::constant(0) : B.motion_x);
                set_presc(node, 1, B.motion_y.empty() ? PiecewiseLinear::constant(0) : B.motion_y);
            }
    for (const DirichletSpec& d : scene.dirichlet) {
        if (scene.bodies.at(d.body).rigid)
            throw Error(ErrorKind::Structural, "build_dof_map: dirichlet on rigid body '" + scene.bodies[d.body].name + "'");
        for (int node : dirichlet_nodes(scene, d))
            for (int c = 0; c < 2; ++c)
                if (d.comp == c || d.comp == 2) set_presc(node, c, d.value);
    }

    std::vector<int> leader_of(2 * n, -1);
    for (const PeriodicSpec& p : scene.periodic) {
        const Body& B = scene.bodies.at(p.body);
        if (B.is_curve || B.rigid) throw Error(ErrorKind::Structural, "build_dof_map: periodic ties need a deformable patch");
        const auto lead = side_local_nodes(B.patch, p.leader);
        const auto foll = side_local_nodes(B.patch, p.follower);
        if (lead.size() != foll.size())
            throw Error(ErrorKind::Structural, "build_dof_map: periodic sides have different node counts");
        for (std::size_t k = 0; k < lead.size(); ++k) {
            const int a = B.patch.nodes[lead[k]], f = B.patch.nodes[foll[k]];
            for (int c = 0; c < 2; ++c) {
                const bool pa = m.presc[a][c] >= 0, pf = m.presc[f][c] >= 0;
                if (pa && pf) continue;
                if (pa != pf)
                    throw Error(ErrorKind::Structural, "build_dof_map: periodic tie between prescribed node " +
                                                           std::to_string(pa ? a : f) + " and free node");
                leader_of[2 * f + c] = 2 * a + c;
            }
        }
    }
    // resolve chains and reject cycles
    for (int s = 0; s < 2 * n; ++s) {
        int cur = s, hops = 0;
        while (leader_of[cur] >= 0) {
            cur = leader_of[cur];
            if (++hops > 2 * n) throw Error(ErrorKind::Structural, "build_dof_map: cyclic periodic ties");
        }
        if (cur != s) leader_of[s] = cur;
    }
    for (int node = 0; node < n; ++node)
        for (int c = 0; c < 2; ++c)
            if (m.presc[node][c] < 0 && leader_of[2 * node + c] < 0) m.dof[node][c] = m.n_free++;
    for (int s = 0; s < 2 * n; ++s)
        if (leader_of[s] >= 0) {
            m.dof[s / 2][s % 2] = m.slot_dof(leader_of[s]);
            m.ties.emplace_back(s, leader_of[s]);
        }
    return m;
}

// ---------------------------------------------------------------------------
// Text format

namespace detail {

inline std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string join17(const std::vector<double>& v) {
    std::string s;
    for (std::size_t k = 0; k < v.size(); ++k) s += (k ? " " : "") + fmt17(v[k]);
    return s;
}

inline std::string table_text(const PiecewiseLinear& f) {
    if (f.t == std::vector<double>{0.0, 1.0} && f.v.size() == 2 && f.v[0] == 0.0) return fmt17(f.v[1]);
    std::string s = "table";
    for (std::size_t k = 0; k < f.t.size(); ++k) s += " " + fmt17(f.t[k]) + " " + fmt17(f.v[k]);
    return s;
}

struct LineReader {
    std::vector<std::pair<int, std::vector<std::string>>> lines;
    std::size_t pos = 0;

    explicit LineReader(const std::string& text) {
        std::istringstream in(text);
        std::string line;
        int no = 0;
        while (std::getline(in, line)) {
            ++no;
            if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
            std::istringstream ls(line);
            std::vector<std::string> tok;
            for (std::string t; ls >> t;) tok.push_back(t);
            if (!tok.empty()) lines.emplace_back(no, std::move(tok));
        }
    }
    bool done() const { return pos >= lines.size(); }
    const std::vector<std::string>& peek() const { return lines[pos].second; }
    int line_no() const { return done() ? (lines.empty() ? 0 : lines.back().first) : lines[pos].first; }
    const std::vector<std::string>& next() { return lines[pos++].second; }
};

[[noreturn]] inline void parse_fail(int line, const std::string& msg) {
    throw Error(ErrorKind::Parse, "line " + std::to_string(line) + ": " + msg);
}

inline double to_double(const std::string& s, int line) {
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) parse_fail(line, "invalid number '" + s + "'");
        return v;
    } catch (const std::logic_error&) {
        parse_fail(line, "invalid number '" + s + "'");
    }
}

inline int to_int(const std::string& s, int line) {
    const double v = to_double(s, line);
    if (v != std::floor(v)) parse_fail(line, "expected an integer, got '" + s + "'");
    return static_cast<int>(v);
}

inline std::vector<double> numbers(const std::vector<std::string>& tok, std::size_t from, int line) {
    std::vector<double> out;
    for (std::size_t k = from; k < tok.size(); ++k) out.push_back(to_double(tok[k], line));
    return out;
}

inline PiecewiseLinear parse_table(const std::vector<std::string>& tok, std::size_t from, int line) {
    if (from >= tok.size()) parse_fail(line, "missing value");
    if (tok[from] != "table") {
        if (from + 1 != tok.size()) parse_fail(line, "trailing tokens after value");
        return PiecewiseLinear::ramp(to_double(tok[from], line));
    }
    const auto v = numbers(tok, from + 1, line);
    if (v.empty() || v.size() % 2) parse_fail(line, "table needs pairs 't value'");
    PiecewiseLinear f;
    for (std::size_t k = 0; k < v.size(); k += 2) {
        if (!f.t.empty() && !(v[k] > f.t.back())) parse_fail(line, "table abscissae must increase");
        f.t.push_back(v[k]);
        f.v.push_back(v[k + 1]);
    }
    return f;
}

inline bool is_section(const std::vector<std::string>& tok) {
    return tok.size() == 1 && tok[0].size() > 2 && tok[0].front() == '[' && tok[0].back() == ']';
}

}  // namespace detail

/// Parses the scene text format (see README for the grammar).
inline Scene load_scene(const std::string& text) {
    using namespace detail;
    LineReader r(text);
    Scene s;
    std::vector<std::pair<int, std::vector<std::string>>> deferred_dirichlet, deferred_periodic, deferred_pairs;

    while (!r.done()) {
        const int line = r.line_no();
        const auto tok = r.next();
        if (!is_section(tok)) parse_fail(line, "expected a section header, got '" + tok[0] + "'");
        const std::string sec = tok[0].substr(1, tok[0].size() - 2);

        if (sec == "material") {
            while (!r.done() && !is_section(r.peek())) {
                const int ln = r.line_no();
                const auto t = r.next();
                if (t.size() != 5 || t[1] != "E" || t[3] != "nu") parse_fail(ln, "expected '<name> E <value> nu <value>'");
                NamedMaterial m{t[0], {to_double(t[2], ln), to_double(t[4], ln)}};
                try {
                    m.law.validate();
                } catch (const Error& e) {
                    parse_fail(ln, e.detail());
                }
                s.materials.push_back(m);
            }
        } else if (sec == "body") {
            std::string name, material, type = "patch";
            std::vector<int> degree;
            std::vector<double> knots_u, knots_v;
            bool rigid = false;
            int orientation = 1;
            PiecewiseLinear mx, my;
            std::vector<Vec2> pts;
            std::vector<double> w;
            int header_line = line;
            while (!r.done() && !is_section(r.peek())) {
                const int ln = r.line_no();
                const auto t = r.next();
                const std::string& key = t[0];
                if (key == "name" && t.size() == 2) {
                    name = t[1];
                } else if (key == "type" && t.size() == 2) {
                    type = t[1];
                    if (type != "patch" && type != "curve") parse_fail(ln, "type must be patch or curve");
                } else if (key == "material" && t.size() == 2) {
                    material = t[1];
                } else if (key == "degree") {
                    for (std::size_t k = 1; k < t.size(); ++k) degree.push_back(to_int(t[k], ln));
                } else if (key == "knots_u" || key == "knots") {
                    knots_u = numbers(t, 1, ln);
                } else if (key == "knots_v") {
                    knots_v = numbers(t, 1, ln);
                } else if (key == "rigid" && t.size() == 2) {
                    rigid = to_int(t[1], ln) != 0;
                } else if (key == "orientation" && t.size() == 2) {
                    orientation = to_int(t[1], ln);
                } else if (key == "motion" && t.size() >= 3) {
                    if (t[1] == "x")
                        mx = parse_table(t, 2, ln);
                    else if (t[1] == "y")
                        my = parse_table(t, 2, ln);
                    else
                        parse_fail(ln, "motion component must be x or y");
                } else if (key == "control" && t.size() == 1) {
                    header_line = ln;
                    while (!r.done() && !is_section(r.peek()) && r.peek()[0] != "end") {
                        const int lc = r.line_no();
                        const auto c = r.next();
                        if (c.size() != 3) parse_fail(lc, "control point needs 'x y w'");
                        pts.emplace_back(to_double(c[0], lc), to_double(c[1], lc));
                        w.push_back(to_double(c[2], lc));
                    }
                    if (!r.done() && r.peek()[0] == "end") r.next();
                } else {
                    parse_fail(ln, "unknown body key '" + key + "'");
                }
            }
            if (name.empty()) parse_fail(line, "body without name");
            try {
                if (type == "curve") {
                    if (degree.size() != 1) parse_fail(line, "curve body needs one degree");
                    const int b = s.add_curve_body(name, KnotVector(degree[0], knots_u), pts, w, orientation);
                    s.bodies[b].motion_x = mx;
                    s.bodies[b].motion_y = my;
                    if (!rigid) parse_fail(line, "curve body '" + name + "' must be rigid");
                } else {
                    if (degree.size() != 2) parse_fail(line, "patch body needs two degrees");
                    const int mat = material.empty() ? -1 : s.material_index(material);
                    if (mat < 0 && !rigid) parse_fail(line, "deformable body '" + name + "' needs a material");
                    const int b = s.add_patch_body(name, mat, KnotVector(degree[0], knots_u),
                                                   KnotVector(degree[1], knots_v), pts, w, rigid);
                    s.bodies[b].motion_x = mx;
                    s.bodies[b].motion_y = my;
                }
            } catch (const Error& e) {
                if (e.kind() == ErrorKind::Parse) throw;
                parse_fail(header_line, "body '" + name + "': " + e.detail());
            }
        } else if (sec == "dirichlet" || sec == "periodic" || sec == "contact_pair") {
            auto& dst = sec == "dirichlet" ? deferred_dirichlet : sec == "periodic" ? deferred_periodic : deferred_pairs;
            while (!r.done() && !is_section(r.peek())) {
                const int ln = r.line_no();
                dst.emplace_back(ln, r.next());
            }
        } else if (sec == "load_schedule") {
            int steps = 0;
            double end = 1.0;
            std::vector<double> values;
            while (!r.done() && !is_section(r.peek())) {
                const int ln = r.line_no();
                const auto t = r.next();
                if (t[0] == "steps" && t.size() == 2)
                    steps = to_int(t[1], ln);
                else if (t[0] == "end" && t.size() == 2)
                    end = to_double(t[1], ln);
                else if (t[0] == "values")
                    values = numbers(t, 1, ln);
                else
                    parse_fail(ln, "unknown load_schedule key '" + t[0] + "'");
            }
            if (!values.empty()) {
                s.load_steps = values;
            } else {
                if (steps < 1) parse_fail(line, "load_schedule needs 'steps N' or 'values ...'");
                for (int k = 1; k <= steps; ++k) s.load_steps.push_back(end * k / steps);
            }
        } else if (sec == "solver" || sec == "contact") {
            auto& dst = sec == "solver" ? s.solver_options : s.contact_options;
            while (!r.done() && !is_section(r.peek())) {
                const int ln = r.line_no();
                const auto t = r.next();
                if (t.size() != 2) parse_fail(ln, "expected 'key value'");
                dst[t[0]] = t[1];
            }
        } else {
            parse_fail(line, "unknown section [" + sec + "]");
        }
    }

    const auto body_of = [&](const std::string& name, int ln) {
        try {
            return s.body_index(name);
        } catch (const Error& e) {
            parse_fail(ln, e.detail());
        }
    };
    for (auto& [ln, t] : deferred_dirichlet) {
        if (t.size() < 4) parse_fail(ln, "expected '<body> <where> <x|y|xy> <value|table ...>'");
        DirichletSpec d;
        d.body = body_of(t[0], ln);
        std::size_t k = 1;
        d.where = t[k++];
        if (d.where == "node") {
            if (t.size() < 5) parse_fail(ln, "node dirichlet needs an index");
            d.node = to_int(t[k++], ln);
        } else if (d.where != "all") {
            try {
                parse_side(d.where);
            } catch (const Error& e) {
                parse_fail(ln, e.detail());
            }
        }
        const std::string comp = t[k++];
        if (comp == "x")
            d.comp = 0;
        else if (comp == "y")
            d.comp = 1;
        else if (comp == "xy")
            d.comp = 2;
        else
            parse_fail(ln, "component must be x, y or xy");
        d.value = parse_table(t, k, ln);
        s.dirichlet.push_back(d);
    }
    for (auto& [ln, t] : deferred_periodic) {
        if (t.size() != 3) parse_fail(ln, "expected '<body> <leader side> <follower side>'");
        try {
            s.periodic.push_back({body_of(t[0], ln), parse_side(t[1]), parse_side(t[2])});
        } catch (const Error& e) {
            if (e.detail().rfind("line ", 0) == 0) throw;
            parse_fail(ln, e.detail());
        }
    }
    for (auto& [ln, t] : deferred_pairs) {
        if (t.size() != 2) parse_fail(ln, "expected '<body>:<side> <body>:<side>'");
        ContactPairSpec c;
        for (int k = 0; k < 2; ++k) {
            const auto colon = t[k].find(':');
            if (colon == std::string::npos) parse_fail(ln, "expected '<body>:<side>'");
            const int b = body_of(t[k].substr(0, colon), ln);
            Side side;
            try {
                side = parse_side(t[k].substr(colon + 1));
            } catch (const Error& e) {
                parse_fail(ln, e.detail());
            }
            (k == 0 ? c.body1 : c.body2) = b;
            (k == 0 ? c.side1 : c.side2) = side;
        }
        s.contact_pairs.push_back(c);
    }
    if (s.load_steps.empty()) s.load_steps = {1.0};
    try {
        s.validate();
        build_dof_map(s);
    } catch (const Error& e) {
        if (e.kind() == ErrorKind::Parse) throw;
        throw Error(ErrorKind::Parse, std::string("invalid scene: ") + e.what());
    }
    return s;
}

/// Inverse of load_scene; numbers written with 17 significant digits.
inline std::string serialize_scene(const Scene& s) {
    using detail::fmt17;
    using detail::join17;
    std::ostringstream o;
    if (!s.materials.empty()) {
        o << "[material]\n";
        for (auto& m : s.materials) o << m.name << " E " << fmt17(m.law.E) << " nu " << fmt17(m.law.nu) << "\n";
        o << "\n";
    }
    for (const Body& B : s.bodies) {
        o << "[body]\nname " << B.name << "\n";
        if (B.is_curve) {
            o << "type curve\ndegree " << B.curve.kv.degree() << "\nknots " << join17(B.curve.kv.knots()) << "\n";
            o << "orientation " << B.curve.orientation << "\n";
        } else {
            if (B.material >= 0) o << "material " << s.materials[B.material].name << "\n";
            o << "degree " << B.patch.ku.degree() << " " << B.patch.kv.degree() << "\n";
            o << "knots_u " << join17(B.patch.ku.knots()) << "\nknots_v " << join17(B.patch.kv.knots()) << "\n";
        }
        o << "rigid " << (B.rigid ? 1 : 0) << "\n";
        if (!B.motion_x.empty()) o << "motion x " << detail::table_text(B.motion_x) << "\n";
        if (!B.motion_y.empty()) o << "motion y " << detail::table_text(B.motion_y) << "\n";
        o << "control\n";
        const auto& w = B.is_curve ? B.curve.weights : B.patch.weights;
        for (int k = 0; k < B.n_nodes; ++k) {
            const Vec2& X = s.X[B.first_node + k];
            o << fmt17(X.x()) << " " << fmt17(X.y()) << " " << fmt17(w[k]) << "\n";
        }
        o << "end\n\n";
    }
    if (!s.dirichlet.empty()) {
        o << "[dirichlet]\n";
        for (auto& d : s.dirichlet) {
            o << s.bodies[d.body].name << " " << d.where;
            if (d.where == "node") o << " " << d.node;
            o << " " << (d.comp == 0 ? "x" : d.comp == 1 ? "y" : "xy") << " " << detail::table_text(d.value) << "\n";
        }
        o << "\n";
    }
    if (!s.periodic.empty()) {
        o << "[periodic]\n";
        for (auto& p : s.periodic)
            o << s.bodies[p.body].name << " " << to_string(p.leader) << " " << to_string(p.follower) << "\n";
        o << "\n";
    }
    if (!s.contact_pairs.empty()) {
        o << "[contact_pair]\n";
        for (auto& c : s.contact_pairs)
            o << s.bodies[c.body1].name << ":" << to_string(c.side1) << " " << s.bodies[c.body2].name << ":"
              << to_string(c.side2) << "\n";
        o << "\n";
    }
    o << "[load_schedule]\nvalues " << join17(s.load_steps) << "\n";
    if (!s.solver_options.empty()) {
        o << "\n[solver]\n";
        for (auto& [k, v] : s.solver_options) o << k << " " << v << "\n";
    }
    if (!s.contact_options.empty()) {
        o << "\n[contact]\n";
        for (auto& [k, v] : s.contact_options) o << k << " " << v << "\n";
    }
    return o.str();
}

}  // namespace isomortar
