#pragma once

// Gauss-Legendre rules and refined boundary quadrature (RBQ): elements whose gap
// changes sign are split at the roots and every piece gets the full parent rule.

#include "core.hpp"

#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <vector>

namespace isomortar {

struct GaussRule {
    int n = 0;
    std::vector<double> points;   // on [-1, 1]
    std::vector<double> weights;
};

inline constexpr int kMaxGaussPoints = 2048;

namespace detail {

inline GaussRule compute_gauss_rule(int n) {
    GaussRule r;
    r.n = n;
    r.points.resize(n);
    r.weights.resize(n);
    for (int i = 0; i < (n + 1) / 2; ++i) {
        // Tricomi initial guess, then Newton on P_n
        double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
        double dp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = x;
            if (n == 1) p1 = x;
            for (int k = 2; k <= n; ++k) {
                const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            // p1 = P_n(x), p0 = P_{n-1}(x)
            dp = n * (x * p1 - p0) / (x * x - 1.0);
            const double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-16) break;
        }
        {
            double p0 = 1.0, p1 = x;
            for (int k = 2; k <= n; ++k) {
                const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            dp = n * (x * p1 - p0) / (x * x - 1.0);
        }
        const double w = 2.0 / ((1.0 - x * x) * dp * dp);
        r.points[i] = -x;
        r.points[n - 1 - i] = x;
        r.weights[i] = w;
        r.weights[n - 1 - i] = w;
    }
    if (n % 2 == 1) r.points[n / 2] = 0.0;
    return r;
}

}  // namespace detail

/// Cached Gauss-Legendre rule with n points, 1 <= n <= kMaxGaussPoints.
inline const GaussRule& gauss_rule(int n) {
    if (n < 1 || n > kMaxGaussPoints)
        throw Error(ErrorKind::Config, "gauss_rule: point count " + std::to_string(n) + " out of range");
    static std::mutex mtx;
    static std::map<int, std::unique_ptr<GaussRule>> cache;
    std::lock_guard lock(mtx);
    auto& slot = cache[n];
    if (!slot) {
        if (n == 1)
            slot = std::make_unique<GaussRule>(GaussRule{1, {0.0}, {2.0}});
        else
            slot = std::make_unique<GaussRule>(detail::compute_gauss_rule(n));
    }
    return *slot;
}

/// Parameter-space pieces of one element, each flagged in/out of contact.
struct ElementPartition {
    int element = -1;
    std::vector<std::pair<double, double>> intervals;
    std::vector<bool> in_contact;
    std::vector<double> roots;

    double total_length() const {
        double s = 0;
        for (auto& [a, b] : intervals) s += b - a;
        return s;
    }
    double contact_length() const {
        double s = 0;
        for (std::size_t i = 0; i < intervals.size(); ++i)
            if (in_contact[i]) s += intervals[i].second - intervals[i].first;
        return s;
    }
};

struct RbqOptions {
    double zero_tol = 0.0;     // |phi| <= zero_tol counts as out of contact
    double root_tol = 1e-10;   // bracket width relative to the element span
    int max_roots = 2;         // per scanned interval before dyadic sub-scan
    int max_levels = 3;
};

/// Level-set style sign classifier: phi < -zero_tol is "in".
inline bool phi_inside(double phi, double zero_tol) { return phi < -zero_tol; }

/// Partitions [a, b] at sign changes of phi. The scan samples the endpoints and the
/// parent Gauss abscissae; brackets are refined by bisection.
inline ElementPartition rbq_partition(int element, double a, double b, const std::function<double(double)>& phi,
                                      const GaussRule& rule, const RbqOptions& opt = {}) {
    const double span = b - a;
    std::vector<double> roots;

    const auto bisect = [&](double lo, double hi, bool in_lo) {
        while (hi - lo > opt.root_tol * span) {
            const double mid = 0.5 * (lo + hi);
            if (phi_inside(phi(mid), opt.zero_tol) == in_lo)
                lo = mid;
            else
                hi = mid;
        }
        return 0.5 * (lo + hi);
    };

    std::function<void(double, double, int)> scan = [&](double lo, double hi, int level) {
        std::vector<double> xs;
        xs.reserve(rule.n + 2);
        xs.push_back(lo);
        for (double t : rule.points) xs.push_back(lo + 0.5 * (t + 1.0) * (hi - lo));
        xs.push_back(hi);
        std::vector<bool> in(xs.size());
        for (std::size_t k = 0; k < xs.size(); ++k) in[k] = phi_inside(phi(xs[k]), opt.zero_tol);
        std::vector<std::size_t> changes;
        for (std::size_t k = 1; k < xs.size(); ++k)
            if (in[k] != in[k - 1]) changes.push_back(k);
        if (static_cast<int>(changes.size()) > opt.max_roots) {
            if (level >= opt.max_levels)
                throw Error(ErrorKind::Partition, "rbq_partition: oscillatory gap sign in element " +
                                                      std::to_string(element));
            const double mid = 0.5 * (lo + hi);
            scan(lo, mid, level + 1);
            if (phi_inside(phi(mid), opt.zero_tol) !=
                phi_inside(phi(std::nextafter(mid, hi)), opt.zero_tol)) {
                roots.push_back(mid);
            }
            scan(mid, hi, level + 1);
            return;
        }
        for (std::size_t k : changes) roots.push_back(bisect(xs[k - 1], xs[k], in[k - 1]));
    };
    scan(a, b, 0);
    std::sort(roots.begin(), roots.end());

    ElementPartition part;
    part.element = element;
    part.roots = roots;
    double left = a;
    for (std::size_t k = 0; k <= roots.size(); ++k) {
        const double right = (k < roots.size()) ? roots[k] : b;
        if (right > left) {
            part.intervals.emplace_back(left, right);
            part.in_contact.push_back(phi_inside(phi(0.5 * (left + right)), opt.zero_tol));
        }
        left = right;
    }
    if (!part.intervals.empty()) part.intervals.back().second = b;
    return part;
}

/// Unpartitioned element.
inline ElementPartition whole_element(int element, double a, double b, bool in_contact = false) {
    ElementPartition part;
    part.element = element;
    part.intervals.emplace_back(a, b);
    part.in_contact.push_back(in_contact);
    return part;
}

}  // namespace isomortar
