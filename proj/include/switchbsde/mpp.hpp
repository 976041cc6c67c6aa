#ifndef SWBSDE_MPP_HPP
#define SWBSDE_MPP_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "rng.hpp"

namespace swbsde {

/**
 * Compensator phi_t(de) dA_t of a marked point process with deterministic
 * cumulative intensity A_t = int_0^t lambda(s) ds over a finite mark set.
 *
 * A is continuous by construction. `lambda_bound` is the dominating rate used
 * by the thinning sampler and must bound lambda on the simulated horizon.
 */
struct CompensatorSpec {
    std::function<double(double)> lambda;
    double lambda_bound = 0.0;
    std::vector<std::string> marks;
    std::function<double(double, std::size_t)> phi;

    std::size_t n_marks() const { return marks.size(); }

    static CompensatorSpec constant(double rate, std::vector<std::string> marks,
                                    std::vector<double> weights) {
        if (weights.size() != marks.size()) {
            throw std::invalid_argument("CompensatorSpec: one weight per mark required");
        }
        CompensatorSpec c;
        c.lambda = [rate](double) { return rate; };
        c.lambda_bound = rate;
        c.marks = std::move(marks);
        c.phi = [w = std::move(weights)](double, std::size_t m) { return w[m]; };
        return c;
    }
};

/// Event (T_n, xi_n): time and index into the mark set.
struct MarkedEvent {
    double time;
    std::size_t mark;
};

struct MarkedPath {
    std::vector<MarkedEvent> events;
    double horizon = 0.0;

    std::size_t count_until(double t) const {
        std::size_t c = 0;
        for (const auto& e : events) {
            if (e.time <= t) ++c;
        }
        return c;
    }
};

/**
 * Girsanov kernel rho_t(e). The integrability exponent `eta` must exceed
 * 3 + bound^4; with a deterministic A any finite eta has e^{eta A_T} < inf.
 */
struct KernelField {
    std::function<double(double, std::size_t)> value;
    double bound = 1.0;
    double eta = 5.0;

    static KernelField constant(double rho) {
        const double b = std::max(rho, 0.0);
        return KernelField{[rho](double, std::size_t) { return rho; }, b, 4.0 + b * b * b * b};
    }

    static KernelField per_mark(std::vector<double> rho) {
        double b = 0.0;
        for (double r : rho) b = std::max(b, r);
        return KernelField{[r = std::move(rho)](double, std::size_t m) { return r[m]; }, b,
                           4.0 + b * b * b * b};
    }

    bool eta_admissible() const { return eta > 3.0 + std::pow(bound, 4); }
};

/**
 * Uniform partition of [0, horizon] used for the Lebesgue (dA) parts of
 * path functionals. Cells are (t_k, t_{k+1}]; integrands are sampled just
 * inside the left end of each cell so that left-continuous switched kernels
 * use the value in force on that cell.
 */
struct QuadratureGrid {
    double horizon;
    std::size_t n_cells;

    double step() const { return horizon / static_cast<double>(n_cells); }
    double time(std::size_t k) const { return horizon * static_cast<double>(k) / static_cast<double>(n_cells); }

    /// int_0^t sum_m h(s, m) phi(s, m) lambda(s) ds by the left-endpoint rule.
    template <class Integrand>
    double integrate_dA(const CompensatorSpec& comp, double t, Integrand&& h) const {
        double acc = 0.0;
        const double dt = step();
        for (std::size_t k = 0; k < n_cells; ++k) {
            const double a = time(k);
            if (a >= t) break;
            const double b = std::min(time(k + 1), t);
            const double s = std::nextafter(a, std::numeric_limits<double>::infinity());
            double inner = 0.0;
            for (std::size_t m = 0; m < comp.n_marks(); ++m) {
                inner += h(s, m) * comp.phi(s, m);
            }
            acc += inner * comp.lambda(s) * (b == time(k + 1) ? dt : b - a);
        }
        return acc;
    }
};

namespace detail {

inline void check_rate(const CompensatorSpec& comp, double t) {
    const double l = comp.lambda(t);
    if (l > comp.lambda_bound * (1.0 + 1e-12) || l < 0.0) {
        throw std::domain_error("lambda(" + std::to_string(t) + ") = " + std::to_string(l) +
                                " outside [0, lambda_bound = " + std::to_string(comp.lambda_bound) + "]");
    }
}

inline std::size_t draw_mark(const CompensatorSpec& comp, double t, StreamRng& rng) {
    const double u = rng.uniform();
    double acc = 0.0;
    const std::size_t n = comp.n_marks();
    for (std::size_t m = 0; m < n; ++m) {
        acc += comp.phi(t, m);
        if (u < acc) return m;
    }
    return n - 1;
}

template <class AcceptProbability>
MarkedPath thin(const CompensatorSpec& comp, double horizon, double dominating_rate,
                StreamRng& rng, AcceptProbability&& accept) {
    if (!(horizon > 0.0)) throw std::invalid_argument("simulate_path: horizon must be positive");
    if (comp.n_marks() == 0) throw std::invalid_argument("simulate_path: empty mark set");
    MarkedPath path;
    path.horizon = horizon;
    if (dominating_rate <= 0.0) return path;
    double t = 0.0;
    for (;;) {
        t += rng.exponential(dominating_rate);
        if (t > horizon) break;
        check_rate(comp, t);
        const std::size_t m = draw_mark(comp, t, rng);
        if (rng.uniform() * dominating_rate < accept(t, m)) {
            path.events.push_back({t, m});
        }
    }
    return path;
}

}  // namespace detail

/// Thinning sampler for the reference law (compensator phi lambda dt).
inline MarkedPath simulate_path(const CompensatorSpec& comp, double horizon, std::uint64_t seed,
                                std::uint64_t path_index = 0) {
    StreamRng rng(seed, path_index);
    return detail::thin(comp, horizon, comp.lambda_bound, rng,
                        [&](double t, std::size_t) { return comp.lambda(t); });
}

/// Thinning sampler for the kernel-reweighted law (compensator rho phi lambda dt).
inline MarkedPath simulate_path_under_kernel(const CompensatorSpec& comp, const KernelField& kernel,
                                             double horizon, std::uint64_t seed,
                                             std::uint64_t path_index = 0) {
    StreamRng rng(seed, path_index);
    const double dominating = comp.lambda_bound * kernel.bound;
    return detail::thin(comp, horizon, dominating, rng, [&](double t, std::size_t m) {
        const double r = kernel.value(t, m);
        if (r < 0.0 || r > kernel.bound * (1.0 + 1e-12)) {
            throw std::domain_error("kernel value outside [0, bound] at t = " + std::to_string(t));
        }
        return comp.lambda(t) * r;
    });
}

/**
 * sum over events of C(T_n, xi_n) minus int_0^T sum_m C(s,m) phi(s,m) lambda(s) ds.
 * The Lebesgue part uses `grid`.
 */
template <class Integrand>
double compensated_integral(const MarkedPath& path, const CompensatorSpec& comp, Integrand&& integrand,
                            const QuadratureGrid& grid) {
    double jumps = 0.0;
    for (const auto& e : path.events) jumps += integrand(e.time, e.mark);
    return jumps - grid.integrate_dA(comp, path.horizon, integrand);
}

/**
 * Doleans-Dade exponential L_t = prod_{T_n <= t} rho(T_n, xi_n) * exp(int_0^t (1 - rho) phi dA).
 */
inline double doleans_exponential(const MarkedPath& path, const CompensatorSpec& comp,
                                  const KernelField& kernel, double t, const QuadratureGrid& grid) {
    if (t > path.horizon) throw std::invalid_argument("doleans_exponential: t beyond path horizon");
    double product = 1.0;
    for (const auto& e : path.events) {
        if (e.time > t) break;
        product *= kernel.value(e.time, e.mark);
    }
    if (product == 0.0) return 0.0;
    const double exponent =
        grid.integrate_dA(comp, t, [&](double s, std::size_t m) { return 1.0 - kernel.value(s, m); });
    return product * std::exp(exponent);
}

}  // namespace swbsde

#endif  // SWBSDE_MPP_HPP
