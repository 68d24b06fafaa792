// Copyright 2026 The wvpath Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#pragma once

// Classical limit of the weak measurement: weighted phase-space ensembles transported by the
// Hamiltonian flow, probe kicks g A(q) f(q, Q_w) at t_w, and the postselected average kick.
// Postselection is a filter on the transported samples at t_f, which picks out the set of
// points at t_w that end up in the final domain without constructing that set explicitly.

#include <algorithm>
#include <cmath>
#include <functional>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "wvpath/core.hpp"
#include "wvpath/errors.hpp"
#include "wvpath/parallel.hpp"
#include "wvpath/potential.hpp"
#include "wvpath/propagators.hpp"
#include "wvpath/weak_values.hpp"

namespace wvpath {

namespace detail {

// Neumaier summation; a million equal weights summed naively drift by ~1e-11.
struct CompensatedSum {
    double sum = 0, c = 0;
    void add(double x) {
        const double t = sum + x;
        c += std::abs(sum) >= std::abs(x) ? (sum - t) + x : (x - t) + sum;
        sum = t;
    }
    double value() const { return sum + c; }
};

}  // namespace detail

struct ClassicalEnsemble {
    std::vector<double> q, p, w;
    double time_tag = 0;

    std::size_t size() const { return q.size(); }

    void validate(double tol = 1e-12) const {
        if (p.size() != q.size() || w.size() != q.size()) {
            throw InvalidArgument("ClassicalEnsemble: q, p, w lengths differ");
        }
        if (q.empty()) {
            throw InvalidArgument("ClassicalEnsemble: no samples");
        }
        detail::CompensatedSum total;
        for (std::size_t k = 0; k < size(); ++k) {
            if (!(w[k] >= 0) || !std::isfinite(q[k]) || !std::isfinite(p[k])) {
                std::ostringstream os;
                os << "ClassicalEnsemble: bad sample " << k << " (negative weight or non-finite coordinate)";
                throw InvalidArgument(os.str());
            }
            total.add(w[k]);
        }
        const double sum = total.value();
        if (std::abs(sum - 1) > tol) {
            std::ostringstream os;
            os << "ClassicalEnsemble: weights sum to " << std::setprecision(17) << sum << ", not 1";
            throw InvalidArgument(os.str());
        }
    }

    void normalize() {
        detail::CompensatedSum total;
        for (double x : w) {
            total.add(x);
        }
        const double sum = total.value();
        if (!(sum > 0)) {
            throw InvalidArgument("ClassicalEnsemble: total weight is zero");
        }
        for (double &x : w) {
            x /= sum;
        }
    }
};

/// Uncorrelated Gaussian density in phase space. For a quantum Gaussian of width sigma the
/// Wigner function has sigma_q = sigma, sigma_p = hbar / (2 sigma).
struct PhaseSpaceGaussian {
    double q0 = 0, sigma_q = 1, p0 = 0, sigma_p = 1;
};

/// Equal-weight Monte Carlo samples.
inline ClassicalEnsemble sample_gaussian_ensemble(const PhaseSpaceGaussian &g, std::size_t n, std::uint64_t seed,
                                                  double time_tag = 0) {
    if (n == 0 || !(g.sigma_q >= 0) || !(g.sigma_p >= 0)) {
        throw InvalidArgument("sample_gaussian_ensemble: need n > 0 and non-negative widths");
    }
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> z;
    ClassicalEnsemble e;
    e.time_tag = time_tag;
    e.q.resize(n);
    e.p.resize(n);
    e.w.assign(n, 1.0 / static_cast<double>(n));
    for (std::size_t k = 0; k < n; ++k) {
        e.q[k] = g.q0 + g.sigma_q * z(rng);
        e.p[k] = g.p0 + g.sigma_p * z(rng);
    }
    return e;
}

namespace detail {

// Gauss-Hermite rule for the standard normal density (Golub-Welsch).
inline void gauss_hermite(std::size_t n, std::vector<double> &x, std::vector<double> &w) {
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (std::size_t k = 1; k < n; ++k) {
        const auto i = static_cast<Eigen::Index>(k);
        J(i, i - 1) = J(i - 1, i) = std::sqrt(static_cast<double>(k));
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
    x.resize(n);
    w.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        const auto i = static_cast<Eigen::Index>(k);
        x[k] = es.eigenvalues()[i];
        w[k] = es.eigenvectors()(0, i) * es.eigenvectors()(0, i);
    }
}

}  // namespace detail

/// Deterministic tensor-product Gauss-Hermite ensemble: integrates smooth observables of a
/// Gaussian density without sampling noise.
inline ClassicalEnsemble gaussian_quadrature_ensemble(const PhaseSpaceGaussian &g, std::size_t n_q, std::size_t n_p,
                                                      double time_tag = 0) {
    if (n_q == 0 || n_p == 0) {
        throw InvalidArgument("gaussian_quadrature_ensemble: need at least one node per axis");
    }
    std::vector<double> xq, wq, xp, wp;
    detail::gauss_hermite(n_q, xq, wq);
    detail::gauss_hermite(n_p, xp, wp);
    ClassicalEnsemble e;
    e.time_tag = time_tag;
    for (std::size_t i = 0; i < n_q; ++i) {
        for (std::size_t j = 0; j < n_p; ++j) {
            e.q.push_back(g.q0 + g.sigma_q * xq[i]);
            e.p.push_back(g.p0 + g.sigma_p * xp[j]);
            e.w.push_back(wq[i] * wp[j]);
        }
    }
    e.normalize();
    return e;
}

struct LiouvilleOptions {
    double dt_max = 1e-3;
    double force_limit = 1e12;
    Parallelism par = {};
};

/// Moves every sample along its trajectory from time_tag to t (either direction) with the
/// fourth-order symplectic composition of velocity-Verlet steps. Weights are untouched.
inline ClassicalEnsemble liouville_evolve(const ClassicalEnsemble &ens, const Potential &V, double t,
                                          const PhysicalParams &params = {}, const LiouvilleOptions &o = {}) {
    ens.validate();
    if (!(o.dt_max > 0)) {
        throw InvalidArgument("liouville_evolve: dt_max must be positive");
    }
    const double span = t - ens.time_tag;
    const auto n = static_cast<std::size_t>(std::ceil(std::abs(span) / o.dt_max - 1e-12));
    ClassicalEnsemble out = ens;
    out.time_tag = t;
    if (n == 0) {
        return out;
    }
    const double h = span / static_cast<double>(n);
    const double w1 = 1.0 / (2.0 - std::cbrt(2.0)), w0 = 1.0 - 2.0 * w1;
    const double m = params.m;
    parallel_for(ens.size(), o.par, [&](std::size_t k) {
        double q = out.q[k], p = out.p[k];
        auto force = [&](double x) {
            const double f = -V.gradient(x);
            if (!std::isfinite(f) || std::abs(f) > o.force_limit) {
                std::ostringstream os;
                os << "liouville_evolve: step rejected for sample " << k << " (force " << f << " at q = " << x << ")";
                throw IntegrationFailed(os.str());
            }
            return f;
        };
        double f = force(q);
        auto verlet = [&](double dt) {
            p += 0.5 * dt * f;
            q += dt * p / m;
            f = force(q);
            p += 0.5 * dt * f;
        };
        for (std::size_t s = 0; s < n; ++s) {
            verlet(w1 * h);
            verlet(w0 * h);
            verlet(w1 * h);
        }
        out.q[k] = q;
        out.p[k] = p;
    });
    return out;
}

/// Probe displacement for one sample in the heavy-probe limit. A is interpolated linearly; the
/// contact cell has the width of A's grid spacing, so a contact kick at Q_w is g A / dx.
inline double classical_probe_kick(double q_at_tw, const ConfigFunction &A, const InteractionProfile &profile,
                                   double g) {
    const double f = profile.value(q_at_tw, A.grid().dx());
    return f == 0 ? 0.0 : g * A.interpolate(q_at_tw) * f;
}

/// Final-time acceptance. With `soft` set, weight(q) is a detector efficiency in [0, 1];
/// otherwise a sample is accepted when b(q) lies in [lo, hi].
struct PostselectionDomain {
    std::string label = "everything";
    std::function<double(double)> b = [](double q) { return q; };
    double lo = -std::numeric_limits<double>::infinity();
    double hi = std::numeric_limits<double>::infinity();
    std::function<double(double)> soft;

    static PostselectionDomain everything() { return {}; }
    static PostselectionDomain interval(double lo, double hi) {
        PostselectionDomain d;
        std::ostringstream os;
        os << "q in [" << lo << ", " << hi << "]";
        d.label = os.str();
        d.lo = lo;
        d.hi = hi;
        return d;
    }
    static PostselectionDomain smooth(std::string label, std::function<double(double)> efficiency) {
        PostselectionDomain d;
        d.label = std::move(label);
        d.soft = std::move(efficiency);
        return d;
    }

    double weight(double q) const {
        if (soft) {
            const double e = soft(q);
            if (!(e >= 0 && e <= 1)) {
                throw InvalidArgument("PostselectionDomain: efficiency outside [0, 1]");
            }
            return e;
        }
        const double v = b(q);
        return v >= lo && v <= hi ? 1.0 : 0.0;
    }
};

struct ShiftReport {
    double shift = 0;           // weighted mean kick over accepted samples
    double standard_error = 0;  // of the weighted mean, from the accepted sample spread
    double acceptance = 0;      // accepted weight fraction
    std::size_t n_accepted = 0;
    std::size_t n_total = 0;
    double kick_min = 0, kick_max = 0;  // range of the kicks that entered the average
};

namespace detail {

inline ShiftReport average_kick(const std::vector<double> &kicks, const std::vector<double> &weights) {
    ShiftReport r;
    r.n_total = kicks.size();
    CompensatedSum w_sum, s_sum;
    r.kick_min = std::numeric_limits<double>::infinity();
    r.kick_max = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < kicks.size(); ++k) {
        if (weights[k] > 0) {
            w_sum.add(weights[k]);
            s_sum.add(weights[k] * kicks[k]);
            ++r.n_accepted;
            r.kick_min = std::min(r.kick_min, kicks[k]);
            r.kick_max = std::max(r.kick_max, kicks[k]);
        }
    }
    const double W = w_sum.value();
    r.acceptance = W;
    if (!(W > 0)) {
        return r;
    }
    r.shift = s_sum.value() / W;
    double var = 0;
    for (std::size_t k = 0; k < kicks.size(); ++k) {
        if (weights[k] > 0) {
            const double u = weights[k] / W;
            var += u * u * (kicks[k] - r.shift) * (kicks[k] - r.shift);
        }
    }
    r.standard_error = std::sqrt(var);
    return r;
}

}  // namespace detail

/// Average kick with no postselection.
inline ShiftReport unconditioned_kick(const ClassicalEnsemble &ens, const ConfigFunction &A,
                                      const InteractionProfile &profile, double g) {
    ens.validate();
    std::vector<double> kicks(ens.size());
    for (std::size_t k = 0; k < ens.size(); ++k) {
        kicks[k] = classical_probe_kick(ens.q[k], A, profile, g);
    }
    return detail::average_kick(kicks, ens.w);
}

/// Kicks are evaluated at t_w = ens_at_tw.time_tag; the samples are then carried to t_f and
/// weighted by the final-time acceptance.
inline ShiftReport conditional_pointer_shift(const ClassicalEnsemble &ens_at_tw, const ConfigFunction &A,
                                             const InteractionProfile &profile, double g,
                                             const PostselectionDomain &domain, const Potential &V, double t_f,
                                             const PhysicalParams &params = {}, const LiouvilleOptions &o = {},
                                             double floor = 1e-12) {
    const auto fin = liouville_evolve(ens_at_tw, V, t_f, params, o);
    std::vector<double> kicks(fin.size()), weights(fin.size());
    for (std::size_t k = 0; k < fin.size(); ++k) {
        kicks[k] = classical_probe_kick(ens_at_tw.q[k], A, profile, g);
        weights[k] = ens_at_tw.w[k] * domain.weight(fin.q[k]);
    }
    auto r = detail::average_kick(kicks, weights);
    if (!(r.acceptance > floor)) {
        std::ostringstream os;
        os << "conditional_pointer_shift: postselection '" << domain.label << "' accepted weight " << r.acceptance
           << " (" << r.n_accepted << " of " << r.n_total << " samples), below floor " << floor;
        throw PostselectionFailed(os.str(), r.acceptance);
    }
    return r;
}

inline nlohmann::json to_json(const ShiftReport &r) {
    return {{"shift", r.shift},
            {"standard_error", r.standard_error},
            {"acceptance", r.acceptance},
            {"n_accepted", r.n_accepted},
            {"n_total", r.n_total},
            {"kick_range", {r.kick_min, r.kick_max}}};
}

/// Weak value of A with postselection on a region rather than a pure state: b(q) in [0, 1] is
/// the detector efficiency at t_f. Re of the result is the pointer shift per unit coupling.
inline WeakValue region_weak_value(const WaveFunction &psi_i, const ConfigFunction &A, const ConfigFunction &V,
                                   const ConfigFunction &b, double t_i, double t_w, double t_f,
                                   const PhysicalParams &params = {}, double dt_max = 0.01,
                                   double floor = kDefaultDenominatorFloor) {
    if (!(t_i < t_w && t_w < t_f)) {
        throw InvalidArgument("region_weak_value: need t_i < t_w < t_f");
    }
    if (b.min() < 0 || b.max() > 1) {
        throw InvalidArgument("region_weak_value: region efficiency outside [0, 1]");
    }
    const auto mid = trotter_propagate(psi_i, V, t_w - t_i, steps_for(t_w - t_i, dt_max), params);
    const auto n_after = steps_for(t_f - t_w, dt_max);
    const auto chi = trotter_propagate(mid, V, t_f - t_w, n_after, params);
    const WaveFunction a_mid(mid.grid(), mid.amplitudes().cwiseProduct(A.values().cast<cplx>()));
    const auto chi_a = trotter_propagate(a_mid, V, t_f - t_w, n_after, params);
    const double dx = psi_i.grid().dx();
    const cplx num = chi.amplitudes().cwiseProduct(b.values().cast<cplx>()).dot(chi_a.amplitudes()) * dx;
    const cplx den = chi.amplitudes().cwiseProduct(b.values().cast<cplx>()).dot(chi.amplitudes()) * dx;
    return detail::make_weak_value(num, den, floor);
}

struct CoherenceMass {
    double diagonal = 0;      // coarse-grained density mass, sum_I scale * <rho(x, x)>_I
    double off_diagonal = 0;  // sum over box pairs I != J of scale^2 |<rho(x', x)>_IJ|
};

/// Off-diagonal mass of the pure-state density matrix after averaging over square boxes of side
/// `scale` (rounded to whole grid cells). Boxes overhanging the grid end are dropped.
inline CoherenceMass coherence_decay(const WaveFunction &psi, double scale) {
    const auto &g = psi.grid();
    const auto per_box = static_cast<std::size_t>(std::llround(scale / g.dx()));
    if (per_box < 1 || per_box > g.size()) {
        throw InvalidArgument("coherence_decay: scale must span between one cell and the whole grid");
    }
    const std::size_t boxes = g.size() / per_box;
    const double side = static_cast<double>(per_box) * g.dx();
    std::vector<double> amp(boxes);
    CoherenceMass m;
    for (std::size_t I = 0; I < boxes; ++I) {
        cplx mean = 0;
        double dens = 0;
        for (std::size_t i = I * per_box; i < (I + 1) * per_box; ++i) {
            mean += psi[i];
            dens += std::norm(psi[i]);
        }
        // rho is a product for a pure state, so the box average factorizes.
        amp[I] = std::abs(mean) / static_cast<double>(per_box);
        m.diagonal += dens * g.dx();
    }
    double s1 = 0, s2 = 0;
    for (double a : amp) {
        s1 += a;
        s2 += a * a;
    }
    m.off_diagonal = side * side * (s1 * s1 - s2);
    return m;
}

/// CSV with header "q,p,w"; a leading "# t = <time>" comment carries the time tag.
inline void write_ensemble_csv(std::ostream &os, const ClassicalEnsemble &e) {
    os << "# t = " << std::setprecision(17) << e.time_tag << "\nq,p,w\n";
    for (std::size_t k = 0; k < e.size(); ++k) {
        os << e.q[k] << ',' << e.p[k] << ',' << e.w[k] << '\n';
    }
}

inline ClassicalEnsemble read_ensemble_csv(std::istream &is) {
    ClassicalEnsemble e;
    std::string line;
    std::size_t lineno = 0;
    bool header = false;
    auto fail = [&](const std::string &why) {
        std::ostringstream os;
        os << "ensemble csv line " << lineno << ": " << why;
        throw InvalidArgument(os.str());
    };
    while (std::getline(is, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            continue;
        }
        if (line[0] == '#') {
            const auto eq = line.find('=');
            if (line.find("t") != std::string::npos && eq != std::string::npos) {
                try {
                    e.time_tag = std::stod(line.substr(eq + 1));
                } catch (const std::exception &) {
                    fail("unreadable time tag");
                }
            }
            continue;
        }
        if (!header) {
            if (line != "q,p,w") {
                fail("expected header q,p,w");
            }
            header = true;
            continue;
        }
        std::istringstream row(line);
        std::string cell;
        double v[3];
        int k = 0;
        while (std::getline(row, cell, ',')) {
            if (k == 3) {
                fail("more than three columns");
            }
            std::size_t used = 0;
            try {
                v[k] = std::stod(cell, &used);
            } catch (const std::exception &) {
                fail("not a number: '" + cell + "'");
            }
            if (used != cell.size()) {
                fail("not a number: '" + cell + "'");
            }
            ++k;
        }
        if (k != 3) {
            fail("expected three columns");
        }
        e.q.push_back(v[0]);
        e.p.push_back(v[1]);
        e.w.push_back(v[2]);
    }
    if (!header) {
        throw InvalidArgument("ensemble csv: missing header q,p,w");
    }
    e.validate(1e-9);
    return e;
}

}  // namespace wvpath
