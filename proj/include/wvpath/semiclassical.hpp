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

// Classical paths and the Van Vleck sum over them: boundary-value trajectories with monodromy,
// actions and Maslov indices, the semiclassical kernel, the semiclassical weak value for a contact
// coupling, and the periodic-orbit reconstruction of the autocorrelation function.

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "wvpath/core.hpp"
#include "wvpath/parallel.hpp"
#include "wvpath/potential.hpp"
#include "wvpath/weak_values.hpp"

namespace wvpath {

struct PhasePoint {
    double t;
    double q;
    double p;
};

struct TrajectoryOptions {
    double dt_max = 1e-3;
    double energy_tol = 1e-9;  // relative energy drift that triggers step refinement
    int max_refine = 6;
    bool store_samples = true;
    std::size_t max_samples = 4096;
};

struct ClassicalTrajectory {
    std::vector<PhasePoint> samples;
    double x_i = 0, x_f = 0, t_i = 0, t_f = 0;
    double p_i = 0, p_f = 0;
    double action = 0;
    // d(q_f, p_f) / d(q_i, p_i)
    Eigen::Matrix2d monodromy = Eigen::Matrix2d::Identity();
    int maslov = 0;
    double conjugate_time = std::numeric_limits<double>::quiet_NaN();  // last zero of dq/dp_i before t_f
    double energy_drift = 0;
    std::size_t steps = 0;
    cplx amplitude = 0;  // Van Vleck amplitude, 0 at a caustic

    double dxf_dpi() const {
        return monodromy(0, 1);
    }
    /// d^2 S / dx_i^2 and d^2 S / dx_f^2 at fixed other endpoint.
    double d2S_dxi2() const {
        return monodromy(0, 0) / monodromy(0, 1);
    }
    double d2S_dxf2() const {
        return monodromy(1, 1) / monodromy(0, 1);
    }
};

namespace detail {

// Fourth-order symplectic composition of velocity-Verlet substeps (Yoshida). Each substep is a
// Verlet step, so the discrete action below generates the map exactly.
inline constexpr double kYoshida1 = 1.3512071919596578;   // 1 / (2 - 2^(1/3))
inline constexpr double kYoshida0 = -1.7024143839193153;  // -2^(1/3) / (2 - 2^(1/3))

struct VerletState {
    double q, p;
    Eigen::Matrix2d tangent;  // columns: d(q, p)/dq_i, d(q, p)/dp_i
    double action;
};

inline void verlet_substep(VerletState &s, double h, const Potential &V, double m) {
    const double q0 = s.q;
    const double ph = s.p - 0.5 * h * V.gradient(q0);
    const double q1 = q0 + h * ph / m;
    s.p = ph - 0.5 * h * V.gradient(q1);
    for (int c = 0; c < 2; ++c) {
        const double dph = s.tangent(1, c) - 0.5 * h * V.curvature(q0) * s.tangent(0, c);
        s.tangent(0, c) += h * dph / m;
        s.tangent(1, c) = dph - 0.5 * h * V.curvature(q1) * s.tangent(0, c);
    }
    s.action += m * (q1 - q0) * (q1 - q0) / (2 * h) - 0.5 * h * (V.value(q0) + V.value(q1));
    s.q = q1;
}

inline void yoshida_step(VerletState &s, double h, const Potential &V, double m) {
    verlet_substep(s, kYoshida1 * h, V, m);
    verlet_substep(s, kYoshida0 * h, V, m);
    verlet_substep(s, kYoshida1 * h, V, m);
}

inline ClassicalTrajectory integrate_once(const Potential &V, const PhysicalParams &params, double q0, double p0,
                                          double t_i, double t_f, std::size_t n, const TrajectoryOptions &opt) {
    const double h = (t_f - t_i) / static_cast<double>(n);
    const double m = params.m;
    VerletState s{q0, p0, Eigen::Matrix2d::Identity(), 0};
    ClassicalTrajectory tr;
    tr.x_i = q0;
    tr.p_i = p0;
    tr.t_i = t_i;
    tr.t_f = t_f;
    tr.steps = n;
    const std::size_t stride = opt.store_samples ? std::max<std::size_t>(1, (n + opt.max_samples - 1) / opt.max_samples) : 0;
    if (opt.store_samples) {
        tr.samples.push_back({t_i, q0, p0});
    }
    const double e0 = p0 * p0 / (2 * m) + V.value(q0);
    // Conjugate points: sign changes of dq(t)/dp_i after the start (where it vanishes by definition).
    double j_last = 0, t_last = t_i;
    for (std::size_t k = 1; k <= n; ++k) {
        yoshida_step(s, h, V, m);
        const double t = t_i + static_cast<double>(k) * h;
        const double j = s.tangent(0, 1);
        if (j != 0) {
            if (j_last != 0 && (j > 0) != (j_last > 0)) {
                ++tr.maslov;
                tr.conjugate_time = t_last + (t - t_last) * j_last / (j_last - j);
            }
            j_last = j;
            t_last = t;
        }
        if (opt.store_samples && (k % stride == 0 || k == n)) {
            tr.samples.push_back({t, s.q, s.p});
        }
    }
    tr.x_f = s.q;
    tr.p_f = s.p;
    tr.action = s.action;
    tr.monodromy = s.tangent;
    const double e1 = s.p * s.p / (2 * m) + V.value(s.q);
    tr.energy_drift = std::abs(e1 - e0) / std::max(std::abs(e0), 1e-12);
    return tr;
}

}  // namespace detail

/// Integrates the trajectory starting at (q0, p0), refining the step until the relative energy
/// drift is below opt.energy_tol (or max_refine halvings have been spent).
inline ClassicalTrajectory integrate_trajectory(const Potential &V, const PhysicalParams &params, double q0,
                                                double p0, double t_i, double t_f, const TrajectoryOptions &opt = {}) {
    if (!(t_f > t_i)) {
        throw InvalidArgument("integrate_trajectory: need t_f > t_i");
    }
    std::size_t n = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil((t_f - t_i) / opt.dt_max)));
    auto tr = detail::integrate_once(V, params, q0, p0, t_i, t_f, n, opt);
    for (int r = 0; r < opt.max_refine && tr.energy_drift > opt.energy_tol; ++r) {
        n *= 2;
        tr = detail::integrate_once(V, params, q0, p0, t_i, t_f, n, opt);
    }
    return tr;
}

/// |A| = (2 pi hbar |dx_f/dp_i|)^(-1/2) with the e^(-i pi/4) of (2 pi i hbar)^(-1/2); the Maslov
/// phase is applied separately.
inline cplx vanvleck_amplitude(const ClassicalTrajectory &tr, const PhysicalParams &params = {},
                               double caustic_tol = 1e-9) {
    const double J = tr.dxf_dpi();
    if (!(std::abs(J) > caustic_tol)) {
        throw CausticError("vanvleck_amplitude: trajectory ends at a caustic (dx_f/dp_i = 0)", tr.t_f);
    }
    return std::polar(1.0 / std::sqrt(2 * pi * params.hbar * std::abs(J)), -pi / 4);
}

struct BvpOptions {
    std::vector<double> seeds;  // empty: n_seeds uniform seeds over [p_min, p_max]
    double p_min = -10;
    double p_max = 10;
    std::size_t n_seeds = 64;
    double tol = 1e-9;
    double dedup_tol = 1e-6;
    int max_iterations = 60;
    double caustic_tol = 1e-9;
    TrajectoryOptions trajectory = {};
};

struct BvpResult {
    std::vector<ClassicalTrajectory> trajectories;  // sorted by initial momentum
    std::vector<std::string> diagnostics;
};

namespace detail {

inline std::vector<double> seed_momenta(const BvpOptions &o) {
    std::vector<double> seeds = o.seeds;
    if (seeds.empty()) {
        if (o.n_seeds < 2 || !(o.p_max > o.p_min)) {
            throw InvalidArgument("solve_bvp: need at least two seeds over a nonempty bracket");
        }
        for (std::size_t k = 0; k < o.n_seeds; ++k) {
            seeds.push_back(o.p_min + (o.p_max - o.p_min) * static_cast<double>(k) / static_cast<double>(o.n_seeds - 1));
        }
    }
    std::sort(seeds.begin(), seeds.end());
    seeds.erase(std::unique(seeds.begin(), seeds.end()), seeds.end());
    return seeds;
}

// Safeguarded Newton on F(p) = q_f(p) - x_f inside [a, b] with F(a) F(b) <= 0.
inline bool polish_root(const Potential &V, const PhysicalParams &params, double x_i, double x_f, double t_i,
                        double t_f, double a, double fa, double b, double fb, const BvpOptions &o,
                        ClassicalTrajectory &out) {
    double p = std::abs(fa) < std::abs(fb) ? a : b;
    for (int it = 0; it < o.max_iterations; ++it) {
        auto tr = integrate_trajectory(V, params, x_i, p, t_i, t_f, o.trajectory);
        const double F = tr.x_f - x_f;
        if (std::abs(F) < o.tol) {
            out = std::move(tr);
            return true;
        }
        if ((F > 0) == (fa > 0)) {
            a = p;
            fa = F;
        } else {
            b = p;
            fb = F;
        }
        const double J = tr.dxf_dpi();
        double next = J != 0 ? p - F / J : 0.5 * (a + b);
        const double lo = std::min(a, b), hi = std::max(a, b);
        if (!(next > lo && next < hi)) {
            next = 0.5 * (a + b);
        }
        if (std::abs(next - p) < 1e-15 * std::max(1.0, std::abs(p)) && std::abs(hi - lo) < 1e-14) {
            break;
        }
        p = next;
    }
    return false;
}

}  // namespace detail

/// Classical paths from (x_i, t_i) to each of the targets (x_f, t_f). The seed table is integrated
/// once and shared across targets; every sign change of q_f(p) - x_f between adjacent seeds is
/// polished by safeguarded Newton using the tangent solution.
inline std::vector<BvpResult> solve_bvp_fan(double x_i, const std::vector<double> &targets, double t_i, double t_f,
                                            const Potential &V, const PhysicalParams &params,
                                            const BvpOptions &o = {}) {
    params.validate();
    const auto seeds = detail::seed_momenta(o);
    auto light = o.trajectory;
    light.store_samples = false;
    std::vector<double> qf(seeds.size());
    for (std::size_t k = 0; k < seeds.size(); ++k) {
        qf[k] = integrate_trajectory(V, params, x_i, seeds[k], t_i, t_f, light).x_f;
    }
    std::vector<BvpResult> results(targets.size());
    for (std::size_t t = 0; t < targets.size(); ++t) {
        const double x_f = targets[t];
        auto &res = results[t];
        std::vector<ClassicalTrajectory> found;
        for (std::size_t k = 0; k + 1 < seeds.size(); ++k) {
            const double fa = qf[k] - x_f, fb = qf[k + 1] - x_f;
            if (fa * fb > 0 || (fb == 0 && k + 2 < seeds.size())) {
                continue;
            }
            ClassicalTrajectory tr;
            if (detail::polish_root(V, params, x_i, x_f, t_i, t_f, seeds[k], fa, seeds[k + 1], fb, o, tr)) {
                found.push_back(std::move(tr));
            } else {
                std::ostringstream os;
                os << "bracket [" << seeds[k] << ", " << seeds[k + 1] << "]: Newton did not reach tol " << o.tol;
                res.diagnostics.push_back(os.str());
            }
        }
        std::sort(found.begin(), found.end(), [](const auto &a, const auto &b) { return a.p_i < b.p_i; });
        for (auto &tr : found) {
            if (!res.trajectories.empty() && std::abs(tr.p_i - res.trajectories.back().p_i) <= o.dedup_tol) {
                continue;
            }
            if (o.trajectory.store_samples) {
                tr = integrate_trajectory(V, params, x_i, tr.p_i, t_i, t_f, o.trajectory);
            }
            if (std::abs(tr.dxf_dpi()) > o.caustic_tol) {
                tr.amplitude = vanvleck_amplitude(tr, params, o.caustic_tol);
            }
            res.trajectories.push_back(std::move(tr));
        }
        if (res.trajectories.empty()) {
            for (std::size_t k = 0; k < seeds.size(); ++k) {
                std::ostringstream os;
                os << "seed p = " << seeds[k] << ": q_f - x_f = " << qf[k] - x_f << ", no root bracketed";
                res.diagnostics.push_back(os.str());
            }
        }
    }
    return results;
}

inline BvpResult solve_bvp(double x_i, double x_f, double t_i, double t_f, const Potential &V,
                           const PhysicalParams &params, const BvpOptions &o = {}) {
    return std::move(solve_bvp_fan(x_i, {x_f}, t_i, t_f, V, params, o).front());
}

/// sum_k A_k exp(i (S_k / hbar - pi mu_k / 2)) over the given paths.
inline cplx semiclassical_sum(const std::vector<ClassicalTrajectory> &paths, const PhysicalParams &params,
                              double caustic_tol = 1e-9) {
    if (paths.empty()) {
        throw InvalidArgument("semiclassical kernel: no classical path connects the endpoints");
    }
    cplx sum = 0;
    for (const auto &tr : paths) {
        sum += vanvleck_amplitude(tr, params, caustic_tol) *
               std::exp(I * (tr.action / params.hbar - pi / 2 * tr.maslov));
    }
    return sum;
}

inline cplx semiclassical_kernel(double x_f, double x_i, double dt, const Potential &V, const PhysicalParams &params,
                                 const BvpOptions &o = {}) {
    auto light = o;
    light.trajectory.store_samples = false;
    return semiclassical_sum(solve_bvp(x_i, x_f, 0, dt, V, params, light).trajectories, params, o.caustic_tol);
}

struct SemiclassicalOptions {
    BvpOptions bvp = {};
    double support_cutoff = 1e-10;  // relative amplitude below which grid points are skipped
    Parallelism par = {};
};

namespace detail {

inline std::vector<std::size_t> support_of(const WaveFunction &psi, double cutoff) {
    const double peak = psi.amplitudes().cwiseAbs().maxCoeff();
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < psi.grid().size(); ++i) {
        if (std::abs(psi[i]) > cutoff * peak) {
            idx.push_back(i);
        }
    }
    return idx;
}

// Row-by-row semiclassical kernel K(targets[j], sources[i]).
inline Eigen::MatrixXcd semiclassical_block(const std::vector<double> &targets, const std::vector<double> &sources,
                                            double t_i, double t_f, const Potential &V, const PhysicalParams &params,
                                            const SemiclassicalOptions &o) {
    Eigen::MatrixXcd K(static_cast<Eigen::Index>(targets.size()), static_cast<Eigen::Index>(sources.size()));
    auto bvp = o.bvp;
    bvp.trajectory.store_samples = false;
    parallel_for(sources.size(), o.par, [&](std::size_t i) {
        auto fan = solve_bvp_fan(sources[i], targets, t_i, t_f, V, params, bvp);
        for (std::size_t j = 0; j < targets.size(); ++j) {
            K(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) =
                semiclassical_sum(fan[j].trajectories, params, bvp.caustic_tol);
        }
    });
    return K;
}

}  // namespace detail

/// Contact-coupling weak value with every propagator replaced by its sum over classical paths:
/// the numerator runs over paths x_i -> Q_w -> x_f, the denominator over direct paths x_i -> x_f.
/// V is the analytic potential behind setup.V.
inline WeakValue weak_value_semiclassical(const WeakMeasurementSetup &s, const Potential &V,
                                          const SemiclassicalOptions &o = {}) {
    s.validate();
    if (s.profile.kind != InteractionProfile::Kind::Contact) {
        throw InvalidArgument("weak_value_semiclassical: requires a contact profile");
    }
    const auto &g = s.grid();
    const double dx = g.dx();
    const auto w = g.index_of(s.profile.Q_w);
    const double Qw = g.x(w);
    const double A_w = s.A[w];
    const auto src = detail::support_of(s.psi_i, o.support_cutoff);
    const auto dst = detail::support_of(s.b_f, o.support_cutoff);
    std::vector<double> xs, xf;
    Eigen::VectorXcd psi(static_cast<Eigen::Index>(src.size())), b(static_cast<Eigen::Index>(dst.size()));
    for (std::size_t i = 0; i < src.size(); ++i) {
        xs.push_back(g.x(src[i]));
        psi[static_cast<Eigen::Index>(i)] = s.psi_i[src[i]];
    }
    for (std::size_t j = 0; j < dst.size(); ++j) {
        xf.push_back(g.x(dst[j]));
        b[static_cast<Eigen::Index>(j)] = s.b_f[dst[j]];
    }
    const auto direct = detail::semiclassical_block(xf, xs, s.t_i, s.t_f, V, s.params, o);
    const cplx den = b.dot(direct * psi) * dx * dx;
    cplx num = 0;
    if (A_w != 0) {
        const auto in = detail::semiclassical_block({Qw}, xs, s.t_i, s.t_w, V, s.params, o);
        const auto out = detail::semiclassical_block(xf, {Qw}, s.t_w, s.t_f, V, s.params, o);
        const cplx leg_in = (in * psi)(0) * dx;
        const cplx leg_out = b.dot(out.col(0)) * dx;
        num = A_w * leg_in * leg_out;
    }
    return detail::make_weak_value(num, den, s.floor);
}

/// Periodic orbit through the centre x0 (momentum p0) of a Gaussian of width sigma, probed at
/// x_p = q(t_p). Leg amplitudes include the Maslov phase and the stationary-phase envelope factor
/// sqrt(pi / (1/(4 sigma^2) - i S''/(2 hbar))) of the Gaussian integral over the free endpoint.
struct PeriodicOrbitSpec {
    double x0 = 0, p0 = 0, x_p = 0, t_p = 0, period = 0, sigma = 1;
    double hbar = 1;
    double action = 0;  // S_po over the full traversal
    cplx amplitude_out;   // x0 -> x_p
    cplx amplitude_back;  // x_p -> x0
    int maslov_out = 0, maslov_back = 0;
    double closure_residual = 0;
};

inline PeriodicOrbitSpec periodic_orbit_spec(const Potential &V, const PhysicalParams &params, double x0, double p0,
                                             double t_p, double period, double sigma,
                                             const TrajectoryOptions &topt = {}, double closure_tol = 1e-9) {
    if (!(t_p > 0 && t_p < period)) {
        throw InvalidArgument("periodic_orbit_spec: need 0 < t_p < period");
    }
    auto opt = topt;
    opt.store_samples = false;
    const auto out = integrate_trajectory(V, params, x0, p0, 0, t_p, opt);
    const auto back = integrate_trajectory(V, params, out.x_f, out.p_f, t_p, period, opt);
    PeriodicOrbitSpec po;
    po.x0 = x0;
    po.p0 = p0;
    po.x_p = out.x_f;
    po.t_p = t_p;
    po.period = period;
    po.sigma = sigma;
    po.hbar = params.hbar;
    po.closure_residual = std::hypot(back.x_f - x0, back.p_f - p0);
    if (po.closure_residual > closure_tol) {
        std::ostringstream os;
        os << "periodic_orbit_spec: orbit does not close (residual " << po.closure_residual << ")";
        throw InvalidArgument(os.str());
    }
    po.action = out.action + back.action;
    po.maslov_out = out.maslov;
    po.maslov_back = back.maslov;
    const double hbar = params.hbar;
    auto envelope = [&](double s2) {
        return std::sqrt(cplx(pi) / (1.0 / (4 * sigma * sigma) - I * s2 / (2 * hbar)));
    };
    po.amplitude_out = vanvleck_amplitude(out, params) * std::exp(-I * (pi / 2 * out.maslov)) *
                       envelope(out.d2S_dxi2());
    po.amplitude_back = vanvleck_amplitude(back, params) * std::exp(-I * (pi / 2 * back.maslov)) *
                        envelope(back.d2S_dxf2());
    return po;
}

namespace detail {

inline cplx scar_factor(const PeriodicOrbitSpec &po, double A_at_xp, cplx G0_at_x0) {
    struct Named {
        const char *name;
        cplx value;
    };
    for (const auto &f : {Named{"amplitude x0 -> x_p", po.amplitude_out}, Named{"A(x_p)", A_at_xp},
                          Named{"amplitude x_p -> x0", po.amplitude_back}, Named{"G(x0, 0)", G0_at_x0}}) {
        if (!(std::abs(f.value) > 0) || !std::isfinite(std::abs(f.value))) {
            throw InvalidArgument(std::string("scar_autocorrelation: vanishing or non-finite factor ") + f.name);
        }
    }
    return po.amplitude_out * A_at_xp * po.amplitude_back * std::exp(I * (po.action / po.hbar)) *
           std::norm(G0_at_x0);
}

}  // namespace detail

/// <G(0)|G(t_f)> from the weak value measured at x_p and the single periodic orbit. The weak value
/// is (orbit factor) / <G(0)|G(t_f)>, so the autocorrelation is the factor over the weak value.
inline cplx scar_autocorrelation(const WeakValue &wv, const PeriodicOrbitSpec &po, double A_at_xp, cplx G0_at_x0) {
    const cplx f = detail::scar_factor(po, A_at_xp, G0_at_x0);
    if (!(std::abs(wv.value) > 0)) {
        throw InvalidArgument("scar_autocorrelation: vanishing or non-finite factor weak value");
    }
    return f / wv.value;
}

/// Inverse relation: the weak value implied by a known autocorrelation.
inline cplx scar_weak_value(cplx autocorrelation, const PeriodicOrbitSpec &po, double A_at_xp, cplx G0_at_x0) {
    const cplx f = detail::scar_factor(po, A_at_xp, G0_at_x0);
    if (!(std::abs(autocorrelation) > 0)) {
        throw InvalidArgument("scar_weak_value: vanishing autocorrelation");
    }
    return f / autocorrelation;
}

}  // namespace wvpath
