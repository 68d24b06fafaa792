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

// System (q) x probe (X) dynamics under H_s + H_p + g(t) A(q) f(q, Q_w) P, with g(t) a rectangle
// of area g_total and width tau centred on t_w.
//
// The interaction is diagonal in (q, probe momentum k), so in the probe-momentum representation
// every column k evolves independently under the system Hamiltonian with the extra potential
// (g_total / tau) A f hbar k inside the window. Each column is propagated with Strang steps (the
// interaction sits with the potential in the half-steps). The probe kinetic term is a c-number per
// column and is applied exactly when it is not frozen.

#include <algorithm>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "wvpath/core.hpp"
#include "wvpath/parallel.hpp"
#include "wvpath/propagators.hpp"
#include "wvpath/weak_values.hpp"

namespace wvpath {

/// Joint amplitude Psi(q, X): rows index the system grid, columns the probe grid.
struct CoupledState {
    Grid system;
    Grid probe;
    Eigen::MatrixXcd amplitudes;

    static CoupledState product(const WaveFunction &psi, const WaveFunction &phi) {
        return {psi.grid(), phi.grid(), psi.amplitudes() * phi.amplitudes().transpose()};
    }

    double norm2() const {
        return amplitudes.squaredNorm() * system.dx() * probe.dx();
    }

    Eigen::VectorXd system_density() const {
        return amplitudes.rowwise().squaredNorm() * probe.dx();
    }
    Eigen::VectorXd probe_density() const {
        return amplitudes.colwise().squaredNorm().transpose() * system.dx();
    }

    /// Schmidt coefficients (squared, normalized to sum 1), largest first.
    Eigen::VectorXd schmidt_weights() const {
        Eigen::BDCSVD<Eigen::MatrixXcd> svd(amplitudes * std::sqrt(system.dx() * probe.dx()));
        Eigen::VectorXd w = svd.singularValues().cwiseAbs2();
        return w / w.sum();
    }

    /// Tr(rho_probe^2) / Tr(rho_probe)^2 of the reduced probe state.
    double probe_purity() const {
        const Eigen::MatrixXcd rho = amplitudes.adjoint() * amplitudes;
        const double tr = rho.trace().real();
        return rho.squaredNorm() / (tr * tr);
    }
};

struct CouplingWindow {
    double g_total = 0;
    double tau = 0.01;
    double t_w = 0;
    InteractionProfile profile = InteractionProfile::global();

    double t_on() const {
        return t_w - 0.5 * tau;
    }
    double t_off() const {
        return t_w + 0.5 * tau;
    }

    /// Throws on an impossible window; returns advisory warnings.
    std::vector<std::string> validate(double t_i, double t_f) const {
        if (!(tau > 0)) {
            throw InvalidArgument("CouplingWindow: tau must be positive");
        }
        if (!(t_i < t_on() && t_off() < t_f)) {
            throw InvalidArgument("CouplingWindow: interaction window must lie strictly inside (t_i, t_f)");
        }
        std::vector<std::string> warnings;
        if (tau > 0.1 * (t_f - t_i)) {
            warnings.push_back("interaction window tau exceeds 10% of t_f - t_i; the impulsive picture is degraded");
        }
        return warnings;
    }
};

struct CouplingOptions {
    PhysicalParams params = {};
    double dt_max = 0.01;
    bool frozen_probe = true;
    std::size_t min_window_steps = 1;
    Parallelism par = {};
};

/// Step counts of the three segments [t_i, t_on], [t_on, t_off], [t_off, t_f].
struct StepSchedule {
    double t_i = 0, t_on = 0, t_off = 0, t_f = 0;
    std::size_t n_before = 1, n_window = 1, n_after = 1;

    double dt_window() const {
        return (t_off - t_on) / static_cast<double>(n_window);
    }
};

/// Schedule honouring dt_max everywhere; the window is refined further until the strongest
/// interaction phase per step stays below 0.05 rad.
inline StepSchedule make_schedule(const CouplingWindow &w, double t_i, double t_f, const ConfigFunction &V,
                                  const ConfigFunction &coupled, const Grid &probe, const CouplingOptions &opt) {
    w.validate(t_i, t_f);
    StepSchedule s{t_i, w.t_on(), w.t_off(), t_f};
    s.n_before = steps_for(s.t_on - t_i, opt.dt_max);
    s.n_after = steps_for(t_f - s.t_off, opt.dt_max);
    const double k_max = probe.wavenumbers().cwiseAbs().maxCoeff();
    const double v_eff = V.values().cwiseAbs().maxCoeff() +
                         std::abs(w.g_total) / w.tau * coupled.values().cwiseAbs().maxCoeff() * opt.params.hbar * k_max;
    const auto by_phase = static_cast<std::size_t>(std::ceil(w.tau * v_eff / (0.05 * opt.params.hbar)));
    s.n_window = std::max({steps_for(w.tau, opt.dt_max), opt.min_window_steps, by_phase});
    return s;
}

struct CoupledEvolution {
    CoupledState state;
    StepSchedule schedule;
    std::vector<std::string> warnings;
    double norm_drift = 0;
};

namespace detail {

inline Eigen::VectorXcd sqrt_density(const Eigen::VectorXd &rho) {
    return rho.cwiseSqrt().cast<cplx>();
}

// Row-wise FFT over the probe index (X -> k) and back.
inline Eigen::MatrixXcd probe_fft(const Eigen::MatrixXcd &m, bool inverse) {
    Eigen::FFT<double> fft;
    Eigen::MatrixXcd out(m.rows(), m.cols());
    Eigen::VectorXcd in_row, out_row;
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        in_row = m.row(r).transpose();
        if (inverse) {
            fft.inv(out_row, in_row);
        } else {
            fft.fwd(out_row, in_row);
        }
        out.row(r) = out_row.transpose();
    }
    return out;
}

}  // namespace detail

/// Evolves the joint state from t_i to t_f with the system potential V and the coupling A f P.
inline CoupledEvolution coupled_evolve(const CoupledState &initial, const ConfigFunction &V, const ConfigFunction &A,
                                       const CouplingWindow &window, double t_i, double t_f,
                                       const CouplingOptions &opt = {}) {
    require_same_grid(initial.system, V.grid(), "coupled_evolve (V)");
    require_same_grid(initial.system, A.grid(), "coupled_evolve (A)");
    opt.params.validate();
    CoupledEvolution out{initial, {}, window.validate(t_i, t_f), 0};
    const ConfigFunction coupled = A * window.profile.sample(initial.system);
    const StepSchedule sched = make_schedule(window, t_i, t_f, V, coupled, initial.probe, opt);
    out.schedule = sched;

    const double norm0 = initial.norm2();
    const Eigen::VectorXd k = initial.probe.wavenumbers();
    const double hbar = opt.params.hbar;
    Eigen::MatrixXcd phi = detail::probe_fft(initial.amplitudes, false);
    const double strength = window.g_total / window.tau;
    const double dt_before = (sched.t_on - t_i) / static_cast<double>(sched.n_before);
    const double dt_after = (t_f - sched.t_off) / static_cast<double>(sched.n_after);

    // The segments without coupling share one propagator for all columns.
    SplitStep before(initial.system, V, dt_before, opt.params);
    SplitStep after(initial.system, V, dt_after, opt.params);
    auto all_columns = [&](SplitStep &stepper, std::size_t n) {
        for (Eigen::Index c = 0; c < phi.cols(); ++c) {
            Eigen::VectorXcd col = phi.col(c);
            stepper.apply(col, n);
            phi.col(c) = col;
        }
    };
    auto check_system = [&](const char *what) {
        Eigen::VectorXd rho = phi.rowwise().squaredNorm() * initial.probe.dx() / static_cast<double>(phi.cols());
        check_support(detail::sqrt_density(rho), initial.system, what);
    };

    all_columns(before, sched.n_before);
    check_system("coupled_evolve (system, before window)");
    parallel_for(static_cast<std::size_t>(phi.cols()), opt.par, [&](std::size_t c) {
        const auto ci = static_cast<Eigen::Index>(c);
        Eigen::VectorXd v_eff = V.values() + strength * hbar * k[ci] * coupled.values();
        SplitStep stepper(initial.system, ConfigFunction(initial.system, std::move(v_eff)), sched.dt_window(),
                          opt.params);
        Eigen::VectorXcd col = phi.col(ci);
        stepper.apply(col, sched.n_window);
        phi.col(ci) = col;
    });
    check_system("coupled_evolve (system, after window)");
    all_columns(after, sched.n_after);
    check_system("coupled_evolve (system, final)");
    if (!opt.frozen_probe) {
        for (Eigen::Index c = 0; c < phi.cols(); ++c) {
            phi.col(c) *= std::exp(-I * (hbar * k[c] * k[c] * (t_f - t_i) / (2 * opt.params.M)));
        }
    }
    out.state.amplitudes = detail::probe_fft(phi, true);
    check_support(detail::sqrt_density(out.state.probe_density()), initial.probe, "coupled_evolve (probe)");
    out.norm_drift = std::abs(out.state.norm2() - norm0);
    return out;
}

/// Spectral momentum operator -i hbar d/dX as a dense matrix on the probe grid.
inline Eigen::MatrixXcd momentum_matrix(const Grid &probe, double hbar) {
    const auto n = static_cast<Eigen::Index>(probe.size());
    Spectral sp(probe);
    Eigen::MatrixXcd P(n, n);
    Eigen::VectorXcd e, ek, col;
    for (Eigen::Index j = 0; j < n; ++j) {
        e = Eigen::VectorXcd::Unit(n, j);
        sp.forward(e, ek);
        ek = ek.cwiseProduct((hbar * sp.k()).cast<cplx>());
        sp.inverse(ek, col);
        P.col(j) = col;
    }
    return P;
}

/// First-order (in g) joint kernel K_p K_s + (-i g / hbar) [K_s A f K_s] [P K_p].
///
/// The bracketed system factor averages the interaction-point insertion over the window with the
/// same Strang schedule as coupled_evolve (a trapezoid over the window step boundaries), so the
/// difference to the exact evolution is purely second order in g.
class PerturbativeKernel {
   public:
    PerturbativeKernel(const Grid &system, const Grid &probe, const ConfigFunction &V, const ConfigFunction &A,
                       const CouplingWindow &window, const StepSchedule &sched, const CouplingOptions &opt = {})
        : system_(system), probe_(probe), g_(window.g_total), hbar_(opt.params.hbar) {
        const ConfigFunction coupled = A * window.profile.sample(system);
        max_coupled_ = coupled.values().cwiseAbs().maxCoeff();
        const double dtb = (sched.t_on - sched.t_i) / static_cast<double>(sched.n_before);
        const double dta = (sched.t_f - sched.t_off) / static_cast<double>(sched.n_after);
        const Eigen::MatrixXcd Ub = matrix_power(SplitStep(system, V, dtb, opt.params).step_matrix(), sched.n_before);
        const Eigen::MatrixXcd Ua = matrix_power(SplitStep(system, V, dta, opt.params).step_matrix(), sched.n_after);
        const Eigen::MatrixXcd Sw = SplitStep(system, V, sched.dt_window(), opt.params).step_matrix();

        // sum_j w_j S^(nw-j) W S^j accumulated as Y_j = S Y_(j-1) + w_j W S^j.
        const auto nw = sched.n_window;
        const Eigen::VectorXcd W = coupled.values().cast<cplx>();
        const double dtw = sched.dt_window() / window.tau;
        Eigen::MatrixXcd power = Eigen::MatrixXcd::Identity(Sw.rows(), Sw.cols());
        Eigen::MatrixXcd acc = 0.5 * dtw * W.asDiagonal() * power;
        for (std::size_t j = 1; j <= nw; ++j) {
            power = Sw * power;
            acc = Sw * acc;
            acc += (j == nw ? 0.5 : 1.0) * dtw * W.asDiagonal() * power;
        }
        U0_ = Ua * power * Ub;
        UW_ = Ua * acc * Ub;

        const Eigen::VectorXd k = probe.wavenumbers();
        Eigen::VectorXcd probe_phase = Eigen::VectorXcd::Ones(k.size());
        if (!opt.frozen_probe) {
            probe_phase = (-I * (hbar_ * (sched.t_f - sched.t_i) / (2 * opt.params.M)) * k.cwiseAbs2().cast<cplx>())
                              .array()
                              .exp()
                              .matrix();
        }
        const auto n = static_cast<Eigen::Index>(probe.size());
        Spectral sp(probe);
        Up_.resize(n, n);
        Eigen::VectorXcd e, ek, col;
        for (Eigen::Index j = 0; j < n; ++j) {
            e = Eigen::VectorXcd::Unit(n, j);
            sp.forward(e, ek);
            sp.inverse(ek.cwiseProduct(probe_phase), col);
            Up_.col(j) = col;
        }
        PUp_ = momentum_matrix(probe, hbar_) * Up_;
    }

    /// K(x2, X2, t_f; x1, X1, t_i) at grid indices, kernel normalization (U / (dx dX)).
    cplx operator()(std::size_t x2, std::size_t X2, std::size_t x1, std::size_t X1) const {
        const auto a = static_cast<Eigen::Index>(x2), b = static_cast<Eigen::Index>(x1);
        const auto A2 = static_cast<Eigen::Index>(X2), B1 = static_cast<Eigen::Index>(X1);
        const double norm = system_.dx() * probe_.dx();
        return (U0_(a, b) * Up_(A2, B1) + (-I * g_ / hbar_) * UW_(a, b) * PUp_(A2, B1)) / norm;
    }

    /// <b_f phi_test | K | psi_i phi_i>.
    cplx matrix_element(const WaveFunction &b_f, const WaveFunction &phi_test, const WaveFunction &psi_i,
                        const WaveFunction &phi_i) const {
        const double dx = system_.dx(), dX = probe_.dx();
        const cplx s0 = b_f.amplitudes().dot(U0_ * psi_i.amplitudes()) * dx;
        const cplx sw = b_f.amplitudes().dot(UW_ * psi_i.amplitudes()) * dx;
        const cplx p0 = phi_test.amplitudes().dot(Up_ * phi_i.amplitudes()) * dX;
        const cplx pw = phi_test.amplitudes().dot(PUp_ * phi_i.amplitudes()) * dX;
        return s0 * p0 + (-I * g_ / hbar_) * sw * pw;
    }

    /// First-order term alone.
    cplx first_order_element(const WaveFunction &b_f, const WaveFunction &phi_test, const WaveFunction &psi_i,
                             const WaveFunction &phi_i) const {
        const cplx sw = b_f.amplitudes().dot(UW_ * psi_i.amplitudes()) * system_.dx();
        const cplx pw = phi_test.amplitudes().dot(PUp_ * phi_i.amplitudes()) * probe_.dx();
        return (-I * g_ / hbar_) * sw * pw;
    }

    /// Empty when |g| max|A f| p_typ / hbar < 0.3 for the probe state, p_typ its rms momentum.
    std::vector<std::string> validity_warnings(const WaveFunction &phi_i) const {
        Spectral sp(probe_);
        Eigen::VectorXcd ft;
        sp.forward(phi_i.amplitudes(), ft);
        const Eigen::VectorXd w = ft.cwiseAbs2();
        const double p_rms = hbar_ * std::sqrt(w.dot(sp.k().cwiseAbs2()) / w.sum());
        const double measure = std::abs(g_) * max_coupled_ * p_rms / hbar_;
        if (measure < 0.3) {
            return {};
        }
        return {"first-order kernel outside its validity range: |g| max|A f| p_rms / hbar = " +
                std::to_string(measure)};
    }

   private:
    Grid system_;
    Grid probe_;
    double g_;
    double hbar_;
    double max_coupled_ = 0;
    Eigen::MatrixXcd U0_, UW_, Up_, PUp_;
};

struct PostselectedProbe {
    WaveFunction probe;  // unnormalized
    double success_probability;
};

/// phi_bf(X) = sum_q conj(b_f(q)) Psi(q, X) dq.
inline PostselectedProbe postselect_probe(const CoupledState &final_state, const WaveFunction &b_f,
                                          double floor = 1e-12) {
    require_same_grid(final_state.system, b_f.grid(), "postselect_probe");
    Eigen::VectorXcd phi = final_state.amplitudes.transpose() * b_f.amplitudes().conjugate() * final_state.system.dx();
    WaveFunction probe(final_state.probe, std::move(phi));
    const double p = probe.norm2();
    if (!(p > floor)) {
        throw PostselectionFailed("postselection failed: success probability " + std::to_string(p), p);
    }
    return {probe, p};
}

inline double pointer_mean_shift(const WaveFunction &before, const WaveFunction &after, double floor = 1e-12) {
    if (!(before.norm2() > floor && after.norm2() > floor)) {
        throw InvalidArgument("pointer_mean_shift: state norm below floor");
    }
    return position_mean(after) - position_mean(before);
}

/// Value at 0 of the polynomial through (x_i, y_i) (Neville).
inline double extrapolate_to_zero(std::vector<double> x, std::vector<double> y) {
    if (x.size() != y.size() || x.empty()) {
        throw InvalidArgument("extrapolate_to_zero: need matching, nonempty samples");
    }
    const std::size_t n = x.size();
    for (std::size_t m = 1; m < n; ++m) {
        for (std::size_t i = 0; i + m < n; ++i) {
            y[i] = (x[i + m] * y[i] - x[i] * y[i + 1]) / (x[i + m] - x[i]);
        }
    }
    return y[0];
}

struct PointerOptions {
    double g = 0.02;
    double tau = 0.002;
    Grid probe_grid = Grid(-10, 10, 256);
    double probe_sigma = 1.0;
    bool frozen_probe = true;
    Parallelism par = {};
};

struct PointerResult {
    double g = 0;
    double tau = 0;
    double shift = 0;
    double momentum_shift = 0;
    double success_probability = 0;
    double norm_drift = 0;
    cplx reference_weak_value;
    std::vector<std::string> warnings;
};

/// Full weak-measurement pipeline: product state, coupled evolution, postselection, readout.
inline PointerResult run_pointer_pipeline(const WeakMeasurementSetup &s, const PointerOptions &o) {
    s.validate();
    const auto phi_i = gaussian_wavepacket(o.probe_grid, 0, 0, o.probe_sigma, s.params.hbar);
    CouplingWindow window{o.g, o.tau, s.t_w, s.profile};
    CouplingOptions copt{s.params, s.dt_max, o.frozen_probe, 1, o.par};
    auto evo = coupled_evolve(CoupledState::product(s.psi_i, phi_i), s.V, s.A, window, s.t_i, s.t_f, copt);
    auto post = postselect_probe(evo.state, s.b_f);
    auto reference = phi_i;
    if (!o.frozen_probe) {
        reference = trotter_propagate(phi_i, ConfigFunction::constant(o.probe_grid, 0), s.t_f - s.t_i,
                                      1, {s.params.hbar, s.params.M, s.params.M});
    }
    PointerResult r;
    r.g = o.g;
    r.tau = o.tau;
    r.shift = pointer_mean_shift(reference, post.probe);
    r.momentum_shift = momentum_mean(post.probe, s.params.hbar) - momentum_mean(reference, s.params.hbar);
    r.success_probability = post.success_probability;
    r.norm_drift = evo.norm_drift;
    r.reference_weak_value = weak_value_operator(s, s.coupled_observable()).value;
    r.warnings = evo.warnings;
    return r;
}

inline nlohmann::json to_json(const PointerResult &r, const InteractionProfile &profile) {
    nlohmann::json j{{"g", r.g},
                     {"tau", r.tau},
                     {"profile", profile.kind_name()},
                     {"shift", r.shift},
                     {"momentum_shift", r.momentum_shift},
                     {"success_probability", r.success_probability},
                     {"norm_drift", r.norm_drift},
                     {"Re_Aw_ref", r.reference_weak_value.real()},
                     {"Im_Aw_ref", r.reference_weak_value.imag()},
                     {"warnings", r.warnings}};
    if (profile.kind != InteractionProfile::Kind::Global) {
        j["Q_w"] = profile.Q_w;
    }
    return j;
}

}  // namespace wvpath
