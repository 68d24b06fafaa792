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

// Weak values of multiplicative observables A(q) between a preselected state psi_i and a
// postselected state b_f, evaluated either by the two-state operator formula or by contracting
// the interaction-point integral against grid kernel matrices.

#include <cstdint>
#include <cstring>
#include <iomanip>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "wvpath/core.hpp"
#include "wvpath/propagators.hpp"

namespace wvpath {

/// Spatial range f(q, Q_w) of the system-probe interaction.
///
/// Contact is a single cell of height 1/dx at the grid point nearest Q_w. Gaussian is a normalized
/// Gaussian of standard deviation `width`. Global is f == 1 (plain A(q) P coupling), which has no
/// interaction point.
struct InteractionProfile {
    enum class Kind { Contact, Gaussian, Global };

    Kind kind = Kind::Contact;
    double Q_w = 0;
    double width = 0;

    static InteractionProfile contact(double Q_w) {
        return {Kind::Contact, Q_w, 0};
    }
    static InteractionProfile gaussian(double Q_w, double width) {
        return {Kind::Gaussian, Q_w, width};
    }
    static InteractionProfile global() {
        return {Kind::Global, 0, 0};
    }

    void validate(const Grid &grid) const {
        if (kind == Kind::Global) {
            return;
        }
        if (!grid.contains(Q_w)) {
            throw InvalidArgument("InteractionProfile: Q_w outside the grid");
        }
        if (kind == Kind::Gaussian && !(width >= grid.dx())) {
            throw InvalidArgument("InteractionProfile: Gaussian width must be at least dx");
        }
    }

    /// f(q) for an arbitrary position; `cell` is the width used for the contact cell.
    double value(double q, double cell) const {
        switch (kind) {
            case Kind::Contact:
                return std::abs(q - Q_w) < 0.5 * cell ? 1.0 / cell : 0.0;
            case Kind::Gaussian: {
                const double z = (q - Q_w) / width;
                return std::exp(-0.5 * z * z) / (std::sqrt(2 * pi) * width);
            }
            case Kind::Global:
                break;
        }
        return 1.0;
    }

    ConfigFunction sample(const Grid &grid) const {
        validate(grid);
        if (kind == Kind::Contact) {
            Eigen::VectorXd v = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(grid.size()));
            v[static_cast<Eigen::Index>(grid.index_of(Q_w))] = 1.0 / grid.dx();
            return ConfigFunction(grid, std::move(v));
        }
        return ConfigFunction::sample(grid, [this](double q) { return value(q, 0); });
    }

    std::string kind_name() const {
        switch (kind) {
            case Kind::Contact:
                return "contact";
            case Kind::Gaussian:
                return "gaussian";
            case Kind::Global:
                break;
        }
        return "global";
    }
};

inline constexpr double kDefaultDenominatorFloor = 1e-10;

struct WeakMeasurementSetup {
    WaveFunction psi_i;
    WaveFunction b_f;
    ConfigFunction A;
    ConfigFunction V;
    InteractionProfile profile = {};
    double t_i = 0;
    double t_w = 1;
    double t_f = 2;
    double g = 0;
    PhysicalParams params = {};
    double dt_max = 0.01;
    double floor = kDefaultDenominatorFloor;

    const Grid &grid() const {
        return psi_i.grid();
    }

    void validate() const {
        require_same_grid(grid(), b_f.grid(), "WeakMeasurementSetup (b_f)");
        require_same_grid(grid(), A.grid(), "WeakMeasurementSetup (A)");
        require_same_grid(grid(), V.grid(), "WeakMeasurementSetup (V)");
        params.validate();
        if (!(t_i < t_w && t_w < t_f)) {
            throw InvalidArgument("WeakMeasurementSetup: need t_i < t_w < t_f");
        }
        if (!(floor >= 0)) {
            throw InvalidArgument("WeakMeasurementSetup: negative denominator floor");
        }
        profile.validate(grid());
    }

    std::size_t steps_before() const {
        return steps_for(t_w - t_i, dt_max);
    }
    std::size_t steps_after() const {
        return steps_for(t_f - t_w, dt_max);
    }

    /// A(q) f(q, Q_w), the function the probe actually couples to.
    ConfigFunction coupled_observable() const {
        return A * profile.sample(grid());
    }
};

struct WeakValue {
    cplx value;
    cplx numerator;
    cplx denominator;
};

namespace detail {

inline WeakValue make_weak_value(cplx numerator, cplx denominator, double floor) {
    if (!(std::abs(denominator) > floor)) {
        std::ostringstream os;
        os << "denominator underflow: |<b_f|U|psi_i>| = " << std::abs(denominator) << " <= floor " << floor;
        throw DenominatorUnderflow(os.str(), numerator, denominator);
    }
    return {numerator / denominator, numerator, denominator};
}

inline cplx weighted_overlap(const Eigen::VectorXcd &bra, const Eigen::VectorXd &weight,
                             const Eigen::VectorXcd &ket, double dx) {
    return bra.cwiseProduct(weight.cast<cplx>()).dot(ket) * dx;  // dot() conjugates bra
}

}  // namespace detail

/// psi_i evolved to t_w.
inline WaveFunction forward_state(const WeakMeasurementSetup &s) {
    return trotter_propagate(s.psi_i, s.V, s.t_w - s.t_i, s.steps_before(), s.params);
}

/// b_f evolved backwards to t_w, i.e. U(t_f, t_w)^dagger b_f.
inline WaveFunction backward_state(const WeakMeasurementSetup &s) {
    return trotter_propagate(s.b_f, s.V, s.t_w - s.t_f, s.steps_after(), s.params);
}

/// <b_f| U(t_f,t_w) A U(t_w,t_i) |psi_i> / <b_f| U(t_f,t_i) |psi_i> for a diagonal observable.
///
/// The backward Strang step is the exact inverse of the forward one, so contracting at t_w equals
/// forward propagation to t_f without pushing a possibly singular A psi through the evolution.
inline WeakValue weak_value_operator(const WeakMeasurementSetup &s, const ConfigFunction &observable) {
    s.validate();
    require_same_grid(s.grid(), observable.grid(), "weak_value_operator");
    const auto phi = forward_state(s);
    const auto chi = backward_state(s);
    const double dx = s.grid().dx();
    const cplx num = detail::weighted_overlap(chi.amplitudes(), observable.values(), phi.amplitudes(), dx);
    const cplx den = inner_product(chi, phi);
    return detail::make_weak_value(num, den, s.floor);
}

inline WeakValue weak_value_operator(const WeakMeasurementSetup &s) {
    return weak_value_operator(s, s.A);
}

/// Kernel matrices K(t_w, t_i) and K(t_f, t_w) on the setup grid.
struct PathKernels {
    KernelMatrix before;
    KernelMatrix after;
};

inline PathKernels path_kernels(const WeakMeasurementSetup &s) {
    s.validate();
    return {kernel_matrix_trotter(s.grid(), s.V, s.t_i, s.t_w, s.steps_before(), s.params),
            kernel_matrix_trotter(s.grid(), s.V, s.t_w, s.t_f, s.steps_after(), s.params)};
}

namespace detail {

struct Contraction {
    Eigen::VectorXcd forward;   // (K_before psi_i)(q)
    Eigen::VectorXcd backward;  // sum_f conj(K_after(f, q)) b_f(f) dx
};

inline Contraction contract(const WeakMeasurementSetup &s, const PathKernels &k) {
    s.validate();
    require_same_grid(s.grid(), k.before.grid, "weak_value_path");
    require_same_grid(s.grid(), k.after.grid, "weak_value_path");
    if (k.before.t_from != s.t_i || k.before.t_to != s.t_w || k.after.t_from != s.t_w || k.after.t_to != s.t_f) {
        throw InvalidArgument("weak_value_path: kernel times do not match the setup");
    }
    const double dx = s.grid().dx();
    return {k.before.entries * s.psi_i.amplitudes() * dx, k.after.entries.adjoint() * s.b_f.amplitudes() * dx};
}

}  // namespace detail

/// Interaction-point integral: numerator sum over q of b_f* K(x_f;q) A(q) f(q,Q_w) K(q;x_i) psi_i
/// with dx measures, denominator the same without A f.
inline WeakValue weak_value_path(const WeakMeasurementSetup &s, const PathKernels &k) {
    const auto c = detail::contract(s, k);
    const double dx = s.grid().dx();
    const cplx num = detail::weighted_overlap(c.backward, s.coupled_observable().values(), c.forward, dx);
    const cplx den = c.backward.dot(c.forward) * dx;
    return detail::make_weak_value(num, den, s.floor);
}

inline WeakValue weak_value_path(const WeakMeasurementSetup &s) {
    return weak_value_path(s, path_kernels(s));
}

/// T_w / T at every grid position taken as the contact point: the share of the transition amplitude
/// carried by paths through that point at t_w. Integrates to 1 with measure dx.
inline Eigen::VectorXcd transition_ratio_profile(const WeakMeasurementSetup &s, const PathKernels &k) {
    const auto c = detail::contract(s, k);
    const cplx den = c.backward.dot(c.forward) * s.grid().dx();
    if (!(std::abs(den) > s.floor)) {
        throw DenominatorUnderflow("transition_ratio: denominator underflow", cplx(0), den);
    }
    return c.backward.conjugate().cwiseProduct(c.forward) / den;
}

/// T_w / T for the contact point of the setup. The contact weak value is A(Q_w) times this.
inline cplx transition_ratio(const WeakMeasurementSetup &s, const PathKernels &k) {
    if (s.profile.kind != InteractionProfile::Kind::Contact) {
        throw InvalidArgument("transition_ratio: requires a contact profile");
    }
    const auto c = detail::contract(s, k);
    const double dx = s.grid().dx();
    const auto w = static_cast<Eigen::Index>(s.grid().index_of(s.profile.Q_w));
    const cplx t_w = std::conj(c.backward[w]) * c.forward[w];
    const cplx t = c.backward.dot(c.forward) * dx;
    return detail::make_weak_value(t_w, t, s.floor).value;
}

inline cplx transition_ratio(const WeakMeasurementSetup &s) {
    return transition_ratio(s, path_kernels(s));
}

/// Recovers K(x_f, t_f; Q_w, t_w) from a contact weak value measured with a position
/// postselection at x_f, given the wavefunction at both times.
inline cplx infer_propagator(const WaveFunction &psi_known, const WaveFunction &psi_f_known, const WeakValue &wv,
                             double A_at_Qw, double Q_w, double x_f, double floor = kDefaultDenominatorFloor) {
    if (A_at_Qw == 0) {
        throw InvalidArgument("infer_propagator: A(Q_w) = 0 carries no information about the kernel");
    }
    const cplx at_coupling = psi_known.at(Q_w);
    const cplx at_final = psi_f_known.at(x_f);
    if (!(std::abs(at_coupling) > floor)) {
        throw DenominatorUnderflow("infer_propagator: node at coupling point", wv.value * at_final,
                                   A_at_Qw * at_coupling);
    }
    return wv.value * at_final / (A_at_Qw * at_coupling);
}

namespace detail {

class Fnv1a {
   public:
    void bytes(const void *data, std::size_t n) {
        const auto *p = static_cast<const unsigned char *>(data);
        for (std::size_t i = 0; i < n; ++i) {
            h_ = (h_ ^ p[i]) * 1099511628211ULL;
        }
    }
    void number(double v) {
        bytes(&v, sizeof v);
    }
    std::uint64_t value() const {
        return h_;
    }

   private:
    std::uint64_t h_ = 14695981039346656037ULL;
};

}  // namespace detail

/// FNV-1a digest of everything that determines a weak value.
inline std::string setup_hash(const WeakMeasurementSetup &s) {
    detail::Fnv1a h;
    const auto &g = s.grid();
    for (double v : {g.x_min(), g.x_max(), static_cast<double>(g.size()), s.t_i, s.t_w, s.t_f, s.g, s.params.hbar,
                     s.params.m, s.params.M, s.dt_max, s.profile.Q_w, s.profile.width,
                     static_cast<double>(static_cast<int>(s.profile.kind))}) {
        h.number(v);
    }
    h.bytes(s.psi_i.amplitudes().data(), sizeof(cplx) * static_cast<std::size_t>(s.psi_i.amplitudes().size()));
    h.bytes(s.b_f.amplitudes().data(), sizeof(cplx) * static_cast<std::size_t>(s.b_f.amplitudes().size()));
    h.bytes(s.A.values().data(), sizeof(double) * static_cast<std::size_t>(s.A.values().size()));
    h.bytes(s.V.values().data(), sizeof(double) * static_cast<std::size_t>(s.V.values().size()));
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << h.value();
    return os.str();
}

inline nlohmann::json to_json(const WeakValue &wv) {
    return {{"Re", wv.value.real()},
            {"Im", wv.value.imag()},
            {"numerator", {wv.numerator.real(), wv.numerator.imag()}},
            {"denominator", {wv.denominator.real(), wv.denominator.imag()}}};
}

inline nlohmann::json weak_value_record(const WeakMeasurementSetup &s, const WeakValue &wv) {
    auto j = to_json(wv);
    j["setup_hash"] = setup_hash(s);
    return j;
}

}  // namespace wvpath
