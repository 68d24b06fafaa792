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


#include "wvpath/coupling.hpp"

#include "fixtures.hpp"
#include "gtest/gtest.h"
#include "test_util.hpp"
#include "wvpath/potential.hpp"

using namespace wvpath;
using test_util::rel_err;

namespace {

struct Rig {
    Grid sys = Grid(-14, 14, 256);
    Grid probe = Grid(-10, 10, 256);
    ConfigFunction V = harmonic_potential(0.5).sample(sys);
    WaveFunction psi = gaussian_wavepacket(sys, -1, 0.5, 1);
    WaveFunction phi = gaussian_wavepacket(probe, 0, 0, 1);
    double t_i = 0, t_f = 2;
    CouplingOptions opt{{}, 0.004};
};

// Independent evolution of the system with the same three-segment schedule.
WaveFunction evolve_segments(const WaveFunction &psi, const ConfigFunction &V, const StepSchedule &s) {
    auto a = trotter_propagate(psi, V, s.t_on - s.t_i, s.n_before);
    auto b = trotter_propagate(a, V, s.t_off - s.t_on, s.n_window);
    return trotter_propagate(b, V, s.t_f - s.t_off, s.n_after);
}

double max_abs_diff(const Eigen::MatrixXcd &a, const Eigen::MatrixXcd &b) {
    return (a - b).cwiseAbs().maxCoeff();
}

}  // namespace

TEST(Coupling, ZeroCouplingStaysProduct) {
    Rig r;
    auto A = ConfigFunction::sample(r.sys, [](double q) { return q; });
    CouplingWindow w{0, 0.01, 1.0, InteractionProfile::global()};
    auto evo = coupled_evolve(CoupledState::product(r.psi, r.phi), r.V, A, w, r.t_i, r.t_f, r.opt);
    auto expected = CoupledState::product(evolve_segments(r.psi, r.V, evo.schedule), r.phi);
    EXPECT_LT(max_abs_diff(evo.state.amplitudes, expected.amplitudes), 1e-12);
    EXPECT_LT(evo.state.schmidt_weights()[1], 1e-9);
    EXPECT_NEAR(evo.state.probe_purity(), 1.0, 1e-9);
    EXPECT_LT(evo.norm_drift, 1e-9);
}

TEST(Coupling, ConstantObservableTranslatesProbeRigidly) {
    Rig r;
    const double a = 0.7, g = 0.3;
    CouplingWindow w{g, 0.01, 1.0, InteractionProfile::global()};
    auto evo =
        coupled_evolve(CoupledState::product(r.psi, r.phi), r.V, ConfigFunction::constant(r.sys, a), w, r.t_i, r.t_f, r.opt);
    auto shifted = gaussian_wavepacket(r.probe, g * a, 0, 1);
    auto expected = CoupledState::product(evolve_segments(r.psi, r.V, evo.schedule), shifted);
    EXPECT_LT(max_abs_diff(evo.state.amplitudes, expected.amplitudes), 1e-9);
    WaveFunction marginal(r.probe, evo.state.probe_density().cwiseSqrt().cast<cplx>());
    EXPECT_NEAR(position_mean(marginal), g * a, 1e-9);
}

TEST(Coupling, FactorizesWhenObservableMissesTheState) {
    Rig r;
    auto A = ConfigFunction::sample(r.sys, [](double q) { return q > 12 ? 1.0 : 0.0; });
    CouplingWindow w{0.5, 0.01, 1.0, InteractionProfile::global()};
    auto evo = coupled_evolve(CoupledState::product(r.psi, r.phi), r.V, A, w, r.t_i, r.t_f, r.opt);
    EXPECT_NEAR(evo.state.probe_purity(), 1.0, 1e-9);
}

TEST(Coupling, WindowValidation) {
    CouplingWindow w{0.1, 0, 1.0, InteractionProfile::global()};
    EXPECT_THROW(w.validate(0, 2), InvalidArgument);
    w.tau = 0.5;
    EXPECT_EQ(w.validate(0, 2).size(), 1u);
    w.t_w = 1.9;
    EXPECT_THROW(w.validate(0, 2), InvalidArgument);
}

TEST(Coupling, PerturbativeKernelZerothOrder) {
    Rig r;
    auto A = ConfigFunction::sample(r.sys, [](double q) { return q; });
    CouplingWindow w{0, 0.01, 1.0, InteractionProfile::global()};
    auto evo = coupled_evolve(CoupledState::product(r.psi, r.phi), r.V, A, w, r.t_i, r.t_f, r.opt);
    PerturbativeKernel K(r.sys, r.probe, r.V, A, w, evo.schedule, r.opt);
    auto b = gaussian_wavepacket(r.sys, 0.5, 0, 1.2);
    auto phi_t = gaussian_wavepacket(r.probe, 0.3, 0, 1);
    const cplx exact = b.amplitudes().dot(evo.state.amplitudes * phi_t.amplitudes().conjugate()) * r.sys.dx() *
                       r.probe.dx();
    EXPECT_LT(std::abs(K.matrix_element(b, phi_t, r.psi, r.phi) - exact), 1e-12);
    // Frozen probe: the probe factor is the identity kernel.
    EXPECT_EQ(K(3, 5, 7, 6), cplx(0));
}

TEST(Coupling, PerturbativeKernelIsFirstOrder) {
    Rig r;
    auto A = ConfigFunction::sample(r.sys, [](double q) { return std::tanh(q); });
    auto b = gaussian_wavepacket(r.sys, 0.5, 0, 1.2);
    auto phi_t = gaussian_wavepacket(r.probe, 0.5, 0, 1);
    std::vector<double> errors;
    StepSchedule sched;
    for (double g : {0.05, 0.025}) {
        CouplingWindow w{g, 0.01, 1.0, InteractionProfile::global()};
        auto opt = r.opt;
        if (!errors.empty()) {
            opt.min_window_steps = sched.n_window;
        }
        auto evo = coupled_evolve(CoupledState::product(r.psi, r.phi), r.V, A, w, r.t_i, r.t_f, opt);
        if (errors.empty()) {
            sched = evo.schedule;
        }
        ASSERT_EQ(evo.schedule.n_window, sched.n_window);
        PerturbativeKernel K(r.sys, r.probe, r.V, A, w, evo.schedule, opt);
        EXPECT_TRUE(K.validity_warnings(r.phi).empty());
        const cplx exact = b.amplitudes().dot(evo.state.amplitudes * phi_t.amplitudes().conjugate()) * r.sys.dx() *
                           r.probe.dx();
        errors.push_back(std::abs(K.matrix_element(b, phi_t, r.psi, r.phi) - exact));
    }
    EXPECT_NEAR(errors[0] / errors[1], 4.0, 0.5);
}

TEST(Coupling, FirstOrderTermGaussianClosedForm) {
    Rig r;
    const double g = 0.04, sigma = 1, a = 0.6;
    CouplingWindow w{g, 0.01, 1.0, InteractionProfile::global()};
    auto one = ConfigFunction::constant(r.sys, 1);
    auto sched = make_schedule(w, r.t_i, r.t_f, r.V, one, r.probe, r.opt);
    PerturbativeKernel K(r.sys, r.probe, r.V, one, w, sched, r.opt);
    auto b = gaussian_wavepacket(r.sys, 0.5, 0, 1.2);
    auto phi_t = gaussian_wavepacket(r.probe, a, 0, sigma);
    const cplx transition = inner_product(b, evolve_segments(r.psi, r.V, sched));
    const cplx p_element = I * a / (4 * sigma * sigma) * std::exp(-a * a / (8 * sigma * sigma));
    const cplx expected = -I * g * transition * p_element;
    EXPECT_LT(rel_err(K.first_order_element(b, phi_t, r.psi, r.phi), expected), 1e-9);
}

TEST(Coupling, ValidityWarning) {
    Rig r;
    CouplingWindow w{5.0, 0.01, 1.0, InteractionProfile::global()};
    auto A = ConfigFunction::constant(r.sys, 1);
    StepSchedule sched{r.t_i, w.t_on(), w.t_off(), r.t_f, 250, 3, 250};
    PerturbativeKernel K(r.sys, r.probe, r.V, A, w, sched, r.opt);
    EXPECT_EQ(K.validity_warnings(r.phi).size(), 1u);
}

TEST(Coupling, PointerShiftForPreEqualsPost) {
    Rig r;
    auto A = ConfigFunction::sample(r.sys, [](double q) { return 1 + 0.5 * q; });
    WeakMeasurementSetup s{.psi_i = r.psi,
                           .b_f = r.psi,
                           .A = A,
                           .V = r.V,
                           .profile = InteractionProfile::global(),
                           .t_i = 0,
                           .t_w = 1,
                           .t_f = 2,
                           .dt_max = 0.004};
    PointerOptions o;
    o.probe_grid = r.probe;
    // Postselect on the state the system would reach without coupling (same schedule).
    CouplingWindow w{o.g, o.tau, s.t_w, s.profile};
    auto sched = make_schedule(w, 0, 2, r.V, A, r.probe, {{}, s.dt_max});
    s.b_f = evolve_segments(r.psi, r.V, sched);
    auto res = run_pointer_pipeline(s, o);
    const double expected = o.g * expectation(forward_state(s), A);
    EXPECT_NEAR(res.shift, expected, 0.02 * std::abs(expected));
}

TEST(Coupling, AnomalousShift) {
    auto s = fixtures::anomalous_setup();
    PointerOptions o;
    o.g = 0.02;
    auto res = run_pointer_pipeline(s, o);
    EXPECT_LT(res.norm_drift, 1e-9);
    EXPECT_NEAR(res.shift, o.g * fixtures::kAnomalousWeakValue.real(), std::abs(o.g) * 0.05);
    EXPECT_LT(res.shift / o.g, s.A.min());
}

TEST(Coupling, RichardsonRecoversWeakValue) {
    auto s = fixtures::anomalous_setup();
    std::vector<double> gs{0.01, 0.02, 0.04}, slopes;
    for (double g : gs) {
        PointerOptions o;
        o.g = g;
        slopes.push_back(run_pointer_pipeline(s, o).shift / g);
    }
    const double re = fixtures::kAnomalousWeakValue.real();
    const double extrapolated = extrapolate_to_zero(gs, slopes);
    EXPECT_LT(std::abs(extrapolated - re), 0.01 * std::abs(re));
    // Convergence order in g: error at 2g over error at g.
    const double order = std::log2(std::abs(slopes[1] - extrapolated) / std::abs(slopes[0] - extrapolated));
    EXPECT_GE(order, 0.9);
}

TEST(Coupling, ExtractedWeakValueIndependentOfProbeWidth) {
    auto s = fixtures::anomalous_setup();
    std::vector<double> gs{0.01, 0.02, 0.04};
    auto extract = [&](double sigma) {
        std::vector<double> slopes;
        for (double g : gs) {
            PointerOptions o;
            o.g = g;
            o.probe_sigma = sigma;
            slopes.push_back(run_pointer_pipeline(s, o).shift / g);
        }
        return extrapolate_to_zero(gs, slopes);
    };
    const double wide = extract(1.0), narrow = extract(0.5);
    EXPECT_LT(std::abs(wide - narrow), 0.005 * std::abs(wide));
}

TEST(Coupling, EffectiveCouplingIndependentOfTau) {
    auto s = fixtures::anomalous_setup();
    PointerOptions o;
    o.tau = 0.002;
    const double a = run_pointer_pipeline(s, o).shift;
    o.tau = 0.02;
    const double b = run_pointer_pipeline(s, o).shift;
    EXPECT_LT(std::abs(a - b), 0.01 * std::abs(a));
}

TEST(Coupling, UnfrozenProbeApproachesFrozenForHeavyProbe) {
    auto s = fixtures::anomalous_setup();
    PointerOptions o;
    const double frozen = run_pointer_pipeline(s, o).shift;
    o.frozen_probe = false;
    s.params.M = 1e6;
    EXPECT_NEAR(run_pointer_pipeline(s, o).shift, frozen, 1e-6);
}

TEST(Coupling, PointerMeanShift) {
    Grid g(-10, 10, 256);
    auto a = gaussian_wavepacket(g, 0, 0.3, 1);
    EXPECT_EQ(pointer_mean_shift(a, a), 0.0);
    auto b = gaussian_wavepacket(g, 1.25, 0.3, 1);
    EXPECT_NEAR(pointer_mean_shift(a, b), 1.25, 1e-9);
}

TEST(Coupling, PostselectionFailureIsReported) {
    Rig r;
    auto state = CoupledState::product(gaussian_wavepacket(r.sys, -6, 0, 1), r.phi);
    EXPECT_THROW(postselect_probe(state, gaussian_wavepacket(r.sys, 6, 0, 0.5)), PostselectionFailed);
}

TEST(Coupling, ExtrapolationIsExactForPolynomials) {
    auto f = [](double x) { return 2.5 - 3 * x + 7 * x * x; };
    EXPECT_NEAR(extrapolate_to_zero({0.01, 0.02, 0.04}, {f(0.01), f(0.02), f(0.04)}), 2.5, 1e-12);
}

TEST(Coupling, ResultJson) {
    PointerResult r;
    r.g = 0.02;
    r.shift = -0.01;
    auto j = to_json(r, InteractionProfile::contact(1.5));
    for (const char *key : {"g", "tau", "Q_w", "shift", "success_probability", "Re_Aw_ref"}) {
        EXPECT_TRUE(j.contains(key)) << key;
    }
}
