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


#include "wvpath/weak_values.hpp"

#include <random>

#include "fixtures.hpp"
#include "gtest/gtest.h"
#include "test_util.hpp"
#include "wvpath/potential.hpp"

using namespace wvpath;
using test_util::rel_err;

namespace {

WeakMeasurementSetup harmonic_setup(const WaveFunction &psi, const WaveFunction &b, const ConfigFunction &A,
                                    InteractionProfile profile) {
    const auto &g = psi.grid();
    return {.psi_i = psi,
            .b_f = b,
            .A = A,
            .V = harmonic_potential(0.5).sample(g),
            .profile = profile,
            .t_i = 0,
            .t_w = 1.7,
            .t_f = 4,
            .dt_max = 0.004};
}

// Free Gaussian evolved in closed form.
cplx free_gaussian(double x, double t, double x0, double p0, double sigma) {
    const cplx s = 1.0 + I * t / (2 * sigma * sigma);
    const double xc = x0 + p0 * t;
    return std::pow(2 * pi * sigma * sigma, -0.25) / std::sqrt(s) *
           std::exp(-(x - xc) * (x - xc) / (4 * sigma * sigma * s) + I * p0 * (x - 0.5 * p0 * t));
}

}  // namespace

TEST(WeakValues, IdentityObservableGivesOne) {
    Grid g(-14, 14, 256);
    std::mt19937_64 rng(11);
    auto psi = test_util::random_state(g, rng, 2);
    auto b = test_util::random_state(g, rng, 2);
    auto s = harmonic_setup(psi, b, ConfigFunction::constant(g, 1), InteractionProfile::global());
    EXPECT_LT(std::abs(weak_value_operator(s).value - 1.0), 1e-12);
    EXPECT_LT(std::abs(weak_value_path(s).value - 1.0), 1e-10);
}

TEST(WeakValues, PreEqualsPostIsExpectation) {
    Grid g(-14, 14, 256);
    std::mt19937_64 rng(5);
    auto psi = test_util::random_state(g, rng, 2);
    auto A = ConfigFunction::sample(g, [](double q) { return std::tanh(q) + 0.2 * q * q; });
    auto s = harmonic_setup(psi, psi, A, InteractionProfile::global());
    auto mid = forward_state(s);
    s.b_f = trotter_propagate(mid, s.V, s.t_f - s.t_w, s.steps_after(), s.params);
    for (const auto &wv : {weak_value_operator(s), weak_value_path(s)}) {
        EXPECT_LT(std::abs(wv.value.imag()), 1e-8);
        EXPECT_NEAR(wv.value.real(), expectation(mid, A), 1e-8);
        EXPECT_GE(wv.value.real(), A.min());
        EXPECT_LE(wv.value.real(), A.max());
    }
}

TEST(WeakValues, MatchesDenseOracle) {
    auto s = fixtures::reference_setup();
    auto op = weak_value_operator(s);
    auto path = weak_value_path(s);
    EXPECT_LT(rel_err(op.value, fixtures::kReferenceWeakValue), 1e-6);
    EXPECT_LT(rel_err(path.value, fixtures::kReferenceWeakValue), 1e-6);
}

TEST(WeakValues, CompletenessOverContactPoints) {
    Grid g(-14, 14, 256);
    std::mt19937_64 rng(3);
    auto s = harmonic_setup(test_util::random_state(g, rng, 2), test_util::random_state(g, rng, 2),
                            ConfigFunction::constant(g, 1), InteractionProfile::contact(0));
    auto k = path_kernels(s);
    auto den = weak_value_path(s, k).denominator;
    cplx total = 0;
    for (std::size_t i = 0; i < g.size(); ++i) {
        s.profile = InteractionProfile::contact(g.x(i));
        total += weak_value_path(s, k).numerator * g.dx();
    }
    EXPECT_LT(std::abs(total / den - 1.0), 1e-8);
    EXPECT_LT(std::abs(transition_ratio_profile(s, k).sum() * g.dx() - 1.0), 1e-8);
}

TEST(WeakValues, ContactRouteEquivalence) {
    std::mt19937_64 rng(2024);
    for (int free = 0; free < 2; ++free) {
        Grid g = free ? Grid(-25, 25, 256) : Grid(-14, 14, 256);
        for (int trial = 0; trial < 6; ++trial) {
            auto psi = test_util::random_state(g, rng, 2);
            auto b = test_util::random_state(g, rng, 2);
            std::uniform_real_distribution<double> u(-1, 1);
            const double a = u(rng), c = u(rng);
            auto A = ConfigFunction::sample(g, [=](double q) { return 1 + a * q + c * std::sin(q); });
            auto s = harmonic_setup(psi, b, A, InteractionProfile::contact(2 * u(rng)));
            if (free) {
                s.V = ConfigFunction::constant(g, 0);
                s.dt_max = 0.05;
            }
            auto k = path_kernels(s);
            auto path = weak_value_path(s, k);
            auto op = weak_value_operator(s, s.coupled_observable());
            EXPECT_LT(rel_err(path.value, op.value), 1e-8) << "free=" << free << " trial=" << trial;
            const double a_qw = A[g.index_of(s.profile.Q_w)];
            EXPECT_LT(rel_err(path.value, a_qw * transition_ratio(s, k)), 1e-12);
        }
    }
}

TEST(WeakValues, AnomalousFixture) {
    auto s = fixtures::anomalous_setup();
    auto op = weak_value_operator(s);
    auto path = weak_value_path(s);
    EXPECT_LT(rel_err(op.value, fixtures::kAnomalousWeakValue), 1e-6);
    EXPECT_LT(rel_err(path.value, fixtures::kAnomalousWeakValue), 1e-6);
    EXPECT_EQ(s.A.min(), 0.0);
    EXPECT_EQ(s.A.max(), 1.0);
    EXPECT_LT(op.value.real(), s.A.min() - 0.3);
}

TEST(WeakValues, TransitionRatioOfPeakedState) {
    Grid g(-14, 14, 561);
    const double Qw = 0.5, sigma = 2 * g.dx();
    auto peaked = WaveFunction::sample(g, [&](double x) {
                      return std::exp(-(x - Qw) * (x - Qw) / (4 * sigma * sigma));
                  }).normalized();
    auto V = harmonic_potential(0.4).sample(g);
    const double dt_max = 0.004;
    auto psi = trotter_propagate(peaked, V, -0.3, steps_for(0.3, dt_max));
    WeakMeasurementSetup s{.psi_i = psi,
                           .b_f = gaussian_wavepacket(g, 1, -0.5, 1),
                           .A = ConfigFunction::constant(g, 1),
                           .V = V,
                           .profile = InteractionProfile::contact(Qw),
                           .t_i = 0,
                           .t_w = 0.3,
                           .t_f = 1.3,
                           .dt_max = dt_max};
    auto ratio = transition_ratio(s);
    auto phi = forward_state(s);
    auto chi = backward_state(s);
    const auto w = g.index_of(Qw);
    EXPECT_LT(std::abs(phi[w] - peaked[w]), 1e-8 * std::abs(peaked[w]));
    const cplx direct = std::conj(chi[w]) * phi[w] / inner_product(chi, phi);
    EXPECT_LT(rel_err(ratio, direct), 1e-6);
}

TEST(WeakValues, RatioVanishesAtNode) {
    Grid g(-12, 12, 241);
    auto odd = (gaussian_wavepacket(g, -2, 0, 1) + gaussian_wavepacket(g, 2, 0, 1).scaled(-1)).normalized();
    auto s = harmonic_setup(odd, gaussian_wavepacket(g, 1, 0.3, 1), ConfigFunction::constant(g, 1),
                            InteractionProfile::contact(0));
    s.dt_max = 0.005;
    EXPECT_LT(std::abs(transition_ratio(s)), 1e-10);
}

TEST(WeakValues, OrthogonalPostselectionFailsLoudly) {
    Grid g(-12, 12, 241);
    auto even = gaussian_wavepacket(g, 0, 0, 1);
    auto odd = (gaussian_wavepacket(g, -2, 0, 1) + gaussian_wavepacket(g, 2, 0, 1).scaled(-1)).normalized();
    auto s = harmonic_setup(even, odd, ConfigFunction::sample(g, [](double q) { return q; }),
                            InteractionProfile::global());
    s.dt_max = 0.005;
    try {
        weak_value_operator(s);
        FAIL() << "expected DenominatorUnderflow";
    } catch (const DenominatorUnderflow &e) {
        EXPECT_LT(std::abs(e.denominator), 1e-10);
        EXPECT_GT(std::abs(e.numerator), 1e-3);
    }
    EXPECT_THROW(weak_value_path(s), DenominatorUnderflow);
}

TEST(WeakValues, InfersFreeKernel) {
    Grid g(-30, 30, 1201);
    const double x0 = 0, p0 = 0.5, sigma = 1, t_w = 1, t_f = 2;
    auto A = ConfigFunction::sample(g, [](double q) { return 1 + 0.5 * q; });
    PathKernels k{kernel_matrix_analytic(g, 0, t_w, [](double a, double b, double dt) { return free_kernel(a, b, dt); }),
                  kernel_matrix_analytic(g, t_w, t_f,
                                         [](double a, double b, double dt) { return free_kernel(a, b, dt); })};
    auto psi_w = WaveFunction::sample(g, [&](double x) { return free_gaussian(x, t_w, x0, p0, sigma); });
    auto psi_f = WaveFunction::sample(g, [&](double x) { return free_gaussian(x, t_f, x0, p0, sigma); });
    double worst = 0;
    for (double Qw : {-1.0, -0.5, 0.0, 0.5, 1.5}) {
        for (double xf : {-1.0, 0.0, 0.5, 1.0, 2.0}) {
            WeakMeasurementSetup s{.psi_i = gaussian_wavepacket(g, x0, p0, sigma),
                                   .b_f = WaveFunction::cell(g, xf),
                                   .A = A,
                                   .V = ConfigFunction::constant(g, 0),
                                   .profile = InteractionProfile::contact(Qw),
                                   .t_i = 0,
                                   .t_w = t_w,
                                   .t_f = t_f};
            auto wv = weak_value_path(s, k);
            auto K = infer_propagator(psi_w, psi_f, wv, A[g.index_of(Qw)], Qw, xf);
            worst = std::max(worst, rel_err(K, free_kernel(xf, Qw, t_f - t_w)));
        }
    }
    EXPECT_LT(worst, 1e-6);
}

TEST(WeakValues, InfersHarmonicKernel) {
    Grid g(-15, 15, 1001);
    const double omega = 1, t_w = 1, t_f = 2.2;
    auto mehler = [&](double a, double b, double dt) { return harmonic_kernel(a, b, dt, omega); };
    PathKernels k{kernel_matrix_analytic(g, 0, t_w, mehler), kernel_matrix_analytic(g, t_w, t_f, mehler)};
    auto V = harmonic_potential(omega).sample(g);
    auto psi0 = gaussian_wavepacket(g, 0.5, 0.3, 0.9);
    const double dt_max = 2e-4;
    auto psi_w = trotter_propagate(psi0, V, t_w, steps_for(t_w, dt_max));
    auto psi_f = trotter_propagate(psi_w, V, t_f - t_w, steps_for(t_f - t_w, dt_max));
    double worst = 0;
    for (double q : {-1.0, -0.5, 0.0, 0.5, 1.0}) {
        for (double x : {-1.0, -0.5, 0.0, 0.5, 1.0}) {
            // The contact cell and the position filter sit on grid points.
            const double Qw = g.x(g.index_of(q)), xf = g.x(g.index_of(x));
            WeakMeasurementSetup s{.psi_i = psi0,
                                   .b_f = WaveFunction::cell(g, xf),
                                   .A = ConfigFunction::constant(g, 2),
                                   .V = V,
                                   .profile = InteractionProfile::contact(Qw),
                                   .t_i = 0,
                                   .t_w = t_w,
                                   .t_f = t_f};
            auto wv = weak_value_path(s, k);
            auto K = infer_propagator(psi_w, psi_f, wv, 2, Qw, xf);
            worst = std::max(worst, rel_err(K, harmonic_kernel(xf, Qw, t_f - t_w, omega)));
        }
    }
    EXPECT_LT(worst, 1e-5);
}

TEST(WeakValues, InferenceIsAlgebraicInverse) {
    Grid g(-10, 10, 201);
    auto psi = gaussian_wavepacket(g, 0, 1, 1);
    WeakValue wv{{0.3, -0.7}, {}, {}};
    auto K = infer_propagator(psi, psi, wv, 1, 0.4, 0.4);
    EXPECT_LT(std::abs(K * psi.at(0.4) / psi.at(0.4) - wv.value), 1e-15);
    auto odd = WaveFunction::sample(g, [](double x) { return cplx(x * std::exp(-x * x)); });
    EXPECT_THROW(infer_propagator(odd, psi, wv, 1, 0, 0.4), DenominatorUnderflow);
    EXPECT_THROW(infer_propagator(psi, psi, wv, 0, 0.4, 0.4), InvalidArgument);
}

TEST(WeakValues, ProfilesAndValidation) {
    Grid g(-10, 10, 201);
    auto gp = InteractionProfile::gaussian(1, 0.3).sample(g);
    EXPECT_NEAR(gp.values().sum() * g.dx(), 1.0, 1e-10);
    auto cp = InteractionProfile::contact(1).sample(g);
    EXPECT_NEAR(cp.values().sum() * g.dx(), 1.0, 1e-14);
    EXPECT_THROW(InteractionProfile::gaussian(0, 0.5 * g.dx()).sample(g), InvalidArgument);
    EXPECT_THROW(InteractionProfile::contact(20).sample(g), InvalidArgument);

    auto s = fixtures::reference_setup();
    s.t_w = s.t_f;
    EXPECT_THROW(weak_value_operator(s), InvalidArgument);
}

TEST(WeakValues, RecordCarriesHash) {
    auto s = fixtures::reference_setup();
    auto rec = weak_value_record(s, weak_value_operator(s));
    EXPECT_EQ(rec["setup_hash"].get<std::string>().size(), 16u);
    EXPECT_EQ(rec["setup_hash"], setup_hash(fixtures::reference_setup()));
    EXPECT_NEAR(rec["Re"].get<double>(), 1.0, 1e-6);
    auto other = s;
    other.t_w = 1.5;
    EXPECT_NE(setup_hash(other), setup_hash(s));
}
