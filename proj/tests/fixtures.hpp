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

// Frozen parameter sets shared by the unit tests and the acceptance run. The values were found
// with the dense-matrix scan in tests/oracles/dense_weak_values.py and are not to be retuned here.

#include "wvpath/potential.hpp"
#include "wvpath/weak_values.hpp"

namespace wvpath::fixtures {

// Free particle, Gaussian (-2, p = 1) to Gaussian (+4), A = q, coupling at the midpoint t = 2.
inline const cplx kReferenceWeakValue{1.000000000000128e+00, 9.999999999998579e-01};

inline WeakMeasurementSetup reference_setup() {
    Grid g(-20, 20, 256);
    return {.psi_i = gaussian_wavepacket(g, -2, 1, 1),
            .b_f = gaussian_wavepacket(g, 4, 0, 1),
            .A = ConfigFunction::sample(g, [](double q) { return q; }),
            .V = ConfigFunction::constant(g, 0),
            .profile = InteractionProfile::global(),
            .t_i = 0,
            .t_w = 2,
            .t_f = 4,
            .dt_max = 0.05};
}

// Indicator window A = [q >= 0] with range [0, 1] and a weak value far below 0.
inline const cplx kAnomalousWeakValue{-5.288658111516932e-01, 1.834740814827170e-01};
inline constexpr double kAnomalousWeight = 0.8;
inline constexpr double kAnomalousPhase = 2.879793265790644;  // 11 * 2 pi / 24
inline constexpr double kAnomalousPostCenter = -0.8;

inline WeakMeasurementSetup anomalous_setup(std::size_t n_points = 256) {
    Grid g(-16, 16, n_points);
    auto psi = (gaussian_wavepacket(g, -3, 0, 1) +
                gaussian_wavepacket(g, 3, 0, 1).scaled(std::polar(kAnomalousWeight, kAnomalousPhase)))
                   .normalized();
    return {.psi_i = psi,
            .b_f = gaussian_wavepacket(g, kAnomalousPostCenter, 0, 1.5),
            .A = ConfigFunction::sample(g, [](double q) { return q >= 0 ? 1.0 : 0.0; }),
            .V = ConfigFunction::constant(g, 0),
            .profile = InteractionProfile::global(),
            .t_i = 0,
            .t_w = 0.5,
            .t_f = 1.0,
            .dt_max = 0.01};
}

}  // namespace wvpath::fixtures
