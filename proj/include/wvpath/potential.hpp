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

#include <functional>
#include <string>

#include "wvpath/core.hpp"

namespace wvpath {

/// Analytic potential with first and second derivatives, for trajectory integration.
struct Potential {
    std::string name;
    std::function<double(double)> value;
    std::function<double(double)> gradient;
    std::function<double(double)> curvature;

    ConfigFunction sample(const Grid &grid) const {
        return ConfigFunction::sample(grid, value);
    }
};

inline Potential free_potential() {
    return {"free", [](double) { return 0.0; }, [](double) { return 0.0; }, [](double) { return 0.0; }};
}

/// V = m omega^2 x^2 / 2
inline Potential harmonic_potential(double omega, double m = 1.0) {
    const double k = m * omega * omega;
    return {"harmonic", [k](double x) { return 0.5 * k * x * x; }, [k](double x) { return k * x; },
            [k](double) { return k; }};
}

/// V = depth * ((x/a)^2 - 1)^2, minima at +/- a, barrier height depth.
inline Potential double_well_potential(double depth, double a) {
    return {"double_well",
            [=](double x) {
                double u = x * x / (a * a) - 1;
                return depth * u * u;
            },
            [=](double x) { return 4 * depth * x * (x * x / (a * a) - 1) / (a * a); },
            [=](double x) { return 4 * depth * (3 * x * x / (a * a) - 1) / (a * a); }};
}

/// V = lambda x^4
inline Potential quartic_potential(double lambda) {
    return {"quartic", [=](double x) { return lambda * x * x * x * x; },
            [=](double x) { return 4 * lambda * x * x * x; }, [=](double x) { return 12 * lambda * x * x; }};
}

}  // namespace wvpath
