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

// Uncoupled propagators: closed-form free and harmonic kernels, the split-step (Strang) evolution
// used as the numerical realization of K_s for arbitrary V(q), grid kernel matrices, and a
// brute-force enumeration of lattice paths that serves as an oracle for the matrix products.

#include <cmath>
#include <cstddef>
#include <functional>
#include <sstream>
#include <vector>

#include "wvpath/core.hpp"
#include "wvpath/parallel.hpp"

namespace wvpath {

/// Free-particle propagator sqrt(m / (2 pi i hbar dt)) exp(i m (x2 - x1)^2 / (2 hbar dt)).
inline cplx free_kernel(double x2, double x1, double dt, const PhysicalParams &params = {}) {
    if (dt == 0) {
        throw InvalidArgument("free_kernel: dt = 0 is a delta function, not representable pointwise");
    }
    const double d = x2 - x1;
    const cplx prefactor = std::sqrt(cplx(params.m / (2 * pi * params.hbar * dt)) / I);
    return prefactor * std::exp(I * (params.m * d * d / (2 * params.hbar * dt)));
}

/// Mehler kernel of V = m omega^2 x^2 / 2, including the -pi/2 phase per focal point passed.
inline cplx harmonic_kernel(double x2, double x1, double dt, double omega, const PhysicalParams &params = {}) {
    if (dt == 0) {
        throw InvalidArgument("harmonic_kernel: dt = 0 is a delta function, not representable pointwise");
    }
    if (dt < 0) {
        return std::conj(harmonic_kernel(x2, x1, -dt, omega, params));
    }
    const double theta = omega * dt;
    const double s = std::sin(theta);
    if (std::abs(s) < 1e-9) {
        const double focal = std::round(theta / pi) * pi / omega;
        std::ostringstream os;
        os << "harmonic_kernel: focal point at t = " << focal << " (omega dt = " << theta << ")";
        throw CausticError(os.str(), focal);
    }
    const auto focal_points = static_cast<int>(std::floor(theta / pi));
    // (x1^2 + x2^2) cos - 2 x1 x2 written without cancellation for omega -> 0.
    const double half = std::sin(0.5 * theta);
    const double bracket = std::cos(theta) * (x2 - x1) * (x2 - x1) - 4 * x1 * x2 * half * half;
    const double action = params.m * omega * bracket / (2 * s);
    const double modulus = std::sqrt(params.m * omega / (2 * pi * params.hbar * std::abs(s)));
    const double phase = action / params.hbar - pi / 4 - pi / 2 * focal_points;
    return std::polar(modulus, phase);
}

/// Strang split-step propagator exp(-iV dt/2) exp(-iT dt) exp(-iV dt/2), kinetic step spectral.
class SplitStep {
   public:
    SplitStep(const Grid &grid, const ConfigFunction &V, double dt, const PhysicalParams &params)
        : spectral_(grid), dt_(dt) {
        require_same_grid(grid, V.grid(), "SplitStep");
        params.validate();
        const double vmax = V.values().cwiseAbs().maxCoeff();
        if (vmax * std::abs(dt) / params.hbar >= 0.1) {
            std::ostringstream os;
            os << "time step too large: max|V| dt / hbar = " << vmax * std::abs(dt) / params.hbar
               << " (needs < 0.1; increase n_steps)";
            throw InvalidArgument(os.str());
        }
        half_potential_ = (-0.5 * I * dt / params.hbar * V.values().cast<cplx>()).array().exp().matrix();
        const Eigen::ArrayXd k = spectral_.k().array();
        kinetic_ = (-I * (params.hbar * dt / (2 * params.m)) * (k * k).cast<cplx>()).exp().matrix();
    }

    /// Applies n steps in place. The inner half-potential factors are merged.
    void apply(Eigen::VectorXcd &psi, std::size_t n_steps, const Grid *check = nullptr) {
        if (n_steps == 0) {
            return;
        }
        Eigen::VectorXcd work;
        psi = psi.cwiseProduct(half_potential_);
        for (std::size_t s = 0; s < n_steps; ++s) {
            spectral_.forward(psi, work);
            work = work.cwiseProduct(kinetic_);
            spectral_.inverse(work, psi);
            if (s + 1 < n_steps) {
                psi = psi.cwiseProduct(half_potential_).cwiseProduct(half_potential_);
            }
            if (check != nullptr) {
                check_support(psi, *check, "trotter_propagate");
            }
        }
        psi = psi.cwiseProduct(half_potential_);
    }

    /// Dense matrix of one step acting on amplitude vectors.
    Eigen::MatrixXcd step_matrix() {
        const auto n = kinetic_.size();
        Eigen::VectorXcd column;
        spectral_.inverse(kinetic_, column);
        Eigen::MatrixXcd S(n, n);
        for (Eigen::Index l = 0; l < n; ++l) {
            for (Eigen::Index j = 0; j < n; ++j) {
                S(j, l) = half_potential_[j] * column[(j - l + n) % n] * half_potential_[l];
            }
        }
        return S;
    }

    double dt() const {
        return dt_;
    }

   private:
    Spectral spectral_;
    double dt_;
    Eigen::VectorXcd half_potential_;
    Eigen::VectorXcd kinetic_;
};

struct TrotterOptions {
    bool check_support = true;
};

/// Evolves psi over t_span with n_steps Strang steps. Norm-preserving to rounding.
inline WaveFunction trotter_propagate(const WaveFunction &psi, const ConfigFunction &V, double t_span,
                                      std::size_t n_steps, const PhysicalParams &params = {},
                                      TrotterOptions options = {}) {
    if (n_steps == 0) {
        throw InvalidArgument("trotter_propagate: n_steps must be positive");
    }
    if (t_span == 0) {
        return psi;
    }
    SplitStep stepper(psi.grid(), V, t_span / static_cast<double>(n_steps), params);
    Eigen::VectorXcd amps = psi.amplitudes();
    stepper.apply(amps, n_steps, options.check_support ? &psi.grid() : nullptr);
    return WaveFunction(psi.grid(), std::move(amps));
}

/// Step count that keeps every Strang step at or below dt_max.
inline std::size_t steps_for(double t_span, double dt_max) {
    if (!(dt_max > 0)) {
        throw InvalidArgument("steps_for: dt_max must be positive");
    }
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(std::abs(t_span) / dt_max - 1e-12)));
}

/// Propagator sampled on a grid: entries(i, j) = K(x_i, t_to; x_j, t_from).
///
/// Contractions carry an explicit dx: (K psi)(x_i) = sum_j K(i, j) psi_j dx, and composition is
/// K(t3, t1) = K(t3, t2) K(t2, t1) dx. For a unitary discrete evolution U, K = U / dx, so
/// sum_i conj(K(i, a)) K(i, b) dx = delta_ab / dx.
struct KernelMatrix {
    Grid grid;
    double t_from;
    double t_to;
    Eigen::MatrixXcd entries;

    cplx operator()(std::size_t i, std::size_t j) const {
        return entries(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    }

    WaveFunction apply(const WaveFunction &psi) const {
        require_same_grid(grid, psi.grid(), "KernelMatrix::apply");
        return WaveFunction(grid, entries * psi.amplitudes() * grid.dx());
    }

    /// this after earlier: K(t_to, earlier.t_from).
    KernelMatrix after(const KernelMatrix &earlier) const {
        require_same_grid(grid, earlier.grid, "KernelMatrix::after");
        return {grid, earlier.t_from, t_to, entries * earlier.entries * grid.dx()};
    }

    /// max |(K^dagger K dx^2 - 1)_{ab}|
    double unitarity_defect() const {
        const double dx = grid.dx();
        Eigen::MatrixXcd g = entries.adjoint() * entries * (dx * dx);
        g.diagonal().array() -= 1.0;
        return g.cwiseAbs().maxCoeff();
    }
};

inline Eigen::MatrixXcd matrix_power(Eigen::MatrixXcd base, std::size_t n) {
    Eigen::MatrixXcd result = Eigen::MatrixXcd::Identity(base.rows(), base.cols());
    bool first = true;
    while (n > 0) {
        if (n & 1U) {
            result = first ? base : Eigen::MatrixXcd(result * base);
            first = false;
        }
        n >>= 1U;
        if (n > 0) {
            base = base * base;
        }
    }
    return result;
}

/// Grid kernel of the same Strang evolution trotter_propagate applies.
inline KernelMatrix kernel_matrix_trotter(const Grid &grid, const ConfigFunction &V, double t_from, double t_to,
                                          std::size_t n_steps, const PhysicalParams &params = {}) {
    if (n_steps == 0) {
        throw InvalidArgument("kernel_matrix_trotter: n_steps must be positive");
    }
    const auto n = static_cast<Eigen::Index>(grid.size());
    if (t_to == t_from) {
        return {grid, t_from, t_to, Eigen::MatrixXcd::Identity(n, n) / grid.dx()};
    }
    SplitStep stepper(grid, V, (t_to - t_from) / static_cast<double>(n_steps), params);
    Eigen::MatrixXcd U = matrix_power(stepper.step_matrix(), n_steps);
    return {grid, t_from, t_to, U / grid.dx()};
}

/// Grid samples of a closed-form kernel fn(x2, x1, dt).
template <typename Fn>
KernelMatrix kernel_matrix_analytic(const Grid &grid, double t_from, double t_to, Fn &&fn,
                                    Parallelism par = {}) {
    const auto n = static_cast<Eigen::Index>(grid.size());
    Eigen::MatrixXcd K(n, n);
    const double dt = t_to - t_from;
    parallel_for(grid.size(), par, [&](std::size_t i) {
        for (std::size_t j = 0; j < grid.size(); ++j) {
            K(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = fn(grid.x(i), grid.x(j), dt);
        }
    });
    return {grid, t_from, t_to, std::move(K)};
}

/// Per-step kernel k(b, a) from grid point a to grid point b, in kernel units (1/length).
using StepKernel = std::function<cplx(std::size_t, std::size_t)>;

/// Exact free kernel times the midpoint potential phase exp(-i V((x_a + x_b)/2) dt / hbar).
inline StepKernel feynman_step_kernel(const ConfigFunction &V, double dt, const PhysicalParams &params = {}) {
    return [V, dt, params](std::size_t b, std::size_t a) {
        const Grid &g = V.grid();
        const double xa = g.x(a);
        const double xb = g.x(b);
        return free_kernel(xb, xa, dt, params) * std::exp(-I * V.interpolate(0.5 * (xa + xb)) * dt / params.hbar);
    };
}

/// One Strang step of the split-step engine, as a kernel (step matrix / dx).
inline StepKernel strang_step_kernel(const ConfigFunction &V, double dt, const PhysicalParams &params = {}) {
    SplitStep stepper(V.grid(), V, dt, params);
    Eigen::MatrixXcd S = stepper.step_matrix() / V.grid().dx();
    return [S = std::move(S)](std::size_t b, std::size_t a) {
        return S(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(a));
    };
}

/// Step kernel tabulated into a KernelMatrix over one step.
inline KernelMatrix step_kernel_matrix(const Grid &grid, const StepKernel &k, double dt) {
    const auto n = static_cast<Eigen::Index>(grid.size());
    Eigen::MatrixXcd K(n, n);
    for (Eigen::Index b = 0; b < n; ++b) {
        for (Eigen::Index a = 0; a < n; ++a) {
            K(b, a) = k(static_cast<std::size_t>(b), static_cast<std::size_t>(a));
        }
    }
    return {grid, 0.0, dt, std::move(K)};
}

inline constexpr double kDefaultPathBudget = 2e8;

/// Sum over every lattice path x1 -> q_1 -> ... -> q_{n-1} -> x2 of the product of step kernels,
/// each intermediate point integrated with weight dx. Enumerates n_points^(n_steps - 1) paths.
inline cplx lattice_path_sum(const Grid &grid, std::size_t i2, std::size_t i1, std::size_t n_steps,
                             const StepKernel &step, double budget = kDefaultPathBudget) {
    if (n_steps == 0 || n_steps > 4) {
        throw InvalidArgument("lattice_path_sum: n_steps must be in [1, 4]");
    }
    if (i1 >= grid.size() || i2 >= grid.size()) {
        throw InvalidArgument("lattice_path_sum: endpoint index outside grid");
    }
    const double paths = std::pow(static_cast<double>(grid.size()), static_cast<double>(n_steps - 1));
    if (paths > budget) {
        std::ostringstream os;
        os << "lattice_path_sum: " << paths << " paths exceed budget " << budget;
        throw BudgetExceeded(os.str());
    }
    const std::size_t n = grid.size();
    const double dx = grid.dx();
    // Tabulate the step kernel so that every path costs n_steps multiplications.
    std::vector<cplx> table(n * n);
    for (std::size_t b = 0; b < n; ++b) {
        for (std::size_t a = 0; a < n; ++a) {
            table[b * n + a] = step(b, a);
        }
    }
    auto k = [&](std::size_t b, std::size_t a) { return table[b * n + a]; };

    cplx total = 0;
    std::vector<std::size_t> path(n_steps + 1, 0);
    path.front() = i1;
    path.back() = i2;
    const std::size_t inner = n_steps - 1;
    std::vector<std::size_t> idx(inner, 0);
    while (true) {
        for (std::size_t s = 0; s < inner; ++s) {
            path[s + 1] = idx[s];
        }
        cplx amp = 1.0;
        for (std::size_t s = 0; s < n_steps; ++s) {
            amp *= k(path[s + 1], path[s]);
        }
        total += amp;
        std::size_t d = 0;
        while (d < inner && ++idx[d] == n) {
            idx[d++] = 0;
        }
        if (d == inner) {
            break;
        }
    }
    return total * std::pow(dx, static_cast<double>(inner));
}

}  // namespace wvpath
