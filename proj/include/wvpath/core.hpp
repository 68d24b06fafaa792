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

// Grids, sampled wavefunctions and configuration-space functions shared by every module.
//
// Amplitudes are samples psi(x_j) of <x|psi>, and all integrals are Riemann sums with weight dx:
//   <a|b> = sum_j conj(a_j) b_j dx.
// Kernel matrices elsewhere carry the matching 1/dx so that K contracted with dx reproduces the
// discrete evolution operator.

#include <Eigen/Dense>
#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <sstream>
#include <utility>

#include "wvpath/errors.hpp"

namespace wvpath {

using cplx = std::complex<double>;
inline constexpr cplx I{0.0, 1.0};
inline constexpr double pi = std::numbers::pi;

/// Uniform 1D grid including both end points.
class Grid {
   public:
    Grid(double x_min, double x_max, std::size_t n_points) : x_min_(x_min), x_max_(x_max), n_(n_points) {
        if (n_points < 8) {
            throw InvalidArgument("Grid needs at least 8 points, got " + std::to_string(n_points));
        }
        if (!(x_max > x_min) || !std::isfinite(x_min) || !std::isfinite(x_max)) {
            throw InvalidArgument("Grid needs finite x_min < x_max");
        }
        dx_ = (x_max - x_min) / static_cast<double>(n_points - 1);
    }

    double x_min() const {
        return x_min_;
    }
    double x_max() const {
        return x_max_;
    }
    std::size_t size() const {
        return n_;
    }
    double dx() const {
        return dx_;
    }
    double x(std::size_t i) const {
        return x_min_ + dx_ * static_cast<double>(i);
    }
    /// Period of the spectral (periodic) extension of the grid.
    double period() const {
        return dx_ * static_cast<double>(n_);
    }
    bool contains(double x) const {
        return x >= x_min_ - 0.5 * dx_ && x <= x_max_ + 0.5 * dx_;
    }
    /// Index of the grid point nearest to x.
    std::size_t index_of(double x) const {
        if (!contains(x)) {
            std::ostringstream os;
            os << "position " << x << " outside grid [" << x_min_ << ", " << x_max_ << "]";
            throw InvalidArgument(os.str());
        }
        auto i = static_cast<long>(std::lround((x - x_min_) / dx_));
        return static_cast<std::size_t>(std::clamp<long>(i, 0, static_cast<long>(n_) - 1));
    }

    Eigen::VectorXd points() const {
        return Eigen::VectorXd::LinSpaced(static_cast<Eigen::Index>(n_), x_min_, x_min_ + dx_ * double(n_ - 1));
    }

    /// Angular wavenumbers of the discrete Fourier modes in FFT order.
    Eigen::VectorXd wavenumbers() const {
        Eigen::VectorXd k(static_cast<Eigen::Index>(n_));
        const double dk = 2.0 * pi / period();
        const auto n = static_cast<long>(n_);
        for (long j = 0; j < n; ++j) {
            long m = j <= (n - 1) / 2 ? j : j - n;
            k[j] = dk * static_cast<double>(m);
        }
        return k;
    }

    friend bool operator==(const Grid &a, const Grid &b) {
        return a.n_ == b.n_ && a.x_min_ == b.x_min_ && a.x_max_ == b.x_max_;
    }

   private:
    double x_min_;
    double x_max_;
    std::size_t n_;
    double dx_;
};

struct PhysicalParams {
    double hbar = 1.0;
    double m = 1.0;  ///< system mass
    double M = 1.0;  ///< probe mass

    void validate() const {
        if (!(hbar > 0) || !(m > 0) || !(M > 0)) {
            throw InvalidArgument("PhysicalParams: hbar, m and M must be strictly positive");
        }
    }
};

inline void require_same_grid(const Grid &a, const Grid &b, const char *what) {
    if (!(a == b)) {
        throw InvalidArgument(std::string(what) + ": grid mismatch");
    }
}

/// Real function sampled on a grid: observables A(q), potentials V(q), interaction profiles.
class ConfigFunction {
   public:
    ConfigFunction(Grid grid, Eigen::VectorXd values) : grid_(std::move(grid)), values_(std::move(values)) {
        if (static_cast<std::size_t>(values_.size()) != grid_.size()) {
            throw InvalidArgument("ConfigFunction: value count does not match grid");
        }
        if (!values_.allFinite()) {
            throw InvalidArgument("ConfigFunction: non-finite value");
        }
    }

    template <typename Fn>
    static ConfigFunction sample(const Grid &grid, Fn &&fn) {
        Eigen::VectorXd v(static_cast<Eigen::Index>(grid.size()));
        for (std::size_t i = 0; i < grid.size(); ++i) {
            v[static_cast<Eigen::Index>(i)] = fn(grid.x(i));
        }
        return ConfigFunction(grid, std::move(v));
    }

    static ConfigFunction constant(const Grid &grid, double c) {
        return ConfigFunction(grid, Eigen::VectorXd::Constant(static_cast<Eigen::Index>(grid.size()), c));
    }

    const Grid &grid() const {
        return grid_;
    }
    const Eigen::VectorXd &values() const {
        return values_;
    }
    double operator[](std::size_t i) const {
        return values_[static_cast<Eigen::Index>(i)];
    }

    /// Linear interpolation; constant extension beyond the end points.
    double interpolate(double x) const {
        double s = (x - grid_.x_min()) / grid_.dx();
        if (s <= 0) {
            return values_[0];
        }
        const auto last = static_cast<double>(grid_.size() - 1);
        if (s >= last) {
            return values_[values_.size() - 1];
        }
        auto i = static_cast<Eigen::Index>(std::floor(s));
        double frac = s - static_cast<double>(i);
        return (1 - frac) * values_[i] + frac * values_[i + 1];
    }

    double min() const {
        return values_.minCoeff();
    }
    double max() const {
        return values_.maxCoeff();
    }

    friend ConfigFunction operator*(const ConfigFunction &a, const ConfigFunction &b) {
        require_same_grid(a.grid_, b.grid_, "ConfigFunction product");
        return ConfigFunction(a.grid_, a.values_.cwiseProduct(b.values_));
    }

   private:
    Grid grid_;
    Eigen::VectorXd values_;
};

/// Complex amplitudes psi(x_j) on a grid.
class WaveFunction {
   public:
    WaveFunction(Grid grid, Eigen::VectorXcd amplitudes) : grid_(std::move(grid)), amps_(std::move(amplitudes)) {
        if (static_cast<std::size_t>(amps_.size()) != grid_.size()) {
            throw InvalidArgument("WaveFunction: amplitude count does not match grid");
        }
        if (!amps_.allFinite()) {
            throw InvalidArgument("WaveFunction: non-finite amplitude");
        }
    }

    template <typename Fn>
    static WaveFunction sample(const Grid &grid, Fn &&fn) {
        Eigen::VectorXcd v(static_cast<Eigen::Index>(grid.size()));
        for (std::size_t i = 0; i < grid.size(); ++i) {
            v[static_cast<Eigen::Index>(i)] = fn(grid.x(i));
        }
        return WaveFunction(grid, std::move(v));
    }

    /// Unit-norm state concentrated in the single cell nearest to x (height 1/sqrt(dx)).
    static WaveFunction cell(const Grid &grid, double x) {
        Eigen::VectorXcd v = Eigen::VectorXcd::Zero(static_cast<Eigen::Index>(grid.size()));
        v[static_cast<Eigen::Index>(grid.index_of(x))] = 1.0 / std::sqrt(grid.dx());
        return WaveFunction(grid, std::move(v));
    }

    const Grid &grid() const {
        return grid_;
    }
    const Eigen::VectorXcd &amplitudes() const {
        return amps_;
    }
    cplx operator[](std::size_t i) const {
        return amps_[static_cast<Eigen::Index>(i)];
    }
    /// Amplitude at the grid point nearest to x.
    cplx at(double x) const {
        return amps_[static_cast<Eigen::Index>(grid_.index_of(x))];
    }

    double norm2() const {
        return amps_.squaredNorm() * grid_.dx();
    }

    WaveFunction normalized() const {
        double n2 = norm2();
        if (!(n2 > 0)) {
            throw InvalidArgument("cannot normalize a zero wavefunction");
        }
        return WaveFunction(grid_, amps_ / std::sqrt(n2));
    }

    WaveFunction scaled(cplx c) const {
        return WaveFunction(grid_, amps_ * c);
    }

    friend WaveFunction operator+(const WaveFunction &a, const WaveFunction &b) {
        require_same_grid(a.grid_, b.grid_, "WaveFunction sum");
        return WaveFunction(a.grid_, a.amps_ + b.amps_);
    }

    /// Pointwise product with a configuration-space function (diagonal operator).
    WaveFunction multiplied(const ConfigFunction &f) const {
        require_same_grid(grid_, f.grid(), "WaveFunction::multiplied");
        return WaveFunction(grid_, amps_.cwiseProduct(f.values().cast<cplx>()));
    }

   private:
    Grid grid_;
    Eigen::VectorXcd amps_;
};

inline constexpr double kNormTolerance = 1e-10;

/// Riemann-sum inner product sum_j conj(bra_j) ket_j dx.
inline cplx inner_product(const WaveFunction &bra, const WaveFunction &ket) {
    require_same_grid(bra.grid(), ket.grid(), "inner_product");
    return bra.amplitudes().dot(ket.amplitudes()) * bra.grid().dx();
}

inline void require_normalized(const WaveFunction &psi, const char *what, double tol = 1e-8) {
    double n2 = psi.norm2();
    if (std::abs(n2 - 1.0) > tol) {
        std::ostringstream os;
        os << what << ": state not normalized (norm^2 = " << n2 << ")";
        throw InvalidArgument(os.str());
    }
}

/// <psi|A|psi> for a multiplicative observable A(q).
inline double expectation(const WaveFunction &psi, const ConfigFunction &A) {
    require_same_grid(psi.grid(), A.grid(), "expectation");
    require_normalized(psi, "expectation");
    return psi.amplitudes().cwiseAbs2().dot(A.values()) * psi.grid().dx();
}

/// Position mean of an arbitrary (possibly unnormalized) state.
inline double position_mean(const WaveFunction &psi) {
    Eigen::VectorXd rho = psi.amplitudes().cwiseAbs2();
    double total = rho.sum();
    if (!(total > 0)) {
        throw InvalidArgument("position_mean of a zero state");
    }
    return rho.dot(psi.grid().points()) / total;
}

/// Thin wrapper over Eigen's FFT with unitary-pair conventions (forward unscaled, inverse 1/N).
class Spectral {
   public:
    explicit Spectral(const Grid &grid) : k_(grid.wavenumbers()) {
    }

    const Eigen::VectorXd &k() const {
        return k_;
    }

    void forward(const Eigen::VectorXcd &in, Eigen::VectorXcd &out) {
        fft_.fwd(out, in);
    }
    void inverse(const Eigen::VectorXcd &in, Eigen::VectorXcd &out) {
        fft_.inv(out, in);
    }

   private:
    Eigen::VectorXd k_;
    Eigen::FFT<double> fft_;
};

/// Mean momentum <psi|-i hbar d/dx|psi> / <psi|psi> using the spectral derivative.
inline double momentum_mean(const WaveFunction &psi, double hbar = 1.0) {
    Spectral sp(psi.grid());
    Eigen::VectorXcd phi;
    sp.forward(psi.amplitudes(), phi);
    Eigen::VectorXd w = phi.cwiseAbs2();
    double total = w.sum();
    if (!(total > 0)) {
        throw InvalidArgument("momentum_mean of a zero state");
    }
    return hbar * w.dot(sp.k()) / total;
}

inline constexpr std::size_t kEdgeCells = 5;
inline constexpr double kEdgeDensityTolerance = 1e-8;

/// Throws SupportEscaped if |psi|^2 exceeds the tolerance in the edge band of the grid.
inline void check_support(const Eigen::VectorXcd &amps, const Grid &grid, const char *what,
                          double tol = kEdgeDensityTolerance) {
    const auto n = amps.size();
    const auto band = static_cast<Eigen::Index>(std::min<std::size_t>(kEdgeCells, grid.size() / 2));
    double worst = 0;
    for (Eigen::Index i = 0; i < band; ++i) {
        worst = std::max({worst, std::norm(amps[i]), std::norm(amps[n - 1 - i])});
    }
    if (worst > tol) {
        std::ostringstream os;
        os << what << ": support escaped grid [" << grid.x_min() << ", " << grid.x_max()
           << "] (edge density " << worst << ")";
        throw SupportEscaped(os.str());
    }
}

inline void check_support(const WaveFunction &psi, const char *what, double tol = kEdgeDensityTolerance) {
    check_support(psi.amplitudes(), psi.grid(), what, tol);
}

/// Normalized Gaussian exp(-(x-x0)^2/(4 sigma^2) + i p0 x / hbar) sampled on the grid.
inline WaveFunction gaussian_wavepacket(const Grid &grid, double x0, double p0, double sigma, double hbar = 1.0) {
    if (!(sigma >= 4 * grid.dx())) {
        std::ostringstream os;
        os << "gaussian_wavepacket: sigma = " << sigma << " not resolvable (needs >= 4 dx = " << 4 * grid.dx()
           << ")";
        throw InvalidArgument(os.str());
    }
    if (x0 - 5 * sigma < grid.x_min() || x0 + 5 * sigma > grid.x_max()) {
        std::ostringstream os;
        os << "gaussian_wavepacket: support x0 +/- 5 sigma = [" << x0 - 5 * sigma << ", " << x0 + 5 * sigma
           << "] clipped by grid [" << grid.x_min() << ", " << grid.x_max() << "]";
        throw InvalidArgument(os.str());
    }
    auto psi = WaveFunction::sample(grid, [&](double x) {
        double d = x - x0;
        return std::exp(cplx(-d * d / (4 * sigma * sigma), p0 * x / hbar));
    });
    return psi.normalized();
}

}  // namespace wvpath
