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

// Experiment configs and scenario runners behind the command-line tool. A config is a JSON
// object {scenario, seed, threads, parameters, output}; every key that is read is copied, with
// its default filled in, into the resolved config that is embedded in the output.

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "wvpath/classical_limit.hpp"
#include "wvpath/core.hpp"
#include "wvpath/coupling.hpp"
#include "wvpath/errors.hpp"
#include "wvpath/interferometer.hpp"
#include "wvpath/parallel.hpp"
#include "wvpath/potential.hpp"
#include "wvpath/propagators.hpp"
#include "wvpath/semiclassical.hpp"
#include "wvpath/weak_values.hpp"

#ifndef WVPATH_VERSION
#define WVPATH_VERSION "0.0.0"
#endif

namespace wvpath {

using json = nlohmann::json;

inline constexpr const char *kVersion = WVPATH_VERSION;

/// Invalid configuration. `pointer` is the JSON pointer of the offending key.
class ConfigError : public std::runtime_error {
   public:
    ConfigError(std::string pointer, const std::string &why)
        : std::runtime_error("config error at " + (pointer.empty() ? std::string("/") : pointer) + ": " + why),
          pointer(std::move(pointer)) {}
    std::string pointer;
};

inline const std::vector<std::string> &scenario_names() {
    static const std::vector<std::string> names{"propagate", "weak-value", "pointer", "infer-propagator",
                                                "interferometer", "semiclassical", "scar", "classical"};
    return names;
}

namespace detail {

inline std::string pointer_escape(const std::string &key) {
    std::string out;
    for (char c : key) {
        if (c == '~') {
            out += "~0";
        } else if (c == '/') {
            out += "~1";
        } else {
            out += c;
        }
    }
    return out;
}

}  // namespace detail

/// Typed view of one config object. Reads record the value (or the default) in `out`; done()
/// rejects keys that were never read.
class Reader {
   public:
    Reader(const json &src, json &out, std::string ptr) : src_(src), out_(out), ptr_(std::move(ptr)) {
        if (!src_.is_object()) {
            throw ConfigError(ptr_, "expected an object");
        }
        if (!out_.is_object()) {
            out_ = json::object();
        }
    }

    const std::string &pointer() const { return ptr_; }
    std::string pointer(const std::string &key) const { return ptr_ + "/" + detail::pointer_escape(key); }

    bool has(const std::string &key) const { return src_.contains(key); }

    double number(const std::string &key, std::optional<double> def = std::nullopt) {
        const json *v = fetch(key, def.has_value());
        const double x = v ? as_number(*v, key) : *def;
        out_[key] = x;
        return x;
    }

    double positive(const std::string &key, std::optional<double> def = std::nullopt) {
        const double x = number(key, def);
        if (!(x > 0)) {
            throw ConfigError(pointer(key), "must be positive");
        }
        return x;
    }

    long long integer(const std::string &key, std::optional<long long> def = std::nullopt) {
        const json *v = fetch(key, def.has_value());
        long long x = 0;
        if (v) {
            if (!v->is_number_integer()) {
                throw ConfigError(pointer(key), "expected an integer");
            }
            x = v->get<long long>();
        } else {
            x = *def;
        }
        out_[key] = x;
        return x;
    }

    std::size_t count(const std::string &key, std::optional<long long> def = std::nullopt, long long min = 1) {
        const auto x = integer(key, def);
        if (x < min) {
            throw ConfigError(pointer(key), "must be at least " + std::to_string(min));
        }
        return static_cast<std::size_t>(x);
    }

    bool flag(const std::string &key, bool def) {
        const json *v = fetch(key, true);
        bool x = def;
        if (v) {
            if (!v->is_boolean()) {
                throw ConfigError(pointer(key), "expected true or false");
            }
            x = v->get<bool>();
        }
        out_[key] = x;
        return x;
    }

    std::string choice(const std::string &key, const std::vector<std::string> &allowed,
                       std::optional<std::string> def = std::nullopt) {
        const json *v = fetch(key, def.has_value());
        std::string x;
        if (v) {
            if (!v->is_string()) {
                throw ConfigError(pointer(key), "expected a string");
            }
            x = v->get<std::string>();
        } else {
            x = *def;
        }
        if (std::find(allowed.begin(), allowed.end(), x) == allowed.end()) {
            std::string list;
            for (const auto &a : allowed) {
                list += (list.empty() ? "" : ", ") + a;
            }
            throw ConfigError(pointer(key), "'" + x + "' is not one of: " + list);
        }
        out_[key] = x;
        return x;
    }

    std::vector<double> numbers(const std::string &key, std::optional<std::vector<double>> def = std::nullopt) {
        const json *v = fetch(key, def.has_value());
        std::vector<double> x;
        if (v) {
            if (!v->is_array() || v->empty()) {
                throw ConfigError(pointer(key), "expected a non-empty array of numbers");
            }
            for (std::size_t i = 0; i < v->size(); ++i) {
                x.push_back(as_number((*v)[i], key + "/" + std::to_string(i)));
            }
        } else {
            x = *def;
        }
        out_[key] = x;
        return x;
    }

    /// Complex number written as [re, im] or a plain real.
    cplx complex(const std::string &key, cplx def) {
        const json *v = fetch(key, true);
        cplx x = def;
        if (v) {
            if (v->is_number()) {
                x = v->get<double>();
            } else if (v->is_array() && v->size() == 2 && (*v)[0].is_number() && (*v)[1].is_number()) {
                x = {(*v)[0].get<double>(), (*v)[1].get<double>()};
            } else {
                throw ConfigError(pointer(key), "expected a number or [re, im]");
            }
        }
        out_[key] = {x.real(), x.imag()};
        return x;
    }

    /// Nested object; a missing key reads as {} so every default lands in the resolved config.
    Reader child(const std::string &key) {
        seen_.insert(key);
        static const json empty = json::object();
        const json &src = src_.contains(key) ? src_.at(key) : empty;
        return Reader(src, out_[key], pointer(key));
    }

    /// Array of objects; readers for each element.
    std::vector<Reader> children(const std::string &key) {
        seen_.insert(key);
        if (!src_.contains(key) || !src_.at(key).is_array() || src_.at(key).empty()) {
            throw ConfigError(pointer(key), "expected a non-empty array of objects");
        }
        const auto &arr = src_.at(key);
        json &dst = out_[key] = json::array();
        for (std::size_t i = 0; i < arr.size(); ++i) {
            dst.push_back(json::object());
        }
        std::vector<Reader> r;
        for (std::size_t i = 0; i < arr.size(); ++i) {
            r.emplace_back(arr[i], dst[i], pointer(key) + "/" + std::to_string(i));
        }
        return r;
    }

    /// Subtree taken verbatim.
    const json &raw(const std::string &key) {
        const json *v = fetch(key, false);
        out_[key] = *v;
        return *v;
    }

    void done() const {
        for (const auto &[key, value] : src_.items()) {
            if (!seen_.count(key)) {
                throw ConfigError(pointer(key), "unknown key");
            }
        }
    }

   private:
    const json *fetch(const std::string &key, bool optional) {
        seen_.insert(key);
        if (!src_.contains(key)) {
            if (!optional) {
                throw ConfigError(pointer(key), "required key is missing");
            }
            return nullptr;
        }
        return &src_.at(key);
    }

    double as_number(const json &v, const std::string &key) const {
        if (!v.is_number()) {
            throw ConfigError(pointer(key), "expected a number");
        }
        const double x = v.get<double>();
        if (!std::isfinite(x)) {
            throw ConfigError(pointer(key), "must be finite");
        }
        return x;
    }

    const json &src_;
    json &out_;
    std::string ptr_;
    std::set<std::string> seen_;
};

// Shared sub-schemas.

inline Grid read_grid(Reader r, double x_min = -20, double x_max = 20, long long n = 256) {
    const double lo = r.number("x_min", x_min), hi = r.number("x_max", x_max);
    const auto points = r.count("n", n, 2);
    r.done();
    if (!(hi > lo)) {
        throw ConfigError(r.pointer("x_max"), "must exceed x_min");
    }
    return Grid(lo, hi, points);
}

inline PhysicalParams read_params(Reader r) {
    PhysicalParams p{r.positive("hbar", 1.0), r.positive("m", 1.0), r.positive("M", 1.0)};
    r.done();
    return p;
}

/// gaussian {x0, p0, sigma} | superposition {terms: [{x0, p0, sigma, amplitude, phase}]} | cell {x}
inline WaveFunction read_state(Reader r, const Grid &g, const PhysicalParams &params, double x0_default = 0) {
    const auto type = r.choice("type", {"gaussian", "superposition", "cell"}, "gaussian");
    std::optional<WaveFunction> psi;
    if (type == "gaussian") {
        psi = gaussian_wavepacket(g, r.number("x0", x0_default), r.number("p0", 0.0), r.positive("sigma", 1.0),
                                  params.hbar);
    } else if (type == "superposition") {
        for (auto &t : r.children("terms")) {
            auto term = gaussian_wavepacket(g, t.number("x0", 0.0), t.number("p0", 0.0), t.positive("sigma", 1.0),
                                            params.hbar)
                            .scaled(std::polar(t.number("amplitude", 1.0), t.number("phase", 0.0)));
            t.done();
            psi = psi ? *psi + term : term;
        }
        if (!(psi->norm2() > 0)) {
            throw ConfigError(r.pointer("terms"), "superposition has zero norm");
        }
        psi = psi->normalized();
    } else {
        const double x = r.number("x");
        if (!g.contains(x)) {
            throw ConfigError(r.pointer("x"), "outside the grid");
        }
        psi = WaveFunction::cell(g, x);
    }
    r.done();
    return *psi;
}

inline Potential read_potential(Reader r, const PhysicalParams &params) {
    const auto type = r.choice("type", {"free", "harmonic", "double_well", "quartic"}, "free");
    Potential V = free_potential();
    if (type == "harmonic") {
        V = harmonic_potential(r.positive("omega", 1.0), params.m);
    } else if (type == "double_well") {
        const double depth = r.positive("depth", 1.0);
        V = double_well_potential(depth, r.positive("a", 1.0));
    } else if (type == "quartic") {
        V = quartic_potential(r.positive("lambda", 0.1));
    }
    r.done();
    return V;
}

/// position | constant {value} | indicator {lo, hi} | polynomial {coefficients: [c0, c1, ...]}
inline ConfigFunction read_observable(Reader r, const Grid &g, const std::string &def = "position") {
    const auto type = r.choice("type", {"position", "constant", "indicator", "polynomial"}, def);
    std::optional<ConfigFunction> A;
    if (type == "position") {
        A = ConfigFunction::sample(g, [](double q) { return q; });
    } else if (type == "constant") {
        A = ConfigFunction::constant(g, r.number("value", 1.0));
    } else if (type == "indicator") {
        const double lo = r.number("lo", 0.0), hi = r.number("hi", g.x_max());
        A = ConfigFunction::sample(g, [=](double q) { return q >= lo && q <= hi ? 1.0 : 0.0; });
    } else {
        const auto c = r.numbers("coefficients");
        A = ConfigFunction::sample(g, [&](double q) {
            double v = 0;
            for (auto it = c.rbegin(); it != c.rend(); ++it) {
                v = v * q + *it;
            }
            return v;
        });
    }
    r.done();
    return *A;
}

inline InteractionProfile read_profile(Reader r, const std::string &def = "global") {
    const auto type = r.choice("type", {"global", "contact", "gaussian"}, def);
    InteractionProfile p = InteractionProfile::global();
    if (type == "contact") {
        p = InteractionProfile::contact(r.number("Q_w", 0.0));
    } else if (type == "gaussian") {
        const double q = r.number("Q_w", 0.0);
        p = InteractionProfile::gaussian(q, r.positive("width", 0.5));
    }
    r.done();
    return p;
}

/// Tabular part of a result, written as CSV rows. Cells are numbers or strings.
struct Table {
    std::vector<std::string> columns;
    std::vector<std::vector<json>> rows;
    std::string plot_hint;  // gnuplot column spec, e.g. "using 1:2"
};

struct Outcome {
    json result = json::object();
    std::optional<Table> table;
};

struct RunContext {
    std::uint64_t seed = 0;
    Parallelism par = {};
    std::ostream *log = nullptr;

    void note(const std::string &msg) const {
        if (log) {
            *log << "wvpath: " << msg << '\n';
        }
    }
};

namespace detail {

inline json cplx_json(cplx z) {
    return {z.real(), z.imag()};
}

inline double rel_diff(cplx a, cplx b) {
    return std::abs(a - b) / std::max(std::abs(b), 1e-300);
}

struct SetupBlock {
    WeakMeasurementSetup setup;
    Potential V;
};

// Grid, states, observable, potential, profile, times: everything a weak value needs.
inline SetupBlock read_setup(Reader &p, const std::string &profile_default) {
    const auto params = read_params(p.child("params"));
    const auto g = read_grid(p.child("grid"));
    auto psi = read_state(p.child("initial"), g, params, -2);
    auto b = read_state(p.child("postselection"), g, params, 2);
    auto A = read_observable(p.child("observable"), g);
    auto V = read_potential(p.child("potential"), params);
    auto profile = read_profile(p.child("profile"), profile_default);
    const double t_i = p.number("t_i", 0.0), t_w = p.number("t_w", 1.0), t_f = p.number("t_f", 2.0);
    if (!(t_i < t_w)) {
        throw ConfigError(p.pointer("t_w"), "need t_i < t_w");
    }
    if (!(t_w < t_f)) {
        throw ConfigError(p.pointer("t_f"), "need t_w < t_f");
    }
    WeakMeasurementSetup s{.psi_i = std::move(psi),
                           .b_f = std::move(b),
                           .A = std::move(A),
                           .V = V.sample(g),
                           .profile = profile,
                           .t_i = t_i,
                           .t_w = t_w,
                           .t_f = t_f,
                           .params = params,
                           .dt_max = p.positive("dt_max", 0.01),
                           .floor = p.number("floor", kDefaultDenominatorFloor)};
    return {std::move(s), std::move(V)};
}

}  // namespace detail

// Scenarios.

inline Outcome run_propagate(Reader p, const RunContext &ctx) {
    const auto params = read_params(p.child("params"));
    const auto g = read_grid(p.child("grid"));
    const auto psi0 = read_state(p.child("state"), g, params);
    const auto V = read_potential(p.child("potential"), params);
    const double t = p.number("t", 1.0);
    const auto n = steps_for(std::abs(t), p.positive("dt_max", 0.01));
    p.done();
    ctx.note("propagating over t = " + std::to_string(t) + " in " + std::to_string(n) + " steps");
    const auto psi = trotter_propagate(psi0, V.sample(g), t, n, params);
    Outcome o;
    o.result = {{"steps", n},
                {"norm", std::sqrt(psi.norm2())},
                {"position_mean", position_mean(psi)},
                {"momentum_mean", momentum_mean(psi, params.hbar)}};
    Table tab{{"x", "re", "im", "density"}, {}, "using 1:4 with lines"};
    for (std::size_t i = 0; i < g.size(); ++i) {
        tab.rows.push_back({g.x(i), psi[i].real(), psi[i].imag(), std::norm(psi[i])});
    }
    json amps = json::array();
    for (std::size_t i = 0; i < g.size(); ++i) {
        amps.push_back(detail::cplx_json(psi[i]));
    }
    o.result["amplitudes"] = std::move(amps);
    o.table = std::move(tab);
    return o;
}

inline Outcome run_weak_value(Reader p, const RunContext &ctx) {
    auto [s, V] = detail::read_setup(p, "global");
    const auto route = p.choice("route", {"operator", "path", "both"}, "both");
    p.done();
    const auto observable = s.coupled_observable();
    Outcome o;
    std::optional<WeakValue> op, path;
    if (route != "path") {
        ctx.note("operator route");
        op = weak_value_operator(s, observable);
    }
    if (route != "operator") {
        ctx.note("path route (kernel matrices on " + std::to_string(s.grid().size()) + " points)");
        path = weak_value_path(s);
    }
    const auto &wv = op ? *op : *path;
    o.result = weak_value_record(s, wv);
    o.result["route"] = route;
    if (op && path) {
        o.result["route_rel_diff"] = detail::rel_diff(path->value, op->value);
    }
    const double lo = observable.min(), hi = observable.max();
    const double re = wv.value.real();
    o.result["observable_range"] = {lo, hi};
    o.result["outside_range"] = re < lo || re > hi;
    o.result["range_margin"] = std::max(lo - re, re - hi);
    return o;
}

inline Outcome run_pointer(Reader p, const RunContext &ctx) {
    auto [s, V] = detail::read_setup(p, "global");
    auto gs = p.numbers("couplings", std::vector<double>{0.01, 0.02, 0.04});
    PointerOptions base;
    base.tau = p.positive("tau", 0.002);
    {
        auto probe = p.child("probe");
        base.probe_grid = read_grid(probe.child("grid"), -10, 10, 256);
        base.probe_sigma = probe.positive("sigma", 1.0);
        base.frozen_probe = probe.flag("frozen", true);
        probe.done();
    }
    p.done();
    for (std::size_t k = 0; k < gs.size(); ++k) {
        if (gs[k] == 0) {
            throw ConfigError(p.pointer("couplings") + "/" + std::to_string(k), "coupling must be nonzero");
        }
    }
    base.par = ctx.par;
    Outcome o;
    json runs = json::array();
    Table tab{{"g", "shift", "slope"}, {}, "using 1:3 with linespoints"};
    std::vector<double> slopes;
    cplx reference = 0;
    for (double g : gs) {
        ctx.note("coupled evolution at g = " + std::to_string(g));
        auto opt = base;
        opt.g = g;
        const auto r = run_pointer_pipeline(s, opt);
        reference = r.reference_weak_value;
        slopes.push_back(r.shift / g);
        runs.push_back(to_json(r, s.profile));
        tab.rows.push_back({g, r.shift, r.shift / g});
    }
    o.result["runs"] = std::move(runs);
    o.result["Re_Aw_ref"] = reference.real();
    o.result["Im_Aw_ref"] = reference.imag();
    if (gs.size() >= 2) {
        const double e = extrapolate_to_zero(gs, slopes);
        o.result["extrapolated"] = e;
        o.result["extrapolated_rel_diff"] = std::abs(e - reference.real()) / std::max(std::abs(reference.real()), 1e-300);
        if (gs.size() >= 3) {
            o.result["convergence_order"] =
                std::log(std::abs(slopes[1] - e) / std::abs(slopes[0] - e)) / std::log(gs[1] / gs[0]);
        }
    }
    o.table = std::move(tab);
    return o;
}

inline Outcome run_infer_propagator(Reader p, const RunContext &ctx) {
    const auto params = read_params(p.child("params"));
    const auto g = read_grid(p.child("grid"), -30, 30, 1201);
    const auto psi0 = read_state(p.child("state"), g, params);
    auto A = read_observable(p.child("observable"), g, "constant");
    double omega = 0;
    {
        auto pot = p.child("potential");
        const auto type = pot.choice("type", {"free", "harmonic"}, "free");
        if (type == "harmonic") {
            omega = pot.positive("omega", 1.0);
        }
        pot.done();
    }
    const double t_w = p.positive("t_w", 1.0), t_f = p.number("t_f", 2.0);
    if (!(t_f > t_w)) {
        throw ConfigError(p.pointer("t_f"), "need t_f > t_w");
    }
    const auto qs = p.numbers("Q_w", std::vector<double>{-1, -0.5, 0, 0.5, 1});
    const auto xs = p.numbers("x_f", std::vector<double>{-1, -0.5, 0, 0.5, 1});
    p.done();
    for (const auto *list : {&qs, &xs}) {
        for (std::size_t k = 0; k < list->size(); ++k) {
            if (!g.contains((*list)[k])) {
                throw ConfigError(p.pointer(list == &qs ? "Q_w" : "x_f") + "/" + std::to_string(k), "outside the grid");
            }
        }
    }
    auto kernel = [&](double b, double a, double dt) {
        return omega > 0 ? harmonic_kernel(b, a, dt, omega, params) : free_kernel(b, a, dt, params);
    };
    ctx.note("sampling analytic kernels on " + std::to_string(g.size()) + " points");
    PathKernels k{kernel_matrix_analytic(g, 0, t_w, kernel, ctx.par), kernel_matrix_analytic(g, t_w, t_f, kernel, ctx.par)};
    const auto psi_w = k.before.apply(psi0);
    const auto psi_f = k.after.apply(psi_w);
    const ConfigFunction V =
        omega > 0 ? harmonic_potential(omega, params.m).sample(g) : ConfigFunction::constant(g, 0);
    Outcome o;
    Table tab{{"Q_w", "x_f", "re", "im", "re_exact", "im_exact", "rel_err"}, {}, "using 1:2:7 with points"};
    double worst = 0;
    for (double q : qs) {
        for (double x : xs) {
            // The contact cell and the position filter sit on grid points.
            const double Qw = g.x(g.index_of(q)), xf = g.x(g.index_of(x));
            WeakMeasurementSetup s{.psi_i = psi0,
                                   .b_f = WaveFunction::cell(g, xf),
                                   .A = A,
                                   .V = V,
                                   .profile = InteractionProfile::contact(Qw),
                                   .t_i = 0,
                                   .t_w = t_w,
                                   .t_f = t_f,
                                   .params = params};
            const auto wv = weak_value_path(s, k);
            const cplx K = infer_propagator(psi_w, psi_f, wv, A[g.index_of(Qw)], Qw, xf);
            const cplx exact = kernel(xf, Qw, t_f - t_w);
            const double err = detail::rel_diff(K, exact);
            worst = std::max(worst, err);
            tab.rows.push_back({Qw, xf, K.real(), K.imag(), exact.real(), exact.imag(), err});
        }
    }
    o.result = {{"kernel", omega > 0 ? "harmonic" : "free"}, {"points", tab.rows.size()}, {"max_rel_err", worst}};
    json entries = json::array();
    for (const auto &row : tab.rows) {
        entries.push_back({{"Q_w", row[0]}, {"x_f", row[1]}, {"K", {row[2], row[3]}}, {"K_exact", {row[4], row[5]}},
                           {"rel_err", row[6]}});
    }
    o.result["entries"] = std::move(entries);
    o.table = std::move(tab);
    return o;
}

namespace detail {

inline Eigen::VectorXcd read_mode_state(Reader r, const ModeNetwork &net) {
    Eigen::VectorXcd v;
    if (r.has("amplitudes")) {
        const auto &raw = r.raw("amplitudes");
        if (!raw.is_array() || static_cast<int>(raw.size()) != net.n_modes) {
            throw ConfigError(r.pointer("amplitudes"), "expected one [re, im] per mode");
        }
        v.resize(net.n_modes);
        for (int m = 0; m < net.n_modes; ++m) {
            const auto &e = raw[static_cast<std::size_t>(m)];
            if (e.is_number()) {
                v[m] = e.get<double>();
            } else if (e.is_array() && e.size() == 2 && e[0].is_number() && e[1].is_number()) {
                v[m] = {e[0].get<double>(), e[1].get<double>()};
            } else {
                throw ConfigError(r.pointer("amplitudes") + "/" + std::to_string(m), "expected a number or [re, im]");
            }
        }
    } else {
        const auto arm = static_cast<int>(r.integer("arm", 0));
        if (arm < 0 || arm_mode(arm, kV) >= net.n_modes) {
            throw ConfigError(r.pointer("arm"), "no such arm");
        }
        const cplx h = r.complex("h", 1.0), v_pol = r.complex("v", 0.0);
        v = arm_state(net, arm, h, v_pol);
    }
    r.done();
    if (!(v.norm() > 0)) {
        throw ConfigError(r.pointer(), "zero state");
    }
    return v.normalized();
}

}  // namespace detail

inline Outcome run_interferometer(Reader p, const RunContext &ctx) {
    ModeNetwork net;
    if (p.has("network")) {
        net = network_from_json(p.raw("network"));
    } else {
        auto r = p.child("nested_mz");
        NestedMzParams m;
        m.theta1 = r.number("theta1", m.theta1);
        m.theta2 = r.number("theta2", m.theta2);
        m.theta3 = r.number("theta3", m.theta3);
        m.theta4 = r.number("theta4", m.theta4);
        m.phi_B = r.number("phi_B", m.phi_B);
        m.phi_C = r.number("phi_C", m.phi_C);
        m.phi_outer = r.number("phi_outer", m.phi_outer);
        m.rot_B = r.number("rot_B", m.rot_B);
        m.rot_C = r.number("rot_C", m.rot_C);
        r.done();
        net = build_nested_mz(m);
    }
    const auto psi = detail::read_mode_state(p.child("input"), net);
    const auto post = detail::read_mode_state(p.child("postselection"), net);
    std::map<std::string, double> A;
    {
        auto r = p.child("observable");
        for (const auto &[label, site] : net.sites) {
            if (r.has(label)) {
                A[label] = r.number(label);
            }
        }
        r.done();
    }
    ClassifyOptions copt;
    {
        auto r = p.child("classify");
        copt.zero_tol = r.positive("zero_tol", copt.zero_tol);
        copt.band_upper = r.positive("band_upper", copt.band_upper);
        r.done();
    }
    const double floor = p.number("floor", kDefaultOverlapFloor);
    p.done();
    ctx.note("network with " + std::to_string(net.n_modes) + " modes and " + std::to_string(net.stages.size()) +
             " stages");
    Outcome o;
    const cplx total = post.dot(net.total() * psi);
    if (!(std::abs(total) > floor)) {
        std::ostringstream os;
        os << "interferometer: |<b_f|U|psi_i>| = " << std::abs(total) << " below floor " << floor;
        throw DenominatorUnderflow(os.str(), 0, total);
    }
    o.result["sites"] = weak_trace(net, psi, post, A, copt);
    o.result["denominator"] = detail::cplx_json(total);
    json cuts = json::array();
    for (const auto &cut : net.cuts) {
        cuts.push_back({{"sites", cut}, {"sum", detail::cplx_json(cut_sum(net, cut, psi, post))}});
    }
    o.result["cuts"] = std::move(cuts);
    Table tab{{"site", "re", "im", "wavefunction_amp", "classification"}, {}, "using 0:2:xtic(1) with boxes"};
    for (const auto &[label, e] : o.result["sites"].items()) {
        tab.rows.push_back({label, e["Re"], e["Im"], e["wavefunction_amp"], e["classification"]});
    }
    o.table = std::move(tab);
    return o;
}

inline Outcome run_semiclassical(Reader p, const RunContext &ctx) {
    const auto params = read_params(p.child("params"));
    std::optional<double> omega;
    Potential V = free_potential();
    {
        auto pot = p.child("potential");
        const auto type = pot.choice("type", {"free", "harmonic", "double_well", "quartic"}, "free");
        if (type == "harmonic") {
            omega = pot.positive("omega", 1.0);
            V = harmonic_potential(*omega, params.m);
        } else if (type == "double_well") {
            const double depth = pot.positive("depth", 1.0);
            V = double_well_potential(depth, pot.positive("a", 1.0));
        } else if (type == "quartic") {
            V = quartic_potential(pot.positive("lambda", 0.1));
        }
        pot.done();
    }
    const double x_i = p.number("x_i", 0.0), t = p.positive("t", 1.0);
    const auto xs = p.numbers("x_f", std::vector<double>{-1, -0.5, 0, 0.5, 1});
    BvpOptions bvp;
    {
        auto r = p.child("bvp");
        bvp.p_min = r.number("p_min", bvp.p_min);
        bvp.p_max = r.number("p_max", bvp.p_max);
        bvp.n_seeds = r.count("n_seeds", static_cast<long long>(bvp.n_seeds), 2);
        bvp.trajectory.dt_max = r.positive("dt_max", bvp.trajectory.dt_max);
        r.done();
        if (!(bvp.p_max > bvp.p_min)) {
            throw ConfigError(r.pointer("p_max"), "must exceed p_min");
        }
    }
    p.done();
    bvp.trajectory.store_samples = false;
    ctx.note("shooting " + std::to_string(bvp.n_seeds) + " seeds towards " + std::to_string(xs.size()) + " endpoints");
    const auto fan = solve_bvp_fan(x_i, xs, 0, t, V, params, bvp);
    Outcome o;
    Table tab{{"x_f", "re", "im", "paths", "re_exact", "im_exact"}, {}, "using 1:2 with linespoints"};
    json points = json::array();
    double worst = 0;
    for (std::size_t k = 0; k < xs.size(); ++k) {
        const auto &res = fan[k];
        json e{{"x_f", xs[k]}, {"diagnostics", res.diagnostics}};
        json paths = json::array();
        for (const auto &tr : res.trajectories) {
            paths.push_back({{"p_i", tr.p_i}, {"action", tr.action}, {"maslov", tr.maslov}});
        }
        e["paths"] = std::move(paths);
        const cplx K = semiclassical_sum(res.trajectories, params, bvp.caustic_tol);
        e["K"] = detail::cplx_json(K);
        std::vector<json> row{xs[k], K.real(), K.imag(), res.trajectories.size()};
        std::optional<cplx> exact;
        if (V.name == "free") {
            exact = free_kernel(xs[k], x_i, t, params);
        } else if (omega) {
            exact = harmonic_kernel(xs[k], x_i, t, *omega, params);
        }
        if (exact) {
            e["K_exact"] = detail::cplx_json(*exact);
            e["rel_err"] = detail::rel_diff(K, *exact);
            worst = std::max(worst, detail::rel_diff(K, *exact));
            row.push_back(exact->real());
            row.push_back(exact->imag());
        } else {
            row.push_back(nullptr);
            row.push_back(nullptr);
        }
        points.push_back(std::move(e));
        tab.rows.push_back(std::move(row));
    }
    o.result = {{"potential", V.name}, {"x_i", x_i}, {"t", t}, {"endpoints", std::move(points)}};
    if (V.name == "free" || omega) {
        o.result["max_rel_err"] = worst;
    }
    o.table = std::move(tab);
    return o;
}

inline Outcome run_scar(Reader p, const RunContext &ctx) {
    const auto params = read_params(p.child("params"));
    const auto g = read_grid(p.child("grid"), -8, 8, 513);
    const double omega = p.positive("omega", 1.0);
    const double x0 = p.number("x0", 2.0), p0 = p.number("p0", 0.0), sigma = p.positive("sigma", 0.5);
    const double period = p.positive("period", 2 * pi / omega);
    const double t_p = p.positive("t_p", 1.0);
    const double dt_max = p.positive("dt_max", 0.002);
    const double A_value = p.number("A", 1.0);
    p.done();
    const auto V = harmonic_potential(omega, params.m);
    const auto G = gaussian_wavepacket(g, x0, p0, sigma, params.hbar);
    ctx.note("periodic orbit and weak value at t_p = " + std::to_string(t_p));
    const auto po = periodic_orbit_spec(V, params, x0, p0, t_p, period, sigma);
    WeakMeasurementSetup s{.psi_i = G,
                           .b_f = G,
                           .A = ConfigFunction::constant(g, A_value),
                           .V = V.sample(g),
                           .profile = InteractionProfile::contact(po.x_p),
                           .t_i = 0,
                           .t_w = t_p,
                           .t_f = period,
                           .params = params,
                           .dt_max = dt_max};
    const auto wv = weak_value_operator(s, s.coupled_observable());
    const cplx G0 = G[g.index_of(x0)];
    const cplx rebuilt = scar_autocorrelation(wv, po, A_value, G0);
    const cplx direct = inner_product(G, trotter_propagate(G, s.V, period, steps_for(period, dt_max), params));
    Outcome o;
    o.result = {{"x_p", po.x_p},
                {"period", period},
                {"orbit_action", po.action},
                {"maslov", {po.maslov_out, po.maslov_back}},
                {"closure_residual", po.closure_residual},
                {"weak_value", to_json(wv)},
                {"autocorrelation", detail::cplx_json(rebuilt)},
                {"autocorrelation_direct", detail::cplx_json(direct)},
                {"rel_err", detail::rel_diff(rebuilt, direct)}};
    return o;
}

inline Outcome run_classical(Reader p, const RunContext &ctx) {
    const auto params = read_params(p.child("params"));
    const auto g = read_grid(p.child("grid"));
    auto A = read_observable(p.child("observable"), g);
    const auto profile = read_profile(p.child("profile"));
    const auto V = read_potential(p.child("potential"), params);
    PhaseSpaceGaussian dist;
    ClassicalEnsemble ens;
    {
        auto r = p.child("ensemble");
        dist.q0 = r.number("q0", 0.0);
        dist.sigma_q = r.positive("sigma_q", 1.0);
        dist.p0 = r.number("p0", 0.0);
        dist.sigma_p = r.positive("sigma_p", 0.5);
        const auto sampling = r.choice("sampling", {"monte_carlo", "quadrature"}, "monte_carlo");
        if (sampling == "monte_carlo") {
            ens = sample_gaussian_ensemble(dist, r.count("n", 100000), ctx.seed);
        } else {
            const auto nq = r.count("n_q", 64);
            ens = gaussian_quadrature_ensemble(dist, nq, r.count("n_p", 64));
        }
        r.done();
    }
    const double coupling = p.number("g", 1.0), t_f = p.positive("t_f", 1.0);
    PostselectionDomain domain;
    {
        auto r = p.child("domain");
        const double lo = r.number("lo", 0.0), hi = r.number("hi", 1e300);
        r.done();
        if (!(hi >= lo)) {
            throw ConfigError(r.pointer("hi"), "must not be below lo");
        }
        domain = PostselectionDomain::interval(lo, hi);
    }
    LiouvilleOptions lopt;
    lopt.dt_max = p.positive("dt_max", 1e-2);
    lopt.par = ctx.par;
    p.done();
    ctx.note("transporting " + std::to_string(ens.size()) + " samples to t_f = " + std::to_string(t_f));
    const auto r = conditional_pointer_shift(ens, A, profile, coupling, domain, V, t_f, params, lopt);
    Outcome o;
    o.result = to_json(r);
    o.result["unconditioned"] = to_json(unconditioned_kick(ens, A, profile, coupling));
    o.result["domain"] = domain.label;
    o.result["within_kick_range"] = r.shift >= r.kick_min && r.shift <= r.kick_max;
    return o;
}

/// Overrides coming from command-line flags.
struct RunOverrides {
    std::optional<std::string> scenario;
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> threads;
    std::optional<std::string> format;
};

struct Experiment {
    std::string scenario;
    std::string format = "json";
    json resolved;
    Outcome outcome;
};

inline Experiment run_experiment(const json &config, const RunOverrides &ov = {}, std::ostream *log = nullptr) {
    if (!config.is_object()) {
        throw ConfigError("", "config must be a JSON object");
    }
    Experiment e;
    e.resolved = json::object();
    Reader top(config, e.resolved, "");
    if (ov.scenario && config.contains("scenario") && config.at("scenario") != *ov.scenario) {
        throw ConfigError("/scenario", "config is for " + config.at("scenario").dump() + " but '" + *ov.scenario +
                                           "' was requested");
    }
    e.scenario = ov.scenario ? top.choice("scenario", scenario_names(), *ov.scenario)
                             : top.choice("scenario", scenario_names());
    RunContext ctx;
    const auto seed = top.integer("seed", 0);
    if (seed < 0) {
        throw ConfigError("/seed", "must be non-negative");
    }
    ctx.seed = ov.seed.value_or(static_cast<std::uint64_t>(seed));
    e.resolved["seed"] = ctx.seed;
    const auto threads = top.integer("threads", 0);
    if (threads < 0) {
        throw ConfigError("/threads", "must be non-negative");
    }
    ctx.par.threads = ov.threads.value_or(static_cast<unsigned>(threads));
    e.resolved["threads"] = ctx.par.resolved();
    ctx.log = log;
    {
        auto out = top.child("output");
        e.format = out.choice("format", {"json", "csv"}, "json");
        if (ov.format) {
            e.format = *ov.format;
            e.resolved["output"]["format"] = e.format;
        }
        out.done();
    }
    auto params = top.child("parameters");
    top.done();
    const auto &s = e.scenario;
    if (s == "propagate") {
        e.outcome = run_propagate(params, ctx);
    } else if (s == "weak-value") {
        e.outcome = run_weak_value(params, ctx);
    } else if (s == "pointer") {
        e.outcome = run_pointer(params, ctx);
    } else if (s == "infer-propagator") {
        e.outcome = run_infer_propagator(params, ctx);
    } else if (s == "interferometer") {
        e.outcome = run_interferometer(params, ctx);
    } else if (s == "semiclassical") {
        e.outcome = run_semiclassical(params, ctx);
    } else if (s == "scar") {
        e.outcome = run_scar(params, ctx);
    } else {
        e.outcome = run_classical(params, ctx);
    }
    return e;
}

// Output.

namespace detail {

inline std::string csv_cell(const json &v) {
    if (v.is_null()) {
        return "";
    }
    if (v.is_string()) {
        return v.get<std::string>();
    }
    if (v.is_number_float()) {
        std::ostringstream os;
        os << std::setprecision(17) << v.get<double>();
        return os.str();
    }
    return v.dump();
}

inline void flatten(const json &v, const std::string &prefix, std::vector<std::pair<std::string, json>> &out) {
    if (v.is_object()) {
        for (const auto &[k, x] : v.items()) {
            flatten(x, prefix.empty() ? k : prefix + "/" + k, out);
        }
    } else if (v.is_array()) {
        for (std::size_t i = 0; i < v.size(); ++i) {
            flatten(v[i], prefix + "/" + std::to_string(i), out);
        }
    } else {
        out.emplace_back(prefix, v);
    }
}

}  // namespace detail

inline json to_json(const Experiment &e) {
    return {{"version", kVersion}, {"scenario", e.scenario}, {"config", e.resolved}, {"result", e.outcome.result}};
}

/// Array data as CSV with a commented header; scalar-only results become key,value rows.
inline void write_csv(std::ostream &os, const Experiment &e) {
    os << "# wvpath " << kVersion << '\n';
    os << "# scenario: " << e.scenario << '\n';
    os << "# config: " << e.resolved.dump() << '\n';
    if (e.outcome.table) {
        const auto &t = *e.outcome.table;
        if (!t.plot_hint.empty()) {
            os << "# gnuplot: set datafile separator ','; plot 'FILE' " << t.plot_hint << '\n';
        }
        for (std::size_t c = 0; c < t.columns.size(); ++c) {
            os << (c ? "," : "") << t.columns[c];
        }
        os << '\n';
        for (const auto &row : t.rows) {
            for (std::size_t c = 0; c < row.size(); ++c) {
                os << (c ? "," : "") << detail::csv_cell(row[c]);
            }
            os << '\n';
        }
        return;
    }
    std::vector<std::pair<std::string, json>> flat;
    detail::flatten(e.outcome.result, "", flat);
    os << "key,value\n";
    for (const auto &[k, v] : flat) {
        os << k << ',' << detail::csv_cell(v) << '\n';
    }
}

inline std::string render(const Experiment &e) {
    std::ostringstream os;
    if (e.format == "csv") {
        write_csv(os, e);
    } else {
        os << to_json(e).dump(2) << '\n';
    }
    return os.str();
}

}  // namespace wvpath
