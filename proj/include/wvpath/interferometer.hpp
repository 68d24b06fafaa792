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

// Discrete-mode interferometers. Each spatial arm carries two polarization modes (H, V); a
// spatial beamsplitter is a pair of 2x2 stages, one per polarization, and a polarization rotator
// is a 2x2 stage on the (H, V) pair of one arm. Interfaces are numbered 0..stages.size(): the
// interface k sits between stage k-1 and stage k. A site is a set of modes at one interface.

#include <cmath>
#include <complex>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "wvpath/core.hpp"
#include "wvpath/errors.hpp"

namespace wvpath {

struct Stage {
    enum class Kind { Beamsplitter, Phase };
    Kind kind = Kind::Phase;
    int a = 0, b = 0;  // b unused for phases
    double theta = 0, phi = 0;

    static Stage beamsplitter(int a, int b, double theta) { return {Kind::Beamsplitter, a, b, theta, 0}; }
    static Stage phase(int a, double phi) { return {Kind::Phase, a, a, 0, phi}; }

    /// Real rotation [[cos, -sin], [sin, cos]] on (a, b), or exp(i phi) on a.
    Eigen::MatrixXcd matrix(int n_modes) const {
        Eigen::MatrixXcd m = Eigen::MatrixXcd::Identity(n_modes, n_modes);
        if (kind == Kind::Phase) {
            m(a, a) = std::polar(1.0, phi);
        } else {
            const double c = std::cos(theta), s = std::sin(theta);
            m(a, a) = c;
            m(a, b) = -s;
            m(b, a) = s;
            m(b, b) = c;
        }
        return m;
    }
};

struct Site {
    std::size_t interface = 0;
    std::vector<int> modes;
};

struct ModeNetwork {
    int n_modes = 0;
    std::vector<Stage> stages;
    std::map<std::string, Site> sites;
    std::vector<std::vector<std::string>> cuts;  // site sets crossed exactly once by every path

    std::size_t n_interfaces() const { return stages.size() + 1; }

    const Site &site(const std::string &label) const {
        auto it = sites.find(label);
        if (it == sites.end()) {
            throw InvalidArgument("unknown site '" + label + "'");
        }
        return it->second;
    }

    /// Product of the stages between two interfaces (from <= to).
    Eigen::MatrixXcd transfer(std::size_t from, std::size_t to) const {
        if (from > to || to > stages.size()) {
            throw InvalidArgument("transfer: need 0 <= from <= to <= number of stages");
        }
        Eigen::MatrixXcd u = Eigen::MatrixXcd::Identity(n_modes, n_modes);
        for (std::size_t k = from; k < to; ++k) {
            u = stages[k].matrix(n_modes) * u;
        }
        return u;
    }
    Eigen::MatrixXcd total() const { return transfer(0, stages.size()); }

    void validate(double tol = 1e-12) const {
        if (n_modes <= 0) {
            throw InvalidArgument("network: n_modes must be positive");
        }
        for (std::size_t k = 0; k < stages.size(); ++k) {
            const auto &s = stages[k];
            auto bad = [&](const std::string &why) {
                std::ostringstream os;
                os << "network stage " << k << ": " << why;
                throw InvalidArgument(os.str());
            };
            if (s.a < 0 || s.a >= n_modes || s.b < 0 || s.b >= n_modes) {
                bad("mode index out of range");
            }
            if (s.kind == Stage::Kind::Beamsplitter && s.a == s.b) {
                bad("beamsplitter needs two distinct modes");
            }
            if (!std::isfinite(s.theta) || !std::isfinite(s.phi)) {
                bad("non-finite angle or phase");
            }
            const auto m = s.matrix(n_modes);
            const double err =
                (m.adjoint() * m - Eigen::MatrixXcd::Identity(n_modes, n_modes)).cwiseAbs().maxCoeff();
            if (err > tol) {
                bad("not unitary");
            }
        }
        for (const auto &[label, st] : sites) {
            if (st.interface > stages.size() || st.modes.empty()) {
                throw InvalidArgument("site '" + label + "': bad interface or empty mode set");
            }
            for (int m : st.modes) {
                if (m < 0 || m >= n_modes) {
                    throw InvalidArgument("site '" + label + "': mode index out of range");
                }
            }
        }
        for (const auto &cut : cuts) {
            for (const auto &label : cut) {
                site(label);
            }
        }
    }
};

// Nested Mach-Zehnder: the outer arm A and the inner loop E -> {B, C} -> F, recombined towards D.
//
//   arm 0: A ............................................ D  (second exit D2 on arm 2)
//   arm 1: E -> B -> G (inner loss port)
//   arm 2: C -> F
struct NestedMzParams {
    double theta1 = pi / 4, theta2 = pi / 4, theta3 = pi / 4, theta4 = pi / 4;
    double phi_B = 0, phi_C = 0, phi_outer = 0;
    double rot_B = 0, rot_C = 0;  // polarization rotation on arms B and C
};

inline constexpr int kH = 0, kV = 1;
inline constexpr int arm_mode(int arm, int pol) { return 2 * arm + pol; }

inline ModeNetwork build_nested_mz(const NestedMzParams &p) {
    for (double v : {p.theta1, p.theta2, p.theta3, p.theta4, p.phi_B, p.phi_C, p.phi_outer, p.rot_B, p.rot_C}) {
        if (!std::isfinite(v)) {
            throw InvalidArgument("build_nested_mz: angles and phases must be finite");
        }
    }
    ModeNetwork net;
    net.n_modes = 6;
    auto &st = net.stages;
    auto split = [&](int a, int b, double theta) {
        for (int pol : {kH, kV}) {
            st.push_back(Stage::beamsplitter(arm_mode(a, pol), arm_mode(b, pol), theta));
        }
    };
    auto arm = [](int a) { return std::vector<int>{arm_mode(a, kH), arm_mode(a, kV)}; };
    split(0, 1, p.theta1);
    net.sites["A"] = {st.size(), arm(0)};
    net.sites["E"] = {st.size(), arm(1)};
    net.sites["N"] = {st.size(), arm(2)};  // unused input port of the inner splitter
    split(1, 2, p.theta2);
    for (int pol : {kH, kV}) {
        st.push_back(Stage::phase(arm_mode(0, pol), p.phi_outer));
        st.push_back(Stage::phase(arm_mode(1, pol), p.phi_B));
        st.push_back(Stage::phase(arm_mode(2, pol), p.phi_C));
    }
    st.push_back(Stage::beamsplitter(arm_mode(1, kH), arm_mode(1, kV), p.rot_B));
    st.push_back(Stage::beamsplitter(arm_mode(2, kH), arm_mode(2, kV), p.rot_C));
    net.sites["B"] = {st.size(), arm(1)};
    net.sites["C"] = {st.size(), arm(2)};
    split(1, 2, p.theta3);
    net.sites["G"] = {st.size(), arm(1)};
    net.sites["F"] = {st.size(), arm(2)};
    split(0, 2, p.theta4);
    net.sites["D"] = {st.size(), arm(0)};
    net.sites["D2"] = {st.size(), arm(2)};
    net.cuts = {{"A", "E", "N"}, {"A", "B", "C"}, {"A", "G", "F"}, {"D", "G", "D2"}};
    net.validate();
    return net;
}

/// Mode vector with polarization (h, v) on one arm.
inline Eigen::VectorXcd arm_state(const ModeNetwork &net, int arm, cplx h = 1, cplx v = 0) {
    Eigen::VectorXcd s = Eigen::VectorXcd::Zero(net.n_modes);
    s[arm_mode(arm, kH)] = h;
    s[arm_mode(arm, kV)] = v;
    return s;
}

struct SiteWeakValue {
    std::string site;
    cplx value;
    // Forward amplitude on the site before coupling: the mode amplitude for a one-mode site,
    // otherwise the norm of the amplitudes on the site's modes.
    cplx wavefunction_amp;
    cplx partial_overlap;  // <b_f| U_after Pi_site U_before |psi_i>
    cplx total_overlap;
    Eigen::VectorXcd site_amplitudes;
};

inline constexpr double kDefaultOverlapFloor = 1e-10;

inline SiteWeakValue projector_weak_value(const ModeNetwork &net, const std::string &site, const Eigen::VectorXcd &psi_i,
                                          const Eigen::VectorXcd &b_f, double floor = kDefaultOverlapFloor) {
    if (psi_i.size() != net.n_modes || b_f.size() != net.n_modes) {
        throw InvalidArgument("projector_weak_value: state size differs from the number of modes");
    }
    const auto &st = net.site(site);
    const Eigen::VectorXcd fwd = net.transfer(0, st.interface) * psi_i;
    const Eigen::VectorXcd bwd = net.transfer(st.interface, net.stages.size()).adjoint() * b_f;
    SiteWeakValue r;
    r.site = site;
    r.total_overlap = b_f.dot(net.total() * psi_i);
    r.site_amplitudes.resize(static_cast<Eigen::Index>(st.modes.size()));
    r.partial_overlap = 0;
    for (std::size_t k = 0; k < st.modes.size(); ++k) {
        const int m = st.modes[k];
        r.site_amplitudes[static_cast<Eigen::Index>(k)] = fwd[m];
        r.partial_overlap += std::conj(bwd[m]) * fwd[m];
    }
    r.wavefunction_amp = st.modes.size() == 1 ? r.site_amplitudes[0] : cplx(r.site_amplitudes.norm());
    if (!(std::abs(r.total_overlap) > floor)) {
        std::ostringstream os;
        os << "projector_weak_value: |<b_f|U|psi_i>| = " << std::abs(r.total_overlap) << " below floor " << floor;
        throw DenominatorUnderflow(os.str(), r.partial_overlap, r.total_overlap);
    }
    r.value = r.partial_overlap / r.total_overlap;
    return r;
}

/// Sum of the projector weak values over one cut; 1 when the cut is complete.
inline cplx cut_sum(const ModeNetwork &net, const std::vector<std::string> &cut, const Eigen::VectorXcd &psi_i,
                    const Eigen::VectorXcd &b_f) {
    cplx sum = 0;
    for (const auto &label : cut) {
        sum += projector_weak_value(net, label, psi_i, b_f).value;
    }
    return sum;
}

enum class Vanishing { ClassicalAbsence, DestructiveInterference, PostselectionOrthogonality, NonVanishing };

inline const char *to_string(Vanishing v) {
    switch (v) {
        case Vanishing::ClassicalAbsence:
            return "classical_absence";
        case Vanishing::DestructiveInterference:
            return "destructive_interference";
        case Vanishing::PostselectionOrthogonality:
            return "postselection_orthogonality";
        case Vanishing::NonVanishing:
            return "non_vanishing";
    }
    return "?";
}

struct ClassifyOptions {
    double zero_tol = 1e-10;
    double band_upper = 1e-8;  // magnitudes in [zero_tol, band_upper) cannot be called either way
};

struct Classification {
    Vanishing kind = Vanishing::NonVanishing;
    bool ambiguous = false;
};

/// Why a path-projector weak value vanishes: the observable is zero on the site (i), the
/// wavefunction never reaches it (ii), or the paths through it end orthogonal to b_f (iii).
inline Classification classify_vanishing(const SiteWeakValue &swv, double A_at_site, const ClassifyOptions &o = {}) {
    if (!(o.zero_tol > 0 && o.band_upper >= o.zero_tol)) {
        throw InvalidArgument("classify_vanishing: need 0 < zero_tol <= band_upper");
    }
    const double mags[] = {std::abs(A_at_site), std::abs(swv.wavefunction_amp), std::abs(swv.partial_overlap)};
    Classification c;
    for (double m : mags) {
        c.ambiguous = c.ambiguous || (m >= o.zero_tol && m < o.band_upper);
    }
    if (A_at_site == 0) {
        c.kind = Vanishing::ClassicalAbsence;
        c.ambiguous = false;
    } else if (mags[1] < o.zero_tol) {
        c.kind = Vanishing::DestructiveInterference;
    } else if (mags[2] < o.zero_tol) {
        c.kind = Vanishing::PostselectionOrthogonality;
    }
    return c;
}

inline nlohmann::json to_json(const ModeNetwork &net) {
    nlohmann::json stages = nlohmann::json::array();
    for (const auto &s : net.stages) {
        if (s.kind == Stage::Kind::Phase) {
            stages.push_back({{"type", "phase"}, {"mode", s.a}, {"phi", s.phi}});
        } else {
            stages.push_back({{"type", "beamsplitter"}, {"modes", {s.a, s.b}}, {"theta", s.theta}});
        }
    }
    nlohmann::json sites = nlohmann::json::object();
    for (const auto &[label, st] : net.sites) {
        sites[label] = {{"interface", st.interface}, {"modes", st.modes}};
    }
    return {{"n_modes", net.n_modes}, {"stages", stages}, {"sites", sites}, {"cuts", net.cuts}};
}

inline ModeNetwork network_from_json(const nlohmann::json &j) {
    ModeNetwork net;
    try {
        net.n_modes = j.at("n_modes").get<int>();
        for (const auto &s : j.at("stages")) {
            const auto type = s.at("type").get<std::string>();
            if (type == "phase") {
                net.stages.push_back(Stage::phase(s.at("mode").get<int>(), s.at("phi").get<double>()));
            } else if (type == "beamsplitter") {
                const auto m = s.at("modes").get<std::vector<int>>();
                if (m.size() != 2) {
                    throw InvalidArgument("network: beamsplitter needs exactly two modes");
                }
                net.stages.push_back(Stage::beamsplitter(m[0], m[1], s.at("theta").get<double>()));
            } else {
                throw InvalidArgument("network: unknown stage type '" + type + "'");
            }
        }
        for (const auto &[label, s] : j.at("sites").items()) {
            net.sites[label] = {s.at("interface").get<std::size_t>(), s.at("modes").get<std::vector<int>>()};
        }
        if (j.contains("cuts")) {
            net.cuts = j.at("cuts").get<std::vector<std::vector<std::string>>>();
        }
    } catch (const nlohmann::json::exception &e) {
        throw InvalidArgument(std::string("network: ") + e.what());
    }
    net.validate();
    return net;
}

/// Weak-trace report {site: {Re, Im, classification, ambiguous}}; A defaults to 1 on every site.
inline nlohmann::json weak_trace(const ModeNetwork &net, const Eigen::VectorXcd &psi_i, const Eigen::VectorXcd &b_f,
                                 const std::map<std::string, double> &A = {}, const ClassifyOptions &o = {}) {
    nlohmann::json out = nlohmann::json::object();
    for (const auto &[label, st] : net.sites) {
        const auto w = projector_weak_value(net, label, psi_i, b_f);
        const auto it = A.find(label);
        const double a = it == A.end() ? 1.0 : it->second;
        const auto c = classify_vanishing(w, a, o);
        out[label] = {{"Re", w.value.real()},
                      {"Im", w.value.imag()},
                      {"wavefunction_amp", std::abs(w.wavefunction_amp)},
                      {"classification", to_string(c.kind)},
                      {"ambiguous", c.ambiguous}};
    }
    return out;
}

}  // namespace wvpath
