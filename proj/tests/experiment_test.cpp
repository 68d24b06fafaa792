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

#include "wvpath/experiment.hpp"

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "fixtures.hpp"
#include "gtest/gtest.h"
#include "test_util.hpp"

using namespace wvpath;
namespace fs = std::filesystem;

namespace {

const std::string kConfigs = WVPATH_FIXTURE_DIR "/configs/";

struct CliRun {
    int status = -1;
    std::string err;
};

fs::path scratch_dir() {
    return fs::temp_directory_path() / ("wvpath_cli_" + std::to_string(::getpid()));
}

fs::path scratch(const std::string &name) {
    fs::create_directories(scratch_dir());
    return scratch_dir() / name;
}

struct ScratchCleanup : ::testing::Environment {
    void TearDown() override { fs::remove_all(scratch_dir()); }
};

const auto *const kCleanup = ::testing::AddGlobalTestEnvironment(new ScratchCleanup);

std::string slurp(const fs::path &p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

CliRun cli(const std::string &args) {
    const auto err = scratch("stderr.txt");
    const std::string cmd = std::string("'") + WVPATH_CLI_PATH + "' " + args + " 2> '" + err.string() + "'";
    const int raw = std::system(cmd.c_str());
    return {WIFEXITED(raw) ? WEXITSTATUS(raw) : -1, slurp(err)};
}

fs::path write_config(const std::string &name, const std::string &text) {
    auto p = scratch(name);
    std::ofstream(p) << text;
    return p;
}

json run_fixture(const std::string &config, const std::string &out_name) {
    const auto out = scratch(out_name);
    fs::remove(out);
    auto r = cli("run --config '" + kConfigs + config + "' --out '" + out.string() + "'");
    EXPECT_EQ(r.status, 0) << r.err;
    return json::parse(slurp(out));
}

// Small Monte Carlo config used for the determinism checks.
const char *kSmallClassical = R"({
  "scenario": "classical",
  "seed": 5,
  "parameters": {
    "ensemble": {"q0": 0.3, "sigma_q": 1, "p0": -0.2, "sigma_p": 0.5, "n": 20000},
    "potential": {"type": "harmonic", "omega": 0.8},
    "t_f": 1.5,
    "domain": {"lo": -0.5, "hi": 2}
  }
})";

}  // namespace

TEST(Cli, WeakValueFixtureIsAnomalous) {
    const auto j = run_fixture("weak_value_anomalous.json", "wv.json");
    const auto &r = j.at("result");
    const cplx w{r.at("Re").get<double>(), r.at("Im").get<double>()};
    EXPECT_LT(test_util::rel_err(w, fixtures::kAnomalousWeakValue), 1e-6);
    EXPECT_LT(r.at("route_rel_diff").get<double>(), 1e-8);
    EXPECT_TRUE(r.at("outside_range").get<bool>());
    EXPECT_LT(w.real(), 0.0);
    EXPECT_EQ(j.at("version"), kVersion);
    EXPECT_EQ(j.at("config").at("parameters").at("observable").at("type"), "indicator");
}

TEST(Cli, InterferometerFixtureShowsFiveSitePattern) {
    const auto j = run_fixture("interferometer_nested.json", "ifm.json");
    const auto &sites = j.at("result").at("sites");
    auto mag = [&](const char *s) { return std::hypot(sites.at(s).at("Re").get<double>(), sites.at(s).at("Im").get<double>()); };
    for (const char *s : {"E", "F"}) {
        EXPECT_LT(mag(s), 1e-10) << s;
        EXPECT_GT(sites.at(s).at("wavefunction_amp").get<double>(), 0.1) << s;
        EXPECT_EQ(sites.at(s).at("classification"), "postselection_orthogonality") << s;
    }
    for (const char *s : {"A", "B", "C"}) {
        EXPECT_GT(mag(s), 0.1) << s;
    }
}

TEST(Cli, EmptyOrMalformedConfigExitsTwoWithoutOutput) {
    const auto out = scratch("never.json");
    for (const char *text : {"", "{\"scenario\": ", "[1, 2]", "{}"}) {
        fs::remove(out);
        const auto cfg = write_config("bad.json", text);
        auto r = cli("run --config '" + cfg.string() + "' --out '" + out.string() + "'");
        EXPECT_EQ(r.status, 2) << "config: " << text << "\n" << r.err;
        EXPECT_FALSE(fs::exists(out)) << text;
    }
    fs::remove(out);
    EXPECT_EQ(cli("run --config /nonexistent/config.json --out '" + out.string() + "'").status, 2);
    EXPECT_EQ(cli("run --out '" + out.string() + "'").status, 2);
    EXPECT_EQ(cli("--no-such-flag").status, 2);
    EXPECT_FALSE(fs::exists(out));
}

TEST(Cli, UnknownKeyIsReportedWithPointer) {
    const auto cfg = write_config(
        "typo.json", R"({"scenario": "propagate", "parameters": {"grid": {"x_min": -5, "x_max": 5, "nn": 64}}})");
    const auto out = scratch("typo_out.json");
    fs::remove(out);
    auto r = cli("run --config '" + cfg.string() + "' --out '" + out.string() + "'");
    EXPECT_EQ(r.status, 2);
    EXPECT_NE(r.err.find("/parameters/grid/nn"), std::string::npos) << r.err;
    EXPECT_FALSE(fs::exists(out));
}

TEST(Cli, PhysicsErrorExitsOne) {
    // Initial and final packets 20 widths apart: the transition amplitude underflows.
    const auto cfg = write_config("orthogonal.json", R"({
      "scenario": "weak-value",
      "parameters": {
        "grid": {"x_min": -20, "x_max": 20, "n": 256},
        "initial": {"x0": -12},
        "postselection": {"x0": 12},
        "t_w": 0.05, "t_f": 0.1
      }
    })");
    const auto out = scratch("orthogonal_out.json");
    fs::remove(out);
    auto r = cli("run --config '" + cfg.string() + "' --out '" + out.string() + "'");
    EXPECT_EQ(r.status, 1) << r.err;
    EXPECT_NE(r.err.find("denominator underflow"), std::string::npos) << r.err;
    EXPECT_FALSE(fs::exists(out));
}

TEST(Cli, SubcommandMustMatchConfig) {
    auto r = cli("scar --config '" + kConfigs + "weak_value_anomalous.json'");
    EXPECT_EQ(r.status, 2);
    EXPECT_NE(r.err.find("/scenario"), std::string::npos) << r.err;
}

TEST(Cli, RepeatedRunsAreByteIdentical) {
    const auto cfg = write_config("mc.json", kSmallClassical);
    std::vector<std::string> outputs;
    for (const char *extra : {"", "", "--seed 6"}) {
        const auto out = scratch("mc_" + std::to_string(outputs.size()) + ".json");
        auto r = cli("run --threads 2 " + std::string(extra) + " --config '" + cfg.string() + "' --out '" +
                     out.string() + "'");
        ASSERT_EQ(r.status, 0) << r.err;
        outputs.push_back(slurp(out));
    }
    EXPECT_EQ(outputs[0], outputs[1]);
    EXPECT_NE(outputs[0], outputs[2]);
    EXPECT_EQ(json::parse(outputs[2]).at("config").at("seed"), 6);
}

TEST(Cli, ThreadCountsAgreeWithinStandardError) {
    const auto cfg = json::parse(kSmallClassical);
    auto one = run_experiment(cfg, {.threads = 1u}).outcome.result;
    auto three = run_experiment(cfg, {.threads = 3u}).outcome.result;
    const double se = one.at("standard_error").get<double>();
    EXPECT_LE(std::abs(one.at("shift").get<double>() - three.at("shift").get<double>()), 3 * se);
}

TEST(Cli, CsvCarriesHeaderAndTable) {
    const auto out = scratch("ifm.csv");
    auto r = cli("interferometer --config '" + kConfigs + "interferometer_nested.json' --format csv --out '" +
                 out.string() + "'");
    ASSERT_EQ(r.status, 0) << r.err;
    std::istringstream in(slurp(out));
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, std::string("# wvpath ") + kVersion);
    int rows = 0;
    bool header = false;
    while (std::getline(in, line)) {
        if (line.rfind("#", 0) == 0) {
            continue;
        }
        if (!header) {
            EXPECT_EQ(line, "site,re,im,wavefunction_amp,classification");
            header = true;
        } else {
            ++rows;
        }
    }
    EXPECT_EQ(rows, 9);
}

TEST(Experiment, ResolvedConfigCarriesDefaults) {
    auto e = run_experiment(json::parse(R"({"scenario": "propagate", "parameters": {"grid": {"n": 512}}})"),
                            {.threads = 1u});
    const auto &p = e.resolved.at("parameters");
    EXPECT_EQ(p.at("grid").at("n"), 512);
    EXPECT_EQ(p.at("grid").at("x_min"), -20.0);
    EXPECT_EQ(p.at("potential").at("type"), "free");
    EXPECT_EQ(p.at("params").at("hbar"), 1.0);
    EXPECT_EQ(e.resolved.at("output").at("format"), "json");
    // A resolved config reproduces itself.
    auto again = run_experiment(e.resolved);
    EXPECT_EQ(again.resolved, e.resolved);
    EXPECT_EQ(render(again), render(e));
}

TEST(Experiment, ConfigErrorsNameTheKey) {
    auto pointer_of = [](const char *text) {
        try {
            run_experiment(json::parse(text));
        } catch (const ConfigError &e) {
            return e.pointer;
        }
        return std::string("<no error>");
    };
    EXPECT_EQ(pointer_of(R"({"parameters": {}})"), "/scenario");
    EXPECT_EQ(pointer_of(R"({"scenario": "teleport"})"), "/scenario");
    EXPECT_EQ(pointer_of(R"({"scenario": "propagate", "extra": 1})"), "/extra");
    EXPECT_EQ(pointer_of(R"({"scenario": "propagate", "parameters": {"grid": {"n": "many"}}})"), "/parameters/grid/n");
    EXPECT_EQ(pointer_of(R"({"scenario": "propagate", "parameters": {"params": {"hbar": -1}}})"),
              "/parameters/params/hbar");
    EXPECT_EQ(pointer_of(R"({"scenario": "weak-value", "parameters": {"initial": {"type": "superposition",
              "terms": [{"x0": 1}, {"x0": 2, "width": 3}]}}})"),
              "/parameters/initial/terms/1/width");
    EXPECT_EQ(pointer_of(R"({"scenario": "weak-value", "parameters": {"t_w": 3}})"), "/parameters/t_f");
    EXPECT_EQ(pointer_of(R"({"scenario": "infer-propagator", "parameters": {"potential": {"type": "quartic"}}})"),
              "/parameters/potential/type");
}

TEST(Experiment, ScenariosReproduceLibraryResults) {
    auto infer = run_experiment(json::parse(slurp(kConfigs + "infer_free.json")), {.threads = 1u}).outcome.result;
    EXPECT_EQ(infer.at("points"), 25);
    EXPECT_LT(infer.at("max_rel_err").get<double>(), 1e-6);
    auto sc = run_experiment(json::parse(slurp(kConfigs + "semiclassical_harmonic.json"))).outcome.result;
    EXPECT_LT(sc.at("max_rel_err").get<double>(), 1e-9);
    auto scar = run_experiment(json::parse(slurp(kConfigs + "scar_harmonic.json"))).outcome.result;
    EXPECT_LT(scar.at("rel_err").get<double>(), 0.05);
}
