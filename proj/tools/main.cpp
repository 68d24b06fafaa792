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

// wvpath: runs one experiment config and writes its result as JSON or CSV.
//
// Exit status: 0 success, 1 physics error, 2 config or usage error. Nothing is written to
// --out unless the run succeeds.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "wvpath/experiment.hpp"

namespace {

constexpr int kPhysicsError = 1;
constexpr int kConfigError = 2;

struct Flags {
    std::string config;
    std::string out;
    std::string format;
    std::optional<unsigned> threads;
    std::optional<std::uint64_t> seed;
    bool verbose = false;
};

wvpath::json load_config(const std::string &path) {
    std::ifstream in(path);
    if (!in) {
        throw wvpath::ConfigError("", "cannot read config file '" + path + "'");
    }
    std::stringstream ss;
    ss << in.rdbuf();
    try {
        return wvpath::json::parse(ss.str());
    } catch (const wvpath::json::parse_error &e) {
        throw wvpath::ConfigError("", std::string("malformed JSON: ") + e.what());
    }
}

// Temporary file plus rename, so a failed write never leaves a partial artifact behind.
void write_artifact(const std::string &path, const std::string &text) {
    const std::string tmp = path + ".partial";
    {
        std::ofstream out(tmp, std::ios::binary);
        out << text;
        if (!out) {
            std::remove(tmp.c_str());
            throw std::runtime_error("cannot write '" + path + "'");
        }
    }
    std::filesystem::rename(tmp, path);
}

int execute(const std::optional<std::string> &scenario, const Flags &f) {
    wvpath::json config = wvpath::json::object();
    if (!f.config.empty()) {
        config = load_config(f.config);
    } else if (!scenario) {
        throw wvpath::ConfigError("", "'run' needs --config");
    }
    wvpath::RunOverrides ov;
    ov.scenario = scenario;
    ov.seed = f.seed;
    ov.threads = f.threads;
    if (!f.format.empty()) {
        ov.format = f.format;
    } else if (f.out.size() > 4 && f.out.substr(f.out.size() - 4) == ".csv" &&
               !(config.is_object() && config.contains("output"))) {
        ov.format = "csv";
    }
    auto e = wvpath::run_experiment(config, ov, f.verbose ? &std::cerr : nullptr);
    const auto text = wvpath::render(e);
    if (f.out.empty()) {
        std::cout << text;
    } else {
        write_artifact(f.out, text);
        if (f.verbose) {
            std::cerr << "wvpath: wrote " << f.out << '\n';
        }
    }
    return 0;
}

}  // namespace

int main(int argc, char **argv) {
    CLI::App app{"Weak values, path integrals and their classical limit"};
    app.set_version_flag("--version", std::string(wvpath::kVersion));
    app.require_subcommand(1);
    Flags f;
    auto add_flags = [&](CLI::App &a) {
        a.add_option("--config", f.config, "Experiment config (JSON)");
        a.add_option("--out", f.out, "Output path (default: stdout)");
        a.add_option("--format", f.format, "Output format")->check(CLI::IsMember({"json", "csv"}));
        a.add_option("--threads", f.threads, "Worker threads (0: hardware concurrency)");
        a.add_option("--seed", f.seed, "Random seed for Monte Carlo scenarios");
        a.add_flag("--verbose", f.verbose, "Progress on stderr");
    };
    add_flags(app);

    std::optional<std::string> chosen;
    bool run_any = false;
    auto *run = app.add_subcommand("run", "Run the scenario named in the config");
    run->fallthrough();
    run->callback([&] { run_any = true; });
    for (const auto &name : wvpath::scenario_names()) {
        auto *sub = app.add_subcommand(name, "Run the '" + name + "' scenario");
        sub->fallthrough();
        sub->callback([&chosen, name] { chosen = name; });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp &e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp &e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion &e) {
        return app.exit(e);
    } catch (const CLI::ParseError &e) {
        app.exit(e);
        return kConfigError;
    }

    try {
        return execute(run_any ? std::nullopt : chosen, f);
    } catch (const wvpath::ConfigError &e) {
        std::cerr << "wvpath: " << e.what() << '\n';
        return kConfigError;
    } catch (const wvpath::Error &e) {
        std::cerr << "wvpath: " << e.what() << '\n';
        return kPhysicsError;
    } catch (const std::exception &e) {
        std::cerr << "wvpath: " << e.what() << '\n';
        return kPhysicsError;
    }
}
