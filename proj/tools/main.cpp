// pathsde: run scenarios, sensitivity studies and stability reports, and
// drive the oracle check suites.
//
// Exit codes: 0 success, 1 a check failed, 2 invalid configuration or
// arguments (with the field path), 3 numerical failure.

#include <chrono>
#include <cinttypes>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "checks.hpp"
#include "json.hpp"
#include "pathsde/errors.hpp"
#include "pathsde/parallel.hpp"
#include "scenario.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace pathsde;
using namespace pathsde::app;

namespace {

constexpr const char* kVersion = "0.1.0";

std::string g17(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::uint64_t fnv1a(const std::string& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hex(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016" PRIx64, v);
    return buf;
}

std::string quoted(const std::string& s) {
    std::string out = "\"";
    for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
    return out + "\"";
}

// "# key: value" header lines, one column line, then rows.
class Csv {
public:
    void meta(const std::string& key, const std::string& value) { head_ << "# " << key << ": " << value << "\n"; }
    void meta(const std::string& key, double value) { meta(key, g17(value)); }
    void columns(const std::vector<std::string>& names) {
        for (std::size_t i = 0; i < names.size(); ++i) body_ << (i ? "," : "") << names[i];
        body_ << "\n";
    }
    void row(const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) body_ << (i ? "," : "") << cells[i];
        body_ << "\n";
    }
    std::string str() const { return head_.str() + body_.str(); }

private:
    std::ostringstream head_, body_;
};

class Artifacts {
public:
    explicit Artifacts(fs::path dir) : dir_(std::move(dir)) { fs::create_directories(dir_); }

    void write(const std::string& name, const std::string& bytes) {
        std::ofstream(dir_ / name, std::ios::binary) << bytes;
        files_.push_back({{"name", name}, {"bytes", bytes.size()}, {"fnv1a64", hex(fnv1a(bytes))}});
    }
    void manifest(json m) {
        m["files"] = files_;
        std::ofstream(dir_ / "manifest.json") << m.dump(2) << "\n";
    }
    const fs::path& dir() const { return dir_; }

private:
    fs::path dir_;
    json files_ = json::array();
};

fs::path output_dir(const std::string& flag) {
    if (!flag.empty()) return flag;
    if (const char* env = std::getenv("PATHSDE_OUT_DIR"); env && *env) return env;
    return "out";
}

json base_manifest(const std::string& command) {
    return {{"tool", "pathsde"},
            {"version", kVersion},
            {"command", command},
            {"threads", thread_count()},
            {"compiler", __VERSION__},
            {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                          std::to_string(EIGEN_MINOR_VERSION)}};
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---- run pipelines ---------------------------------------------------------

std::string moments_csv(const Scenario& s, const MildSolution& sol) {
    const int n = sol.paths.size(), d = s.spec.dim_h;
    Csv csv;
    csv.meta("scenario", s.name);
    csv.meta("samples", std::to_string(n));
    csv.meta("picard_iterations", std::to_string(sol.iterations));
    csv.meta("lambda", sol.lambda);
    csv.meta("max_contraction_ratio", sol.max_ratio);
    std::vector<std::string> cols{"k", "t"};
    for (const char* what : {"mean", "var", "se"})
        for (int i = 0; i < d; ++i) cols.push_back(std::string(what) + "_" + std::to_string(i));
    csv.columns(cols);
    for (int k = 0; k <= s.spec.steps; ++k) {
        Vector sum = Vector::Zero(d), sq = Vector::Zero(d);
        for (int i = 0; i < n; ++i) {
            const auto x = sol.paths[i].at(k);
            sum += x;
            sq += x.cwiseProduct(x);
        }
        const Vector mean = sum / n;
        const Vector var = (sq / n - mean.cwiseProduct(mean)).cwiseMax(0.0);
        std::vector<std::string> row{std::to_string(k), g17(s.spec.time(k))};
        for (int i = 0; i < d; ++i) row.push_back(g17(mean[i]));
        for (int i = 0; i < d; ++i) row.push_back(g17(var[i]));
        for (int i = 0; i < d; ++i) row.push_back(g17(std::sqrt(var[i] / n)));
        csv.row(row);
    }
    return csv.str();
}

std::string sensitivity_csv(const Scenario& s, const MildModel& m, const Ensemble& y, const MildSolution& sol) {
    const auto& req = *s.sensitivity;
    const VariationSolver v(m, sol.paths, s.t);
    std::vector<Ensemble> dirs;
    for (int l = 0; l < req.order; ++l) {
        dirs.push_back(Ensemble::broadcast(req.directions[std::min<std::size_t>(l, req.directions.size() - 1)],
                                           y.panel(), s.solver.p));
    }
    Ensemble z = req.order == 1   ? v.first_variation(dirs[0])
                 : req.order == 2 ? v.second_variation(dirs[0], dirs[1])
                                  : v.nth_variation(dirs);
    const auto fd = compare_with_fd(m, y, s.t, dirs, z, req.fd_ladder);
    const int n = z.size(), d = s.spec.dim_h;

    Csv csv;
    csv.meta("scenario", s.name);
    csv.meta("order", std::to_string(req.order));
    for (const auto& e : fd.ladder) csv.meta("fd_relative_error eps=" + g17(e.eps), e.relative_error);
    csv.meta("fd_best_relative_error", fd.best_error);
    csv.meta("fd_observed_order", fd.observed_order);
    csv.meta("uniform_bound", variation_bound(m, req.order));
    if (req.order == 1 && req.functional.smooth()) {
        double sum = 0.0, sq = 0.0;
        for (int i = 0; i < n; ++i) {
            const double g = req.functional.derivative(sol.paths[i], z[i]);
            sum += g;
            sq += g * g;
        }
        const double mean = sum / n;
        csv.meta("functional", req.functional.name());
        csv.meta("functional_derivative_mean", mean);
        csv.meta("functional_derivative_se", std::sqrt(std::max(0.0, sq / n - mean * mean) / n));
    }
    if (req.vertical) {
        const auto est = vertical_derivative(v, *req.vertical, req.functional);
        csv.meta("vertical_derivative_mean", est.mean);
        csv.meta("vertical_derivative_se", est.standard_error);
    }
    std::vector<std::string> cols{"k", "t"};
    for (int i = 0; i < d; ++i) cols.push_back("mean_" + std::to_string(i));
    for (int i = 0; i < d; ++i) cols.push_back("fd_mean_" + std::to_string(i));
    csv.columns(cols);
    for (int k = 0; k <= s.spec.steps; ++k) {
        Vector a = Vector::Zero(d), b = Vector::Zero(d);
        for (int i = 0; i < n; ++i) {
            a += z[i].at(k);
            b += fd.best_fd[i].at(k);
        }
        std::vector<std::string> row{std::to_string(k), g17(s.spec.time(k))};
        for (int i = 0; i < d; ++i) row.push_back(g17(a[i] / n));
        for (int i = 0; i < d; ++i) row.push_back(g17(b[i] / n));
        csv.row(row);
    }
    return csv.str();
}

std::string stability_csv(const Scenario& s) {
    const auto& req = *s.stability;
    const auto rep = stability_report(build_family(s), req.orders);
    Csv csv;
    csv.meta("scenario", s.name);
    csv.meta("family", req.family);
    csv.meta("negative_control", req.negative_control ? "true" : "false");
    csv.meta("baseline", rep.baseline);
    for (std::size_t o = 0; o < rep.orders.size(); ++o) {
        csv.meta("derivative_baseline order=" + std::to_string(rep.orders[o]), rep.derivative_baselines[o]);
        csv.meta("derivative_slope order=" + std::to_string(rep.orders[o]), rep.derivative_slopes[o]);
    }
    csv.meta("threshold", rep.threshold);
    csv.meta("slope", rep.slope);
    csv.meta("verdict", rep.verdict);
    std::vector<std::string> cols{"j", "t_j", "e_j", "semigroup_gap"};
    for (int k : rep.orders) cols.push_back("derivative_error_" + std::to_string(k));
    csv.columns(cols);
    for (const auto& r : rep.rows) {
        std::vector<std::string> row{std::to_string(r.j), g17(r.t_j), g17(r.e_j), g17(r.semigroup_gap)};
        for (double e : r.derivative_errors) row.push_back(g17(e));
        csv.row(row);
    }
    return csv.str();
}

int run_command(const std::string& command, const std::string& path, const Overrides& ov, const std::string& out) {
    const auto t0 = std::chrono::steady_clock::now();
    const Scenario s = load_scenario(path, ov);
    if (command == "sensitivity" && !s.sensitivity) throw ConfigError("outputs.sensitivity", "missing");
    if (command == "stability" && !s.stability) throw ConfigError("outputs.stability", "missing");

    Artifacts art(output_dir(out));
    json timings = json::object();
    const std::string canonical = s.canonical.dump();
    if (command == "run" || command == "sensitivity") {
        const auto model = s.model();
        const auto panel = s.panel();
        const auto y = s.initial(panel);
        auto t1 = std::chrono::steady_clock::now();
        const auto sol = model->solve(y, s.t);
        timings["solve"] = seconds_since(t1);
        if (command == "run" && s.moments) art.write("moments.csv", moments_csv(s, sol));
        if (s.sensitivity) {
            t1 = std::chrono::steady_clock::now();
            art.write("sensitivity.csv", sensitivity_csv(s, *model, y, sol));
            timings["sensitivity"] = seconds_since(t1);
        }
    }
    if ((command == "run" || command == "stability") && s.stability) {
        const auto t1 = std::chrono::steady_clock::now();
        art.write("stability.csv", stability_csv(s));
        timings["stability"] = seconds_since(t1);
    }
    timings["total"] = seconds_since(t0);
    json m = base_manifest(command);
    m["schema_version"] = kSchemaVersion;
    m["scenario_path"] = path;
    m["scenario"] = s.canonical;
    m["config_hash"] = hex(fnv1a(canonical));
    m["seed"] = s.seed;
    m["samples"] = s.samples;
    m["timings"] = timings;
    art.manifest(m);
    std::cout << "wrote " << art.dir().string() << "\n";
    return 0;
}

// ---- check -----------------------------------------------------------------

int check_command(const std::string& suite, const CheckOptions& opt, const std::string& out) {
    if (suite != "all" && !is_suite(suite)) {
        std::cerr << "error: suite: unknown suite '" << suite << "'\n";
        return 2;
    }
    const std::vector<std::string> suites = suite == "all" ? suite_names() : std::vector<std::string>{suite};
    Artifacts art(output_dir(out));
    json timings = json::object();
    bool all_pass = true;
    int failed = 0, total = 0;
    for (const auto& name : suites) {
        const auto r = run_suite(name, opt);
        Csv csv;
        csv.meta("suite", name);
        csv.meta("seed", std::to_string(opt.seed));
        csv.meta("tolerance_scale", opt.tolerance_scale);
        csv.columns({"name", "criterion", "relation", "measured", "tolerance", "pass"});
        for (const auto& a : r.assertions) {
            csv.row({quoted(a.name), std::to_string(a.criterion), relation_symbol(a.relation), g17(a.measured),
                     g17(a.tolerance), a.pass ? "1" : "0"});
            std::printf("[%s] %s: %s  measured %.6g %s %.6g\n", a.pass ? "PASS" : "FAIL", name.c_str(),
                        a.name.c_str(), a.measured, relation_symbol(a.relation), a.tolerance);
            ++total;
            failed += a.pass ? 0 : 1;
        }
        art.write("check_" + name + ".csv", csv.str());
        timings[name] = r.seconds;
        all_pass = all_pass && r.pass();
    }
    std::printf("%d of %d assertions passed\n", total - failed, total);
    json m = base_manifest("check");
    m["suite"] = suite;
    m["seed"] = opt.seed;
    m["samples"] = opt.samples;
    m["tolerance_scale"] = opt.tolerance_scale;
    m["config_hash"] = hex(fnv1a(suite + "|" + std::to_string(opt.seed) + "|" + std::to_string(opt.samples) + "|" +
                                 g17(opt.tolerance_scale)));
    m["timings"] = timings;
    art.manifest(m);
    return all_pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Path-dependent mild SDE solver: scenarios, sensitivities, stability and checks"};
    app.require_subcommand(1);
    std::string scenario, out, suite = "all";
    std::uint64_t seed = 0;
    int samples = 0, steps = 0, threads = 1;
    double tolerance_scale = 1.0;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--out", out, "Output directory (default $PATHSDE_OUT_DIR, then ./out)");
        sub->add_option("--threads", threads, "Worker threads; affects speed only")->check(CLI::PositiveNumber);
        sub->add_option("--seed", seed, "Noise seed override");
        sub->add_option("--samples", samples, "Monte Carlo sample count override")->check(CLI::PositiveNumber);
    };
    std::vector<CLI::App*> scenario_cmds;
    for (const char* name : {"run", "sensitivity", "stability"}) {
        auto* sub = app.add_subcommand(name, std::string(name) == "run" ? "Solve a scenario and write every requested output"
                                                                        : std::string("Write only the ") + name + " output");
        sub->add_option("--scenario", scenario, "Scenario JSON file")->required();
        sub->add_option("--steps", steps, "Grid step count override")->check(CLI::PositiveNumber);
        add_common(sub);
        scenario_cmds.push_back(sub);
    }
    auto* check = app.add_subcommand("check", "Run the oracle check suites");
    check->add_option("--suite", suite, "partitions, chainrule, fixedpoint, convolution, sde, sensitivity, perturb or all");
    check->add_option("--tolerance-scale", tolerance_scale, "Harness self-test: scales every tolerance")->group("");
    add_common(check);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        set_thread_count(threads);
        if (check->parsed()) {
            CheckOptions opt;
            opt.seed = check->count("--seed") ? seed : 1;
            opt.samples = samples;
            opt.tolerance_scale = tolerance_scale;
            return check_command(suite, opt, out);
        }
        Overrides ov;
        for (auto* sub : scenario_cmds) {
            if (!sub->parsed()) continue;
            if (sub->count("--seed")) ov.seed = seed;
            if (sub->count("--samples")) ov.samples = samples;
            if (sub->count("--steps")) ov.steps = steps;
            return run_command(sub->get_name(), scenario, ov, out);
        }
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const Error& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
