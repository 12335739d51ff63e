#include "scenario.hpp"

#include <cmath>
#include <fstream>

#include "pathsde/errors.hpp"
#include "pathsde/noise.hpp"

namespace pathsde::app {

using nlohmann::json;

namespace {

std::string join(const std::string& field, const std::string& key) {
    return field.empty() ? key : field + "." + key;
}

const json& need(const json& j, const std::string& key, const std::string& field) {
    if (!j.is_object() || !j.contains(key)) throw ConfigError(join(field, key), "missing");
    return j.at(key);
}

double number(const json& j, const std::string& field) {
    if (!j.is_number()) throw ConfigError(field, "expected a number");
    return j.get<double>();
}

double number_or(const json& j, const std::string& key, const std::string& field, double fallback) {
    return j.is_object() && j.contains(key) ? number(j.at(key), join(field, key)) : fallback;
}

int integer(const json& j, const std::string& field) {
    if (!j.is_number_integer()) throw ConfigError(field, "expected an integer");
    return j.get<int>();
}

std::string text(const json& j, const std::string& field) {
    if (!j.is_string()) throw ConfigError(field, "expected a string");
    return j.get<std::string>();
}

Vector vector_of(const json& j, const std::string& field, int size) {
    if (!j.is_array()) throw ConfigError(field, "expected an array");
    if (size >= 0 && static_cast<int>(j.size()) != size) {
        throw ConfigError(field, "expected " + std::to_string(size) + " entries");
    }
    Vector v(j.size());
    for (std::size_t i = 0; i < j.size(); ++i) v[i] = number(j[i], field + "[" + std::to_string(i) + "]");
    return v;
}

Matrix matrix_of(const json& j, const std::string& field, int rows, int cols) {
    if (!j.is_array() || static_cast<int>(j.size()) != rows) {
        throw ConfigError(field, "expected " + std::to_string(rows) + " rows");
    }
    Matrix m(rows, cols);
    for (int r = 0; r < rows; ++r) m.row(r) = vector_of(j[r], field + "[" + std::to_string(r) + "]", cols);
    return m;
}

SpaceSpec parse_space(const json& j) {
    SpaceSpec s;
    s.dim_h = integer(need(j, "dim_h", "space"), "space.dim_h");
    s.dim_u = integer(need(j, "dim_u", "space"), "space.dim_u");
    s.horizon = number(need(j, "horizon", "space"), "space.horizon");
    s.steps = integer(need(j, "steps", "space"), "space.steps");
    s.validate();
    return s;
}

Semigroup parse_semigroup(const json& j, const SpaceSpec& spec) {
    const auto kind = text(need(j, "kind", "semigroup"), "semigroup.kind");
    Semigroup s = Semigroup::diagonal(Vector::Zero(spec.dim_h), spec.horizon);
    if (kind == "diagonal") {
        s = Semigroup::diagonal(vector_of(need(j, "spectrum", "semigroup"), "semigroup.spectrum", spec.dim_h),
                                spec.horizon);
    } else if (kind == "generator") {
        s = Semigroup::generator(
            matrix_of(need(j, "matrix", "semigroup"), "semigroup.matrix", spec.dim_h, spec.dim_h), spec.horizon);
    } else {
        throw ConfigError("semigroup.kind", "expected diagonal or generator");
    }
    if (j.contains("bound")) s = s.with_bound(number(j.at("bound"), "semigroup.bound"));
    validate(s);
    return s;
}

Path parse_direction(const json& j, const SpaceSpec& spec, const std::string& field) {
    const auto kind = text(need(j, "kind", field), join(field, "kind"));
    if (kind == "constant") {
        return Path::constant(vector_of(need(j, "value", field), join(field, "value"), spec.dim_h), spec.steps);
    }
    if (kind == "step") {
        const double t = number(need(j, "at", field), join(field, "at"));
        return step_direction(spec, spec.snap(t), vector_of(need(j, "value", field), join(field, "value"), spec.dim_h));
    }
    if (kind == "tabulated") {
        const auto& rows = need(j, "values", field);
        if (!rows.is_array() || static_cast<int>(rows.size()) != spec.steps + 1) {
            throw ConfigError(join(field, "values"), "expected one row per grid time (steps + 1)");
        }
        Path p(spec.dim_h, spec.steps);
        for (int k = 0; k <= spec.steps; ++k) {
            p.at(k) = vector_of(rows[k], join(field, "values") + "[" + std::to_string(k) + "]", spec.dim_h);
        }
        return p;
    }
    throw ConfigError(join(field, "kind"), "expected constant, step or tabulated");
}

std::vector<Path> parse_directions(const json& j, const SpaceSpec& spec, const std::string& field) {
    std::vector<Path> out;
    if (!j.is_array() || j.empty()) throw ConfigError(field, "expected a non-empty array");
    for (std::size_t i = 0; i < j.size(); ++i) {
        out.push_back(parse_direction(j[i], spec, field + "[" + std::to_string(i) + "]"));
    }
    return out;
}

void check_keys(const json& j, const std::string& field, std::initializer_list<const char*> allowed) {
    if (!j.is_object()) throw ConfigError(field, "expected an object");
    for (const auto& [key, value] : j.items()) {
        bool ok = false;
        for (const char* a : allowed) ok = ok || key == a;
        if (!ok) throw ConfigError(join(field, key), "unknown field");
    }
}

}  // namespace

DriftPart parse_drift(const json& j, const SpaceSpec& spec, const std::string& field) {
    const int n = spec.dim_h;
    const auto kind = text(need(j, "kind", field), join(field, "kind"));
    auto mat = [&](const char* key) { return matrix_of(need(j, key, field), join(field, key), n, n); };
    auto vec = [&](const char* key) { return vector_of(need(j, key, field), join(field, key), n); };
    auto vec_or_zero = [&](const char* key) {
        return j.contains(key) ? vector_of(j.at(key), join(field, key), n) : Vector::Zero(n);
    };
    if (kind == "zero") return zero_drift();
    if (kind == "constant") return constant_drift(vec("b0"));
    if (kind == "linear") return linear_drift(mat("B"), vec_or_zero("b0"));
    if (kind == "running_integral") return running_integral_drift(mat("B"), vec_or_zero("b0"), spec);
    if (kind == "running_max") return running_max_drift(mat("B"));
    if (kind == "polynomial") {
        const Vector a = vector_of(need(j, "a", field), join(field, "a"), -1);
        return polynomial_drift(std::vector<double>(a.data(), a.data() + a.size()), n,
                                number(need(j, "radius", field), join(field, "radius")));
    }
    if (kind == "sine") return sine_drift(vec("a"), mat("W"), mat("V"), vec("c"), spec);
    throw ConfigError(join(field, "kind"),
                      "expected zero, constant, linear, running_integral, running_max, polynomial or sine");
}

DiffusionPart parse_diffusion(const json& j, const SpaceSpec& spec, const std::string& field) {
    const int n = spec.dim_h, m = spec.dim_u;
    const auto kind = text(need(j, "kind", field), join(field, "kind"));
    auto mat = [&](const char* key, int rows, int cols) {
        return matrix_of(need(j, key, field), join(field, key), rows, cols);
    };
    if (kind == "zero") return zero_diffusion();
    if (kind == "constant") return constant_diffusion(mat("S0", n, m));
    if (kind == "linear") return linear_diffusion(mat("S0", n, m), mat("S1", n, m));
    if (kind == "sine") {
        return sine_diffusion(mat("S0", n, m), vector_of(need(j, "a", field), join(field, "a"), n), mat("W", n, n),
                              vector_of(need(j, "c", field), join(field, "c"), n), mat("S1", n, m));
    }
    throw ConfigError(join(field, "kind"), "expected zero, constant, linear or sine");
}

Coefficients Scenario::coefficients() const {
    return make_coefficients(drift, diffusion, spec.dim_h, spec.dim_u, semigroup.bound());
}

std::shared_ptr<const MildModel> Scenario::model() const {
    return std::make_shared<MildModel>(spec, semigroup, coefficients(), solver);
}

std::shared_ptr<const NoisePanel> Scenario::panel() const {
    return std::make_shared<NoisePanel>(seed, samples, spec);
}

Ensemble Scenario::initial(const std::shared_ptr<const NoisePanel>& panel) const {
    const auto kind = initial_spec.at("kind").get<std::string>();
    if (kind != "random") return Ensemble::broadcast(parse_direction(initial_spec, spec, "initial"), panel, solver.p);
    // Per-sample constant paths mean + scale * N(0, I) from the counter-based stream.
    const auto rseed = initial_spec.at("seed").get<std::uint64_t>();
    const double scale = initial_spec.value("scale", 1.0);
    const Vector mean = initial_spec.contains("mean") ? vector_of(initial_spec.at("mean"), "initial.mean", spec.dim_h)
                                                      : Vector::Zero(spec.dim_h);
    std::vector<Path> ys;
    for (int i = 0; i < samples; ++i) {
        Vector v(spec.dim_h);
        for (int d = 0; d < spec.dim_h; d += 2) {
            const auto z = normal_pair(rseed, i, d / 2);
            v[d] = mean[d] + scale * z[0];
            if (d + 1 < spec.dim_h) v[d + 1] = mean[d + 1] + scale * z[1];
        }
        ys.push_back(Path::constant(v, spec.steps));
    }
    return Ensemble(std::move(ys), panel, solver.p);
}

Scenario parse_scenario(json doc, const Overrides& overrides) {
    check_keys(doc, "", {"schema_version", "name", "space", "semigroup", "coefficients", "initial", "solver",
                         "noise", "outputs"});
    const int version = integer(need(doc, "schema_version", ""), "schema_version");
    if (version != kSchemaVersion) {
        throw ConfigError("schema_version", "expected " + std::to_string(kSchemaVersion));
    }
    if (overrides.steps) doc["space"]["steps"] = *overrides.steps;
    if (overrides.seed) doc["noise"]["seed"] = *overrides.seed;
    if (overrides.samples) doc["noise"]["samples"] = *overrides.samples;

    Scenario s;
    s.name = doc.contains("name") ? text(doc.at("name"), "name") : "scenario";
    s.spec = parse_space(need(doc, "space", ""));
    s.semigroup = parse_semigroup(need(doc, "semigroup", ""), s.spec);

    const auto& co = need(doc, "coefficients", "");
    check_keys(co, "coefficients", {"drift", "diffusion"});
    s.drift_spec = co.value("drift", json{{"kind", "zero"}});
    s.diffusion_spec = co.value("diffusion", json{{"kind", "zero"}});
    s.drift = parse_drift(s.drift_spec, s.spec, "coefficients.drift");
    s.diffusion = parse_diffusion(s.diffusion_spec, s.spec, "coefficients.diffusion");

    const json solver = doc.value("solver", json::object());
    check_keys(solver, "solver", {"p", "beta", "lambda", "tol", "max_iter"});
    s.solver.p = number_or(solver, "p", "solver", 4.0);
    s.solver.beta = number_or(solver, "beta", "solver", 0.0);
    s.solver.lambda = number_or(solver, "lambda", "solver", -1.0);
    s.solver.tol = number_or(solver, "tol", "solver", 1e-8);
    if (solver.contains("max_iter")) s.solver.max_iter = integer(solver.at("max_iter"), "solver.max_iter");
    validate_config(s.solver, s.coefficients());

    s.initial_spec = need(doc, "initial", "");
    s.t = s.spec.snap(number_or(s.initial_spec, "time", "initial", 0.0));
    const auto ikind = text(need(s.initial_spec, "kind", "initial"), "initial.kind");
    if (ikind == "random") {
        if (!need(s.initial_spec, "seed", "initial").is_number_unsigned()) {
            throw ConfigError("initial.seed", "expected a non-negative integer");
        }
        if (s.initial_spec.contains("mean")) vector_of(s.initial_spec.at("mean"), "initial.mean", s.spec.dim_h);
        number_or(s.initial_spec, "scale", "initial", 1.0);
    } else {
        parse_direction(s.initial_spec, s.spec, "initial");
    }

    const auto& noise = need(doc, "noise", "");
    check_keys(noise, "noise", {"seed", "samples"});
    if (!need(noise, "seed", "noise").is_number_unsigned()) throw ConfigError("noise.seed", "expected a non-negative integer");
    s.seed = noise.at("seed").get<std::uint64_t>();
    s.samples = integer(need(noise, "samples", "noise"), "noise.samples");
    if (s.samples < 1) throw ConfigError("noise.samples", "must be at least 1");

    const json outputs = doc.value("outputs", json::object());
    check_keys(outputs, "outputs", {"moments", "sensitivity", "stability"});
    s.moments = outputs.value("moments", true);
    if (outputs.contains("sensitivity")) {
        const auto& j = outputs.at("sensitivity");
        const std::string f = "outputs.sensitivity";
        check_keys(j, f, {"order", "directions", "functional", "index", "fd_ladder", "vertical"});
        SensitivityRequest r;
        r.order = j.contains("order") ? integer(j.at("order"), f + ".order") : 1;
        if (r.order < 1) throw ConfigError(f + ".order", "must be at least 1");
        if (r.order > s.solver.p) throw ConfigError(f + ".order", "derivative order must not exceed solver.p");
        if (r.order > s.coefficients().order) {
            throw ConfigError(f + ".order", "coefficients supply derivative bounds up to order " +
                                                std::to_string(s.coefficients().order));
        }
        r.directions = parse_directions(need(j, "directions", f), s.spec, f + ".directions");
        try {
            r.functional = TerminalFunctional::parse(j.value("functional", "coordinate"), j.value("index", 0));
        } catch (const ConfigError& e) {
            throw ConfigError(f + ".functional", e.what());
        }
        if (r.functional.kind == TerminalFunctional::Kind::coordinate &&
            (r.functional.index < 0 || r.functional.index >= s.spec.dim_h)) {
            throw ConfigError(f + ".index", "outside the state dimension");
        }
        if (j.contains("fd_ladder")) {
            const Vector l = vector_of(j.at("fd_ladder"), f + ".fd_ladder", -1);
            r.fd_ladder.assign(l.data(), l.data() + l.size());
        }
        if (j.contains("vertical")) {
            if (!r.functional.smooth()) throw ConfigError(f + ".functional", "vertical derivative needs a smooth functional");
            r.vertical = vector_of(j.at("vertical"), f + ".vertical", s.spec.dim_h);
        }
        s.sensitivity = std::move(r);
    }
    if (outputs.contains("stability")) {
        const auto& j = outputs.at("stability");
        const std::string f = "outputs.stability";
        check_keys(j, f, {"family", "members", "perturbation", "orders", "directions", "negative_control",
                          "threshold", "threshold_exponent"});
        StabilityRequest r;
        r.family = text(need(j, "family", f), f + ".family");
        if (r.family != "drift" && r.family != "initial" && r.family != "semigroup" && r.family != "time") {
            throw ConfigError(f + ".family", "expected drift, initial, semigroup or time");
        }
        r.members = j.contains("members") ? integer(j.at("members"), f + ".members") : 8;
        if (r.members < 2) throw ConfigError(f + ".members", "need at least two members");
        if (r.family != "time") r.perturbation = need(j, "perturbation", f);
        if (j.contains("orders")) {
            for (std::size_t i = 0; i < j.at("orders").size(); ++i) {
                const int k = integer(j.at("orders")[i], f + ".orders[" + std::to_string(i) + "]");
                if (k < 1 || k > s.coefficients().order || k > s.solver.p) {
                    throw ConfigError(f + ".orders[" + std::to_string(i) + "]", "order not supported by the coefficients");
                }
                r.orders.push_back(k);
            }
            if (!r.orders.empty()) r.directions = parse_directions(need(j, "directions", f), s.spec, f + ".directions");
        }
        r.negative_control = j.value("negative_control", false);
        r.threshold = number_or(j, "threshold", f, -1.0);
        r.threshold_exponent = number_or(j, "threshold_exponent", f, r.family == "time" ? 0.5 : 1.0);
        s.stability = std::move(r);
        build_family(s);  // surfaces perturbation errors at load time
    }
    s.canonical = std::move(doc);
    return s;
}

Scenario load_scenario(const std::string& path, const Overrides& overrides) {
    std::ifstream in(path);
    if (!in) throw ConfigError("scenario", "cannot open " + path);
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("scenario", e.what());
    }
    return parse_scenario(std::move(doc), overrides);
}

PerturbationFamily build_family(const Scenario& s) {
    const auto& req = *s.stability;
    const std::string f = "outputs.stability.perturbation";
    const auto panel = s.panel();
    const auto y = s.initial(panel);
    PerturbationFamily fam;
    fam.name = req.family;
    fam.threshold = req.threshold;
    fam.threshold_exponent = req.threshold_exponent;
    fam.negative_control = req.negative_control;
    for (const auto& d : req.directions) fam.directions.push_back(Ensemble::broadcast(d, panel, s.solver.p));

    auto model = [&](const DriftPart& b, const Semigroup& sg) {
        return std::make_shared<MildModel>(s.spec, sg, make_coefficients(b, s.diffusion, s.spec.dim_h, s.spec.dim_u, sg.bound()),
                                           s.solver);
    };
    const int members = req.members;
    if (req.family == "drift") {
        const auto pert = parse_drift(req.perturbation, s.spec, f);
        // one growth bound for the whole family: the largest member's
        auto pinned = [&](DriftPart b) {
            b.g = s.drift.g + pert.g;
            b.derivative_bound = s.drift.derivative_bound + pert.derivative_bound;
            return b;
        };
        fam.limit = {s.t, model(pinned(s.drift), s.semigroup), y, 0.0};
        for (int j = 1; j <= members; ++j) {
            fam.members.push_back({s.t, model(pinned(add_drift(s.drift, pert, 1.0 / j)), s.semigroup), y, 1.0 / j});
        }
    } else if (req.family == "initial") {
        const Path d = parse_direction(req.perturbation, s.spec, f);
        const auto m = model(s.drift, s.semigroup);
        fam.limit = {s.t, m, y, 0.0};
        for (int j = 1; j <= members; ++j) {
            std::vector<Path> shifted;
            for (const auto& p : y.stored()) shifted.push_back(p + (1.0 / j) * d);
            Ensemble yj = y.is_broadcast() ? Ensemble::broadcast(shifted[0], panel, s.solver.p)
                                           : Ensemble(std::move(shifted), panel, s.solver.p);
            fam.members.push_back({s.t, m, std::move(yj), 1.0 / j});
        }
    } else if (req.family == "semigroup") {
        const Matrix a1 = matrix_of(need(req.perturbation, "matrix", f), f + ".matrix", s.spec.dim_h, s.spec.dim_h);
        const Matrix a = s.semigroup.generator_matrix();
        std::vector<Semigroup> gs;
        double bound = s.semigroup.bound();
        for (int j = 1; j <= members; ++j) {
            gs.push_back(Semigroup::generator(a + a1 / j, s.spec.horizon));
            bound = std::max(bound, gs.back().bound());
        }
        fam.limit = {s.t, model(s.drift, s.semigroup.with_bound(bound)), y, 0.0};
        for (int j = 1; j <= members; ++j) {
            fam.members.push_back({s.t, model(s.drift, gs[j - 1].with_bound(bound)), y, 1.0 / j});
        }
    } else {
        const auto m = model(s.drift, s.semigroup);
        fam.limit = {s.t, m, y, 0.0};
        for (int j = 1; j <= members; ++j) {
            const int tj = s.spec.snap(s.spec.time(s.t) + std::ldexp(1.0, -j));
            fam.members.push_back({tj, m, y, std::ldexp(1.0, -j)});
        }
    }
    return fam;
}

}  // namespace pathsde::app
