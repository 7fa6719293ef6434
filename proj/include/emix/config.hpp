#pragma once

#include <fstream>
#include <json.hpp>
#include <optional>
#include <string>

#include "emix/csv.hpp"
#include "emix/evaluation.hpp"

namespace emix {

using json = nlohmann::json;

namespace cfgdetail {

[[noreturn]] inline void bad_key(const std::string& path, const std::string& why) {
    throw InvalidConfig("config key '" + path + "': " + why);
}

inline void require_object(const json& j, const std::string& path) {
    if (!j.is_object()) bad_key(path, "expected an object");
}

inline double get_num(const json& j, const std::string& path, const std::string& key,
                      std::optional<double> fallback = {}) {
    if (!j.contains(key)) {
        if (fallback) return *fallback;
        bad_key(path + "." + key, "required number is missing");
    }
    if (!j.at(key).is_number()) bad_key(path + "." + key, "expected a number");
    return j.at(key).get<double>();
}

inline int get_int(const json& j, const std::string& path, const std::string& key,
                   std::optional<int> fallback = {}) {
    if (!j.contains(key)) {
        if (fallback) return *fallback;
        bad_key(path + "." + key, "required integer is missing");
    }
    if (!j.at(key).is_number_integer()) bad_key(path + "." + key, "expected an integer");
    return j.at(key).get<int>();
}

inline std::string get_str(const json& j, const std::string& path, const std::string& key,
                           std::optional<std::string> fallback = {}) {
    if (!j.contains(key)) {
        if (fallback) return *fallback;
        bad_key(path + "." + key, "required string is missing");
    }
    if (!j.at(key).is_string()) bad_key(path + "." + key, "expected a string");
    return j.at(key).get<std::string>();
}

inline void reject_unknown(const json& j, const std::string& path, std::initializer_list<const char*> known) {
    for (const auto& [key, _] : j.items()) {
        bool ok = false;
        for (const char* k : known)
            if (key == k) ok = true;
        if (!ok) bad_key(path + "." + key, "unknown key");
    }
}

} // namespace cfgdetail

// ---- scenario files ----

inline VariableTruth parse_variable_truth(const json& j, const std::string& path, bool with_x1) {
    using namespace cfgdetail;
    require_object(j, path);
    reject_unknown(j, path,
                   {"beta0", "beta_x1", "beta_x2", "alpha0", "alpha_x1", "alpha_x2", "gamma", "delta",
                    "sigma_eta1", "sigma_eta2", "rho_eta"});
    VariableTruth v;
    v.beta0 = get_num(j, path, "beta0", 0.0);
    v.beta_x2 = get_num(j, path, "beta_x2", 0.0);
    v.alpha0 = get_num(j, path, "alpha0", 0.0);
    v.alpha_x2 = get_num(j, path, "alpha_x2", 0.0);
    v.gamma = get_num(j, path, "gamma", 0.0);
    v.delta = get_num(j, path, "delta", 0.0);
    v.sigma_eta1 = get_num(j, path, "sigma_eta1", 1.0);
    v.sigma_eta2 = get_num(j, path, "sigma_eta2", 1.0);
    v.rho_eta = get_num(j, path, "rho_eta", 0.0);
    if (with_x1) {
        v.beta_x1 = get_num(j, path, "beta_x1", 0.0);
        v.alpha_x1 = get_num(j, path, "alpha_x1", 0.0);
    } else if (j.contains("beta_x1") || j.contains("alpha_x1")) {
        bad_key(path + ".beta_x1", "the x1 model cannot use x1 as its own covariate");
    }
    return v;
}

inline ScenarioConfig parse_scenario(const json& j, const std::string& path = "scenario") {
    using namespace cfgdetail;
    require_object(j, path);
    reject_unknown(j, path, {"n_subjects", "n_days", "n_beeps", "x2", "missing", "x1", "y", "seed"});
    ScenarioConfig sc;
    sc.n_subjects = get_int(j, path, "n_subjects", 20);
    sc.n_days = get_int(j, path, "n_days", 5);
    sc.n_beeps = get_int(j, path, "n_beeps", 6);
    if (j.contains("x2")) {
        require_object(j.at("x2"), path + ".x2");
        reject_unknown(j.at("x2"), path + ".x2", {"mean", "sd"});
        sc.x2_mean = get_num(j.at("x2"), path + ".x2", "mean", 0.0);
        sc.x2_sd = get_num(j.at("x2"), path + ".x2", "sd", 1.0);
    }
    if (j.contains("missing")) {
        const json& m = j.at("missing");
        const std::string mp = path + ".missing";
        require_object(m, mp);
        reject_unknown(m, mp, {"tau0", "tau_day", "tau_beep_first", "tau_beep_last", "sigma_lambda", "target_rate"});
        if (m.contains("tau0") && !m.at("tau0").is_null()) sc.missing.tau0 = get_num(m, mp, "tau0");
        sc.missing.tau_day = get_num(m, mp, "tau_day", 0.0);
        sc.missing.tau_beep_first = get_num(m, mp, "tau_beep_first", 0.0);
        sc.missing.tau_beep_last = get_num(m, mp, "tau_beep_last", 0.0);
        sc.missing.sigma_lambda = get_num(m, mp, "sigma_lambda", 1.0);
        sc.missing.target_rate = get_num(m, mp, "target_rate", 0.20);
    }
    if (j.contains("x1")) sc.x1 = parse_variable_truth(j.at("x1"), path + ".x1", false);
    if (j.contains("y")) sc.y = parse_variable_truth(j.at("y"), path + ".y", true);
    if (j.contains("seed")) sc.seed = j.at("seed").get<std::uint64_t>();
    sc.validate();
    return sc;
}

// Applies dotted-path numeric overrides such as {"y.alpha0": 2.0} to a
// scenario JSON object (used to expand replication grids).
inline json apply_scenario_overrides(json base, const json& overrides) {
    cfgdetail::require_object(overrides, "grid entry");
    for (const auto& [key, value] : overrides.items()) {
        json* at = &base;
        std::string rest = key;
        std::size_t dot;
        while ((dot = rest.find('.')) != std::string::npos) {
            at = &((*at)[rest.substr(0, dot)]);
            rest = rest.substr(dot + 1);
        }
        (*at)[rest] = value;
    }
    return base;
}

// ---- design / mcmc / schema blocks ----

inline DesignSpec parse_design(const json& j, const std::string& path) {
    using namespace cfgdetail;
    require_object(j, path);
    reject_unknown(j, path, {"mean", "variance", "missing"});
    DesignSpec spec;
    auto read_terms = [&](const char* key, std::vector<Term>& out) {
        if (!j.contains(key)) return;
        if (!j.at(key).is_array()) bad_key(path + "." + key, "expected an array of term strings");
        for (const auto& t : j.at(key)) {
            if (!t.is_string()) bad_key(path + "." + key, "terms must be strings");
            out.push_back(parse_term(t.get<std::string>()));
        }
    };
    read_terms("mean", spec.mean);
    read_terms("variance", spec.variance);
    read_terms("missing", spec.missing);
    return spec;
}

inline McmcConfig parse_mcmc(const json& j, const std::string& path) {
    using namespace cfgdetail;
    require_object(j, path);
    reject_unknown(j, path, {"chains", "warmup", "sampling", "thin", "target_acceptance",
                             "initial_proposal_scale", "proposal_scales", "priors"});
    McmcConfig cfg;
    cfg.chains = get_int(j, path, "chains", cfg.chains);
    cfg.warmup = get_int(j, path, "warmup", cfg.warmup);
    cfg.sampling = get_int(j, path, "sampling", cfg.sampling);
    cfg.thin = get_int(j, path, "thin", cfg.thin);
    cfg.target_acceptance = get_num(j, path, "target_acceptance", cfg.target_acceptance);
    cfg.initial_proposal_scale = get_num(j, path, "initial_proposal_scale", cfg.initial_proposal_scale);
    if (j.contains("proposal_scales")) {
        if (!j.at("proposal_scales").is_array()) bad_key(path + ".proposal_scales", "expected an array");
        for (const auto& s : j.at("proposal_scales")) cfg.proposal_scales.push_back(s.get<double>());
    }
    if (j.contains("priors")) {
        const json& p = j.at("priors");
        const std::string pp = path + ".priors";
        require_object(p, pp);
        reject_unknown(p, pp, {"coefficient_sd", "scale_sd", "loading_sd"});
        cfg.priors.coefficient_sd = get_num(p, pp, "coefficient_sd", cfg.priors.coefficient_sd);
        cfg.priors.scale_sd = get_num(p, pp, "scale_sd", cfg.priors.scale_sd);
        cfg.priors.loading_sd = get_num(p, pp, "loading_sd", cfg.priors.loading_sd);
    }
    return cfg;
}

inline CsvSchema parse_schema(const json& j, const std::string& path) {
    using namespace cfgdetail;
    require_object(j, path);
    reject_unknown(j, path, {"subject", "day", "beep", "variables", "missing_tokens"});
    CsvSchema s;
    s.subject_column = get_str(j, path, "subject", s.subject_column);
    s.day_column = get_str(j, path, "day", s.day_column);
    s.beep_column = get_str(j, path, "beep", s.beep_column);
    if (!j.contains("variables") || !j.at("variables").is_array())
        bad_key(path + ".variables", "required array of variable column names");
    for (const auto& v : j.at("variables")) s.variables.push_back(v.get<std::string>());
    if (j.contains("missing_tokens")) {
        s.missing_tokens.clear();
        for (const auto& t : j.at("missing_tokens")) s.missing_tokens.push_back(t.get<std::string>());
    }
    return s;
}

inline json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InvalidConfig("cannot open config file '" + path + "'");
    json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw ParseError("config file '" + path + "': " + e.what());
    }
    return j;
}

} // namespace emix
