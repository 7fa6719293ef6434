#pragma once

#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "emix/csv.hpp"
#include "emix/evaluation.hpp"

namespace emix {

// 64-bit FNV-1a content hash used in output manifests
inline std::string fnv1a64_hex(const std::string& content) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : content) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

// temp-file + rename so partially written outputs are never observed
inline void atomic_write_file(const std::filesystem::path& path, const std::string& content) {
    const std::filesystem::path tmp = path.string() + ".tmp~";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot open '" + tmp.string() + "' for writing");
        out << content;
        if (!out) throw Error("write failed for '" + tmp.string() + "'");
    }
    std::filesystem::rename(tmp, path);
}

// Collects written outputs and emits manifest.json with sizes and hashes.
class OutputManifest {
  public:
    explicit OutputManifest(std::filesystem::path dir) : dir_(std::move(dir)) {
        std::filesystem::create_directories(dir_);
    }

    const std::filesystem::path& dir() const { return dir_; }

    void write(const std::string& name, const std::string& content) {
        atomic_write_file(dir_ / name, content);
        entries_[name] = {content.size(), fnv1a64_hex(content)};
    }

    void finalize() const {
        nlohmann::json j;
        j["outputs"] = nlohmann::json::object();
        for (const auto& [name, e] : entries_) {
            j["outputs"][name] = {{"bytes", e.first}, {"fnv1a64", e.second}};
        }
        atomic_write_file(dir_ / "manifest.json", j.dump(2) + "\n");
    }

  private:
    std::filesystem::path dir_;
    std::map<std::string, std::pair<std::size_t, std::string>> entries_;
};

namespace detail {

inline std::string csv_cell(double v) { return format_double(v); }

} // namespace detail

// ---- report CSV builders ----

inline std::string errors_csv(const EvaluationReport& rep, const std::vector<std::string>& scenario_names) {
    std::ostringstream os;
    os << "scenario,x1_model,y_model,mode,error,n_ok,n_failed,best_y_model,worst_y_model,difference_pct\n";
    for (const auto& r : rep.errors) {
        os << scenario_names[r.cell] << ',' << model_name(r.x_model) << ',' << model_name(r.y_model) << ','
           << (r.multiple ? "multiple" : "single") << ',' << detail::csv_cell(r.mean_error) << ',' << r.n_ok << ','
           << r.n_failed << ',' << model_name(r.best_y) << ',' << model_name(r.worst_y) << ','
           << detail::csv_cell(r.difference_pct) << '\n';
    }
    return os.str();
}

inline std::string bias_coverage_csv(const EvaluationReport& rep, const std::vector<std::string>& scenario_names) {
    std::ostringstream os;
    os << "scenario,model,parameter,truth,bias,coverage,n\n";
    for (const auto& r : rep.scores) {
        os << scenario_names[r.cell] << ',' << model_name(r.model) << ',' << r.param << ','
           << detail::csv_cell(r.truth) << ',' << detail::csv_cell(r.bias) << ',' << detail::csv_cell(r.coverage)
           << ',' << r.n << '\n';
    }
    return os.str();
}

inline std::string comparison_csv(const EvaluationReport& rep, const std::vector<std::string>& scenario_names) {
    std::ostringstream os;
    os << "scenario,model,bic,elpd,n\n";
    for (const auto& r : rep.comparisons) {
        os << scenario_names[r.cell] << ',' << model_name(r.model) << ',' << detail::csv_cell(r.mean_bic) << ',';
        if (r.has_elpd) os << detail::csv_cell(r.mean_elpd);
        os << ',' << r.n << '\n';
    }
    return os.str();
}

inline std::string fit_summary_csv(const FitSummary& s) {
    std::ostringstream os;
    os << "parameter,estimate,lower_95,upper_95\n";
    for (const auto& p : s.params)
        os << p.name << ',' << detail::csv_cell(p.estimate) << ',' << detail::csv_cell(p.lower) << ','
           << detail::csv_cell(p.upper) << '\n';
    return os.str();
}

inline std::string draws_csv(const PosteriorDrawSet& set) {
    std::ostringstream os;
    for (std::size_t j = 0; j < set.names.size(); ++j)
        os << (j ? "," : "") << set.names[j];
    os << '\n';
    for (int r = 0; r < set.draws.rows(); ++r) {
        for (int j = 0; j < set.draws.cols(); ++j)
            os << (j ? "," : "") << detail::csv_cell(set.draws(r, j));
        os << '\n';
    }
    return os.str();
}

inline nlohmann::json diagnostics_json(const PosteriorDrawSet& set) {
    nlohmann::json j;
    j["chains"] = static_cast<int>(set.chain_draws.size());
    j["draws"] = set.n_draws();
    j["chain_acceptance"] = set.chain_acceptance;
    j["parameters"] = nlohmann::json::array();
    for (const auto& p : set.param_diag)
        j["parameters"].push_back({{"name", p.name},
                                   {"rhat", p.rhat},
                                   {"ess", p.ess},
                                   {"zero_variance", p.zero_variance}});
    j["blocks"] = nlohmann::json::array();
    for (const auto& b : set.block_diag)
        j["blocks"].push_back({{"name", b.name},
                               {"acceptance_rate", b.acceptance_rate},
                               {"final_scale", b.final_scale}});
    return j;
}

// ---- replication record (de)serialization for resumable runs ----

inline nlohmann::json outcome_to_json(const ReplicationOutcome& o) {
    nlohmann::json j;
    j["cell"] = o.cell;
    j["rep"] = o.rep;
    j["failed"] = o.failed;
    if (o.failed) {
        j["failure"] = o.failure;
        return j;
    }
    j["tau0"] = o.tau0;
    nlohmann::json errs = nlohmann::json::array();
    for (double e : o.errors) {
        if (std::isfinite(e))
            errs.push_back(e);
        else
            errs.push_back(nullptr); // unused pipeline slot
    }
    j["errors"] = errs;
    nlohmann::json fits = nlohmann::json::object();
    for (const auto& [name, f] : o.y_fits) {
        nlohmann::json fj;
        fj["bic"] = f.bic;
        fj["has_elpd"] = f.has_elpd;
        if (f.has_elpd) {
            fj["elpd"] = f.elpd;
            fj["unstable_weights"] = f.unstable_weights;
        }
        nlohmann::json params = nlohmann::json::object();
        // JSON has no infinities; clamp half-infinite interval bounds
        auto clamp = [](double v) {
            if (std::isinf(v)) return v > 0 ? std::numeric_limits<double>::max()
                                            : std::numeric_limits<double>::lowest();
            return v;
        };
        for (const auto& p : f.params) params[p.name] = {p.estimate, clamp(p.lower), clamp(p.upper)};
        fj["params"] = params;
        fits[name] = fj;
    }
    j["fits"] = fits;
    return j;
}

inline ReplicationOutcome outcome_from_json(const nlohmann::json& j) {
    ReplicationOutcome o;
    o.cell = j.at("cell").get<int>();
    o.rep = j.at("rep").get<int>();
    o.failed = j.at("failed").get<bool>();
    if (o.failed) {
        o.failure = j.value("failure", "");
        return o;
    }
    o.tau0 = j.at("tau0").get<double>();
    o.errors.clear();
    for (const auto& e : j.at("errors"))
        o.errors.push_back(e.is_null() ? std::numeric_limits<double>::quiet_NaN() : e.get<double>());
    for (const auto& [name, fj] : j.at("fits").items()) {
        FitScore f;
        f.bic = fj.at("bic").get<double>();
        f.has_elpd = fj.at("has_elpd").get<bool>();
        if (f.has_elpd) {
            f.elpd = fj.at("elpd").get<double>();
            f.unstable_weights = fj.value("unstable_weights", false);
        }
        for (const auto& [pname, arr] : fj.at("params").items())
            f.params.push_back({pname, arr.at(0).get<double>(), arr.at(1).get<double>(), arr.at(2).get<double>()});
        o.y_fits[name] = std::move(f);
    }
    return o;
}

} // namespace emix
