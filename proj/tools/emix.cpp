// emix - mixed-model multiple imputation for EMA panel data
//
// Subcommands: simulate, fit, impute, replicate. Configuration comes from a
// JSON file; the flags --seed/--jobs/--out/--model/--m/--mode override it.

#include <CLI11.hpp>
#include <filesystem>
#include <iostream>

#include "emix/config.hpp"
#include "emix/report.hpp"

namespace fs = std::filesystem;
using namespace emix;

namespace {

struct CommonArgs {
    std::string config_path;
    std::string out_dir;
    std::optional<std::uint64_t> seed;
    int jobs = 1;
};

std::uint64_t require_seed(const CommonArgs& args, const json& cfg) {
    if (args.seed) return *args.seed;
    if (cfg.contains("seed")) return cfg.at("seed").get<std::uint64_t>();
    throw InvalidConfig("a seed is required (config key 'seed' or flag --seed); there is no wall-clock default");
}

fs::path resolve_out(const CommonArgs& args, const json& cfg) {
    if (!args.out_dir.empty()) return args.out_dir;
    if (cfg.contains("out")) return cfg.at("out").get<std::string>();
    throw InvalidConfig("an output directory is required (config key 'out' or flag --out)");
}

ScenarioConfig scenario_from_config(const json& cfg, const fs::path& config_dir) {
    if (cfg.contains("scenario")) return parse_scenario(cfg.at("scenario"));
    if (cfg.contains("scenario_path")) {
        const fs::path p = config_dir / cfg.at("scenario_path").get<std::string>();
        return parse_scenario(load_json_file(p.string()), p.string());
    }
    throw InvalidConfig("config needs 'scenario' or 'scenario_path'");
}

json scenario_json_from_config(const json& cfg, const fs::path& config_dir) {
    if (cfg.contains("scenario")) return cfg.at("scenario");
    if (cfg.contains("scenario_path"))
        return load_json_file((config_dir / cfg.at("scenario_path").get<std::string>()).string());
    throw InvalidConfig("config needs 'scenario' or 'scenario_path'");
}

PanelDataset load_data(const json& cfg, const fs::path& config_dir) {
    if (!cfg.contains("data")) throw InvalidConfig("config needs a 'data' block");
    const json& d = cfg.at("data");
    const CsvSchema schema = parse_schema(d.at("schema"), "data.schema");
    const fs::path path = config_dir / d.at("path").get<std::string>();
    return ingest_csv_file(path.string(), schema);
}

nlohmann::json truth_to_json(const TruthRecord& t) {
    nlohmann::json j;
    j["tau0"] = t.tau0;
    j["x2"] = t.x2;
    j["lambda"] = t.lambda;
    j["eta1_x1"] = t.eta1_x1;
    j["eta2_x1"] = t.eta2_x1;
    j["eta1_y"] = t.eta1_y;
    j["eta2_y"] = t.eta2_y;
    auto mat = [](const Eigen::MatrixXd& m) {
        nlohmann::json rows = nlohmann::json::array();
        for (int i = 0; i < m.rows(); ++i) {
            nlohmann::json row = nlohmann::json::array();
            for (int o = 0; o < m.cols(); ++o) row.push_back(m(i, o));
            rows.push_back(row);
        }
        return rows;
    };
    j["x1_complete"] = mat(t.x1_complete);
    j["y_complete"] = mat(t.y_complete);
    nlohmann::json mask = nlohmann::json::array();
    for (const auto& row : t.missing) {
        nlohmann::json r = nlohmann::json::array();
        for (auto v : row) r.push_back(static_cast<int>(v));
        mask.push_back(r);
    }
    j["missing"] = mask;
    return j;
}

// ---- simulate ----

int cmd_simulate(const CommonArgs& args) {
    const json cfg = load_json_file(args.config_path);
    const fs::path config_dir = fs::path(args.config_path).parent_path();
    const std::uint64_t seed = require_seed(args, cfg);
    ScenarioConfig sc = scenario_from_config(cfg, config_dir);

    const SimulatedDataset sim = generate(sc, seed);
    OutputManifest out(resolve_out(args, cfg));
    out.write("data.csv", export_csv_string(sim.data));
    nlohmann::json truth = truth_to_json(sim.truth);
    truth["seed"] = seed;
    out.write("truth.json", truth.dump(2) + "\n");
    out.finalize();
    std::cout << "simulate: " << sim.data.n_subjects() << " subjects, " << sim.data.total_occasions()
              << " occasions, missing rate " << sim.data.missing_rate("y") << "\n";
    return 0;
}

// ---- fit ----

McmcConfig mcmc_from_config(const json& cfg, std::uint64_t seed) {
    McmcConfig mc = cfg.contains("mcmc") ? parse_mcmc(cfg.at("mcmc"), "mcmc") : McmcConfig{};
    mc.seed = seed;
    return mc;
}

int cmd_fit(const CommonArgs& args, const std::string& model_flag) {
    const json cfg = load_json_file(args.config_path);
    const fs::path config_dir = fs::path(args.config_path).parent_path();
    const std::uint64_t seed = require_seed(args, cfg);
    if (!cfg.contains("fit")) throw InvalidConfig("config needs a 'fit' block");
    const json& fc = cfg.at("fit");
    const std::string response = fc.at("response").get<std::string>();
    const DesignSpec design = parse_design(fc.at("design"), "fit.design");
    std::string model = model_flag.empty() ? fc.value("model", "all") : model_flag;

    const PanelDataset data = load_data(cfg, config_dir);
    const DesignMatrices dm = build_design(data, design, response);

    std::vector<ModelKind> kinds;
    if (model == "all")
        kinds = {ModelKind::Rilm, ModelKind::Mels, ModelKind::Splsme};
    else
        kinds = {parse_model(model)};

    OutputManifest out(resolve_out(args, cfg));
    std::ostringstream comparison;
    comparison << "model,bic,elpd\n";
    for (ModelKind kind : kinds) {
        McmcConfig mc = mcmc_from_config(cfg, derive_seed(seed, {0xf17ULL, static_cast<std::uint64_t>(kind)}));
        const ModelFit fit = fit_model(dm, kind, mc);
        const std::string name = model_name(kind);
        out.write("fit_" + name + ".csv", fit_summary_csv(fit.summary));
        nlohmann::json diag;
        diag["model"] = name;
        diag["loglik_at_estimate"] = fit.loglik_at_estimate;
        diag["k_params"] = fit.k_params;
        diag["n_obs"] = fit.n_obs;
        if (kind == ModelKind::Rilm)
            diag["within_variance"] = std::exp(fit.summary.find("alpha0").estimate);
        const double bic = compute_bic(fit.loglik_at_estimate, fit.k_params, fit.n_obs);
        diag["bic"] = bic;
        comparison << name << ',' << emix::detail::format_double(bic) << ',';
        if (fit.mcmc) {
            out.write("draws_" + name + ".csv", draws_csv(*fit.mcmc));
            nlohmann::json d = diagnostics_json(*fit.mcmc);
            for (auto& [k, v] : d.items()) diag[k] = v;
            if (fit.mcmc->n_draws() >= 500) { // LOO needs a stable draw pool
                const ElpdResult elpd = compute_elpd(*fit.mcmc, dm);
                diag["elpd"] = elpd.elpd;
                diag["elpd_unstable_weights"] = elpd.unstable_weights;
                comparison << emix::detail::format_double(elpd.elpd);
            }
        }
        comparison << '\n';
        out.write("diagnostics_" + name + ".json", diag.dump(2) + "\n");
    }
    if (kinds.size() > 1) out.write("comparison.csv", comparison.str());
    out.finalize();
    return 0;
}

// ---- impute ----

struct StageSpec {
    std::string variable;
    ModelKind model;
    DesignSpec design;
};

int cmd_impute(const CommonArgs& args, int m_flag, const std::string& mode_flag) {
    const json cfg = load_json_file(args.config_path);
    const fs::path config_dir = fs::path(args.config_path).parent_path();
    const std::uint64_t seed = require_seed(args, cfg);
    if (!cfg.contains("impute")) throw InvalidConfig("config needs an 'impute' block");
    const json& ic = cfg.at("impute");

    int m = m_flag > 0 ? m_flag : ic.value("m", 10);
    const std::string mode = !mode_flag.empty() ? mode_flag : ic.value("mode", "multiple");
    if (mode != "single" && mode != "multiple")
        throw InvalidConfig("impute mode must be 'single' or 'multiple'");
    if (mode == "single") m = 1;

    std::vector<StageSpec> stages;
    for (const auto& sj : ic.at("stages")) {
        StageSpec s;
        s.variable = sj.at("variable").get<std::string>();
        s.model = parse_model(sj.at("model").get<std::string>());
        s.design = parse_design(sj.at("design"), "impute.stages.design");
        stages.push_back(std::move(s));
    }
    if (stages.empty()) throw InvalidConfig("impute.stages must not be empty");

    const PanelDataset data = load_data(cfg, config_dir);

    // fit each stage model on the base dataset
    std::vector<DesignMatrices> dms;
    std::vector<ModelFit> fits;
    for (std::size_t s = 0; s < stages.size(); ++s) {
        dms.push_back(build_design(data, stages[s].design, stages[s].variable));
        McmcConfig mc = mcmc_from_config(cfg, derive_seed(seed, {0xf17ULL, s}));
        fits.push_back(fit_model(dms.back(), stages[s].model, mc));
    }
    std::vector<ImputationStage> istages;
    for (std::size_t s = 0; s < stages.size(); ++s)
        istages.push_back({stages[s].variable, stages[s].model, stages[s].design, &fits[s], &dms[s]});

    const std::vector<ImputationResult> results =
        sequential_impute(data, istages, m, derive_seed(seed, {0x696d7075ULL}));

    // final dataset: every stage's pooled cells applied to the base
    PanelDataset pooled = data;
    for (std::size_t s = 0; s < results.size(); ++s) {
        if (results[s].no_missing_cells) continue;
        const std::size_t var = pooled.var_index(results[s].variable);
        for (std::size_t si = 0; si < pooled.n_subjects(); ++si)
            for (std::size_t oi = 0; oi < pooled.subjects()[si].occasions.size(); ++oi)
                if (data.is_missing(si, oi, var))
                    pooled.set_cell(si, oi, var, results[s].pooled.value(si, oi, var));
    }

    OutputManifest out(resolve_out(args, cfg));

    // long-format draws: every cell of each imputed variable, per draw
    {
        std::ostringstream os;
        os << "draw,subject,day,beep,variable,value,imputed_flag\n";
        for (const auto& res : results) {
            const std::size_t var = data.var_index(res.variable);
            for (int k = 0; k < res.m; ++k) {
                const PanelDataset& ds = res.completed[k];
                for (std::size_t si = 0; si < ds.n_subjects(); ++si) {
                    const auto& subj = ds.subjects()[si];
                    for (std::size_t oi = 0; oi < subj.occasions.size(); ++oi) {
                        const bool imputed = data.is_missing(si, oi, var);
                        if (!imputed && k > 0) continue; // observed cells identical across draws
                        os << (k + 1) << ',' << subj.subject_id << ',' << subj.occasions[oi].day << ','
                           << subj.occasions[oi].beep << ',' << res.variable << ','
                           << emix::detail::format_double(ds.value(si, oi, var)) << ',' << (imputed ? 1 : 0) << '\n';
                    }
                }
            }
        }
        out.write("imputations_long.csv", os.str());
    }

    out.write("pooled.csv", export_csv_string(pooled));

    const StageSpec& last = stages.back();
    const std::size_t resp_var = data.var_index(last.variable);

    // histogram plot data: ordinal bins of the response, observed vs imputed
    {
        std::vector<double> cutoffs;
        if (ic.contains("cutoffs"))
            for (const auto& c : ic.at("cutoffs")) cutoffs.push_back(c.get<double>());
        else
            cutoffs = {1.5, 2.5, 3.5, 4.5, 5.5, 6.5};
        std::vector<double> labels;
        if (ic.contains("labels"))
            for (const auto& l : ic.at("labels")) labels.push_back(l.get<double>());
        else
            for (std::size_t i = 0; i <= cutoffs.size(); ++i) labels.push_back(static_cast<double>(i + 1));

        std::vector<double> observed, imputed;
        for (std::size_t si = 0; si < pooled.n_subjects(); ++si)
            for (std::size_t oi = 0; oi < pooled.subjects()[si].occasions.size(); ++oi)
                (data.is_missing(si, oi, resp_var) ? imputed : observed).push_back(pooled.value(si, oi, resp_var));
        const std::vector<double> obs_bins = ordinalize(observed, cutoffs, labels);
        const std::vector<double> imp_bins = ordinalize(imputed, cutoffs, labels);
        std::ostringstream os;
        os << "bin,count,source\n";
        for (double label : labels) {
            const auto count = [&](const std::vector<double>& bins) {
                return std::count(bins.begin(), bins.end(), label);
            };
            os << emix::detail::format_double(label) << ',' << count(obs_bins) << ",observed\n";
            os << emix::detail::format_double(label) << ',' << count(imp_bins) << ",imputed\n";
        }
        out.write("plot_histogram.csv", os.str());
    }

    // caterpillar plot data: per-subject random scale effects of the response
    // model (random location effects when the response model is RILM)
    {
        std::ostringstream os;
        os << "subject,estimate,lower,upper\n";
        const ModelFit& fit = fits.back();
        const int n = static_cast<int>(data.n_subjects());
        if (fit.mcmc) {
            const PosteriorDrawSet& set = *fit.mcmc;
            const int S = set.n_draws();
            for (int i = 0; i < n; ++i) {
                Eigen::VectorXd eff(S);
                for (int s = 0; s < S; ++s) {
                    const ModelParams params = params_from_draw(set, s);
                    if (const auto* mp = std::get_if<MelsParams>(&params))
                        eff(s) = mp->v2(i);
                    else {
                        const auto& sp = std::get<SplsmeParams>(params);
                        eff(s) = sp.eta2(i) + sp.delta * sp.lambda(i);
                    }
                }
                os << data.subjects()[i].subject_id << ',' << emix::detail::format_double(eff.mean()) << ','
                   << emix::detail::format_double(draw_quantile(eff, 0.025)) << ','
                   << emix::detail::format_double(draw_quantile(eff, 0.975)) << '\n';
            }
        } else {
            const RilmMlFit& ml = *fit.ml;
            const int p = static_cast<int>(ml.theta.size()) - 2;
            for (int i = 0; i < n; ++i) {
                double mean = 0.0, var = 0.0;
                rilm_conditional_intercept(dms.back(), i, ml.theta.head(p), ml.theta(p), std::exp(ml.theta(p + 1)),
                                           mean, var);
                const double half = 1.959963984540054 * std::sqrt(var);
                os << data.subjects()[i].subject_id << ',' << emix::detail::format_double(mean) << ','
                   << emix::detail::format_double(mean - half) << ',' << emix::detail::format_double(mean + half)
                   << '\n';
            }
        }
        out.write("plot_caterpillar.csv", os.str());
    }

    // trajectory plot data: pooled response per occasion
    {
        std::ostringstream os;
        os << "subject,day,beep,value,source\n";
        for (std::size_t si = 0; si < pooled.n_subjects(); ++si) {
            const auto& subj = pooled.subjects()[si];
            for (std::size_t oi = 0; oi < subj.occasions.size(); ++oi) {
                os << subj.subject_id << ',' << subj.occasions[oi].day << ',' << subj.occasions[oi].beep << ','
                   << emix::detail::format_double(pooled.value(si, oi, resp_var)) << ','
                   << (data.is_missing(si, oi, resp_var) ? "imputed" : "observed") << '\n';
            }
        }
        out.write("plot_trajectory.csv", os.str());
    }

    out.finalize();
    std::cout << "impute: m=" << m << " mode=" << mode << " stages=" << stages.size() << "\n";
    return 0;
}

// ---- replicate ----

int cmd_replicate(const CommonArgs& args, int m_flag) {
    const json cfg = load_json_file(args.config_path);
    const fs::path config_dir = fs::path(args.config_path).parent_path();
    const std::uint64_t seed = require_seed(args, cfg);
    if (!cfg.contains("replicate")) throw InvalidConfig("config needs a 'replicate' block");
    const json& rc = cfg.at("replicate");

    StudyConfig study;
    study.seed = seed;
    study.jobs = std::max(1, args.jobs);
    study.replications = rc.value("replications", 20);
    study.m = m_flag > 0 ? m_flag : rc.value("m", 10);
    study.mcmc = cfg.contains("mcmc") ? parse_mcmc(cfg.at("mcmc"), "mcmc") : McmcConfig{};
    study.with_elpd = rc.value("elpd", true);
    study.max_failure_rate = rc.value("max_failure_rate", 0.10);
    study.x1_design = parse_design(rc.at("x1_design"), "replicate.x1_design");
    study.y_design = parse_design(rc.at("y_design"), "replicate.y_design");

    if (rc.contains("modes")) {
        study.run_single = study.run_multiple = false;
        for (const auto& m : rc.at("modes")) {
            const std::string s = m.get<std::string>();
            if (s == "single")
                study.run_single = true;
            else if (s == "multiple")
                study.run_multiple = true;
            else
                throw InvalidConfig("replicate.modes entries must be 'single' or 'multiple'");
        }
    }

    if (!rc.contains("pipelines") || (rc.at("pipelines").is_string() && rc.at("pipelines") == "all")) {
        study.pipelines = all_nine_pipelines();
    } else {
        for (const auto& p : rc.at("pipelines")) {
            if (!p.is_array() || p.size() != 2)
                throw InvalidConfig("replicate.pipelines entries must be [x1_model, y_model]");
            study.pipelines.emplace_back(parse_model(p.at(0).get<std::string>()),
                                         parse_model(p.at(1).get<std::string>()));
        }
    }

    const json base_scenario = scenario_json_from_config(cfg, config_dir);
    if (rc.contains("grid")) {
        for (const auto& cell : rc.at("grid")) {
            const std::string name = cell.value("name", "cell" + std::to_string(study.scenarios.size()));
            const json merged = cell.contains("overrides") ? apply_scenario_overrides(base_scenario, cell.at("overrides"))
                                                           : base_scenario;
            study.scenarios.push_back(parse_scenario(merged));
            study.scenario_names.push_back(name);
        }
    } else {
        study.scenarios.push_back(parse_scenario(base_scenario));
        study.scenario_names.push_back("default");
    }

    OutputManifest out(resolve_out(args, cfg));

    // resume store: completed records are keyed by (cell, rep)
    std::map<std::pair<int, int>, ReplicationOutcome> done;
    for (const char* name : {"records.jsonl", "records.partial.jsonl"}) {
        const fs::path p = out.dir() / name;
        if (!fs::exists(p)) continue;
        std::ifstream in(p);
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            const ReplicationOutcome o = outcome_from_json(nlohmann::json::parse(line));
            done[{o.cell, o.rep}] = o;
        }
    }

    std::ofstream partial(out.dir() / "records.partial.jsonl", std::ios::app);
    const EvaluationReport report = run_replication_study(
        study,
        [&](int cell, int rep, ReplicationOutcome& o) {
            const auto it = done.find({cell, rep});
            if (it == done.end()) return false;
            o = it->second;
            return true;
        },
        [&](const ReplicationOutcome& o) {
            partial << outcome_to_json(o).dump() << '\n';
            partial.flush();
        });
    partial.close();

    // canonical record file, sorted by (cell, rep)
    {
        std::vector<const ReplicationOutcome*> sorted;
        for (const auto& o : report.outcomes) sorted.push_back(&o);
        std::sort(sorted.begin(), sorted.end(), [](const auto* a, const auto* b) {
            return std::pair{a->cell, a->rep} < std::pair{b->cell, b->rep};
        });
        std::ostringstream os;
        for (const auto* o : sorted) os << outcome_to_json(*o).dump() << '\n';
        out.write("records.jsonl", os.str());
        fs::remove(out.dir() / "records.partial.jsonl");
    }

    out.write("errors.csv", errors_csv(report, study.scenario_names));
    out.write("bias_coverage.csv", bias_coverage_csv(report, study.scenario_names));
    out.write("comparison.csv", comparison_csv(report, study.scenario_names));
    out.finalize();

    int failures = 0;
    for (const auto& o : report.outcomes) failures += o.failed ? 1 : 0;
    std::cout << "replicate: " << report.outcomes.size() << " replication records, " << failures << " failures\n";
    if (report.failure_rate_exceeded) {
        std::cerr << "error: a scenario exceeded the maximum failure rate\n";
        return 2;
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"mixed-model multiple imputation for EMA panel data"};
    app.require_subcommand(1);

    CommonArgs args;
    std::string model_flag, mode_flag;
    int m_flag = 0;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", args.config_path, "JSON configuration file")->required();
        sub->add_option("--seed", args.seed, "RNG seed (overrides config)");
        sub->add_option("--out", args.out_dir, "output directory (overrides config)");
        sub->add_option("--jobs", args.jobs, "worker pool size")->default_val(1);
    };

    CLI::App* simulate = app.add_subcommand("simulate", "generate an MNAR panel dataset with truth sidecar");
    add_common(simulate);

    CLI::App* fit = app.add_subcommand("fit", "fit a model and export estimates, draws and diagnostics");
    add_common(fit);
    fit->add_option("--model", model_flag, "rilm|mels|splsme|all");

    CLI::App* impute = app.add_subcommand("impute", "sequential multiple imputation with plot data");
    add_common(impute);
    impute->add_option("--m", m_flag, "number of imputations");
    impute->add_option("--mode", mode_flag, "single|multiple");

    CLI::App* replicate = app.add_subcommand("replicate", "Monte Carlo replication study");
    add_common(replicate);
    replicate->add_option("--m", m_flag, "number of imputations");

    CLI11_PARSE(app, argc, argv);

    try {
        if (simulate->parsed()) return cmd_simulate(args);
        if (fit->parsed()) return cmd_fit(args, model_flag);
        if (impute->parsed()) return cmd_impute(args, m_flag, mode_flag);
        if (replicate->parsed()) return cmd_replicate(args, m_flag);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
