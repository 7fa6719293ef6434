#pragma once

#include <atomic>
#include <functional>
#include <map>
#include <mutex>
#include <thread>

#include "emix/imputation.hpp"
#include "emix/simulation.hpp"

namespace emix {

// ---- scoring metrics ----

// One replication's imputation error: mean over subjects of the per-subject
// mean squared error across that subject's scored (masked) cells. Subjects
// with no scored cells do not enter the subject mean.
inline double replication_error(const Eigen::MatrixXd& truth_values, const PanelDataset& imputed,
                                const std::string& variable, const std::vector<std::vector<std::uint8_t>>& mask) {
    const std::size_t var = imputed.var_index(variable);
    double subj_sum = 0.0;
    int subj_count = 0;
    for (std::size_t i = 0; i < imputed.n_subjects(); ++i) {
        double cell_sum = 0.0;
        int cell_count = 0;
        for (std::size_t o = 0; o < imputed.subjects()[i].occasions.size(); ++o) {
            if (!mask[i][o]) continue;
            const double err = imputed.value(i, o, var) - truth_values(static_cast<int>(i), static_cast<int>(o));
            cell_sum += err * err;
            ++cell_count;
        }
        if (cell_count > 0) {
            subj_sum += cell_sum / cell_count;
            ++subj_count;
        }
    }
    if (subj_count == 0)
        throw EmptyMask("replication_error: no scored cells");
    return subj_sum / subj_count;
}

// Mean over replications of the per-replication nested-mean errors.
inline double imputation_error(const std::vector<double>& per_replication) {
    if (per_replication.empty())
        throw EmptyMask("imputation_error: no replications");
    double s = 0.0;
    for (double e : per_replication) s += e;
    return s / static_cast<double>(per_replication.size());
}

struct IntervalEstimate {
    double estimate = 0.0;
    double lower = 0.0;
    double upper = 0.0;
};

struct BiasCoverage {
    double bias = 0.0;
    double coverage = 0.0;
    int n = 0;
};

inline BiasCoverage bias_and_coverage(const std::vector<IntervalEstimate>& replications, double truth) {
    if (replications.empty())
        throw InvalidConfig("bias_and_coverage: no replications");
    BiasCoverage out;
    out.n = static_cast<int>(replications.size());
    int covered = 0;
    for (const auto& r : replications) {
        // half-infinite bounds are legitimate (boundary Wald intervals after
        // exponentiation); only NaN means the interval is missing
        if (std::isnan(r.lower) || std::isnan(r.upper) || std::isnan(r.estimate))
            throw MissingInterval("bias_and_coverage: replication lacks an interval");
        out.bias += r.estimate - truth;
        if (r.lower < truth && truth < r.upper) ++covered;
    }
    out.bias /= out.n;
    out.coverage = static_cast<double>(covered) / out.n;
    return out;
}

inline double difference_ratio(double best_error, double worst_error) {
    return (worst_error - best_error) / worst_error;
}

inline double compute_bic(double loglik_at_estimate, int k_params, int n_obs) {
    return k_params * std::log(static_cast<double>(n_obs)) - 2.0 * loglik_at_estimate;
}

struct ElpdResult {
    double elpd = 0.0;
    bool unstable_weights = false;
    double min_weight_ess = std::numeric_limits<double>::infinity();
};

// Leave-one-out expected log predictive density via importance sampling with
// weights w_s = 1/p(y_i | theta_s), truncated at their 99.5th percentile:
//   elpd_i = log( sum_s w_s p(y_i|theta_s) / sum_s w_s ).
// Points whose weight effective sample size falls below 10 raise the
// unstable flag but still contribute.
inline ElpdResult compute_elpd(const PosteriorDrawSet& set, const DesignMatrices& design) {
    const int S = set.n_draws();
    if (S < 1) throw InsufficientDraws("compute_elpd: no draws");

    // pointwise log densities, draws in rows
    std::vector<std::vector<double>> lp; // [point][draw]
    std::vector<double> ys;
    for (int s = 0; s < S; ++s) {
        const ModelParams params = params_from_draw(set, s);
        int pt = 0;
        for (int i = 0; i < static_cast<int>(design.subjects.size()); ++i) {
            const auto& sd = design.subjects[i];
            for (int r = 0; r < sd.y.size(); ++r) {
                if (!sd.complete[r]) continue;
                if (s == 0) {
                    lp.emplace_back();
                    lp.back().resize(S);
                    ys.push_back(sd.y(r));
                }
                double mu = 0.0, sigma2 = 0.0;
                const Eigen::VectorXd x = sd.X.row(r);
                const Eigen::VectorXd w = sd.W.row(r);
                conditional_moments(params, x, w, i, mu, sigma2);
                lp[pt][s] = normal_lpdf(sd.y(r), mu, sigma2);
                ++pt;
            }
        }
    }

    ElpdResult out;
    std::vector<double> lw(S), sorted(S);
    for (auto& point : lp) {
        for (int s = 0; s < S; ++s) lw[s] = -point[s];
        sorted = lw;
        std::sort(sorted.begin(), sorted.end());
        const double pos = 0.995 * (S - 1);
        const int lo = static_cast<int>(pos);
        const int hi = std::min(lo + 1, S - 1);
        const double cap = sorted[lo] + (pos - lo) * (sorted[hi] - sorted[lo]);
        for (int s = 0; s < S; ++s) lw[s] = std::min(lw[s], cap);

        const double mx = *std::max_element(lw.begin(), lw.end());
        double sum_w = 0.0, sum_w2 = 0.0, sum_wp = 0.0;
        for (int s = 0; s < S; ++s) {
            const double w = std::exp(lw[s] - mx);
            sum_w += w;
            sum_w2 += w * w;
            sum_wp += w * std::exp(point[s]); // w_s * p_s, scaled by e^-mx
        }
        const double ess = sum_w * sum_w / sum_w2;
        out.min_weight_ess = std::min(out.min_weight_ess, ess);
        if (ess < 10.0) out.unstable_weights = true;
        out.elpd += std::log(sum_wp) - std::log(sum_w);
    }
    return out;
}

// ---- replication study ----

struct FitScore {
    std::vector<ParamEstimate> params;
    double bic = 0.0;
    double elpd = 0.0;
    bool has_elpd = false;
    bool unstable_weights = false;
};

struct ReplicationOutcome {
    int cell = 0;
    int rep = 0;
    bool failed = false;
    std::string failure;
    double tau0 = 0.0;
    // error per pipeline slot: ((xm*3)+ym)*2 + (multiple ? 1 : 0)
    std::vector<double> errors;
    std::map<std::string, FitScore> y_fits; // keyed by model name
};

struct StudyConfig {
    std::vector<ScenarioConfig> scenarios;
    std::vector<std::string> scenario_names;
    std::vector<std::pair<ModelKind, ModelKind>> pipelines; // (x1 model, y model)
    bool run_single = true;
    bool run_multiple = true;
    int replications = 20;
    int m = 10;
    McmcConfig mcmc;
    DesignSpec x1_design;
    DesignSpec y_design;
    std::uint64_t seed = 0;
    int jobs = 1;
    double max_failure_rate = 0.10;
    bool with_elpd = true;

    void validate() const {
        if (scenarios.empty()) throw InvalidConfig("study: no scenarios");
        if (replications < 1) throw InvalidConfig("study: replications must be >= 1");
        if (m < 1) throw InvalidConfig("study: m must be >= 1");
        if (pipelines.empty()) throw InvalidConfig("study: no pipelines");
        if (!run_single && !run_multiple) throw InvalidConfig("study: no imputation mode selected");
    }
};

inline std::vector<std::pair<ModelKind, ModelKind>> all_nine_pipelines() {
    std::vector<std::pair<ModelKind, ModelKind>> v;
    for (ModelKind a : {ModelKind::Rilm, ModelKind::Mels, ModelKind::Splsme})
        for (ModelKind b : {ModelKind::Rilm, ModelKind::Mels, ModelKind::Splsme})
            v.emplace_back(a, b);
    return v;
}

inline int pipeline_slot(ModelKind xm, ModelKind ym, bool multiple) {
    return (static_cast<int>(xm) * 3 + static_cast<int>(ym)) * 2 + (multiple ? 1 : 0);
}

// Runs one replication of one scenario cell: generate, fit each needed model
// once (x models on x1, y models on y), impute through every pipeline in both
// modes, and score.
inline ReplicationOutcome run_one_replication(const StudyConfig& cfg, int cell, int rep) {
    ReplicationOutcome out;
    out.cell = cell;
    out.rep = rep;
    out.errors.assign(18, std::numeric_limits<double>::quiet_NaN());

    const std::uint64_t rep_seed = derive_seed(cfg.seed, {0x726570ULL, static_cast<std::uint64_t>(cell),
                                                          static_cast<std::uint64_t>(rep)});
    const SimulatedDataset sim = generate(cfg.scenarios[cell], rep_seed);
    out.tau0 = sim.truth.tau0;

    const DesignMatrices x1_dm = build_design(sim.data, cfg.x1_design, "x1");
    const DesignMatrices y_dm = build_design(sim.data, cfg.y_design, "y");

    std::vector<bool> need_x(3, false), need_y(3, false);
    for (const auto& [xm, ym] : cfg.pipelines) {
        need_x[static_cast<int>(xm)] = true;
        need_y[static_cast<int>(ym)] = true;
    }
    // y fits are always scored for bias/coverage when present in pipelines
    std::map<int, ModelFit> x_fit, y_fit;
    for (int k = 0; k < 3; ++k) {
        const ModelKind kind = static_cast<ModelKind>(k);
        if (need_x[k]) {
            McmcConfig mc = cfg.mcmc;
            mc.seed = derive_seed(rep_seed, {0xf17ULL, 1, static_cast<std::uint64_t>(k)});
            x_fit.emplace(k, fit_model(x1_dm, kind, mc));
        }
        if (need_y[k]) {
            McmcConfig mc = cfg.mcmc;
            mc.seed = derive_seed(rep_seed, {0xf17ULL, 2, static_cast<std::uint64_t>(k)});
            y_fit.emplace(k, fit_model(y_dm, kind, mc));
        }
    }

    for (const auto& [kidx, fit] : y_fit) {
        FitScore score;
        score.params = fit.summary.params;
        score.bic = compute_bic(fit.loglik_at_estimate, fit.k_params, fit.n_obs);
        if (fit.mcmc && cfg.with_elpd) {
            const ElpdResult e = compute_elpd(*fit.mcmc, y_dm);
            score.elpd = e.elpd;
            score.has_elpd = true;
            score.unstable_weights = e.unstable_weights;
        }
        out.y_fits[model_name(static_cast<ModelKind>(kidx))] = std::move(score);
    }

    std::vector<bool> modes;
    if (cfg.run_single) modes.push_back(false);
    if (cfg.run_multiple) modes.push_back(true);

    for (const auto& [xm, ym] : cfg.pipelines) {
        for (bool multiple : modes) {
            const int m_eff = multiple ? cfg.m : 1;
            std::vector<ImputationStage> stages;
            stages.push_back({"x1", xm, cfg.x1_design, &x_fit.at(static_cast<int>(xm)), &x1_dm});
            stages.push_back({"y", ym, cfg.y_design, &y_fit.at(static_cast<int>(ym)), &y_dm});
            const std::uint64_t imp_seed = derive_seed(rep_seed, {0x706c6eULL, static_cast<std::uint64_t>(pipeline_slot(xm, ym, multiple))});
            const std::vector<ImputationResult> results = sequential_impute(sim.data, stages, m_eff, imp_seed);
            const double err = replication_error(sim.truth.y_complete, results.back().pooled, "y", sim.truth.missing);
            out.errors[pipeline_slot(xm, ym, multiple)] = err;
        }
    }
    return out;
}

// aggregated report rows ------------------------------------------------------

struct PipelineErrorRow {
    int cell = 0;
    ModelKind x_model = ModelKind::Rilm, y_model = ModelKind::Rilm;
    bool multiple = false;
    double mean_error = 0.0;
    int n_ok = 0, n_failed = 0;
    ModelKind best_y = ModelKind::Rilm, worst_y = ModelKind::Rilm; // within (cell, x_model, mode)
    double difference_pct = 0.0;
};

struct ParamScoreRow {
    int cell = 0;
    ModelKind model = ModelKind::Rilm;
    std::string param;
    double truth = 0.0;
    double bias = 0.0;
    double coverage = 0.0;
    int n = 0;
};

struct ComparisonRow {
    int cell = 0;
    ModelKind model = ModelKind::Rilm;
    double mean_bic = 0.0;
    double mean_elpd = 0.0;
    bool has_elpd = false;
    int n = 0;
};

struct EvaluationReport {
    std::vector<PipelineErrorRow> errors;
    std::vector<ParamScoreRow> scores;
    std::vector<ComparisonRow> comparisons;
    std::vector<ReplicationOutcome> outcomes;
    int replications = 0;
    int m = 0;
    bool failure_rate_exceeded = false;

    const PipelineErrorRow& error_row(int cell, ModelKind xm, ModelKind ym, bool multiple) const {
        for (const auto& r : errors)
            if (r.cell == cell && r.x_model == xm && r.y_model == ym && r.multiple == multiple) return r;
        throw UnknownVariable("no error row for requested pipeline");
    }
    const ParamScoreRow& score_row(int cell, ModelKind model, const std::string& param) const {
        for (const auto& r : scores)
            if (r.cell == cell && r.model == model && r.param == param) return r;
        throw UnknownVariable("no score row for " + std::string(model_name(model)) + "/" + param);
    }
};

// true value for a named fitted parameter of the y model, including the
// calibrated missing-model intercept and the beep-dummy coefficients
inline bool study_true_value(const StudyConfig& cfg, int cell, ModelKind kind, const std::string& param,
                             double tau0, double& out) {
    const ScenarioConfig& sc = cfg.scenarios[cell];
    if (param == "tau0") {
        out = tau0;
        return true;
    }
    if (param.rfind("tau_beep=", 0) == 0) {
        const std::string lvl = param.substr(9);
        if (lvl == "1") {
            out = sc.missing.tau_beep_first;
            return true;
        }
        if (lvl == std::to_string(sc.n_beeps)) {
            out = sc.missing.tau_beep_last;
            return true;
        }
        return false;
    }
    try {
        out = derived_true_value(sc, sc.y, kind, param);
        return true;
    } catch (const UnknownVariable&) {
        return false;
    }
}

inline EvaluationReport aggregate_study(const StudyConfig& cfg, std::vector<ReplicationOutcome> outcomes) {
    EvaluationReport rep;
    rep.replications = cfg.replications;
    rep.m = cfg.m;

    const int n_cells = static_cast<int>(cfg.scenarios.size());
    for (int cell = 0; cell < n_cells; ++cell) {
        std::vector<const ReplicationOutcome*> ok;
        int failed = 0;
        for (const auto& o : outcomes)
            if (o.cell == cell) (o.failed ? (void)++failed : ok.push_back(&o));
        const int total = static_cast<int>(ok.size()) + failed;
        if (total > 0 && static_cast<double>(failed) / total > cfg.max_failure_rate)
            rep.failure_rate_exceeded = true;

        std::vector<bool> modes;
        if (cfg.run_single) modes.push_back(false);
        if (cfg.run_multiple) modes.push_back(true);

        for (const auto& [xm, ym] : cfg.pipelines) {
            for (bool multiple : modes) {
                PipelineErrorRow row;
                row.cell = cell;
                row.x_model = xm;
                row.y_model = ym;
                row.multiple = multiple;
                row.n_failed = failed;
                std::vector<double> errs;
                for (const auto* o : ok) {
                    const double e = o->errors[pipeline_slot(xm, ym, multiple)];
                    if (std::isfinite(e)) errs.push_back(e);
                }
                row.n_ok = static_cast<int>(errs.size());
                row.mean_error = errs.empty() ? std::numeric_limits<double>::quiet_NaN() : imputation_error(errs);
                rep.errors.push_back(row);
            }
        }

        // best/worst y model within each (x model, mode) group
        for (auto& row : rep.errors) {
            if (row.cell != cell) continue;
            double best = std::numeric_limits<double>::infinity(), worst = -best;
            ModelKind bm = row.y_model, wm = row.y_model;
            for (const auto& other : rep.errors) {
                if (other.cell != cell || other.x_model != row.x_model || other.multiple != row.multiple) continue;
                if (other.mean_error < best) {
                    best = other.mean_error;
                    bm = other.y_model;
                }
                if (other.mean_error > worst) {
                    worst = other.mean_error;
                    wm = other.y_model;
                }
            }
            row.best_y = bm;
            row.worst_y = wm;
            row.difference_pct = worst > 0 ? 100.0 * difference_ratio(best, worst) : 0.0;
        }

        // per-parameter bias and coverage of the y-model fits
        for (int k = 0; k < 3; ++k) {
            const ModelKind kind = static_cast<ModelKind>(k);
            const std::string mname = model_name(kind);
            std::map<std::string, std::vector<IntervalEstimate>> per_param;
            double tau0 = 0.0;
            for (const auto* o : ok) {
                const auto it = o->y_fits.find(mname);
                if (it == o->y_fits.end()) continue;
                tau0 = o->tau0;
                for (const auto& p : it->second.params)
                    per_param[p.name].push_back({p.estimate, p.lower, p.upper});
            }
            for (const auto& [param, ests] : per_param) {
                double truth = 0.0;
                if (!study_true_value(cfg, cell, kind, param, tau0, truth)) continue;
                const BiasCoverage bc = bias_and_coverage(ests, truth);
                rep.scores.push_back({cell, kind, param, truth, bc.bias, bc.coverage, bc.n});
            }
            // model comparison means
            ComparisonRow cmp;
            cmp.cell = cell;
            cmp.model = kind;
            int n_bic = 0, n_elpd = 0;
            double bic = 0.0, elpd = 0.0;
            for (const auto* o : ok) {
                const auto it = o->y_fits.find(mname);
                if (it == o->y_fits.end()) continue;
                bic += it->second.bic;
                ++n_bic;
                if (it->second.has_elpd) {
                    elpd += it->second.elpd;
                    ++n_elpd;
                }
            }
            if (n_bic > 0) {
                cmp.mean_bic = bic / n_bic;
                cmp.mean_elpd = n_elpd ? elpd / n_elpd : 0.0;
                cmp.has_elpd = n_elpd > 0;
                cmp.n = n_bic;
                rep.comparisons.push_back(cmp);
            }
        }
    }
    rep.outcomes = std::move(outcomes);
    return rep;
}

// Full cross of scenarios x replications with a worker pool; previously
// completed outcomes are reused through try_load and fresh ones reported
// through on_complete (both optional). Failed replications are recorded, not
// silently dropped.
inline EvaluationReport run_replication_study(
    const StudyConfig& cfg,
    const std::function<bool(int, int, ReplicationOutcome&)>& try_load = {},
    const std::function<void(const ReplicationOutcome&)>& on_complete = {}) {
    cfg.validate();

    struct Task {
        int cell, rep;
    };
    std::vector<Task> tasks;
    for (int c = 0; c < static_cast<int>(cfg.scenarios.size()); ++c)
        for (int r = 0; r < cfg.replications; ++r) tasks.push_back({c, r});

    std::vector<ReplicationOutcome> outcomes(tasks.size());
    std::atomic<std::size_t> next{0};
    std::mutex complete_mutex;

    auto worker = [&]() {
        while (true) {
            const std::size_t t = next.fetch_add(1);
            if (t >= tasks.size()) break;
            const auto [cell, r] = tasks[t];
            ReplicationOutcome out;
            if (try_load && try_load(cell, r, out)) {
                outcomes[t] = std::move(out);
                continue;
            }
            try {
                out = run_one_replication(cfg, cell, r);
            } catch (const std::exception& e) {
                out = ReplicationOutcome{};
                out.cell = cell;
                out.rep = r;
                out.failed = true;
                out.failure = e.what();
            }
            if (on_complete) {
                std::lock_guard<std::mutex> lock(complete_mutex);
                on_complete(out);
            }
            outcomes[t] = std::move(out);
        }
    };

    const int jobs = std::max(1, cfg.jobs);
    if (jobs == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    return aggregate_study(cfg, std::move(outcomes));
}

} // namespace emix
