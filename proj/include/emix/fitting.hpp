#pragma once

#include <optional>
#include <variant>

#include "emix/rilm.hpp"
#include "emix/targets.hpp"

namespace emix {

using ModelParams = std::variant<RilmParams, MelsParams, SplsmeParams>;

struct ModelFit {
    ModelKind kind = ModelKind::Rilm;
    FitSummary summary; // global parameters only
    std::optional<RilmMlFit> ml;
    std::optional<PosteriorDrawSet> mcmc;
    double loglik_at_estimate = 0.0;
    int k_params = 0;
    int n_obs = 0;
};

// natural-draw layout helpers -------------------------------------------------

// count of non-random-effect natural parameters leading each draw row
inline int n_global_natural(const PosteriorDrawSet& s) {
    if (s.kind == ModelKind::Mels) return s.p + s.pv + 5; // betas, alphas, 2 scales, rho
    return s.p + s.pv + s.q + 9; // betas, alphas, taus, 2 loadings, 3 scales, rho
}

inline MelsParams mels_from_draw(const PosteriorDrawSet& s, int row) {
    MelsParams p;
    const auto& d = s.draws;
    int at = 0;
    p.beta0 = d(row, at++);
    p.beta.resize(s.p);
    for (int j = 0; j < s.p; ++j) p.beta(j) = d(row, at++);
    p.alpha0 = d(row, at++);
    p.alpha.resize(s.pv);
    for (int j = 0; j < s.pv; ++j) p.alpha(j) = d(row, at++);
    p.sigma_v1 = d(row, at++);
    p.sigma_v2 = d(row, at++);
    p.rho_v1v2 = d(row, at++);
    const int n = s.n_subjects;
    p.v1.resize(n);
    p.v2.resize(n);
    for (int i = 0; i < n; ++i) p.v1(i) = d(row, at + i);
    for (int i = 0; i < n; ++i) p.v2(i) = d(row, at + n + i);
    return p;
}

inline SplsmeParams splsme_from_draw(const PosteriorDrawSet& s, int row) {
    SplsmeParams p;
    const auto& d = s.draws;
    int at = 0;
    p.beta0 = d(row, at++);
    p.beta.resize(s.p);
    for (int j = 0; j < s.p; ++j) p.beta(j) = d(row, at++);
    p.alpha0 = d(row, at++);
    p.alpha.resize(s.pv);
    for (int j = 0; j < s.pv; ++j) p.alpha(j) = d(row, at++);
    p.tau0 = d(row, at++);
    p.tau.resize(s.q);
    for (int j = 0; j < s.q; ++j) p.tau(j) = d(row, at++);
    p.gamma = d(row, at++);
    p.delta = d(row, at++);
    p.sigma_eta1 = d(row, at++);
    p.sigma_eta2 = d(row, at++);
    p.rho_eta = d(row, at++);
    p.sigma_lambda = d(row, at++);
    const int n = s.n_subjects;
    p.eta1.resize(n);
    p.eta2.resize(n);
    p.lambda.resize(n);
    for (int i = 0; i < n; ++i) p.eta1(i) = d(row, at + i);
    for (int i = 0; i < n; ++i) p.eta2(i) = d(row, at + n + i);
    for (int i = 0; i < n; ++i) p.lambda(i) = d(row, at + 2 * n + i);
    return p;
}

inline ModelParams params_from_draw(const PosteriorDrawSet& s, int row) {
    if (s.kind == ModelKind::Mels) return mels_from_draw(s, row);
    return splsme_from_draw(s, row);
}

// conditional mean/variance at one cell given structured parameters and the
// cell's covariate vectors (shared by imputation and predictive densities)
inline void conditional_moments(const ModelParams& params, const Eigen::VectorXd& x, const Eigen::VectorXd& w,
                                int subj, double& mu, double& sigma2) {
    double logvar = 0.0;
    if (const auto* p = std::get_if<RilmParams>(&params)) {
        mu = p->beta0 + x.dot(p->beta) + p->v1(subj);
        logvar = p->alpha0;
    } else if (const auto* p = std::get_if<MelsParams>(&params)) {
        mu = p->beta0 + x.dot(p->beta) + p->v1(subj);
        logvar = p->alpha0 + w.dot(p->alpha) + p->v2(subj);
    } else {
        const auto& p2 = std::get<SplsmeParams>(params);
        mu = p2.beta0 + x.dot(p2.beta) + p2.eta1(subj) + p2.gamma * p2.lambda(subj);
        logvar = p2.alpha0 + w.dot(p2.alpha) + p2.eta2(subj) + p2.delta * p2.lambda(subj);
    }
    sigma2 = detail::checked_exp_var(logvar);
}

// Observed-response normal log-likelihood at fixed parameters (conditional on
// the random effects). This is the data term BIC and ELPD score: it covers the
// same response cells for every model, leaving the Bernoulli missingness part
// and the random-effect densities out.
inline double response_loglik(const ModelParams& params, const DesignMatrices& design) {
    double ll = 0.0;
    for (int i = 0; i < static_cast<int>(design.subjects.size()); ++i) {
        const auto& sd = design.subjects[i];
        for (int r = 0; r < sd.y.size(); ++r) {
            if (!sd.complete[r]) continue;
            double mu = 0.0, sigma2 = 0.0;
            const Eigen::VectorXd x = sd.X.row(r);
            const Eigen::VectorXd w = sd.W.row(r);
            conditional_moments(params, x, w, i, mu, sigma2);
            ll += normal_lpdf(sd.y(r), mu, sigma2);
        }
    }
    return ll;
}

// ---- model fitting ----

inline McmcConfig default_mcmc_config() { return McmcConfig{}; }

inline ModelFit fit_model(const DesignMatrices& design, ModelKind kind, const McmcConfig& cfg) {
    ModelFit fit;
    fit.kind = kind;
    fit.n_obs = static_cast<int>(design.n_observed);

    if (kind == ModelKind::Rilm) {
        fit.ml = fit_rilm_ml(design);
        fit.summary = fit.ml->summary;
        fit.loglik_at_estimate = fit.ml->loglik;
        fit.k_params = fit.ml->k_params; // beta, alpha0, sigma_v1
        return fit;
    }

    const FlatPanel flat = flatten(design);
    PosteriorDrawSet draws;
    if (kind == ModelKind::Mels) {
        draws = run_mh<MelsTarget>([&flat, &cfg]() { return MelsTarget(&flat, cfg.priors); }, cfg);
    } else {
        draws = run_mh<SplsmeTarget>([&flat, &cfg]() { return SplsmeTarget(&flat, cfg.priors); }, cfg);
    }

    const int n_glob = n_global_natural(draws);
    const FitSummary all = summarize_draws(draws);
    fit.summary.params.assign(all.params.begin(), all.params.begin() + n_glob);
    fit.k_params = n_glob;

    // plug-in response log-likelihood at the posterior means (fixed effects
    // and random effects alike); the counting rule for BIC excludes the
    // per-subject effects
    Eigen::VectorXd mean_draw = draws.draws.colwise().mean();
    PosteriorDrawSet tmp = draws;
    tmp.draws = mean_draw.transpose();
    fit.loglik_at_estimate = response_loglik(params_from_draw(tmp, 0), design);
    fit.summary.loglik_at_estimate = fit.loglik_at_estimate;

    fit.mcmc = std::move(draws);
    return fit;
}

// ---- posterior parameter-set extraction (imputation step 1) ----

// MCMC path: m draws at evenly spaced pooled indices, idx_k = floor((2k+1)S/(2m)).
// ML path: m draws from the asymptotic normal plus conditional random
// intercepts; `design` must be the design the model was fitted on.
inline std::vector<ModelParams> draw_parameter_sets(const ModelFit& fit, const DesignMatrices& design,
                                                    int m, Rng& rng) {
    if (m < 1) throw InvalidConfig("draw_parameter_sets: m must be >= 1");
    std::vector<ModelParams> out;
    out.reserve(m);
    if (fit.kind == ModelKind::Rilm) {
        for (int k = 0; k < m; ++k) out.push_back(rilm_draw_params(*fit.ml, design, rng));
        return out;
    }
    const auto& set = *fit.mcmc;
    const int S = set.n_draws();
    if (S < m)
        throw InsufficientDraws("requested " + std::to_string(m) + " parameter sets from " + std::to_string(S) + " draws");
    for (int k = 0; k < m; ++k) {
        const int idx = static_cast<int>((static_cast<long long>(2 * k + 1) * S) / (2 * m));
        out.push_back(params_from_draw(set, idx));
    }
    return out;
}

} // namespace emix
