#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <optional>
#include <vector>

#include "emix/fit_types.hpp"
#include "emix/models.hpp"
#include "emix/panel.hpp"
#include "emix/rng.hpp"

namespace emix {

// Generating truth for one simulated variable. x1 follows the shared-effect
// location-scale law with covariate x2; y adds x1 to both the mean and
// log-variance models.
struct VariableTruth {
    double beta0 = 0.0, beta_x1 = 0.0, beta_x2 = 0.0;
    double alpha0 = 0.0, alpha_x1 = 0.0, alpha_x2 = 0.0;
    double gamma = 0.0, delta = 0.0;
    double sigma_eta1 = 1.0, sigma_eta2 = 1.0, rho_eta = 0.0;
};

struct MissingTruth {
    std::optional<double> tau0; // calibrated to target_rate when unset
    double tau_day = 0.0;
    double tau_beep_first = 0.0;
    double tau_beep_last = 0.0;
    double sigma_lambda = 1.0;
    double target_rate = 0.20;
};

struct ScenarioConfig {
    int n_subjects = 20;
    int n_days = 5;
    int n_beeps = 6;
    double x2_mean = 0.0, x2_sd = 1.0;
    MissingTruth missing;
    VariableTruth x1;
    VariableTruth y;
    std::uint64_t seed = 0;

    void validate() const {
        if (n_subjects < 1 || n_days < 1 || n_beeps < 1)
            throw InvalidConfig("scenario: dimensions must be positive");
        if (x2_sd < 0.0) throw InvalidConfig("scenario: x2 sd must be nonnegative");
        if (missing.sigma_lambda < 0.0) throw InvalidConfig("scenario: sigma_lambda must be nonnegative");
        if (!(missing.target_rate > 0.0 && missing.target_rate < 1.0))
            throw InvalidConfig("scenario: target missing rate must lie in (0,1)");
        for (const VariableTruth* v : {&x1, &y}) {
            if (v->sigma_eta1 < 0.0 || v->sigma_eta2 < 0.0)
                throw InvalidConfig("scenario: eta scales must be nonnegative");
            if (!(std::abs(v->rho_eta) < 1.0))
                throw InvalidConfig("scenario: |rho_eta| must be < 1");
        }
    }
};

// Complete pre-masking values and all latent effects, kept for scoring.
struct TruthRecord {
    double tau0 = 0.0;
    std::vector<double> x2;
    std::vector<double> lambda;
    std::vector<double> eta1_x1, eta2_x1, eta1_y, eta2_y;
    Eigen::MatrixXd x1_complete, y_complete;         // n_subjects x n_occasions
    std::vector<std::vector<std::uint8_t>> missing;  // shared x1/y mask
};

struct SimulatedDataset {
    PanelDataset data;
    TruthRecord truth;
};

// Expected missing rate at a given intercept: Monte Carlo over the random
// missing effect crossed exactly with the (day, first-beep, last-beep) grid.
inline double expected_missing_rate(const ScenarioConfig& cfg, double tau0, int n_lambda = 10000) {
    Rng rng(derive_seed(0xca11b8a7e5ULL, {static_cast<std::uint64_t>(n_lambda)}));
    std::vector<double> lam(n_lambda);
    for (auto& l : lam) l = rng.normal(0.0, cfg.missing.sigma_lambda);
    double total = 0.0;
    for (int day = 1; day <= cfg.n_days; ++day) {
        for (int beep = 1; beep <= cfg.n_beeps; ++beep) {
            const double base = tau0 + cfg.missing.tau_day * day +
                                cfg.missing.tau_beep_first * (beep == 1 ? 1.0 : 0.0) +
                                cfg.missing.tau_beep_last * (beep == cfg.n_beeps ? 1.0 : 0.0);
            double cell = 0.0;
            for (double l : lam) cell += logistic(base + l);
            total += cell / n_lambda;
        }
    }
    return total / (cfg.n_days * cfg.n_beeps);
}

// Bisection on the missing-model intercept until the expected rate matches
// the target. The rate is strictly increasing in the intercept, so the
// bracket [-40, 40] always works for targets inside (0,1).
inline double calibrate_tau0(const ScenarioConfig& cfg, double target_rate, double tolerance = 0.005) {
    if (!(target_rate > 0.0 && target_rate < 1.0))
        throw InvalidConfig("calibrate_tau0: target rate must lie in (0,1)");
    double lo = -40.0, hi = 40.0;
    if (expected_missing_rate(cfg, lo) > target_rate || expected_missing_rate(cfg, hi) < target_rate)
        throw NoBracket("calibrate_tau0: target rate not bracketed");
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double r = expected_missing_rate(cfg, mid);
        if (std::abs(r - target_rate) < tolerance) return mid;
        (r < target_rate ? lo : hi) = mid;
        if (hi - lo < 1e-13) break;
    }
    return 0.5 * (lo + hi);
}

namespace detail {

// correlated (eta1, eta2) pair via the Cholesky factor of the 2x2 block
inline void draw_eta_pair(Rng& rng, const VariableTruth& v, double& e1, double& e2) {
    const double z1 = rng.normal(), z2 = rng.normal();
    e1 = v.sigma_eta1 * z1;
    e2 = v.sigma_eta2 * (v.rho_eta * z1 + std::sqrt(1.0 - v.rho_eta * v.rho_eta) * z2);
}

} // namespace detail

// The four-step generator: (1) subject covariate x2, (2) shared missing
// effect and indicators, (3) x1 from its location-scale law, (4) y from its
// law with x1 in both the mean and log-variance. x1 and y are masked at the
// same cells.
inline SimulatedDataset generate(const ScenarioConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    const int n = cfg.n_subjects;
    const int ni = cfg.n_days * cfg.n_beeps;
    const double tau0 = cfg.missing.tau0 ? *cfg.missing.tau0
                                         : calibrate_tau0(cfg, cfg.missing.target_rate);

    Rng rng(derive_seed(seed, {0x73696dULL}));
    TruthRecord truth;
    truth.tau0 = tau0;
    truth.x2.resize(n);
    truth.lambda.resize(n);
    truth.eta1_x1.resize(n);
    truth.eta2_x1.resize(n);
    truth.eta1_y.resize(n);
    truth.eta2_y.resize(n);
    truth.x1_complete.resize(n, ni);
    truth.y_complete.resize(n, ni);
    truth.missing.assign(n, std::vector<std::uint8_t>(ni, 0));

    // step 1: subject-level covariate
    for (int i = 0; i < n; ++i) truth.x2[i] = rng.normal(cfg.x2_mean, cfg.x2_sd);

    // step 2: random missing effect and indicators
    const bool no_missing = std::isinf(tau0) && tau0 < 0.0;
    for (int i = 0; i < n; ++i) truth.lambda[i] = rng.normal(0.0, cfg.missing.sigma_lambda);
    for (int i = 0; i < n; ++i) {
        int o = 0;
        for (int day = 1; day <= cfg.n_days; ++day) {
            for (int beep = 1; beep <= cfg.n_beeps; ++beep, ++o) {
                if (no_missing) continue;
                const double lp = tau0 + cfg.missing.tau_day * day +
                                  cfg.missing.tau_beep_first * (beep == 1 ? 1.0 : 0.0) +
                                  cfg.missing.tau_beep_last * (beep == cfg.n_beeps ? 1.0 : 0.0) +
                                  truth.lambda[i];
                truth.missing[i][o] = rng.bernoulli(logistic(lp)) ? 1 : 0;
            }
        }
    }

    // step 3: x1
    for (int i = 0; i < n; ++i)
        detail::draw_eta_pair(rng, cfg.x1, truth.eta1_x1[i], truth.eta2_x1[i]);
    for (int i = 0; i < n; ++i) {
        const double mu = cfg.x1.beta0 + cfg.x1.beta_x2 * truth.x2[i] + truth.eta1_x1[i] +
                          cfg.x1.gamma * truth.lambda[i];
        const double lv = cfg.x1.alpha0 + cfg.x1.alpha_x2 * truth.x2[i] + truth.eta2_x1[i] +
                          cfg.x1.delta * truth.lambda[i];
        const double sd = std::exp(0.5 * lv);
        for (int o = 0; o < ni; ++o) truth.x1_complete(i, o) = rng.normal(mu, sd);
    }

    // step 4: y
    for (int i = 0; i < n; ++i)
        detail::draw_eta_pair(rng, cfg.y, truth.eta1_y[i], truth.eta2_y[i]);
    for (int i = 0; i < n; ++i) {
        const double mu0 = cfg.y.beta0 + cfg.y.beta_x2 * truth.x2[i] + truth.eta1_y[i] +
                           cfg.y.gamma * truth.lambda[i];
        const double lv0 = cfg.y.alpha0 + cfg.y.alpha_x2 * truth.x2[i] + truth.eta2_y[i] +
                           cfg.y.delta * truth.lambda[i];
        for (int o = 0; o < ni; ++o) {
            const double x1 = truth.x1_complete(i, o);
            const double mu = mu0 + cfg.y.beta_x1 * x1;
            const double lv = lv0 + cfg.y.alpha_x1 * x1;
            truth.y_complete(i, o) = rng.normal(mu, std::exp(0.5 * lv));
        }
    }

    // assemble the masked panel
    std::vector<SubjectBlock> blocks;
    blocks.reserve(n);
    for (int i = 0; i < n; ++i) {
        SubjectBlock block;
        block.subject_id = std::to_string(i + 1);
        int o = 0;
        for (int day = 1; day <= cfg.n_days; ++day) {
            for (int beep = 1; beep <= cfg.n_beeps; ++beep, ++o) {
                OccasionRow row;
                row.day = day;
                row.beep = beep;
                const bool miss = truth.missing[i][o] != 0;
                row.values = {truth.x2[i], miss ? 0.0 : truth.x1_complete(i, o), miss ? 0.0 : truth.y_complete(i, o)};
                row.missing = {0, static_cast<std::uint8_t>(miss ? 1 : 0), static_cast<std::uint8_t>(miss ? 1 : 0)};
                block.occasions.push_back(std::move(row));
            }
        }
        blocks.push_back(std::move(block));
    }
    return SimulatedDataset{PanelDataset({"x2", "x1", "y"}, std::move(blocks)), std::move(truth)};
}

// True values of the parameters each fitted model reports, derived from the
// generating truth (the two-effect models see the composite random effects
// v1 = eta1 + gamma lambda, v2 = eta2 + delta lambda).
inline double derived_true_value(const ScenarioConfig& cfg, const VariableTruth& v, ModelKind kind,
                                 const std::string& param) {
    const double sl2 = cfg.missing.sigma_lambda * cfg.missing.sigma_lambda;
    const double var_v1 = v.sigma_eta1 * v.sigma_eta1 + v.gamma * v.gamma * sl2;
    const double var_v2 = v.sigma_eta2 * v.sigma_eta2 + v.delta * v.delta * sl2;
    const double cov_v = v.rho_eta * v.sigma_eta1 * v.sigma_eta2 + v.gamma * v.delta * sl2;
    if (param == "beta0") return v.beta0;
    if (param == "beta_x1") return v.beta_x1;
    if (param == "beta_x2") return v.beta_x2;
    if (param == "alpha0") return v.alpha0;
    if (param == "alpha_x1") return v.alpha_x1;
    if (param == "alpha_x2") return v.alpha_x2;
    if (kind == ModelKind::Splsme) {
        if (param == "gamma") return v.gamma;
        if (param == "delta") return v.delta;
        if (param == "sigma_eta1") return v.sigma_eta1;
        if (param == "sigma_eta2") return v.sigma_eta2;
        if (param == "rho_eta") return v.rho_eta;
        if (param == "sigma_lambda") return cfg.missing.sigma_lambda;
        if (param == "tau0") return 0.0; // caller substitutes the calibrated value
        if (param == "tau_day") return cfg.missing.tau_day;
    }
    if (param == "sigma_v1") return std::sqrt(var_v1);
    if (param == "sigma_v2") return std::sqrt(var_v2);
    if (param == "rho_v1v2") return cov_v / std::sqrt(var_v1 * var_v2);
    throw UnknownVariable("no true value for parameter '" + param + "'");
}

} // namespace emix
