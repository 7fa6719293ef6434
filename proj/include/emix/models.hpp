#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <numbers>

#include "emix/design.hpp"

namespace emix {

inline constexpr double kLog2Pi = 1.8378770664093454835606594728112;
// variance exponents beyond this are treated as non-finite (proposal rejection
// territory in MCMC, hard error in direct likelihood calls)
inline constexpr double kMaxLogVariance = 500.0;

// overflow-safe logistic 1/(1+e^-x)
inline double logistic(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

inline double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

// log P(m | logit p = lp) for a Bernoulli missing indicator
inline double bernoulli_logit_lpdf(bool m, double lp) { return (m ? lp : 0.0) - softplus(lp); }

inline double normal_lpdf(double x, double mean, double var) {
    const double r = x - mean;
    return -0.5 * (kLog2Pi + std::log(var) + r * r / var);
}

inline double binormal_lpdf(double a, double b, double sigma1, double sigma2, double rho) {
    const double za = a / sigma1;
    const double zb = b / sigma2;
    const double om = 1.0 - rho * rho;
    return -kLog2Pi - std::log(sigma1 * sigma2) - 0.5 * std::log(om) -
           0.5 / om * (za * za - 2.0 * rho * za * zb + zb * zb);
}

// ---- Cholesky reparameterization of the random-effect covariance ----

// Lower-triangular factor entries for the 2x2 (location, scale) block, plus
// s33 for the independent missing effect in the three-effect model.
struct CholeskyBlock {
    double s11 = 1.0;
    double s21 = 0.0;
    double s22 = 1.0;
    double s33 = 0.0;
    bool has_s33 = false;
};

inline CholeskyBlock cholesky_reparam(double sigma1, double sigma2, double rho) {
    if (sigma1 <= 0.0 || sigma2 <= 0.0)
        throw DomainError("cholesky_reparam: scales must be positive");
    if (!(std::abs(rho) < 1.0))
        throw DomainError("cholesky_reparam: |rho| must be < 1");
    CholeskyBlock c;
    c.s11 = sigma1;
    c.s21 = sigma2 * rho;
    c.s22 = sigma2 * std::sqrt(1.0 - rho * rho);
    return c;
}

inline CholeskyBlock cholesky_reparam(double sigma1, double sigma2, double rho, double sigma3) {
    if (sigma3 <= 0.0)
        throw DomainError("cholesky_reparam: scales must be positive");
    CholeskyBlock c = cholesky_reparam(sigma1, sigma2, rho);
    c.s33 = sigma3;
    c.has_s33 = true;
    return c;
}

struct NaturalCovariance {
    double sigma1 = 1.0;
    double sigma2 = 1.0;
    double rho = 0.0;
    double sigma3 = 0.0;
};

inline NaturalCovariance cholesky_to_natural(const CholeskyBlock& c) {
    if (c.s11 <= 0.0 || c.s22 <= 0.0 || (c.has_s33 && c.s33 <= 0.0))
        throw DomainError("cholesky_to_natural: diagonal entries must be positive");
    NaturalCovariance n;
    n.sigma1 = c.s11;
    n.sigma2 = std::sqrt(c.s21 * c.s21 + c.s22 * c.s22);
    n.rho = c.s21 / n.sigma2;
    n.sigma3 = c.has_s33 ? c.s33 : 0.0;
    return n;
}

// fraction of random-effect variance attributable to the missing effect
inline double missing_variance_share(double loading, double sigma_lambda, double sigma_eta) {
    if (sigma_lambda < 0.0 || sigma_eta < 0.0)
        throw DomainError("missing_variance_share: scales must be nonnegative");
    const double a = loading * sigma_lambda;
    const double num = a * a;
    const double den = num + sigma_eta * sigma_eta;
    if (den == 0.0)
        throw DomainError("missing_variance_share: both scales zero");
    return num / den;
}

// ---- parameter containers ----

struct RilmParams {
    double beta0 = 0.0;
    Eigen::VectorXd beta;
    double alpha0 = 0.0;
    double sigma_v1 = 1.0;
    Eigen::VectorXd v1; // per-subject random intercepts
};

struct MelsParams {
    double beta0 = 0.0;
    Eigen::VectorXd beta;
    double alpha0 = 0.0;
    Eigen::VectorXd alpha;
    double sigma_v1 = 1.0;
    double sigma_v2 = 1.0;
    double rho_v1v2 = 0.0;
    Eigen::VectorXd v1, v2;
};

struct SplsmeParams {
    double beta0 = 0.0;
    Eigen::VectorXd beta;
    double alpha0 = 0.0;
    Eigen::VectorXd alpha;
    double tau0 = 0.0;
    Eigen::VectorXd tau;
    double gamma = 0.0;
    double delta = 0.0;
    double sigma_eta1 = 1.0;
    double sigma_eta2 = 1.0;
    double rho_eta = 0.0;
    double sigma_lambda = 1.0;
    Eigen::VectorXd eta1, eta2, lambda;
};

namespace detail {

inline void check_len(const Eigen::VectorXd& v, int want, const char* what) {
    if (v.size() != want)
        throw DimensionMismatch(std::string(what) + ": expected length " + std::to_string(want) +
                                ", got " + std::to_string(v.size()));
}

inline double checked_exp_var(double logvar) {
    if (!(std::abs(logvar) <= kMaxLogVariance))
        throw NonFiniteVariance("variance exponent " + std::to_string(logvar) + " out of range");
    return std::exp(logvar);
}

} // namespace detail

// Per-cell conditional mean and log-variance under given parameters; the
// common core of the likelihoods, the imputation step and the ELPD pointwise
// densities.
inline void rilm_predictor(const RilmParams& p, const SubjectDesign& sd, int subj, int row,
                           double& mu, double& logvar) {
    mu = p.beta0 + sd.X.row(row).dot(p.beta) + p.v1(subj);
    logvar = p.alpha0;
}

inline void mels_predictor(const MelsParams& p, const SubjectDesign& sd, int subj, int row,
                           double& mu, double& logvar) {
    mu = p.beta0 + sd.X.row(row).dot(p.beta) + p.v1(subj);
    logvar = p.alpha0 + sd.W.row(row).dot(p.alpha) + p.v2(subj);
}

inline void splsme_predictor(const SplsmeParams& p, const SubjectDesign& sd, int subj, int row,
                             double& mu, double& logvar) {
    mu = p.beta0 + sd.X.row(row).dot(p.beta) + p.eta1(subj) + p.gamma * p.lambda(subj);
    logvar = p.alpha0 + sd.W.row(row).dot(p.alpha) + p.eta2(subj) + p.delta * p.lambda(subj);
}

inline double splsme_missing_logit(const SplsmeParams& p, const SubjectDesign& sd, int subj, int row) {
    return p.tau0 + sd.T.row(row).dot(p.tau) + p.lambda(subj);
}

// ---- observed-data log-likelihoods ----
//
// The normal part runs over rows whose response and covariates are observed;
// the Bernoulli part of the three-effect model runs over every occasion.
// Random effects are explicit parameters, so each likelihood also carries the
// random-effect log-density.

inline double loglik_rilm(const RilmParams& p, const DesignMatrices& d) {
    const int n = static_cast<int>(d.subjects.size());
    detail::check_len(p.v1, n, "v1");
    if (p.sigma_v1 <= 0.0) throw DomainError("sigma_v1 must be positive");
    const double var = detail::checked_exp_var(p.alpha0);
    double ll = 0.0;
    for (int i = 0; i < n; ++i) {
        const auto& sd = d.subjects[i];
        detail::check_len(p.beta, static_cast<int>(sd.X.cols()), "beta");
        for (int r = 0; r < sd.y.size(); ++r) {
            if (!sd.complete[r]) continue;
            double mu, lv;
            rilm_predictor(p, sd, i, r, mu, lv);
            ll += normal_lpdf(sd.y(r), mu, var);
        }
        ll += normal_lpdf(p.v1(i), 0.0, p.sigma_v1 * p.sigma_v1);
    }
    return ll;
}

inline double loglik_mels(const MelsParams& p, const DesignMatrices& d) {
    const int n = static_cast<int>(d.subjects.size());
    detail::check_len(p.v1, n, "v1");
    detail::check_len(p.v2, n, "v2");
    if (p.sigma_v1 <= 0.0 || p.sigma_v2 <= 0.0) throw DomainError("random-effect scales must be positive");
    if (!(std::abs(p.rho_v1v2) < 1.0)) throw DomainError("|rho_v1v2| must be < 1");
    double ll = 0.0;
    for (int i = 0; i < n; ++i) {
        const auto& sd = d.subjects[i];
        detail::check_len(p.beta, static_cast<int>(sd.X.cols()), "beta");
        detail::check_len(p.alpha, static_cast<int>(sd.W.cols()), "alpha");
        for (int r = 0; r < sd.y.size(); ++r) {
            if (!sd.complete[r]) continue;
            double mu, lv;
            mels_predictor(p, sd, i, r, mu, lv);
            ll += normal_lpdf(sd.y(r), mu, detail::checked_exp_var(lv));
        }
        ll += binormal_lpdf(p.v1(i), p.v2(i), p.sigma_v1, p.sigma_v2, p.rho_v1v2);
    }
    return ll;
}

inline double loglik_splsme(const SplsmeParams& p, const DesignMatrices& d) {
    const int n = static_cast<int>(d.subjects.size());
    detail::check_len(p.eta1, n, "eta1");
    detail::check_len(p.eta2, n, "eta2");
    detail::check_len(p.lambda, n, "lambda");
    if (p.sigma_eta1 <= 0.0 || p.sigma_eta2 <= 0.0 || p.sigma_lambda <= 0.0)
        throw DomainError("random-effect scales must be positive");
    if (!(std::abs(p.rho_eta) < 1.0)) throw DomainError("|rho_eta| must be < 1");
    double ll = 0.0;
    for (int i = 0; i < n; ++i) {
        const auto& sd = d.subjects[i];
        detail::check_len(p.beta, static_cast<int>(sd.X.cols()), "beta");
        detail::check_len(p.alpha, static_cast<int>(sd.W.cols()), "alpha");
        detail::check_len(p.tau, static_cast<int>(sd.T.cols()), "tau");
        for (int r = 0; r < sd.y.size(); ++r) {
            if (sd.complete[r]) {
                double mu, lv;
                splsme_predictor(p, sd, i, r, mu, lv);
                ll += normal_lpdf(sd.y(r), mu, detail::checked_exp_var(lv));
            }
            ll += bernoulli_logit_lpdf(sd.y_missing[r] != 0, splsme_missing_logit(p, sd, i, r));
        }
        ll += binormal_lpdf(p.eta1(i), p.eta2(i), p.sigma_eta1, p.sigma_eta2, p.rho_eta);
        ll += normal_lpdf(p.lambda(i), 0.0, p.sigma_lambda * p.sigma_lambda);
    }
    return ll;
}

// d loglik / d beta0; kept for the finite-difference cross-check
inline double dloglik_dbeta0_rilm(const RilmParams& p, const DesignMatrices& d) {
    const double var = detail::checked_exp_var(p.alpha0);
    double g = 0.0;
    for (int i = 0; i < static_cast<int>(d.subjects.size()); ++i) {
        const auto& sd = d.subjects[i];
        for (int r = 0; r < sd.y.size(); ++r) {
            if (!sd.complete[r]) continue;
            double mu, lv;
            rilm_predictor(p, sd, i, r, mu, lv);
            g += (sd.y(r) - mu) / var;
        }
    }
    return g;
}

inline double dloglik_dbeta0_mels(const MelsParams& p, const DesignMatrices& d) {
    double g = 0.0;
    for (int i = 0; i < static_cast<int>(d.subjects.size()); ++i) {
        const auto& sd = d.subjects[i];
        for (int r = 0; r < sd.y.size(); ++r) {
            if (!sd.complete[r]) continue;
            double mu, lv;
            mels_predictor(p, sd, i, r, mu, lv);
            g += (sd.y(r) - mu) / detail::checked_exp_var(lv);
        }
    }
    return g;
}

inline double dloglik_dbeta0_splsme(const SplsmeParams& p, const DesignMatrices& d) {
    double g = 0.0;
    for (int i = 0; i < static_cast<int>(d.subjects.size()); ++i) {
        const auto& sd = d.subjects[i];
        for (int r = 0; r < sd.y.size(); ++r) {
            if (!sd.complete[r]) continue;
            double mu, lv;
            splsme_predictor(p, sd, i, r, mu, lv);
            g += (sd.y(r) - mu) / detail::checked_exp_var(lv);
        }
    }
    return g;
}

} // namespace emix
