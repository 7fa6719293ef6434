#pragma once

#include <Eigen/Dense>
#include <cmath>

#include "emix/fit_types.hpp"
#include "emix/models.hpp"
#include "emix/optim.hpp"
#include "emix/rng.hpp"

namespace emix {

// Marginal RILM log-likelihood with the random intercept integrated out:
// per subject y_i ~ N(Xb_i beta, e^alpha0 I + sigma_v1^2 J). The compound
// symmetric structure gives closed-form inverse and determinant:
//   V^-1 = (1/a)(I - b/(a + n_i b) J),  log|V| = (n_i - 1) log a + log(a + n_i b)
// with a = e^alpha0, b = sigma_v1^2. Only complete rows enter.
inline double rilm_marginal_loglik(const DesignMatrices& d, const Eigen::VectorXd& beta_full,
                                   double alpha0, double sigma_v1) {
    const double a = std::exp(alpha0);
    const double b = sigma_v1 * sigma_v1;
    double ll = 0.0;
    for (const auto& sd : d.subjects) {
        int ni = 0;
        double rsum = 0.0, rsq = 0.0;
        for (int r = 0; r < sd.y.size(); ++r) {
            if (!sd.complete[r]) continue;
            double mu = beta_full(0);
            for (int k = 0; k < sd.X.cols(); ++k) mu += sd.X(r, k) * beta_full(k + 1);
            const double res = sd.y(r) - mu;
            rsum += res;
            rsq += res * res;
            ++ni;
        }
        if (ni == 0) continue;
        const double w = b / (a * (a + ni * b));
        const double quad = rsq / a - w * rsum * rsum;
        const double logdet = (ni - 1) * std::log(a) + std::log(a + ni * b);
        ll += -0.5 * (ni * kLog2Pi + logdet + quad);
    }
    return ll;
}

struct RilmMlFit {
    FitSummary summary;
    // ML estimate and asymptotic covariance on the (beta0, beta, alpha0,
    // log sigma_v1) scale used when drawing parameter sets
    Eigen::VectorXd theta;
    Eigen::MatrixXd cov;
    std::vector<std::string> theta_names;
    double loglik = 0.0; // marginal log-likelihood at the estimate
    int n_obs = 0;
    int k_params = 0;
};

namespace detail {

// Profiled GLS solve of beta for fixed variance parameters.
inline Eigen::VectorXd rilm_gls_beta(const DesignMatrices& d, double alpha0, double sigma_v1) {
    const double a = std::exp(alpha0);
    const double b = sigma_v1 * sigma_v1;
    const int p = d.p_mean() + 1;
    Eigen::MatrixXd XtVX = Eigen::MatrixXd::Zero(p, p);
    Eigen::VectorXd XtVy = Eigen::VectorXd::Zero(p);
    for (const auto& sd : d.subjects) {
        int ni = 0;
        Eigen::VectorXd xsum = Eigen::VectorXd::Zero(p);
        double ysum = 0.0;
        for (int r = 0; r < sd.y.size(); ++r) {
            if (!sd.complete[r]) continue;
            Eigen::VectorXd x(p);
            x(0) = 1.0;
            for (int k = 0; k < sd.X.cols(); ++k) x(k + 1) = sd.X(r, k);
            XtVX.noalias() += x * x.transpose() / a;
            XtVy.noalias() += x * sd.y(r) / a;
            xsum += x;
            ysum += sd.y(r);
            ++ni;
        }
        if (ni == 0) continue;
        const double w = b / (a * (a + ni * b));
        XtVX.noalias() -= w * xsum * xsum.transpose();
        XtVy.noalias() -= w * xsum * ysum;
    }
    return XtVX.ldlt().solve(XtVy);
}

} // namespace detail

// Maximum-likelihood RILM fit: Nelder-Mead over (alpha0, log sigma_v1) with
// beta profiled out by GLS, Wald intervals from a finite-difference observed
// information. The sigma_v1 interval is computed on the log scale and
// exponentiated.
inline RilmMlFit fit_rilm_ml(const DesignMatrices& d) {
    int with_two = 0;
    for (const auto& sd : d.subjects) {
        int ni = 0;
        for (int r = 0; r < sd.y.size(); ++r) ni += sd.complete[r];
        if (ni >= 2) ++with_two;
    }
    if (with_two < 2)
        throw InvalidConfig("fit_rilm_ml needs >= 2 subjects with >= 2 usable occasions");

    const double kLogSigmaFloor = -10.0; // keeps the boundary sigma_v1 -> 0 finite
    auto profile_nll = [&](const Eigen::VectorXd& phi) {
        const double alpha0 = phi(0);
        const double logsv = std::max(phi(1), kLogSigmaFloor);
        if (std::abs(alpha0) > 200.0) return 1e100;
        const Eigen::VectorXd beta = detail::rilm_gls_beta(d, alpha0, std::exp(logsv));
        const double ll = rilm_marginal_loglik(d, beta, alpha0, std::exp(logsv));
        return std::isfinite(ll) ? -ll : 1e100;
    };

    Eigen::VectorXd phi0(2);
    phi0 << 0.0, std::log(0.5);
    // seed alpha0 from the pooled response variance
    {
        double sum = 0.0, sq = 0.0;
        int n = 0;
        for (const auto& sd : d.subjects)
            for (int r = 0; r < sd.y.size(); ++r)
                if (sd.complete[r]) {
                    sum += sd.y(r);
                    sq += sd.y(r) * sd.y(r);
                    ++n;
                }
        if (n > 1) {
            const double var = std::max((sq - sum * sum / n) / (n - 1), 1e-6);
            phi0(0) = std::log(var);
            phi0(1) = 0.5 * std::log(var) - std::log(2.0);
        }
    }

    NelderMeadOptions opt;
    opt.max_iters = 4000;
    const NelderMeadResult nm = nelder_mead(profile_nll, phi0, opt);
    if (!nm.converged)
        throw NonConvergence("fit_rilm_ml: simplex did not converge");

    const double alpha0 = nm.x(0);
    const double logsv = std::max(nm.x(1), kLogSigmaFloor);
    const Eigen::VectorXd beta = detail::rilm_gls_beta(d, alpha0, std::exp(logsv));

    const int p = d.p_mean() + 1;
    const int k = p + 2;
    Eigen::VectorXd theta(k);
    theta.head(p) = beta;
    theta(p) = alpha0;
    theta(p + 1) = logsv;

    auto full_nll = [&](const Eigen::VectorXd& t) {
        const double ll = rilm_marginal_loglik(d, t.head(p), t(p), std::exp(std::max(t(p + 1), kLogSigmaFloor)));
        return std::isfinite(ll) ? -ll : 1e100;
    };

    const Eigen::MatrixXd H = fd_hessian(full_nll, theta, 1e-4);
    Eigen::LDLT<Eigen::MatrixXd> ldlt(H);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive())
        throw SingularHessian("fit_rilm_ml: observed information not positive definite");
    Eigen::MatrixXd cov = ldlt.solve(Eigen::MatrixXd::Identity(k, k));
    if (!cov.allFinite())
        throw SingularHessian("fit_rilm_ml: non-finite asymptotic covariance");

    RilmMlFit fit;
    fit.theta = theta;
    fit.cov = cov;
    fit.loglik = -nm.fval;
    fit.n_obs = static_cast<int>(d.n_complete);
    fit.k_params = k;
    fit.summary.loglik_at_estimate = fit.loglik;

    fit.theta_names.push_back("beta0");
    for (const auto& nme : d.x_names) fit.theta_names.push_back("beta_" + nme);
    fit.theta_names.push_back("alpha0");
    fit.theta_names.push_back("log_sigma_v1");

    const double z = 1.959963984540054;
    for (int j = 0; j < p + 1; ++j) {
        const double se = std::sqrt(std::max(cov(j, j), 0.0));
        fit.summary.params.push_back({fit.theta_names[j], theta(j), theta(j) - z * se, theta(j) + z * se});
    }
    {
        const double se = std::sqrt(std::max(cov(p + 1, p + 1), 0.0));
        const double sv = std::exp(logsv);
        fit.summary.params.push_back({"sigma_v1", sv, std::exp(logsv - z * se), std::exp(logsv + z * se)});
    }
    return fit;
}

// Conditional posterior of one subject's random intercept given fixed
// parameters: precision 1/sigma_v1^2 + n_i/e^alpha0, mean proportional to the
// sum of that subject's residuals.
inline void rilm_conditional_intercept(const DesignMatrices& d, int subj, const Eigen::VectorXd& beta_full,
                                       double alpha0, double sigma_v1, double& mean, double& var) {
    const double a = std::exp(alpha0);
    const double b = std::max(sigma_v1 * sigma_v1, 1e-300);
    const auto& sd = d.subjects[subj];
    double rsum = 0.0;
    int ni = 0;
    for (int r = 0; r < sd.y.size(); ++r) {
        if (!sd.complete[r]) continue;
        double mu = beta_full(0);
        for (int kk = 0; kk < sd.X.cols(); ++kk) mu += sd.X(r, kk) * beta_full(kk + 1);
        rsum += sd.y(r) - mu;
        ++ni;
    }
    const double prec = 1.0 / b + ni / a;
    mean = (rsum / a) / prec;
    var = 1.0 / prec;
}

// One draw from the asymptotic-normal parameter approximation plus the
// conditional random intercepts, mapped into natural RILM parameters.
inline RilmParams rilm_draw_params(const RilmMlFit& fit, const DesignMatrices& d, Rng& rng) {
    const int k = static_cast<int>(fit.theta.size());
    Eigen::LLT<Eigen::MatrixXd> llt(fit.cov + 1e-12 * Eigen::MatrixXd::Identity(k, k));
    if (llt.info() != Eigen::Success)
        throw SingularHessian("rilm_draw_params: covariance not factorizable");
    Eigen::VectorXd zvec(k);
    for (int i = 0; i < k; ++i) zvec(i) = rng.normal();
    const Eigen::VectorXd t = fit.theta + llt.matrixL() * zvec;

    const int p = k - 2;
    RilmParams params;
    params.beta0 = t(0);
    params.beta = t.segment(1, p - 1);
    params.alpha0 = t(p);
    params.sigma_v1 = std::exp(t(p + 1));
    const int n = static_cast<int>(d.subjects.size());
    params.v1.resize(n);
    for (int i = 0; i < n; ++i) {
        double mean, var;
        rilm_conditional_intercept(d, i, t.head(p), params.alpha0, params.sigma_v1, mean, var);
        params.v1(i) = rng.normal(mean, std::sqrt(var));
    }
    return params;
}

} // namespace emix
