#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "emix/fit_types.hpp"
#include "emix/rng.hpp"

namespace emix {

struct PriorSpec {
    double coefficient_sd = 10.0; // beta, alpha, tau coefficients
    double scale_sd = 5.0;        // half-normal on diagonal Cholesky entries, normal on s21
    double loading_sd = 5.0;      // gamma, delta

    void validate() const {
        if (coefficient_sd <= 0.0 || scale_sd <= 0.0 || loading_sd <= 0.0)
            throw InvalidConfig("prior sds must be positive");
    }
};

struct McmcConfig {
    int chains = 2;
    int warmup = 2000;
    int sampling = 3000;
    int thin = 1;
    std::uint64_t seed = 0;
    double target_acceptance = 0.30;
    double initial_proposal_scale = 0.2;
    std::vector<double> proposal_scales; // optional per-block override
    PriorSpec priors;

    void validate() const {
        if (chains < 1 || warmup < 0 || sampling < 1 || thin < 1)
            throw InvalidConfig("invalid MCMC iteration counts");
        if (sampling < chains * 10)
            throw InvalidConfig("sampling iterations must be >= 10 per chain");
        if (target_acceptance <= 0.0 || target_acceptance >= 1.0)
            throw InvalidConfig("target acceptance must lie in (0,1)");
        if (initial_proposal_scale <= 0.0)
            throw InvalidConfig("proposal scale must be positive");
        for (double s : proposal_scales)
            if (s <= 0.0) throw InvalidConfig("proposal scales must be positive");
        priors.validate();
    }
};

struct ParamDiagnostics {
    std::string name;
    double rhat = 1.0;
    double ess = 0.0;
    bool zero_variance = false;
};

struct BlockDiagnostics {
    std::string name;
    double acceptance_rate = 0.0;
    double final_scale = 0.0;
};

// Natural-scale posterior draws pooled over chains (chain order), plus the
// per-chain matrices the diagnostics run on and the layout needed to map a
// draw row back into structured model parameters.
struct PosteriorDrawSet {
    ModelKind kind = ModelKind::Mels;
    std::vector<std::string> names;
    std::vector<Eigen::MatrixXd> chain_draws; // each: n_draws x dim
    Eigen::MatrixXd draws;                    // pooled
    std::vector<ParamDiagnostics> param_diag;
    std::vector<BlockDiagnostics> block_diag;   // averaged over chains
    std::vector<double> chain_acceptance;       // post-warmup rate per chain
    int p = 0, pv = 0, q = 0, n_subjects = 0;

    int n_draws() const { return static_cast<int>(draws.rows()); }
};

// ---- chain diagnostics ----

namespace detail {

inline void split_halves(const std::vector<Eigen::VectorXd>& chains, std::vector<Eigen::VectorXd>& halves) {
    for (const auto& c : chains) {
        const int L = static_cast<int>(c.size()) / 2;
        if (L < 2) continue;
        halves.push_back(c.head(L));
        halves.push_back(c.segment(L, L));
    }
}

} // namespace detail

// Split-Rhat per the standard two-half formula, plus an autocorrelation-based
// effective sample size (Geyer initial positive-pair truncation). Constant
// chains report rhat = 1 with a zero-variance flag.
inline ParamDiagnostics chain_diagnostics(const std::vector<Eigen::VectorXd>& chains, const std::string& name) {
    ParamDiagnostics d;
    d.name = name;

    std::vector<Eigen::VectorXd> seq;
    detail::split_halves(chains, seq);
    std::size_t total = 0;
    for (const auto& c : chains) total += c.size();

    if (seq.size() < 2) {
        d.zero_variance = true;
        d.ess = static_cast<double>(total);
        return d;
    }
    const int M = static_cast<int>(seq.size());
    const int L = static_cast<int>(seq[0].size());

    Eigen::VectorXd means(M), vars(M);
    for (int m = 0; m < M; ++m) {
        means(m) = seq[m].mean();
        vars(m) = (seq[m].array() - means(m)).square().sum() / (L - 1);
    }
    const double W = vars.mean();
    const double grand = means.mean();
    const double B = L * (means.array() - grand).square().sum() / (M - 1);
    // constant chains sum with rounding noise; treat them as zero variance
    if (!std::isfinite(W) || W <= 1e-24 * (1.0 + grand * grand)) {
        d.zero_variance = true;
        d.rhat = 1.0;
        d.ess = static_cast<double>(total);
        return d;
    }
    const double var_plus = (L - 1.0) / L * W + B / L;
    d.rhat = std::sqrt(var_plus / W);

    // combined autocorrelation estimate
    const int max_lag = L - 1;
    double tau = 1.0;
    double prev_pair = std::numeric_limits<double>::infinity();
    for (int t = 1; t + 1 <= max_lag; t += 2) {
        double rho_pair = 0.0;
        bool ok = true;
        for (int dt = t; dt <= t + 1; ++dt) {
            double acov = 0.0;
            for (int m = 0; m < M; ++m) {
                double s = 0.0;
                for (int i = 0; i + dt < L; ++i)
                    s += (seq[m](i) - means(m)) * (seq[m](i + dt) - means(m));
                acov += s / L;
            }
            acov /= M;
            const double rho = 1.0 - (W - acov) / var_plus;
            rho_pair += rho;
        }
        if (rho_pair < 0.0) ok = false;
        if (!ok) break;
        rho_pair = std::min(rho_pair, prev_pair); // enforce monotone decrease
        prev_pair = rho_pair;
        tau += 2.0 * rho_pair;
    }
    d.ess = std::min(static_cast<double>(total), static_cast<double>(total) / tau);
    return d;
}

inline std::vector<ParamDiagnostics> compute_diagnostics(const std::vector<Eigen::MatrixXd>& chain_draws,
                                                         const std::vector<std::string>& names) {
    std::vector<ParamDiagnostics> out;
    const int dim = chain_draws.empty() ? 0 : static_cast<int>(chain_draws[0].cols());
    for (int j = 0; j < dim; ++j) {
        std::vector<Eigen::VectorXd> cols;
        for (const auto& m : chain_draws) cols.push_back(m.col(j));
        out.push_back(chain_diagnostics(cols, j < static_cast<int>(names.size()) ? names[j] : "param" + std::to_string(j)));
    }
    return out;
}

// ---- component-wise adaptive random-walk Metropolis-Hastings ----
//
// The target type supplies blocked access to its state and a staged
// propose/accept protocol:
//   int block_count() const
//   std::pair<int,int> block_range(int b) const          (offset, dim)
//   std::string block_name(int b) const
//   const std::vector<double>& state() const
//   double log_target() const                            (current, cached)
//   double propose(int b, const double* vals)            (stages candidate)
//   void accept_staged()
//   std::vector<double> natural_draw() const
//   std::vector<std::string> natural_names() const
//
// Proposals are symmetric Gaussian random walks, so the acceptance ratio is
// min(1, posterior ratio). Per-block scales adapt during warmup only
// (Robbins-Monro on the log scale).
template <class Target>
struct ChainRun {
    Eigen::MatrixXd draws;
    std::vector<double> block_accept;
    std::vector<double> block_scale;
};

template <class Target>
ChainRun<Target> run_mh_single_chain(Target& target, const McmcConfig& cfg, std::uint64_t chain_seed) {
    const int nb = target.block_count();
    Rng rng(chain_seed);

    if (!std::isfinite(target.log_target()))
        throw NonFiniteTarget("MH initialization point has non-finite log target");

    std::vector<double> scale(nb, cfg.initial_proposal_scale);
    if (!cfg.proposal_scales.empty()) {
        if (static_cast<int>(cfg.proposal_scales.size()) != nb)
            throw InvalidConfig("proposal_scales length " + std::to_string(cfg.proposal_scales.size()) +
                                " does not match block count " + std::to_string(nb));
        scale = cfg.proposal_scales;
    }

    std::vector<long> accept_post(nb, 0), count_post(nb, 0);
    const int n_recorded = cfg.sampling / cfg.thin;
    const int dim_nat = static_cast<int>(target.natural_names().size());
    Eigen::MatrixXd draws(n_recorded, dim_nat);

    std::vector<double> prop;
    int rec = 0;
    const int total = cfg.warmup + cfg.sampling;
    for (int iter = 0; iter < total; ++iter) {
        const bool warm = iter < cfg.warmup;
        for (int b = 0; b < nb; ++b) {
            const auto [off, dimb] = target.block_range(b);
            prop.resize(dimb);
            for (int k = 0; k < dimb; ++k)
                prop[k] = target.state()[off + k] + scale[b] * rng.normal();
            const double lp_new = target.propose(b, prop.data());
            const double lp_cur = target.log_target();
            const bool acc = std::log(rng.uniform()) < lp_new - lp_cur;
            if (acc) target.accept_staged();
            if (warm) {
                const double g = 1.0 / std::pow(iter + 10.0, 0.6);
                scale[b] = std::exp(std::log(scale[b]) + g * ((acc ? 1.0 : 0.0) - cfg.target_acceptance));
                scale[b] = std::clamp(scale[b], 1e-8, 1e6);
            } else {
                accept_post[b] += acc ? 1 : 0;
                count_post[b] += 1;
            }
        }
        if (!warm && (iter - cfg.warmup) % cfg.thin == 0 && rec < n_recorded) {
            const std::vector<double> nat = target.natural_draw();
            for (int j = 0; j < dim_nat; ++j) draws(rec, j) = nat[j];
            ++rec;
        }
    }

    ChainRun<Target> out;
    out.draws = draws.topRows(rec);
    out.block_accept.resize(nb);
    out.block_scale = scale;
    for (int b = 0; b < nb; ++b) {
        out.block_accept[b] = count_post[b] ? static_cast<double>(accept_post[b]) / count_post[b] : 0.0;
        if (count_post[b] >= 100 && accept_post[b] == 0)
            throw DivergedChain("block '" + target.block_name(b) + "' rejected every post-warmup proposal");
    }
    return out;
}

template <class Target>
PosteriorDrawSet run_mh(const std::function<Target()>& make_target, const McmcConfig& cfg) {
    cfg.validate();

    std::vector<ChainRun<Target>> runs(cfg.chains);
    std::vector<std::exception_ptr> errors(cfg.chains);

    auto run_one = [&](int c) {
        try {
            Target t = make_target();
            runs[c] = run_mh_single_chain(t, cfg, derive_seed(cfg.seed, {0x6d68ULL, static_cast<std::uint64_t>(c)}));
        } catch (...) {
            errors[c] = std::current_exception();
        }
    };

    if (cfg.chains == 1) {
        run_one(0);
    } else {
        std::vector<std::thread> threads;
        threads.reserve(cfg.chains);
        for (int c = 0; c < cfg.chains; ++c) threads.emplace_back(run_one, c);
        for (auto& t : threads) t.join();
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);

    Target probe = make_target();
    PosteriorDrawSet set;
    set.names = probe.natural_names();
    probe.fill_layout(set);

    int total_draws = 0;
    for (const auto& r : runs) total_draws += static_cast<int>(r.draws.rows());
    set.draws.resize(total_draws, static_cast<int>(set.names.size()));
    int at = 0;
    for (auto& r : runs) {
        set.draws.middleRows(at, r.draws.rows()) = r.draws;
        at += static_cast<int>(r.draws.rows());
        set.chain_draws.push_back(std::move(r.draws));
        double acc = 0.0;
        for (double a : r.block_accept) acc += a;
        set.chain_acceptance.push_back(r.block_accept.empty() ? 0.0 : acc / r.block_accept.size());
    }

    set.param_diag = compute_diagnostics(set.chain_draws, set.names);
    const int nb = probe.block_count();
    set.block_diag.resize(nb);
    for (int b = 0; b < nb; ++b) {
        set.block_diag[b].name = probe.block_name(b);
        double acc = 0.0, sc = 0.0;
        for (const auto& r : runs) {
            acc += r.block_accept[b];
            sc += r.block_scale[b];
        }
        set.block_diag[b].acceptance_rate = acc / runs.size();
        set.block_diag[b].final_scale = sc / runs.size();
    }
    return set;
}

// Credible-interval summary from pooled draws: posterior mean with 2.5/97.5
// percentiles (linear interpolation between order statistics).
inline double draw_quantile(Eigen::VectorXd column, double q) {
    std::vector<double> v(column.data(), column.data() + column.size());
    std::sort(v.begin(), v.end());
    if (v.empty()) return 0.0;
    const double pos = q * (v.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    const double frac = pos - lo;
    return v[lo] * (1.0 - frac) + v[hi] * frac;
}

inline FitSummary summarize_draws(const PosteriorDrawSet& set) {
    FitSummary s;
    for (int j = 0; j < set.draws.cols(); ++j) {
        ParamEstimate e;
        e.name = set.names[j];
        e.estimate = set.draws.col(j).mean();
        e.lower = draw_quantile(set.draws.col(j), 0.025);
        e.upper = draw_quantile(set.draws.col(j), 0.975);
        s.params.push_back(e);
    }
    return s;
}

} // namespace emix
