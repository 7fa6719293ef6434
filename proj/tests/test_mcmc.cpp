#include <catch2/catch_amalgamated.hpp>

#include "emix/fitting.hpp"
#include "emix/mcmc.hpp"
#include "emix/simulation.hpp"

using namespace emix;

namespace {

// conjugate normal-mean target: y_i ~ N(theta, sigma^2) with sigma known,
// theta ~ N(mu0, tau0^2); the posterior is available in closed form
class ConjugateNormalTarget {
  public:
    ConjugateNormalTarget(std::vector<double> y, double sigma, double mu0, double tau0)
        : y_(std::move(y)), sigma_(sigma), mu0_(mu0), tau0_(tau0), state_(1, 0.0) {
        cur_ = eval(0.0);
    }

    double posterior_mean() const {
        const double prec = 1.0 / (tau0_ * tau0_) + y_.size() / (sigma_ * sigma_);
        double s = 0.0;
        for (double v : y_) s += v;
        return (mu0_ / (tau0_ * tau0_) + s / (sigma_ * sigma_)) / prec;
    }
    double posterior_sd() const {
        const double prec = 1.0 / (tau0_ * tau0_) + y_.size() / (sigma_ * sigma_);
        return std::sqrt(1.0 / prec);
    }

    int block_count() const { return 1; }
    std::pair<int, int> block_range(int) const { return {0, 1}; }
    std::string block_name(int) const { return "theta"; }
    const std::vector<double>& state() const { return state_; }
    double log_target() const { return cur_; }
    double propose(int, const double* vals) {
        staged_ = vals[0];
        staged_lp_ = eval(staged_);
        return staged_lp_;
    }
    void accept_staged() {
        state_[0] = staged_;
        cur_ = staged_lp_;
    }
    std::vector<double> natural_draw() const { return {state_[0]}; }
    std::vector<std::string> natural_names() const { return {"theta"}; }
    void fill_layout(PosteriorDrawSet&) const {}

  private:
    double eval(double theta) const {
        double ll = normal_lpdf(theta, mu0_, tau0_ * tau0_);
        for (double v : y_) ll += normal_lpdf(v, theta, sigma_ * sigma_);
        return ll;
    }
    std::vector<double> y_;
    double sigma_, mu0_, tau0_;
    std::vector<double> state_;
    double cur_ = 0.0, staged_ = 0.0, staged_lp_ = 0.0;
};

// piecewise-constant density over three unit bins on [0,3)
class TriStateTarget {
  public:
    TriStateTarget(double p1, double p2, double p3, double init) : probs_{p1, p2, p3}, state_(1, init) {
        cur_ = eval(init);
    }
    int block_count() const { return 1; }
    std::pair<int, int> block_range(int) const { return {0, 1}; }
    std::string block_name(int) const { return "x"; }
    const std::vector<double>& state() const { return state_; }
    double log_target() const { return cur_; }
    double propose(int, const double* vals) {
        staged_ = vals[0];
        staged_lp_ = eval(staged_);
        return staged_lp_;
    }
    void accept_staged() {
        state_[0] = staged_;
        cur_ = staged_lp_;
    }
    std::vector<double> natural_draw() const { return {state_[0]}; }
    std::vector<std::string> natural_names() const { return {"x"}; }
    void fill_layout(PosteriorDrawSet&) const {}

  private:
    double eval(double x) const {
        if (x < 0.0 || x >= 3.0) return -std::numeric_limits<double>::infinity();
        return std::log(probs_[static_cast<int>(x)]);
    }
    double probs_[3];
    std::vector<double> state_;
    double cur_ = 0.0, staged_ = 0.0, staged_lp_ = 0.0;
};

ScenarioConfig default_scenario() {
    ScenarioConfig sc;
    sc.missing = {std::nullopt, 0.1, 0.5, 0.3, 0.75, 0.20};
    sc.x1 = {5.0, 0.0, 0.5, 0.0, 0.0, 0.1, -0.5, 0.5, 1.0, 0.5, -0.2};
    sc.y = {2.0, 1.0, 0.5, 0.0, 0.1, 0.05, -0.5, 0.5, 1.0, 1.0, -0.2};
    return sc;
}

DesignSpec y_design() {
    DesignSpec spec;
    spec.mean = {Term::raw("x1"), Term::raw("x2")};
    spec.variance = {Term::raw("x1"), Term::raw("x2")};
    spec.missing = {Term::continuous("day"), Term::dummy("beep", 1), Term::dummy("beep", 6)};
    return spec;
}

} // namespace

TEST_CASE("symmetric uphill proposals always accept", "[mcmc]") {
    // posterior mode sits at 1.0; an uphill proposal has ratio > 1 and the
    // min(1, ratio) rule accepts it for every uniform draw
    ConjugateNormalTarget t({2.0}, 1.0, 0.0, 1.0);
    const double downhill = -3.0, uphill = 0.9;
    REQUIRE(t.propose(0, &downhill) < t.log_target());
    const double lp_up = t.propose(0, &uphill);
    REQUIRE(lp_up > t.log_target());
    Rng rng(1);
    for (int i = 0; i < 100; ++i) REQUIRE(std::log(rng.uniform()) < lp_up - t.log_target());
}

TEST_CASE("conjugate normal-mean posterior is recovered", "[mcmc]") {
    std::vector<double> y = {1.1, 0.4, 2.0, 1.6, 0.9, 1.4, 1.8, 0.2, 1.3, 1.0};
    const double sigma = 1.0;
    ConjugateNormalTarget oracle(y, sigma, 0.0, 10.0);

    McmcConfig cfg;
    cfg.chains = 1;
    cfg.warmup = 2000;
    cfg.sampling = 20000;
    cfg.seed = 314;
    const PosteriorDrawSet set = run_mh<ConjugateNormalTarget>(
        [&]() { return ConjugateNormalTarget(y, sigma, 0.0, 10.0); }, cfg);

    const double mean = set.draws.col(0).mean();
    const double sd = std::sqrt((set.draws.col(0).array() - mean).square().sum() / (set.n_draws() - 1));
    REQUIRE(mean == Catch::Approx(oracle.posterior_mean()).margin(0.02));
    REQUIRE(sd == Catch::Approx(oracle.posterior_sd()).margin(0.02));
}

TEST_CASE("three-state discretized target reaches its stationary law", "[mcmc]") {
    const double p1 = 0.2, p2 = 0.5, p3 = 0.3;
    McmcConfig cfg;
    cfg.chains = 1;
    cfg.warmup = 1000;
    cfg.sampling = 1000000;
    cfg.seed = 99;
    const PosteriorDrawSet set = run_mh<TriStateTarget>(
        [&]() { return TriStateTarget(p1, p2, p3, 1.5); }, cfg);
    double counts[3] = {0, 0, 0};
    for (int r = 0; r < set.n_draws(); ++r) counts[static_cast<int>(set.draws(r, 0))] += 1.0;
    const double n = set.n_draws();
    const double tv = 0.5 * (std::abs(counts[0] / n - p1) + std::abs(counts[1] / n - p2) +
                             std::abs(counts[2] / n - p3));
    REQUIRE(tv < 0.01);
}

TEST_CASE("initialization outside the support is rejected", "[mcmc]") {
    McmcConfig cfg;
    cfg.chains = 1;
    cfg.warmup = 10;
    cfg.sampling = 10;
    cfg.seed = 1;
    REQUIRE_THROWS_AS(run_mh<TriStateTarget>([&]() { return TriStateTarget(0.2, 0.5, 0.3, 5.0); }, cfg),
                      NonFiniteTarget);
}

namespace {

// second block's support collapses to the current point: every proposal lands
// outside and is rejected
class StuckBlockTarget {
  public:
    StuckBlockTarget() : state_(2, 0.0) {}
    int block_count() const { return 2; }
    std::pair<int, int> block_range(int b) const { return {b, 1}; }
    std::string block_name(int b) const { return b == 0 ? "free" : "stuck"; }
    const std::vector<double>& state() const { return state_; }
    double log_target() const { return cur_; }
    double propose(int b, const double* vals) {
        staged_block_ = b;
        staged_ = vals[0];
        if (b == 1) return -std::numeric_limits<double>::infinity();
        staged_lp_ = -0.5 * staged_ * staged_;
        return staged_lp_;
    }
    void accept_staged() {
        state_[staged_block_] = staged_;
        cur_ = staged_lp_;
    }
    std::vector<double> natural_draw() const { return state_; }
    std::vector<std::string> natural_names() const { return {"free", "stuck"}; }
    void fill_layout(PosteriorDrawSet&) const {}

  private:
    std::vector<double> state_;
    double cur_ = 0.0, staged_ = 0.0, staged_lp_ = 0.0;
    int staged_block_ = 0;
};

} // namespace

TEST_CASE("a block that rejects every post-warmup proposal diverges", "[mcmc]") {
    McmcConfig cfg;
    cfg.chains = 1;
    cfg.warmup = 50;
    cfg.sampling = 200;
    cfg.seed = 12;
    REQUIRE_THROWS_AS(run_mh<StuckBlockTarget>([]() { return StuckBlockTarget(); }, cfg), DivergedChain);
}

TEST_CASE("split-Rhat separates mixed from unmixed chains", "[mcmc]") {
    Rng rng(42);
    SECTION("same stationary target") {
        std::vector<Eigen::VectorXd> chains;
        for (int c = 0; c < 2; ++c) {
            Eigen::VectorXd v(10000);
            for (int i = 0; i < v.size(); ++i) v(i) = rng.normal();
            chains.push_back(v);
        }
        const ParamDiagnostics d = chain_diagnostics(chains, "x");
        REQUIRE(d.rhat < 1.05);
        REQUIRE(d.ess > 1000.0);
    }
    SECTION("chains centered apart") {
        std::vector<Eigen::VectorXd> chains;
        for (int c = 0; c < 2; ++c) {
            Eigen::VectorXd v(10000);
            for (int i = 0; i < v.size(); ++i) v(i) = rng.normal(c == 0 ? 0.0 : 10.0, 1.0);
            chains.push_back(v);
        }
        REQUIRE(chain_diagnostics(chains, "x").rhat > 2.0);
    }
    SECTION("identical constant chains") {
        std::vector<Eigen::VectorXd> chains(2, Eigen::VectorXd::Constant(500, 3.14));
        const ParamDiagnostics d = chain_diagnostics(chains, "x");
        REQUIRE(d.rhat == 1.0);
        REQUIRE(d.zero_variance);
    }
}

TEST_CASE("seeded runs are bit-identical", "[mcmc]") {
    const SimulatedDataset sim = generate(default_scenario(), 777);
    const DesignMatrices dm = build_design(sim.data, y_design(), "y");
    McmcConfig cfg;
    cfg.chains = 2;
    cfg.warmup = 150;
    cfg.sampling = 150;
    cfg.seed = 4242;
    const FlatPanel flat = flatten(dm);
    const auto run = [&]() {
        return run_mh<MelsTarget>([&]() { return MelsTarget(&flat, cfg.priors); }, cfg);
    };
    const PosteriorDrawSet a = run();
    const PosteriorDrawSet b = run();
    REQUIRE(a.draws == b.draws);
    REQUIRE(a.names == b.names);
}

TEST_CASE("every draw satisfies the natural-parameter invariants", "[mcmc]") {
    const SimulatedDataset sim = generate(default_scenario(), 101);
    const DesignMatrices dm = build_design(sim.data, y_design(), "y");
    McmcConfig cfg;
    cfg.chains = 2;
    cfg.warmup = 300;
    cfg.sampling = 200;
    cfg.seed = 8;
    const FlatPanel flat = flatten(dm);
    const PosteriorDrawSet set =
        run_mh<SplsmeTarget>([&]() { return SplsmeTarget(&flat, cfg.priors); }, cfg);
    const int n_glob = n_global_natural(set);
    for (int r = 0; r < set.n_draws(); ++r) {
        const SplsmeParams p = splsme_from_draw(set, r);
        REQUIRE(p.sigma_eta1 > 0.0);
        REQUIRE(p.sigma_eta2 > 0.0);
        REQUIRE(p.sigma_lambda > 0.0);
        REQUIRE(std::abs(p.rho_eta) < 1.0);
    }
    REQUIRE(static_cast<int>(set.names.size()) == n_glob + 3 * set.n_subjects);
}

TEST_CASE("warmup adaptation lands near the target acceptance", "[mcmc]") {
    const SimulatedDataset sim = generate(default_scenario(), 515);
    const DesignMatrices dm = build_design(sim.data, y_design(), "y");
    McmcConfig cfg;
    cfg.chains = 1;
    cfg.warmup = 1500;
    cfg.sampling = 800;
    cfg.seed = 31;
    const FlatPanel flat = flatten(dm);
    const PosteriorDrawSet set =
        run_mh<MelsTarget>([&]() { return MelsTarget(&flat, cfg.priors); }, cfg);
    for (const auto& b : set.block_diag) {
        INFO("mels " << b.name << " acceptance " << b.acceptance_rate);
        REQUIRE(b.acceptance_rate >= cfg.target_acceptance - 0.15);
        REQUIRE(b.acceptance_rate <= cfg.target_acceptance + 0.15);
    }
    const PosteriorDrawSet sset =
        run_mh<SplsmeTarget>([&]() { return SplsmeTarget(&flat, cfg.priors); }, cfg);
    for (const auto& b : sset.block_diag) {
        INFO("splsme " << b.name << " acceptance " << b.acceptance_rate);
        REQUIRE(b.acceptance_rate >= cfg.target_acceptance - 0.15);
        REQUIRE(b.acceptance_rate <= cfg.target_acceptance + 0.15);
    }
}

TEST_CASE("MCMC and marginal-ML routes agree on homoscedastic data", "[mcmc]") {
    // same data, two independent estimation paths: the location-scale sampler
    // collapsed to a constant-variance truth vs the integrated ML fit
    ScenarioConfig sc;
    sc.n_subjects = 15;
    sc.missing.tau0 = -std::numeric_limits<double>::infinity();
    sc.missing.sigma_lambda = 0.0;
    sc.x1 = {0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.01, 0.0};
    sc.y = {2.0, 1.0, 0.5, 0.3, 0.0, 0.0, 0.0, 0.0, 0.8, 0.01, 0.0};
    const SimulatedDataset sim = generate(sc, 606);

    DesignSpec spec;
    spec.mean = {Term::raw("x1"), Term::raw("x2")};
    spec.variance = {Term::raw("x1"), Term::raw("x2")};
    const DesignMatrices dm = build_design(sim.data, spec, "y");

    const ModelFit ml = fit_model(dm, ModelKind::Rilm, {});
    McmcConfig mc;
    mc.chains = 2;
    mc.warmup = 800;
    mc.sampling = 1000;
    mc.seed = 13;
    const ModelFit mcmc = fit_model(dm, ModelKind::Mels, mc);

    for (const char* name : {"beta_x1", "beta_x2", "alpha0"}) {
        const auto& a = ml.summary.find(name);
        const auto& b = mcmc.summary.find(name);
        const double scale = std::max(0.05, (a.upper - a.lower) / 2.0);
        INFO(name << " ml " << a.estimate << " mcmc " << b.estimate);
        REQUIRE(std::abs(a.estimate - b.estimate) < scale);
    }
    REQUIRE(mcmc.summary.find("sigma_v1").estimate ==
            Catch::Approx(ml.summary.find("sigma_v1").estimate).margin(0.3));
}

TEST_CASE("evenly spaced parameter-set extraction", "[mcmc]") {
    PosteriorDrawSet set;
    set.kind = ModelKind::Mels;
    set.p = 0;
    set.pv = 0;
    set.q = 0;
    set.n_subjects = 1;
    set.names = {"beta0", "alpha0", "sigma_v1", "sigma_v2", "rho_v1v2", "v1[a]", "v2[a]"};
    set.draws.resize(5000, 7);
    for (int r = 0; r < 5000; ++r) {
        set.draws.row(r).setZero();
        set.draws(r, 0) = r;
        set.draws(r, 2) = 1.0;
        set.draws(r, 3) = 1.0;
    }
    ModelFit fit;
    fit.kind = ModelKind::Mels;
    fit.mcmc = set;
    DesignMatrices dummy;
    Rng rng(1);
    const auto draws = draw_parameter_sets(fit, dummy, 10, rng);
    std::vector<double> got;
    for (const auto& d : draws) got.push_back(std::get<MelsParams>(d).beta0);
    const std::vector<double> want = {250, 750, 1250, 1750, 2250, 2750, 3250, 3750, 4250, 4750};
    REQUIRE(got == want);

    const auto one = draw_parameter_sets(fit, dummy, 1, rng);
    REQUIRE(std::get<MelsParams>(one[0]).beta0 == 2500.0);

    REQUIRE_THROWS_AS(draw_parameter_sets(fit, dummy, 6000, rng), InsufficientDraws);
}

TEST_CASE("diagnostics are exposed per chain and per block", "[mcmc]") {
    const SimulatedDataset sim = generate(default_scenario(), 2222);
    const DesignMatrices dm = build_design(sim.data, y_design(), "y");
    McmcConfig cfg;
    cfg.chains = 2;
    cfg.warmup = 100;
    cfg.sampling = 100;
    cfg.seed = 66;
    const FlatPanel flat = flatten(dm);
    const PosteriorDrawSet set =
        run_mh<MelsTarget>([&]() { return MelsTarget(&flat, cfg.priors); }, cfg);
    REQUIRE(set.chain_draws.size() == 2);
    REQUIRE(set.param_diag.size() == set.names.size());
    REQUIRE_FALSE(set.block_diag.empty());
    for (const auto& p : set.param_diag) REQUIRE(std::isfinite(p.rhat));
}
