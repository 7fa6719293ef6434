#include <catch2/catch_amalgamated.hpp>
#include <cstdio>

#include "emix/evaluation.hpp"

using namespace emix;

namespace {

// imputed panel with explicit per-cell values vs a truth matrix
struct ErrorFixture {
    PanelDataset panel;
    Eigen::MatrixXd truth;
    std::vector<std::vector<std::uint8_t>> mask;
};

ErrorFixture fixture(const std::vector<std::vector<double>>& imputed,
                     const std::vector<std::vector<double>>& truth,
                     const std::vector<std::vector<std::uint8_t>>& mask) {
    std::vector<SubjectBlock> blocks;
    for (std::size_t i = 0; i < imputed.size(); ++i) {
        SubjectBlock b;
        b.subject_id = "s" + std::to_string(i);
        for (std::size_t o = 0; o < imputed[i].size(); ++o) {
            OccasionRow row;
            row.day = 1;
            row.beep = static_cast<int>(o) + 1;
            row.values = {imputed[i][o]};
            row.missing = {0};
            b.occasions.push_back(row);
        }
        blocks.push_back(b);
    }
    ErrorFixture f{PanelDataset({"y"}, std::move(blocks)), {}, mask};
    f.truth.resize(static_cast<int>(truth.size()), static_cast<int>(truth[0].size()));
    for (std::size_t i = 0; i < truth.size(); ++i)
        for (std::size_t o = 0; o < truth[i].size(); ++o)
            f.truth(static_cast<int>(i), static_cast<int>(o)) = truth[i][o];
    return f;
}

} // namespace

TEST_CASE("imputation error on hand-computed fixtures", "[evaluation]") {
    SECTION("perfect imputation scores zero") {
        const auto f = fixture({{1, 2}}, {{1, 2}}, {{1, 1}});
        REQUIRE(replication_error(f.truth, f.panel, "y", f.mask) == 0.0);
    }
    SECTION("one subject, errors (1, -1) average to 1") {
        const auto f = fixture({{2, 1}}, {{1, 2}}, {{1, 1}});
        REQUIRE(replication_error(f.truth, f.panel, "y", f.mask) == 1.0);
    }
    SECTION("subjects are weighted equally, not cells") {
        // subject 1 has one scored cell with squared error 2, subject 2 has
        // three scored cells averaging 4
        const auto f = fixture({{std::sqrt(2.0), 0, 0}, {2, 2, 2}}, {{0, 0, 0}, {0, 0, 0}},
                               {{1, 0, 0}, {1, 1, 1}});
        REQUIRE(replication_error(f.truth, f.panel, "y", f.mask) == Catch::Approx(3.0).epsilon(1e-14));
    }
    SECTION("subject order does not matter") {
        const auto a = fixture({{1, 0}, {3, 3}}, {{0, 0}, {0, 0}}, {{1, 0}, {1, 1}});
        const auto b = fixture({{3, 3}, {1, 0}}, {{0, 0}, {0, 0}}, {{1, 1}, {1, 0}});
        REQUIRE(replication_error(a.truth, a.panel, "y", a.mask) ==
                replication_error(b.truth, b.panel, "y", b.mask));
    }
    SECTION("no scored cells anywhere is an error") {
        const auto f = fixture({{1}}, {{1}}, {{0}});
        REQUIRE_THROWS_AS(replication_error(f.truth, f.panel, "y", f.mask), EmptyMask);
    }
    SECTION("replication mean and ordering invariance") {
        REQUIRE(imputation_error({2.0, 4.0, 6.0}) == 4.0);
        REQUIRE(imputation_error({6.0, 2.0, 4.0}) == 4.0);
        REQUIRE_THROWS_AS(imputation_error({}), EmptyMask);
    }
}

TEST_CASE("bias and coverage on hand-built replication sets", "[evaluation]") {
    SECTION("estimates equal truth with covering intervals") {
        const std::vector<IntervalEstimate> r(4, {1.0, 0.5, 1.5});
        const BiasCoverage bc = bias_and_coverage(r, 1.0);
        REQUIRE(bc.bias == 0.0);
        REQUIRE(bc.coverage == 1.0);
    }
    SECTION("intervals strictly above truth never cover") {
        const std::vector<IntervalEstimate> r(5, {3.0, 2.5, 3.5});
        REQUIRE(bias_and_coverage(r, 1.0).coverage == 0.0);
    }
    SECTION("four-replication spreadsheet check") {
        const std::vector<IntervalEstimate> r = {
            {1.2, 0.9, 1.5}, {0.8, 0.6, 1.1}, {1.1, 1.05, 1.4}, {0.9, 0.7, 1.2}};
        const BiasCoverage bc = bias_and_coverage(r, 1.0);
        REQUIRE(bc.bias == Catch::Approx((0.2 - 0.2 + 0.1 - 0.1) / 4.0).margin(1e-15));
        REQUIRE(bc.coverage == 0.75); // the third interval misses the truth
    }
    SECTION("missing interval bound") {
        const std::vector<IntervalEstimate> r = {{1.0, std::numeric_limits<double>::quiet_NaN(), 2.0}};
        REQUIRE_THROWS_AS(bias_and_coverage(r, 1.0), MissingInterval);
    }
    SECTION("unbiased synthetic estimator stays within 3 standard errors") {
        Rng rng(808);
        std::vector<IntervalEstimate> r;
        const double truth = 2.0, sd = 0.3;
        for (int i = 0; i < 1000; ++i) {
            const double est = truth + rng.normal(0.0, sd);
            r.push_back({est, est - 2 * sd, est + 2 * sd});
        }
        const BiasCoverage bc = bias_and_coverage(r, truth);
        REQUIRE(std::abs(bc.bias) < 3.0 * sd / std::sqrt(1000.0));
        REQUIRE(bc.coverage > 0.90);
    }
}

TEST_CASE("difference ratio reproduces the reported arithmetic", "[evaluation]") {
    const double ratio = difference_ratio(9.35, 9.51);
    REQUIRE(ratio == Catch::Approx((9.51 - 9.35) / 9.51).epsilon(1e-15));
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%.2f", 100.0 * ratio);
    REQUIRE(std::string(buf) == "1.68");
}

TEST_CASE("Bayesian information criterion arithmetic", "[evaluation]") {
    REQUIRE(compute_bic(0.0, 2, static_cast<int>(std::round(std::exp(2.0)))) ==
            Catch::Approx(2.0 * std::log(std::round(std::exp(2.0)))).epsilon(1e-12));
    REQUIRE(compute_bic(0.0, 2, 7) == Catch::Approx(4.0).margin(0.12)); // n = e^2 rounds to 7
    REQUIRE(compute_bic(-10.0, 0, 100) == 20.0);
    // strictly increasing in k at fixed loglik and n > 1
    double prev = compute_bic(-5.0, 0, 50);
    for (int k = 1; k <= 5; ++k) {
        const double b = compute_bic(-5.0, k, 50);
        REQUIRE(b > prev);
        prev = b;
    }
}

namespace {

// single-subject design with two observed points and a matching draw set
std::pair<PosteriorDrawSet, DesignMatrices> degenerate_mels_set(int copies) {
    SubjectDesign sd;
    sd.subject_id = "a";
    sd.X.resize(2, 0);
    sd.W.resize(2, 0);
    sd.T.resize(2, 0);
    sd.y.resize(2);
    sd.y << 0.3, -0.2;
    sd.y_missing = {0, 0};
    sd.complete = {1, 1};
    sd.occ_index = {0, 1};
    DesignMatrices d;
    d.response = "y";
    d.subjects = {sd};
    d.total_rows = 2;
    d.n_observed = 2;
    d.n_complete = 2;

    PosteriorDrawSet set;
    set.kind = ModelKind::Mels;
    set.p = 0;
    set.pv = 0;
    set.q = 0;
    set.n_subjects = 1;
    set.names = {"beta0", "alpha0", "sigma_v1", "sigma_v2", "rho_v1v2", "v1[a]", "v2[a]"};
    set.draws.resize(copies, 7);
    for (int r = 0; r < copies; ++r) {
        set.draws.row(r) << 0.1, 0.2, 1.0, 1.0, 0.0, 0.05, -0.1;
    }
    return {set, d};
}

} // namespace

TEST_CASE("degenerate ELPD equals direct log-density summation", "[evaluation]") {
    const auto [set1, design] = degenerate_mels_set(1);
    const MelsParams p = mels_from_draw(set1, 0);
    double direct = 0.0;
    for (int r = 0; r < 2; ++r) {
        double mu, lv;
        mels_predictor(p, design.subjects[0], 0, r, mu, lv);
        direct += normal_lpdf(design.subjects[0].y(r), mu, std::exp(lv));
    }
    const ElpdResult e1 = compute_elpd(set1, design);
    REQUIRE(e1.elpd == Catch::Approx(direct).epsilon(1e-12));

    // identical draws repeated give the same value
    const auto [set5, design5] = degenerate_mels_set(5);
    REQUIRE(compute_elpd(set5, design5).elpd == Catch::Approx(direct).epsilon(1e-12));
}

TEST_CASE("wild draws trip the unstable-weights flag", "[evaluation]") {
    auto [set, design] = degenerate_mels_set(200);
    set.draws(7, 0) = 1000.0; // one absurd mean draw dominates the weights
    const ElpdResult e = compute_elpd(set, design);
    REQUIRE(e.unstable_weights);
    REQUIRE(e.min_weight_ess < 10.0);
}

TEST_CASE("the generating model wins the ELPD ordering", "[evaluation]") {
    // MELS data with a strong within-variance covariate; the misspecified fit
    // drops the variance covariates entirely
    ScenarioConfig sc;
    sc.n_subjects = 8;
    sc.n_days = 2;
    sc.n_beeps = 5;
    sc.missing.tau0 = -std::numeric_limits<double>::infinity();
    sc.missing.sigma_lambda = 0.0;
    sc.x1 = {0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.3, 0.0};
    sc.y = {1.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.8, 0.8, -0.2};

    DesignSpec true_spec;
    true_spec.mean = {Term::raw("x1")};
    true_spec.variance = {Term::raw("x1")};
    DesignSpec wrong_spec;
    wrong_spec.mean = {Term::raw("x1")};

    McmcConfig mc;
    mc.chains = 2;
    mc.warmup = 250;
    mc.sampling = 300;

    int wins = 0;
    const int reps = 25;
    for (int r = 0; r < reps; ++r) {
        const SimulatedDataset sim = generate(sc, derive_seed(31000, {static_cast<std::uint64_t>(r)}));
        const DesignMatrices dm_true = build_design(sim.data, true_spec, "y");
        const DesignMatrices dm_wrong = build_design(sim.data, wrong_spec, "y");
        McmcConfig a = mc, b = mc;
        a.seed = derive_seed(1, {static_cast<std::uint64_t>(r)});
        b.seed = derive_seed(2, {static_cast<std::uint64_t>(r)});
        const ModelFit fit_true = fit_model(dm_true, ModelKind::Mels, a);
        const ModelFit fit_wrong = fit_model(dm_wrong, ModelKind::Mels, b);
        if (compute_elpd(*fit_true.mcmc, dm_true).elpd > compute_elpd(*fit_wrong.mcmc, dm_wrong).elpd) ++wins;
    }
    REQUIRE(wins >= 20);
}

TEST_CASE("smoke replication study aggregates and reports", "[evaluation]") {
    StudyConfig cfg;
    ScenarioConfig sc;
    sc.n_subjects = 10;
    sc.missing = {std::nullopt, 0.1, 0.5, 0.3, 0.75, 0.20};
    sc.x1 = {5.0, 0.0, 0.5, 0.0, 0.0, 0.1, -0.5, 0.5, 1.0, 0.5, -0.2};
    sc.y = {2.0, 1.0, 0.5, 0.0, 0.1, 0.05, -0.5, 0.5, 1.0, 1.0, -0.2};
    cfg.scenarios = {sc};
    cfg.scenario_names = {"default"};
    cfg.pipelines = {{ModelKind::Rilm, ModelKind::Rilm}};
    cfg.replications = 3;
    cfg.m = 4;
    cfg.seed = 99;
    cfg.with_elpd = false;
    cfg.x1_design.mean = {Term::raw("x2")};
    cfg.x1_design.variance = {Term::raw("x2")};
    cfg.x1_design.missing = {Term::continuous("day"), Term::dummy("beep", 1), Term::dummy("beep", 6)};
    cfg.y_design.mean = {Term::raw("x1"), Term::raw("x2")};
    cfg.y_design.variance = {Term::raw("x1"), Term::raw("x2")};
    cfg.y_design.missing = cfg.x1_design.missing;

    const EvaluationReport rep = run_replication_study(cfg);
    REQUIRE(rep.errors.size() == 2); // one pipeline, two modes
    for (const auto& e : rep.errors) {
        REQUIRE(e.n_ok == 3);
        REQUIRE(e.n_failed == 0);
        REQUIRE(std::isfinite(e.mean_error));
        REQUIRE(e.mean_error > 0.0);
    }
    // rilm y fit is scored against the generating truth
    const auto& alpha_row = rep.score_row(0, ModelKind::Rilm, "alpha0");
    REQUIRE(alpha_row.n == 3);
    REQUIRE(alpha_row.coverage >= 0.0);
    REQUIRE(alpha_row.coverage <= 1.0);

    SECTION("identical seeds reproduce the report") {
        const EvaluationReport again = run_replication_study(cfg);
        REQUIRE(again.errors.size() == rep.errors.size());
        for (std::size_t i = 0; i < rep.errors.size(); ++i)
            REQUIRE(again.errors[i].mean_error == rep.errors[i].mean_error);
    }
    SECTION("parallel workers produce the identical report") {
        StudyConfig par = cfg;
        par.jobs = 3;
        const EvaluationReport again = run_replication_study(par);
        for (std::size_t i = 0; i < rep.errors.size(); ++i)
            REQUIRE(again.errors[i].mean_error == rep.errors[i].mean_error);
    }
    SECTION("preloaded outcomes are reused") {
        int fresh = 0;
        const EvaluationReport again = run_replication_study(
            cfg,
            [&](int cell, int r, ReplicationOutcome& o) {
                for (const auto& prev : rep.outcomes)
                    if (prev.cell == cell && prev.rep == r) {
                        o = prev;
                        return true;
                    }
                return false;
            },
            [&](const ReplicationOutcome&) { ++fresh; });
        REQUIRE(fresh == 0);
        for (std::size_t i = 0; i < rep.errors.size(); ++i)
            REQUIRE(again.errors[i].mean_error == rep.errors[i].mean_error);
    }
}

TEST_CASE("zero replications are rejected", "[evaluation]") {
    StudyConfig cfg;
    cfg.scenarios = {ScenarioConfig{}};
    cfg.scenario_names = {"default"};
    cfg.pipelines = {{ModelKind::Rilm, ModelKind::Rilm}};
    cfg.replications = 0;
    REQUIRE_THROWS_AS(run_replication_study(cfg), InvalidConfig);
}
