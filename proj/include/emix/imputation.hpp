#pragma once

#include <string>
#include <vector>

#include "emix/fitting.hpp"
#include "emix/panel.hpp"

namespace emix {

struct ImputedCell {
    int k = 0; // draw index
    int subject = 0, occ = 0;
    double mu = 0.0, sigma2 = 0.0, value = 0.0;
};

// m completed datasets plus the pooled (per-cell mean) dataset. Observed
// cells are identical across all of them.
struct ImputationResult {
    std::string variable;
    ModelKind model = ModelKind::Rilm;
    std::uint64_t seed = 0;
    int m = 0;
    std::vector<PanelDataset> completed;
    PanelDataset pooled;
    std::vector<ImputedCell> cells;
    bool no_missing_cells = false;
};

namespace detail {

// Draws one value for every missing cell of `variable` in `ds`, in place.
// Covariate vectors are rebuilt against the current (possibly already
// partially completed) dataset, which is what chains sequential stages.
inline void impute_into(PanelDataset& ds, const std::string& variable, const DesignSpec& spec,
                        const ModelParams& params, Rng& rng, int k, std::vector<ImputedCell>* record) {
    const std::size_t var = ds.var_index(variable);
    const int p = static_cast<int>(spec.mean.size());
    const int pv = static_cast<int>(spec.variance.size());
    Eigen::VectorXd x(p), w(pv);
    for (std::size_t si = 0; si < ds.n_subjects(); ++si) {
        const auto& subj = ds.subjects()[si];
        for (std::size_t oi = 0; oi < subj.occasions.size(); ++oi) {
            if (!ds.is_missing(si, oi, var)) continue;
            for (int j = 0; j < p; ++j) {
                double v = 0.0;
                if (!eval_term(spec.mean[j], ds, si, oi, v))
                    throw MissingCovariateInMeanModel("covariate '" + spec.mean[j].label() +
                                                      "' missing at an imputation cell of '" + variable + "'");
                x(j) = v;
            }
            for (int j = 0; j < pv; ++j) {
                double v = 0.0;
                if (!eval_term(spec.variance[j], ds, si, oi, v))
                    throw MissingCovariateInMeanModel("variance covariate '" + spec.variance[j].label() +
                                                      "' missing at an imputation cell of '" + variable + "'");
                w(j) = v;
            }
            double mu = 0.0, sigma2 = 0.0;
            conditional_moments(params, x, w, static_cast<int>(si), mu, sigma2);
            const double value = rng.normal(mu, std::sqrt(sigma2));
            ds.set_cell(si, oi, var, value);
            if (record)
                record->push_back({k, static_cast<int>(si), static_cast<int>(oi), mu, sigma2, value});
        }
    }
}

inline PanelDataset pool_datasets(const PanelDataset& base, const std::string& variable,
                                  const std::vector<PanelDataset>& completed) {
    PanelDataset pooled = base;
    const std::size_t var = pooled.var_index(variable);
    for (std::size_t si = 0; si < pooled.n_subjects(); ++si) {
        for (std::size_t oi = 0; oi < pooled.subjects()[si].occasions.size(); ++oi) {
            if (!base.is_missing(si, oi, var)) continue;
            double sum = 0.0;
            for (const auto& c : completed) sum += c.value(si, oi, var);
            pooled.set_cell(si, oi, var, sum / static_cast<double>(completed.size()));
        }
    }
    return pooled;
}

} // namespace detail

// Two-step imputation of one variable: parameter sets were drawn in step 1
// (one per completed dataset), step 2 draws each missing cell from its
// conditional normal.
inline ImputationResult impute_variable(const PanelDataset& base, const std::string& variable,
                                        const DesignSpec& spec, ModelKind model,
                                        const std::vector<ModelParams>& draws, std::uint64_t seed) {
    if (draws.empty()) throw InvalidConfig("impute_variable: no parameter draws");
    if (base.missing_count(variable) == 0)
        throw NoMissingCells("variable '" + variable + "' has no missing cells");

    ImputationResult res;
    res.variable = variable;
    res.model = model;
    res.seed = seed;
    res.m = static_cast<int>(draws.size());
    for (int k = 0; k < res.m; ++k) {
        PanelDataset ds = base;
        Rng rng(derive_seed(seed, {0x73746167ULL, hash_tag(variable), static_cast<std::uint64_t>(k)}));
        detail::impute_into(ds, variable, spec, draws[k], rng, k, &res.cells);
        res.completed.push_back(std::move(ds));
    }
    res.pooled = detail::pool_datasets(base, variable, res.completed);
    return res;
}

inline PanelDataset pool(const ImputationResult& res) {
    if (res.m < 1) throw InvalidConfig("pool: empty imputation result");
    return res.pooled;
}

// One stage of the sequential covariate-then-response pipeline.
struct ImputationStage {
    std::string variable;
    ModelKind model = ModelKind::Rilm;
    DesignSpec design;
    const ModelFit* fit = nullptr;             // fitted on the base dataset
    const DesignMatrices* fit_design = nullptr; // design the fit used
};

// Imputes variables in order; draw k of a later variable conditions on draw k
// of earlier variables (chained completed datasets, not the pooled one).
// Stages whose variable has no missing cells are recorded as no-ops.
inline std::vector<ImputationResult> sequential_impute(const PanelDataset& base,
                                                       const std::vector<ImputationStage>& stages,
                                                       int m, std::uint64_t seed) {
    if (m < 1) throw InvalidConfig("sequential_impute: m must be >= 1");

    // a stage may not depend on a variable imputed later in the order
    for (std::size_t s = 0; s < stages.size(); ++s) {
        for (const auto* block : {&stages[s].design.mean, &stages[s].design.variance}) {
            for (const auto& term : *block) {
                for (std::size_t t = s + 1; t < stages.size(); ++t)
                    if (stages[t].variable == term.variable && base.missing_count(term.variable) > 0)
                        throw CyclicDependency("stage '" + stages[s].variable + "' uses '" + term.variable +
                                               "', which is imputed later in the order");
            }
        }
    }

    std::vector<PanelDataset> completed(static_cast<std::size_t>(m), base);
    std::vector<ImputationResult> out;
    for (std::size_t s = 0; s < stages.size(); ++s) {
        const auto& stage = stages[s];
        ImputationResult res;
        res.variable = stage.variable;
        res.model = stage.model;
        res.seed = seed;
        res.m = m;
        if (base.missing_count(stage.variable) == 0) {
            res.no_missing_cells = true;
            res.completed = completed;
            res.pooled = base;
            out.push_back(std::move(res));
            continue;
        }
        // streams are keyed by variable name so that skipping a vacuous stage
        // leaves later stages' draws unchanged
        Rng draw_rng(derive_seed(seed, {0x64726177ULL, hash_tag(stage.variable)}));
        const std::vector<ModelParams> draws = draw_parameter_sets(*stage.fit, *stage.fit_design, m, draw_rng);
        for (int k = 0; k < m; ++k) {
            Rng rng(derive_seed(seed, {0x73746167ULL, hash_tag(stage.variable), static_cast<std::uint64_t>(k)}));
            detail::impute_into(completed[k], stage.variable, stage.design, draws[k], rng, k, &res.cells);
        }
        res.completed = completed;
        res.pooled = detail::pool_datasets(base, stage.variable, completed);
        out.push_back(std::move(res));
    }
    return out;
}

// Presentation-layer transform: left-closed ordinal bins over ascending
// cutoffs, open outer bins mapping to the extreme labels.
inline std::vector<double> ordinalize(const std::vector<double>& values, const std::vector<double>& cutoffs,
                                      const std::vector<double>& labels) {
    if (labels.size() != cutoffs.size() + 1)
        throw InvalidConfig("ordinalize: need one more label than cutoffs");
    for (std::size_t i = 1; i < cutoffs.size(); ++i)
        if (!(cutoffs[i] > cutoffs[i - 1]))
            throw NonAscendingCutoffs("ordinalize: cutoffs must be strictly ascending");
    std::vector<double> out;
    out.reserve(values.size());
    for (double v : values) {
        std::size_t k = 0;
        while (k < cutoffs.size() && v >= cutoffs[k]) ++k;
        out.push_back(labels[k]);
    }
    return out;
}

} // namespace emix
