#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

#include "emix/panel.hpp"

namespace emix {

// One design-matrix column: a raw variable, a 0/1 dummy for a level (or an
// inclusive integer level range such as beep 9-10), or an occasion label cast
// to a continuous value. "day" and "beep" resolve to the occasion labels.
struct Term {
    enum class Kind { Raw, Dummy, Continuous };
    Kind kind = Kind::Raw;
    std::string variable;
    double level_lo = 0.0;
    double level_hi = 0.0;

    static Term raw(std::string var) { return {Kind::Raw, std::move(var), 0, 0}; }
    static Term continuous(std::string var) { return {Kind::Continuous, std::move(var), 0, 0}; }
    static Term dummy(std::string var, double level) { return {Kind::Dummy, std::move(var), level, level}; }
    static Term dummy_range(std::string var, double lo, double hi) { return {Kind::Dummy, std::move(var), lo, hi}; }

    std::string label() const {
        switch (kind) {
        case Kind::Raw: return variable;
        case Kind::Continuous: return variable;
        case Kind::Dummy: {
            auto fmt = [](double v) {
                char buf[32];
                std::snprintf(buf, sizeof(buf), "%g", v);
                return std::string(buf);
            };
            if (level_lo == level_hi) return variable + "=" + fmt(level_lo);
            return variable + "=" + fmt(level_lo) + "-" + fmt(level_hi);
        }
        }
        return variable;
    }
};

// Parses the compact term syntax used in config files:
//   "x2"                raw variable
//   "continuous(day)"   occasion label as a real covariate
//   "dummy(edu,2)"      indicator for level 2
//   "dummy(beep,9-10)"  indicator for an inclusive level range
inline Term parse_term(const std::string& text) {
    auto fail = [&]() -> Term { throw InvalidConfig("cannot parse design term '" + text + "'"); };
    const auto open = text.find('(');
    if (open == std::string::npos) {
        if (text.empty()) return fail();
        return Term::raw(text);
    }
    if (text.back() != ')') return fail();
    const std::string fn = text.substr(0, open);
    const std::string args = text.substr(open + 1, text.size() - open - 2);
    if (fn == "continuous") {
        if (args.empty()) return fail();
        return Term::continuous(args);
    }
    if (fn == "dummy") {
        const auto comma = args.find(',');
        if (comma == std::string::npos) return fail();
        const std::string var = args.substr(0, comma);
        const std::string lvl = args.substr(comma + 1);
        const auto dash = lvl.find('-', 1); // allow negative single levels
        try {
            if (dash == std::string::npos) return Term::dummy(var, std::stod(lvl));
            return Term::dummy_range(var, std::stod(lvl.substr(0, dash)), std::stod(lvl.substr(dash + 1)));
        } catch (const std::exception&) {
            return fail();
        }
    }
    return fail();
}

struct DesignSpec {
    std::vector<Term> mean;
    std::vector<Term> variance;
    std::vector<Term> missing;
};

// Row-aligned per-subject design matrices. X/W/T carry no intercept column;
// the intercepts are explicit model parameters. `complete` marks rows usable
// for the normal part of the likelihood: response observed and every
// mean/variance covariate observed. The Bernoulli missingness part uses all
// rows through `y_missing`.
struct SubjectDesign {
    std::string subject_id;
    Eigen::MatrixXd X; // mean covariates
    Eigen::MatrixXd W; // variance covariates
    Eigen::MatrixXd T; // missingness covariates
    Eigen::VectorXd y;
    std::vector<std::uint8_t> y_missing;
    std::vector<std::uint8_t> complete;
    std::vector<int> occ_index; // row -> occasion index in the PanelDataset
};

struct DesignMatrices {
    std::string response;
    std::vector<std::string> x_names, w_names, t_names;
    std::vector<SubjectDesign> subjects;
    std::size_t total_rows = 0;
    std::size_t n_observed = 0; // rows with observed response
    std::size_t n_complete = 0; // rows usable for the normal likelihood part

    int p_mean() const { return static_cast<int>(x_names.size()); }
    int p_var() const { return static_cast<int>(w_names.size()); }
    int p_miss() const { return static_cast<int>(t_names.size()); }
};

namespace detail {

struct TermColumn {
    Term term;
    enum class Source { Variable, Day, Beep } source;
    std::size_t var = 0;
};

inline TermColumn resolve_term(const Term& t, const PanelDataset& data) {
    TermColumn col{t, TermColumn::Source::Variable, 0};
    if (t.variable == "day") {
        col.source = TermColumn::Source::Day;
    } else if (t.variable == "beep") {
        col.source = TermColumn::Source::Beep;
    } else {
        col.var = data.var_index(t.variable); // throws UnknownVariable
    }
    return col;
}

// value of the term's source at a cell; missing only possible for variables
inline bool cell_value(const TermColumn& c, const PanelDataset& data, std::size_t si, std::size_t oi, double& out) {
    switch (c.source) {
    case TermColumn::Source::Day: out = data.subjects()[si].occasions[oi].day; return true;
    case TermColumn::Source::Beep: out = data.subjects()[si].occasions[oi].beep; return true;
    case TermColumn::Source::Variable:
        if (data.is_missing(si, oi, c.var)) return false;
        out = data.value(si, oi, c.var);
        return true;
    }
    return false;
}

inline double apply_term(const Term& t, double raw) {
    if (t.kind != Term::Kind::Dummy) return raw;
    return (raw >= t.level_lo - 1e-9 && raw <= t.level_hi + 1e-9) ? 1.0 : 0.0;
}

} // namespace detail

// Evaluates one term at a cell of a dataset (used by the imputation step,
// which recomputes covariate vectors against completed datasets).
// Returns false if the underlying variable is missing at that cell.
inline bool eval_term(const Term& t, const PanelDataset& data, std::size_t si, std::size_t oi, double& out) {
    const detail::TermColumn col = detail::resolve_term(t, data);
    double raw = 0.0;
    if (!detail::cell_value(col, data, si, oi, raw)) return false;
    out = detail::apply_term(t, raw);
    return true;
}

inline DesignMatrices build_design(const PanelDataset& data, const DesignSpec& spec, const std::string& response) {
    const std::size_t rv = data.var_index(response);

    for (const auto* block : {&spec.mean, &spec.variance})
        for (const auto& t : *block)
            if (t.variable == response)
                throw InvalidConfig("design term '" + t.label() + "' references the response variable");
    for (const auto& t : spec.missing)
        if (t.variable == response)
            throw InvalidConfig("missingness term '" + t.label() + "' references the response variable");

    std::vector<detail::TermColumn> mean_cols, var_cols, miss_cols;
    for (const auto& t : spec.mean) mean_cols.push_back(detail::resolve_term(t, data));
    for (const auto& t : spec.variance) var_cols.push_back(detail::resolve_term(t, data));
    for (const auto& t : spec.missing) miss_cols.push_back(detail::resolve_term(t, data));

    // missingness covariates must be design-known: no missing cells allowed
    for (const auto& c : miss_cols) {
        if (c.source != detail::TermColumn::Source::Variable) continue;
        for (std::size_t si = 0; si < data.n_subjects(); ++si)
            for (std::size_t oi = 0; oi < data.subjects()[si].occasions.size(); ++oi)
                if (data.is_missing(si, oi, c.var))
                    throw InvalidConfig("missingness covariate '" + c.term.label() + "' has missing cells");
    }

    DesignMatrices out;
    out.response = response;
    for (const auto& t : spec.mean) out.x_names.push_back(t.label());
    for (const auto& t : spec.variance) out.w_names.push_back(t.label());
    for (const auto& t : spec.missing) out.t_names.push_back(t.label());

    std::vector<std::size_t> dummy_hits(mean_cols.size() + var_cols.size() + miss_cols.size(), 0);

    for (std::size_t si = 0; si < data.n_subjects(); ++si) {
        const auto& subj = data.subjects()[si];
        const int ni = static_cast<int>(subj.occasions.size());
        SubjectDesign sd;
        sd.subject_id = subj.subject_id;
        sd.X.resize(ni, static_cast<int>(mean_cols.size()));
        sd.W.resize(ni, static_cast<int>(var_cols.size()));
        sd.T.resize(ni, static_cast<int>(miss_cols.size()));
        sd.y.resize(ni);
        sd.y_missing.resize(ni, 0);
        sd.complete.resize(ni, 0);
        sd.occ_index.resize(ni);

        for (int oi = 0; oi < ni; ++oi) {
            sd.occ_index[oi] = oi;
            const bool y_missing = data.is_missing(si, oi, rv);
            sd.y_missing[oi] = y_missing ? 1 : 0;
            sd.y(oi) = y_missing ? 0.0 : data.value(si, oi, rv);

            bool covs_ok = true;
            auto fill = [&](const std::vector<detail::TermColumn>& cols, Eigen::MatrixXd& M, std::size_t hit0) {
                for (std::size_t k = 0; k < cols.size(); ++k) {
                    double raw = 0.0;
                    if (!detail::cell_value(cols[k], data, si, oi, raw)) {
                        covs_ok = false;
                        M(oi, static_cast<int>(k)) = 0.0;
                        continue;
                    }
                    const double v = detail::apply_term(cols[k].term, raw);
                    M(oi, static_cast<int>(k)) = v;
                    if (cols[k].term.kind == Term::Kind::Dummy && v == 1.0) ++dummy_hits[hit0 + k];
                }
            };
            fill(mean_cols, sd.X, 0);
            fill(var_cols, sd.W, mean_cols.size());
            // missingness covariates are design-known (validated above)
            for (std::size_t k = 0; k < miss_cols.size(); ++k) {
                double raw = 0.0;
                detail::cell_value(miss_cols[k], data, si, oi, raw);
                const double v = detail::apply_term(miss_cols[k].term, raw);
                sd.T(oi, static_cast<int>(k)) = v;
                if (miss_cols[k].term.kind == Term::Kind::Dummy && v == 1.0)
                    ++dummy_hits[mean_cols.size() + var_cols.size() + k];
            }

            sd.complete[oi] = (!y_missing && covs_ok) ? 1 : 0;
            out.total_rows += 1;
            out.n_observed += y_missing ? 0 : 1;
            out.n_complete += sd.complete[oi];
        }
        out.subjects.push_back(std::move(sd));
    }

    // reject dummy levels that never occur rather than emitting a silent all-zero column
    std::size_t k = 0;
    for (const auto* block : {&spec.mean, &spec.variance, &spec.missing}) {
        for (const auto& t : *block) {
            if (t.kind == Term::Kind::Dummy && dummy_hits[k] == 0)
                throw LevelNotObserved("dummy level '" + t.label() + "' not observed in data");
            ++k;
        }
    }
    return out;
}

} // namespace emix
