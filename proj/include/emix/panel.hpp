#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "emix/errors.hpp"

namespace emix {

// One measurement occasion. Values are aligned to PanelDataset::variable_names;
// a cell is either an observed finite real or missing, never NaN-as-data.
struct OccasionRow {
    int day = 0;
    int beep = 0;
    std::vector<double> values;
    std::vector<std::uint8_t> missing; // 1 = missing

    bool is_missing(std::size_t var) const { return missing[var] != 0; }
};

struct SubjectBlock {
    std::string subject_id;
    std::vector<OccasionRow> occasions;
};

// Subject x occasion rectangular panel with independent missing masks per
// variable. Occasions are ordered by (day, beep) within subject; logically
// immutable once built, so it can be shared read-only across chains and
// replications. set_cell exists for building completed copies during
// imputation.
class PanelDataset {
  public:
    PanelDataset() = default;
    PanelDataset(std::vector<std::string> variable_names, std::vector<SubjectBlock> subjects)
        : variable_names_(std::move(variable_names)), subjects_(std::move(subjects)) {
        validate();
    }

    const std::vector<std::string>& variable_names() const { return variable_names_; }
    const std::vector<SubjectBlock>& subjects() const { return subjects_; }
    std::size_t n_subjects() const { return subjects_.size(); }

    std::size_t total_occasions() const {
        std::size_t n = 0;
        for (const auto& s : subjects_) n += s.occasions.size();
        return n;
    }

    std::size_t var_index(const std::string& name) const {
        const auto it = std::find(variable_names_.begin(), variable_names_.end(), name);
        if (it == variable_names_.end())
            throw UnknownVariable("unknown variable: " + name);
        return static_cast<std::size_t>(it - variable_names_.begin());
    }

    bool has_variable(const std::string& name) const {
        return std::find(variable_names_.begin(), variable_names_.end(), name) != variable_names_.end();
    }

    double value(std::size_t subject, std::size_t occ, std::size_t var) const {
        return subjects_[subject].occasions[occ].values[var];
    }
    bool is_missing(std::size_t subject, std::size_t occ, std::size_t var) const {
        return subjects_[subject].occasions[occ].missing[var] != 0;
    }

    void set_cell(std::size_t subject, std::size_t occ, std::size_t var, double v) {
        if (!std::isfinite(v))
            throw DomainError("set_cell: non-finite value");
        auto& row = subjects_[subject].occasions[occ];
        row.values[var] = v;
        row.missing[var] = 0;
    }

    std::size_t missing_count(const std::string& variable) const {
        const std::size_t v = var_index(variable);
        std::size_t n = 0;
        for (const auto& s : subjects_)
            for (const auto& o : s.occasions) n += o.missing[v];
        return n;
    }

    double missing_rate(const std::string& variable) const {
        const std::size_t total = total_occasions();
        if (total == 0) return 0.0;
        return static_cast<double>(missing_count(variable)) / static_cast<double>(total);
    }

  private:
    void validate() const {
        std::set<std::string> ids;
        for (const auto& s : subjects_) {
            if (s.occasions.empty())
                throw InvalidConfig("subject '" + s.subject_id + "' has no occasions");
            if (!ids.insert(s.subject_id).second)
                throw InvalidConfig("duplicate subject id: " + s.subject_id);
            std::pair<int, int> prev{std::numeric_limits<int>::min(), std::numeric_limits<int>::min()};
            for (const auto& o : s.occasions) {
                if (o.values.size() != variable_names_.size() || o.missing.size() != variable_names_.size())
                    throw DimensionMismatch("occasion row not aligned to variable set");
                const std::pair<int, int> key{o.day, o.beep};
                if (key == prev)
                    throw DuplicateOccasion("subject '" + s.subject_id + "' has duplicate occasion (day " +
                                            std::to_string(o.day) + ", beep " + std::to_string(o.beep) + ")");
                if (key < prev)
                    throw InvalidConfig("occasions of subject '" + s.subject_id + "' not ordered by (day, beep)");
                prev = key;
                for (std::size_t v = 0; v < o.values.size(); ++v)
                    if (!o.missing[v] && !std::isfinite(o.values[v]))
                        throw DomainError("non-finite observed value for subject '" + s.subject_id + "'");
            }
        }
    }

    std::vector<std::string> variable_names_;
    std::vector<SubjectBlock> subjects_;
};

} // namespace emix
