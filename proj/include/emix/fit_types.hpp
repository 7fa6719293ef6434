#pragma once

#include <string>
#include <vector>

#include "emix/errors.hpp"

namespace emix {

enum class ModelKind { Rilm, Mels, Splsme };

inline const char* model_name(ModelKind k) {
    switch (k) {
    case ModelKind::Rilm: return "rilm";
    case ModelKind::Mels: return "mels";
    case ModelKind::Splsme: return "splsme";
    }
    return "?";
}

inline ModelKind parse_model(const std::string& s) {
    if (s == "rilm") return ModelKind::Rilm;
    if (s == "mels") return ModelKind::Mels;
    if (s == "splsme") return ModelKind::Splsme;
    throw InvalidConfig("unknown model '" + s + "' (expected rilm|mels|splsme)");
}

struct ParamEstimate {
    std::string name;
    double estimate = 0.0;
    double lower = 0.0; // 95% interval
    double upper = 0.0;
};

// Point estimates with 95% intervals: credible (2.5/97.5 percentiles) for
// MCMC fits, Wald for ML fits.
struct FitSummary {
    std::vector<ParamEstimate> params;
    double loglik_at_estimate = 0.0;

    const ParamEstimate& find(const std::string& name) const {
        for (const auto& p : params)
            if (p.name == name) return p;
        throw UnknownVariable("no parameter named '" + name + "' in fit summary");
    }
    bool has(const std::string& name) const {
        for (const auto& p : params)
            if (p.name == name) return true;
        return false;
    }
};

} // namespace emix
