#include "mnlfa/penalty.hpp"

#include <cmath>
#include <map>
#include <set>
#include <string>

namespace mnlfa {

std::string_view to_string(PenaltyKind k) {
    switch (k) {
        case PenaltyKind::none:
            return "none";
        case PenaltyKind::ridge:
            return "ridge";
        case PenaltyKind::lasso:
            return "lasso";
        case PenaltyKind::alignment:
            return "alignment";
    }
    return "none";
}

PenaltyKind penalty_kind_from_name(std::string_view name) {
    for (auto k : {PenaltyKind::none, PenaltyKind::ridge, PenaltyKind::lasso, PenaltyKind::alignment}) {
        if (to_string(k) == name) {
            return k;
        }
    }
    throw SpecError("unknown penalty '" + std::string(name) + "'");
}

PenaltyGrouping penalty_grouping_from_name(std::string_view name) {
    if (name == "family_covariate") {
        return PenaltyGrouping::family_covariate;
    }
    if (name == "single") {
        return PenaltyGrouping::single;
    }
    throw SpecError("unknown penalty grouping '" + std::string(name) + "'");
}

void PenaltyConfig::validate() const {
    if (!(w0 >= 0.0 && w0 < 1.0)) {
        throw SpecError("penalty weight w0 must lie in [0, 1)");
    }
    if (!(nu_scale > 0.0)) {
        throw SpecError("penalty scale nu must be positive");
    }
    if (!(epsilon > 0.0)) {
        throw SpecError("penalty epsilon must be positive");
    }
}

void PenaltyConfig::validate(const ParameterLayout& layout) const {
    validate();
    if (kind == PenaltyKind::none) {
        return;
    }
    std::set<Index> seen;
    for (const auto& b : blocks) {
        for (Index k : b) {
            if (k < 0 || k >= layout.size() || !layout[k].is_delta) {
                throw SpecError("penalty group refers to a coordinate that is not a moderation effect");
            }
            if (!seen.insert(k).second) {
                throw SpecError("penalty groups overlap");
            }
        }
    }
    if (static_cast<Index>(seen.size()) != layout.size() - layout.n_baseline()) {
        throw SpecError("penalty groups do not cover every moderation effect");
    }
}

std::vector<std::vector<Index>> PenaltyConfig::default_blocks(const ParameterLayout& layout,
                                                             PenaltyGrouping grouping) {
    std::vector<std::vector<Index>> out;
    if (grouping == PenaltyGrouping::single) {
        auto all = layout.delta_indices();
        if (!all.empty()) {
            out.push_back(std::move(all));
        }
        return out;
    }
    std::map<std::pair<int, Index>, std::vector<Index>> groups;
    for (Index k = layout.n_baseline(); k < layout.size(); ++k) {
        const auto& e = layout[k];
        groups[{static_cast<int>(e.family), e.covariate}].push_back(k);
    }
    for (auto& [key, idx] : groups) {
        out.push_back(std::move(idx));
    }
    return out;
}

PenaltyConfig PenaltyConfig::make(PenaltyKind kind, double w0, const ParameterLayout& layout,
                                  PenaltyGrouping grouping) {
    PenaltyConfig cfg;
    cfg.kind = kind;
    cfg.w0 = w0;
    cfg.blocks = default_blocks(layout, grouping);
    return cfg;
}

namespace {

// Penalty of a single ordered pair as a function of d = theta_i - theta_j, and
// its derivative in d.
struct PairTerm {
    double value;
    double slope;
};

PairTerm pair_term(double d, const PenaltyConfig& cfg) {
    const double nu = cfg.nu_scale;
    switch (cfg.kind) {
        case PenaltyKind::ridge:
            return {d * d / nu, 2.0 * d / nu};
        case PenaltyKind::lasso: {
            const double s = std::sqrt(d * d + cfg.epsilon);
            return {s / nu, d / (s * nu)};
        }
        case PenaltyKind::alignment: {
            const double q = d * d + cfg.epsilon;
            const double root = std::sqrt(std::sqrt(q));
            return {root / nu, 0.5 * d * root / (q * nu)};
        }
        case PenaltyKind::none:
            break;
    }
    return {0.0, 0.0};
}

}  // namespace

double penalty_value(const Eigen::Ref<const Eigen::VectorXd>& packed, const PenaltyConfig& cfg) {
    if (cfg.kind == PenaltyKind::none) {
        return 0.0;
    }
    double total = 0.0;
    for (const auto& b : cfg.blocks) {
        for (std::size_t a = 0; a < b.size(); ++a) {
            for (std::size_t c = a + 1; c < b.size(); ++c) {
                // (i, j) and (j, i) contribute identically
                total += 2.0 * pair_term(packed(b[a]) - packed(b[c]), cfg).value;
            }
        }
    }
    return total;
}

Eigen::VectorXd penalty_gradient(const Eigen::Ref<const Eigen::VectorXd>& packed, const PenaltyConfig& cfg) {
    Eigen::VectorXd g = Eigen::VectorXd::Zero(packed.size());
    if (cfg.kind == PenaltyKind::none) {
        return g;
    }
    for (const auto& b : cfg.blocks) {
        for (std::size_t a = 0; a < b.size(); ++a) {
            for (std::size_t c = a + 1; c < b.size(); ++c) {
                const double slope = 2.0 * pair_term(packed(b[a]) - packed(b[c]), cfg).slope;
                g(b[a]) += slope;
                g(b[c]) -= slope;
            }
        }
    }
    return g;
}

double composite_objective(double loglik, double pen, double w0) { return (1.0 - w0) * loglik - w0 * pen; }

}  // namespace mnlfa
