#pragma once

#include "mnlfa/model.hpp"

#include <Eigen/Dense>

#include <string_view>
#include <vector>

namespace mnlfa {

enum class PenaltyKind { none, ridge, lasso, alignment };

/// How moderation effects are grouped for pairwise penalties.
enum class PenaltyGrouping {
    family_covariate,  // one group per (parameter family, covariate)
    single,            // every moderation effect in one group
};

[[nodiscard]] std::string_view to_string(PenaltyKind k);
[[nodiscard]] PenaltyKind penalty_kind_from_name(std::string_view name);
[[nodiscard]] PenaltyGrouping penalty_grouping_from_name(std::string_view name);

/// Pairwise-difference penalty over groups of packed coordinates.
struct PenaltyConfig {
    PenaltyKind kind = PenaltyKind::none;
    double w0 = 0.0;
    double nu_scale = 1.0;
    double epsilon = 1e-8;
    /// Packed-vector indices, one vector per group.
    std::vector<std::vector<Index>> blocks;

    /// Range checks; with a layout, also that blocks partition the moderation effects.
    void validate() const;
    void validate(const ParameterLayout& layout) const;

    [[nodiscard]] static std::vector<std::vector<Index>> default_blocks(const ParameterLayout& layout,
                                                                      PenaltyGrouping grouping);
    [[nodiscard]] static PenaltyConfig make(PenaltyKind kind, double w0, const ParameterLayout& layout,
                                            PenaltyGrouping grouping = PenaltyGrouping::family_covariate);
};

/// Sum over groups of the penalty over all ordered pairs i != j within the group.
[[nodiscard]] double penalty_value(const Eigen::Ref<const Eigen::VectorXd>& packed, const PenaltyConfig& cfg);

/// Exact gradient of penalty_value with respect to the packed vector.
[[nodiscard]] Eigen::VectorXd penalty_gradient(const Eigen::Ref<const Eigen::VectorXd>& packed,
                                               const PenaltyConfig& cfg);

/// (1 - w0) * loglik - w0 * pen; this is maximized.
[[nodiscard]] double composite_objective(double loglik, double pen, double w0);

}  // namespace mnlfa
