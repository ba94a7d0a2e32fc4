#pragma once

#include "mnlfa/estimate.hpp"
#include "mnlfa/model.hpp"
#include "mnlfa/penalty.hpp"
#include "mnlfa/simulate.hpp"

#include <optional>
#include <string>
#include <vector>

namespace mnlfa {

enum class MissingPolicy { fiml, listwise };

/// Everything a JSON model configuration describes.
struct ModelConfig {
    ModelSpec spec;
    PenaltyConfig penalty;  // blocks filled from the model layout
    PenaltyGrouping grouping = PenaltyGrouping::family_covariate;
    FitConfig fit;
    MissingPolicy missing = MissingPolicy::fiml;
    bool center_covariates = false;
    std::vector<std::string> warnings;

    /// Present when the document has a "truth" section.
    std::optional<ParameterSet> truth;
    /// Covariate distributions for simulation ("design" section); defaults to
    /// standard normal for every covariate.
    std::vector<CovariateSpec> design;

    /// Rebuilds penalty groups after spec or grouping changes.
    void refresh_penalty_blocks();
};

/// Parses a configuration document. Throws SpecError with a message naming the
/// offending field.
[[nodiscard]] ModelConfig parse_config(const std::string& json_text);
[[nodiscard]] ModelConfig load_config(const std::string& path);

}  // namespace mnlfa
