#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace mnlfa {

using Index = Eigen::Index;
using BoolMatrix = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Parameter families, in packing order. Each family has a baseline vector and a
/// (family size x covariates) block of moderation effects.
enum class Family : int { nu = 0, lambda, theta, alpha, phi, gamma };
inline constexpr std::size_t kNumFamilies = 6;
inline constexpr std::array<Family, kNumFamilies> kFamilies{
    Family::nu, Family::lambda, Family::theta, Family::alpha, Family::phi, Family::gamma};

[[nodiscard]] std::string_view family_name(Family f);
[[nodiscard]] Family family_from_name(std::string_view name);

constexpr std::size_t family_slot(Family f) { return static_cast<std::size_t>(f); }

enum class CorrParam { partial_correlation, hypersphere };
enum class Identification { standardized_baseline, anchor_loading };

[[nodiscard]] std::string_view to_string(CorrParam p);
[[nodiscard]] std::string_view to_string(Identification id);

class SpecError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Number of strictly-lower-triangular entries of an M x M matrix.
[[nodiscard]] constexpr Index n_corr_params(Index n_factors) {
    return n_factors * (n_factors - 1) / 2;
}

/// Static description of a moderated factor model: dimensions, which loadings
/// are estimated, which (parameter, covariate) pairs carry moderation effects,
/// and how the model is identified.
struct ModelSpec {
    Index n_items = 0;
    Index n_factors = 0;
    Index n_covariates = 0;

    /// I x M; false entries are held at loading_value.
    BoolMatrix loading_free;
    Eigen::MatrixXd loading_value;

    /// One mask per family, shaped (family size) x (covariates). Loading rows
    /// are indexed item * M + factor.
    std::array<BoolMatrix, kNumFamilies> moderated;

    CorrParam corr_param = CorrParam::partial_correlation;
    Identification identification = Identification::standardized_baseline;

    std::vector<std::string> item_names;
    std::vector<std::string> factor_names;
    std::vector<std::string> covariate_names;

    /// All loadings free, no moderation, generated names.
    [[nodiscard]] static ModelSpec make(Index n_items, Index n_factors, Index n_covariates);

    [[nodiscard]] Index n_corr() const { return n_corr_params(n_factors); }
    [[nodiscard]] Index family_size(Family f) const;

    [[nodiscard]] BoolMatrix& mask(Family f) { return moderated[family_slot(f)]; }
    [[nodiscard]] const BoolMatrix& mask(Family f) const { return moderated[family_slot(f)]; }

    /// Whether the baseline entry `row` of family `f` is estimated.
    [[nodiscard]] bool baseline_free(Family f, Index row) const;
    /// Value a fixed baseline entry is held at.
    [[nodiscard]] double baseline_fixed_value(Family f, Index row) const;

    /// Label of the row-th parameter of a family, e.g. "y3", "y3:f1", "f2:f1".
    [[nodiscard]] std::string target_label(Family f, Index row) const;

    /// Throws SpecError on structural problems; returns advisory warnings.
    std::vector<std::string> validate() const;

    /// Moderate every estimable parameter of `f` by covariate `cov`. Loadings
    /// fixed in the pattern are skipped.
    void moderate_all(Family f, Index cov);
};

/// Baseline parameters and moderation effects. Residual and factor variances are
/// stored on the log scale; loadings are stored flattened row-major (item * M + factor).
struct ParameterSet {
    std::array<Eigen::VectorXd, kNumFamilies> baseline;
    std::array<Eigen::MatrixXd, kNumFamilies> delta;

    /// Zeros everywhere except fixed baseline entries, which take their fixed value.
    [[nodiscard]] static ParameterSet zeros(const ModelSpec& spec);

    [[nodiscard]] Index n_items() const { return baseline[0].size(); }
    [[nodiscard]] Index n_factors() const { return baseline[family_slot(Family::alpha)].size(); }
    [[nodiscard]] Index n_covariates() const { return delta[0].cols(); }

    Eigen::VectorXd& nu0() { return baseline[family_slot(Family::nu)]; }
    Eigen::VectorXd& log_theta0() { return baseline[family_slot(Family::theta)]; }
    Eigen::VectorXd& alpha0() { return baseline[family_slot(Family::alpha)]; }
    Eigen::VectorXd& log_phi0() { return baseline[family_slot(Family::phi)]; }
    Eigen::VectorXd& gamma0() { return baseline[family_slot(Family::gamma)]; }
    [[nodiscard]] const Eigen::VectorXd& nu0() const { return baseline[family_slot(Family::nu)]; }
    [[nodiscard]] const Eigen::VectorXd& log_theta0() const { return baseline[family_slot(Family::theta)]; }
    [[nodiscard]] const Eigen::VectorXd& alpha0() const { return baseline[family_slot(Family::alpha)]; }
    [[nodiscard]] const Eigen::VectorXd& log_phi0() const { return baseline[family_slot(Family::phi)]; }
    [[nodiscard]] const Eigen::VectorXd& gamma0() const { return baseline[family_slot(Family::gamma)]; }
    [[nodiscard]] Eigen::Map<RowMatrix> lambda0();
    [[nodiscard]] Eigen::Map<const RowMatrix> lambda0() const;

    Eigen::MatrixXd& delta_of(Family f) { return delta[family_slot(f)]; }
    [[nodiscard]] const Eigen::MatrixXd& delta_of(Family f) const { return delta[family_slot(f)]; }
    Eigen::VectorXd& baseline_of(Family f) { return baseline[family_slot(f)]; }
    [[nodiscard]] const Eigen::VectorXd& baseline_of(Family f) const { return baseline[family_slot(f)]; }
};

/// Person covariates, N x P.
struct DesignMatrix {
    Eigen::MatrixXd rows;
    std::vector<std::string> column_names;

    [[nodiscard]] Index n_persons() const { return rows.rows(); }
    [[nodiscard]] Index n_covariates() const { return rows.cols(); }
    void validate() const;
    /// Subtract column means; returns the means that were removed.
    Eigen::VectorXd center();
};

/// Parameters resolved for one person's covariate vector.
struct PersonParams {
    Eigen::VectorXd nu;
    Eigen::MatrixXd lambda;
    Eigen::VectorXd theta;
    Eigen::VectorXd alpha;
    Eigen::VectorXd phi_diag;
    Eigen::VectorXd gamma;
};

struct ParamRef {
    Family family;
    bool is_delta;
    Index row;
    Index covariate;  // -1 for baselines
};

/// Fixed ordering of the free parameters: free baselines by family, then free
/// moderation effects by family, row-major within each block.
class ParameterLayout {
public:
    explicit ParameterLayout(const ModelSpec& spec);

    [[nodiscard]] Index size() const { return static_cast<Index>(entries_.size()); }
    [[nodiscard]] const std::vector<ParamRef>& entries() const { return entries_; }
    [[nodiscard]] const ParamRef& operator[](Index k) const { return entries_[static_cast<std::size_t>(k)]; }
    [[nodiscard]] const std::string& name(Index k) const { return names_[static_cast<std::size_t>(k)]; }
    [[nodiscard]] const std::vector<std::string>& names() const { return names_; }
    [[nodiscard]] Index find(std::string_view name) const;  // -1 if absent
    [[nodiscard]] std::vector<Index> delta_indices() const;
    [[nodiscard]] Index n_baseline() const { return n_baseline_; }

    /// Group label for a packed coordinate: "baseline" or "delta_<family>:<covariate>".
    [[nodiscard]] std::string block_label(Index k) const;

private:
    std::vector<ParamRef> entries_;
    std::vector<std::string> names_;
    std::vector<std::string> covariate_names_;
    Index n_baseline_ = 0;
};

[[nodiscard]] Eigen::VectorXd pack(const ParameterSet& params, const ModelSpec& spec);
[[nodiscard]] Eigen::VectorXd pack(const ParameterSet& params, const ParameterLayout& layout);
[[nodiscard]] ParameterSet unpack(const Eigen::VectorXd& vec, const ModelSpec& spec);
[[nodiscard]] ParameterSet unpack(const Eigen::VectorXd& vec, const ModelSpec& spec,
                                  const ParameterLayout& layout);

/// Shape and mask consistency of `params` against `spec`; throws SpecError.
void check_consistent(const ParameterSet& params, const ModelSpec& spec);

/// Baselines plus moderation effects at covariate vector x. Variances are
/// exponentiated, everything else is affine in x.
[[nodiscard]] PersonParams resolve_person(const ParameterSet& params, const Eigen::Ref<const Eigen::VectorXd>& x);

}  // namespace mnlfa
