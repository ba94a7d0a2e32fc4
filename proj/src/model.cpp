#include "mnlfa/model.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

namespace mnlfa {

namespace {

constexpr std::array<std::string_view, kNumFamilies> kFamilyNames{"nu", "lambda", "theta",
                                                                  "alpha", "phi", "gamma"};
constexpr std::array<std::string_view, kNumFamilies> kBaselinePrefix{
    "nu0", "lambda0", "log_theta0", "alpha0", "log_phi0", "gamma0"};

std::vector<std::string> default_names(std::string_view stem, Index n) {
    std::vector<std::string> out;
    out.reserve(static_cast<std::size_t>(n));
    for (Index k = 0; k < n; ++k) {
        out.push_back(std::string(stem) + std::to_string(k + 1));
    }
    return out;
}

void require_unique(const std::vector<std::string>& names, std::string_view what) {
    std::set<std::string> seen;
    for (const auto& n : names) {
        if (n.empty()) {
            throw SpecError(std::string(what) + " names must be non-empty");
        }
        if (!seen.insert(n).second) {
            throw SpecError("duplicate " + std::string(what) + " name '" + n + "'");
        }
    }
}

}  // namespace

std::string_view family_name(Family f) { return kFamilyNames[family_slot(f)]; }

Family family_from_name(std::string_view name) {
    for (auto f : kFamilies) {
        if (family_name(f) == name) {
            return f;
        }
    }
    throw SpecError("unknown parameter family '" + std::string(name) + "'");
}

std::string_view to_string(CorrParam p) {
    return p == CorrParam::partial_correlation ? "partial_correlation" : "hypersphere";
}

std::string_view to_string(Identification id) {
    return id == Identification::standardized_baseline ? "standardized_baseline" : "anchor_loading";
}

ModelSpec ModelSpec::make(Index n_items, Index n_factors, Index n_covariates) {
    ModelSpec spec;
    spec.n_items = n_items;
    spec.n_factors = n_factors;
    spec.n_covariates = n_covariates;
    spec.loading_free = BoolMatrix::Constant(n_items, n_factors, true);
    spec.loading_value = Eigen::MatrixXd::Zero(n_items, n_factors);
    for (auto f : kFamilies) {
        spec.mask(f) = BoolMatrix::Constant(spec.family_size(f), n_covariates, false);
    }
    spec.item_names = default_names("y", n_items);
    spec.factor_names = default_names("f", n_factors);
    spec.covariate_names = default_names("x", n_covariates);
    return spec;
}

Index ModelSpec::family_size(Family f) const {
    switch (f) {
        case Family::nu:
        case Family::theta:
            return n_items;
        case Family::lambda:
            return n_items * n_factors;
        case Family::alpha:
        case Family::phi:
            return n_factors;
        case Family::gamma:
            return n_corr();
    }
    return 0;
}

bool ModelSpec::baseline_free(Family f, Index row) const {
    switch (f) {
        case Family::lambda:
            return loading_free(row / n_factors, row % n_factors);
        case Family::alpha:
            return false;
        case Family::phi:
            return identification == Identification::anchor_loading;
        default:
            return true;
    }
}

double ModelSpec::baseline_fixed_value(Family f, Index row) const {
    if (f == Family::lambda) {
        return loading_value(row / n_factors, row % n_factors);
    }
    return 0.0;
}

std::string ModelSpec::target_label(Family f, Index row) const {
    const auto r = static_cast<std::size_t>(row);
    switch (f) {
        case Family::nu:
        case Family::theta:
            return item_names[r];
        case Family::lambda:
            return item_names[static_cast<std::size_t>(row / n_factors)] + ":" +
                   factor_names[static_cast<std::size_t>(row % n_factors)];
        case Family::alpha:
        case Family::phi:
            return factor_names[r];
        case Family::gamma: {
            // lower triangle, row-major: (1,0), (2,0), (2,1), (3,0), ...
            Index k = row;
            Index i = 1;
            while (k >= i) {
                k -= i;
                ++i;
            }
            return factor_names[static_cast<std::size_t>(i)] + ":" + factor_names[static_cast<std::size_t>(k)];
        }
    }
    return {};
}

void ModelSpec::moderate_all(Family f, Index cov) {
    for (Index r = 0; r < family_size(f); ++r) {
        if (f == Family::lambda && !loading_free(r / n_factors, r % n_factors)) {
            continue;
        }
        mask(f)(r, cov) = true;
    }
}

std::vector<std::string> ModelSpec::validate() const {
    if (n_items < 1 || n_factors < 1 || n_covariates < 0) {
        throw SpecError("model needs at least one item and one factor");
    }
    if (loading_free.rows() != n_items || loading_free.cols() != n_factors ||
        loading_value.rows() != n_items || loading_value.cols() != n_factors) {
        throw SpecError("loading pattern must be items x factors");
    }
    if (static_cast<Index>(item_names.size()) != n_items ||
        static_cast<Index>(factor_names.size()) != n_factors ||
        static_cast<Index>(covariate_names.size()) != n_covariates) {
        throw SpecError("name lists do not match model dimensions");
    }
    require_unique(item_names, "item");
    require_unique(factor_names, "factor");
    require_unique(covariate_names, "covariate");

    for (auto f : kFamilies) {
        if (mask(f).rows() != family_size(f) || mask(f).cols() != n_covariates) {
            std::ostringstream os;
            os << "moderation mask for " << family_name(f) << " must be " << family_size(f) << " x "
               << n_covariates;
            throw SpecError(os.str());
        }
    }

    for (Index m = 0; m < n_factors; ++m) {
        Index indicators = 0;
        Index anchors = 0;
        for (Index i = 0; i < n_items; ++i) {
            if (loading_free(i, m) || loading_value(i, m) != 0.0) {
                ++indicators;
            }
            if (!loading_free(i, m) && loading_value(i, m) == 1.0) {
                ++anchors;
            }
        }
        if (indicators == 0) {
            throw SpecError("factor '" + factor_names[static_cast<std::size_t>(m)] + "' has no indicators");
        }
        if (identification == Identification::anchor_loading && anchors != 1) {
            throw SpecError("anchor_loading requires exactly one loading fixed to 1 on factor '" +
                            factor_names[static_cast<std::size_t>(m)] + "'");
        }
    }

    const auto& lmask = mask(Family::lambda);
    for (Index i = 0; i < n_items; ++i) {
        for (Index m = 0; m < n_factors; ++m) {
            if (!loading_free(i, m) && loading_value(i, m) != 0.0 && lmask.row(i * n_factors + m).any()) {
                throw SpecError("fixed loading " + target_label(Family::lambda, i * n_factors + m) +
                                " cannot be moderated");
            }
        }
    }

    std::vector<std::string> warnings;
    const auto& numask = mask(Family::nu);
    for (Index m = 0; m < n_factors; ++m) {
        const bool impact = mask(Family::alpha).row(m).any() || mask(Family::phi).row(m).any();
        if (!impact) {
            continue;
        }
        bool has_anchor = false;
        for (Index i = 0; i < n_items && !has_anchor; ++i) {
            const bool loads = loading_free(i, m) || loading_value(i, m) != 0.0;
            has_anchor = loads && !numask.row(i).any() && !lmask.row(i * n_factors + m).any();
        }
        if (!has_anchor) {
            warnings.push_back("factor '" + factor_names[static_cast<std::size_t>(m)] +
                               "' has moderated mean/variance but no item with unmoderated intercept "
                               "and loading; identification relies on the penalty");
        }
    }
    return warnings;
}

ParameterSet ParameterSet::zeros(const ModelSpec& spec) {
    ParameterSet p;
    for (auto f : kFamilies) {
        const Index n = spec.family_size(f);
        auto& b = p.baseline_of(f);
        b = Eigen::VectorXd::Zero(n);
        for (Index r = 0; r < n; ++r) {
            if (!spec.baseline_free(f, r)) {
                b(r) = spec.baseline_fixed_value(f, r);
            }
        }
        p.delta_of(f) = Eigen::MatrixXd::Zero(n, spec.n_covariates);
    }
    return p;
}

Eigen::Map<RowMatrix> ParameterSet::lambda0() {
    auto& b = baseline[family_slot(Family::lambda)];
    return {b.data(), n_items(), n_factors()};
}

Eigen::Map<const RowMatrix> ParameterSet::lambda0() const {
    const auto& b = baseline[family_slot(Family::lambda)];
    return {b.data(), n_items(), n_factors()};
}

void DesignMatrix::validate() const {
    if (rows.rows() < 1) {
        throw SpecError("design matrix needs at least one row");
    }
    if (static_cast<Index>(column_names.size()) != rows.cols()) {
        throw SpecError("design matrix column names do not match its width");
    }
    if (!rows.allFinite()) {
        throw SpecError("design matrix has missing or non-finite entries");
    }
}

Eigen::VectorXd DesignMatrix::center() {
    Eigen::VectorXd means = rows.colwise().mean().transpose();
    rows.rowwise() -= means.transpose();
    return means;
}

ParameterLayout::ParameterLayout(const ModelSpec& spec) : covariate_names_(spec.covariate_names) {
    for (auto f : kFamilies) {
        for (Index r = 0; r < spec.family_size(f); ++r) {
            if (spec.baseline_free(f, r)) {
                entries_.push_back({f, false, r, -1});
                names_.push_back(std::string(kBaselinePrefix[family_slot(f)]) + "[" +
                                 spec.target_label(f, r) + "]");
            }
        }
    }
    n_baseline_ = static_cast<Index>(entries_.size());
    for (auto f : kFamilies) {
        const auto& m = spec.mask(f);
        for (Index r = 0; r < m.rows(); ++r) {
            for (Index j = 0; j < m.cols(); ++j) {
                if (m(r, j)) {
                    entries_.push_back({f, true, r, j});
                    names_.push_back("delta_" + std::string(family_name(f)) + "[" + spec.target_label(f, r) +
                                     ";" + spec.covariate_names[static_cast<std::size_t>(j)] + "]");
                }
            }
        }
    }
}

Index ParameterLayout::find(std::string_view name) const {
    auto it = std::find(names_.begin(), names_.end(), name);
    return it == names_.end() ? -1 : static_cast<Index>(it - names_.begin());
}

std::vector<Index> ParameterLayout::delta_indices() const {
    std::vector<Index> out;
    for (Index k = n_baseline_; k < size(); ++k) {
        out.push_back(k);
    }
    return out;
}

std::string ParameterLayout::block_label(Index k) const {
    const auto& e = (*this)[k];
    if (!e.is_delta) {
        return "baseline";
    }
    return "delta_" + std::string(family_name(e.family)) + ":" +
           covariate_names_[static_cast<std::size_t>(e.covariate)];
}

void check_consistent(const ParameterSet& params, const ModelSpec& spec) {
    for (auto f : kFamilies) {
        const Index n = spec.family_size(f);
        if (params.baseline_of(f).size() != n || params.delta_of(f).rows() != n ||
            params.delta_of(f).cols() != spec.n_covariates) {
            throw SpecError("parameter block " + std::string(family_name(f)) + " does not match the model shape");
        }
        for (Index r = 0; r < n; ++r) {
            if (!spec.baseline_free(f, r) && params.baseline_of(f)(r) != spec.baseline_fixed_value(f, r)) {
                throw SpecError("fixed parameter " + std::string(family_name(f)) + "[" + spec.target_label(f, r) +
                                "] differs from its fixed value");
            }
            for (Index j = 0; j < spec.n_covariates; ++j) {
                if (!spec.mask(f)(r, j) && params.delta_of(f)(r, j) != 0.0) {
                    throw SpecError("unmoderated effect delta_" + std::string(family_name(f)) + "[" +
                                    spec.target_label(f, r) + "] is nonzero");
                }
            }
        }
    }
}

Eigen::VectorXd pack(const ParameterSet& params, const ParameterLayout& layout) {
    Eigen::VectorXd out(layout.size());
    for (Index k = 0; k < layout.size(); ++k) {
        const auto& e = layout[k];
        out(k) = e.is_delta ? params.delta_of(e.family)(e.row, e.covariate) : params.baseline_of(e.family)(e.row);
    }
    return out;
}

Eigen::VectorXd pack(const ParameterSet& params, const ModelSpec& spec) {
    check_consistent(params, spec);
    return pack(params, ParameterLayout(spec));
}

ParameterSet unpack(const Eigen::VectorXd& vec, const ModelSpec& spec, const ParameterLayout& layout) {
    if (vec.size() != layout.size()) {
        throw SpecError("packed vector has length " + std::to_string(vec.size()) + ", model expects " +
                        std::to_string(layout.size()));
    }
    ParameterSet p = ParameterSet::zeros(spec);
    for (Index k = 0; k < layout.size(); ++k) {
        const auto& e = layout[k];
        if (e.is_delta) {
            p.delta_of(e.family)(e.row, e.covariate) = vec(k);
        } else {
            p.baseline_of(e.family)(e.row) = vec(k);
        }
    }
    return p;
}

ParameterSet unpack(const Eigen::VectorXd& vec, const ModelSpec& spec) {
    return unpack(vec, spec, ParameterLayout(spec));
}

PersonParams resolve_person(const ParameterSet& params, const Eigen::Ref<const Eigen::VectorXd>& x) {
    if (x.size() != params.n_covariates()) {
        throw SpecError("covariate vector has length " + std::to_string(x.size()) + ", model expects " +
                        std::to_string(params.n_covariates()));
    }
    const Index n_items = params.n_items();
    const Index n_factors = params.n_factors();
    auto shifted = [&](Family f) -> Eigen::VectorXd {
        return params.baseline_of(f) + params.delta_of(f) * x;
    };

    PersonParams pp;
    pp.nu = shifted(Family::nu);
    const Eigen::VectorXd lam = shifted(Family::lambda);
    pp.lambda = Eigen::Map<const RowMatrix>(lam.data(), n_items, n_factors);
    pp.theta = shifted(Family::theta).array().exp().matrix();
    pp.alpha = shifted(Family::alpha);
    pp.phi_diag = shifted(Family::phi).array().exp().matrix();
    pp.gamma = shifted(Family::gamma);
    return pp;
}

}  // namespace mnlfa
