#include "mnlfa/config.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace mnlfa {

using nlohmann::json;

namespace {

std::vector<std::string> string_list(const json& j, const std::string& field) {
    if (!j.is_array()) {
        throw SpecError("'" + field + "' must be a list of names");
    }
    std::vector<std::string> out;
    for (const auto& v : j) {
        if (!v.is_string()) {
            throw SpecError("'" + field + "' must contain only strings");
        }
        out.push_back(v.get<std::string>());
    }
    return out;
}

double number(const json& j, const std::string& field) {
    if (!j.is_number()) {
        throw SpecError("'" + field + "' must be a number");
    }
    return j.get<double>();
}

Index index_of(const std::vector<std::string>& names, const std::string& name, const std::string& what) {
    for (std::size_t k = 0; k < names.size(); ++k) {
        if (names[k] == name) {
            return static_cast<Index>(k);
        }
    }
    throw SpecError("unknown " + what + " '" + name + "'");
}

/// Row of family `f` named by `target` ("y1", "y1:f2", "f1", "f2:f1").
Index resolve_target(const ModelSpec& spec, Family f, const std::string& target) {
    switch (f) {
        case Family::nu:
        case Family::theta:
            return index_of(spec.item_names, target, "item");
        case Family::alpha:
        case Family::phi:
            return index_of(spec.factor_names, target, "factor");
        case Family::lambda:
        case Family::gamma: {
            const auto colon = target.find(':');
            if (colon == std::string::npos) {
                throw SpecError("target '" + target + "' must have the form a:b");
            }
            const std::string a = target.substr(0, colon);
            const std::string b = target.substr(colon + 1);
            if (f == Family::lambda) {
                return index_of(spec.item_names, a, "item") * spec.n_factors + index_of(spec.factor_names, b, "factor");
            }
            Index i = index_of(spec.factor_names, a, "factor");
            Index j = index_of(spec.factor_names, b, "factor");
            if (i == j) {
                throw SpecError("correlation target '" + target + "' names the same factor twice");
            }
            if (i < j) {
                std::swap(i, j);
            }
            return i * (i - 1) / 2 + j;
        }
    }
    return -1;
}

void parse_loadings(const json& j, ModelSpec& spec) {
    if (!j.is_object()) {
        throw SpecError("'loadings' must map each item to one entry per factor");
    }
    for (auto it = j.begin(); it != j.end(); ++it) {
        (void)index_of(spec.item_names, it.key(), "item in 'loadings'");
    }
    for (Index i = 0; i < spec.n_items; ++i) {
        const auto& name = spec.item_names[static_cast<std::size_t>(i)];
        if (!j.contains(name)) {
            throw SpecError("'loadings' has no entry for item '" + name + "'");
        }
        const json& row = j.at(name);
        if (!row.is_array() || static_cast<Index>(row.size()) != spec.n_factors) {
            throw SpecError("loadings for item '" + name + "' must list one entry per factor");
        }
        for (Index m = 0; m < spec.n_factors; ++m) {
            const json& v = row.at(static_cast<std::size_t>(m));
            if (v.is_string() && v.get<std::string>() == "free") {
                spec.loading_free(i, m) = true;
            } else if (v.is_number()) {
                spec.loading_free(i, m) = false;
                spec.loading_value(i, m) = v.get<double>();
            } else {
                throw SpecError("loading entry for item '" + name + "' must be \"free\" or a number");
            }
        }
    }
}

void parse_moderation(const json& j, ModelSpec& spec) {
    if (!j.is_object()) {
        throw SpecError("'moderation' must map parameter families to covariates");
    }
    for (auto it = j.begin(); it != j.end(); ++it) {
        const Family f = family_from_name(it.key());
        const json& v = it.value();
        if (v.is_array()) {
            for (const auto& cov : string_list(v, "moderation." + it.key())) {
                spec.moderate_all(f, index_of(spec.covariate_names, cov, "covariate"));
            }
        } else if (v.is_object()) {
            for (auto c = v.begin(); c != v.end(); ++c) {
                const Index cov = index_of(spec.covariate_names, c.key(), "covariate");
                for (const auto& target : string_list(c.value(), "moderation." + it.key() + "." + c.key())) {
                    spec.mask(f)(resolve_target(spec, f, target), cov) = true;
                }
            }
        } else {
            throw SpecError("moderation for '" + it.key() + "' must be a covariate list or an object");
        }
    }
}

std::optional<Eigen::VectorXd> optional_vector(const json& j, const std::string& field, Index expected) {
    if (!j.contains(field)) {
        return std::nullopt;
    }
    const json& v = j.at(field);
    if (!v.is_array() || static_cast<Index>(v.size()) != expected) {
        throw SpecError("truth." + field + " must have " + std::to_string(expected) + " entries");
    }
    Eigen::VectorXd out(expected);
    for (Index k = 0; k < expected; ++k) {
        out(k) = number(v.at(static_cast<std::size_t>(k)), "truth." + field);
    }
    return out;
}

ParameterSet parse_truth(const json& j, const ModelSpec& spec) {
    if (!j.is_object()) {
        throw SpecError("'truth' must be an object");
    }
    static const std::set<std::string> known{"nu0",    "lambda0", "theta0", "log_theta0", "alpha0",
                                             "phi0",   "log_phi0", "gamma0", "partial_correlations0",
                                             "deltas"};
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (!known.count(it.key())) {
            throw SpecError("unknown field truth." + it.key());
        }
    }
    ParameterSet p = ParameterSet::zeros(spec);
    const Index I = spec.n_items;
    const Index M = spec.n_factors;

    if (auto v = optional_vector(j, "nu0", I)) {
        p.nu0() = *v;
    }
    if (j.contains("lambda0")) {
        const json& rows = j.at("lambda0");
        if (!rows.is_array() || static_cast<Index>(rows.size()) != I) {
            throw SpecError("truth.lambda0 must have one row per item");
        }
        auto lambda = p.lambda0();
        for (Index i = 0; i < I; ++i) {
            const json& row = rows.at(static_cast<std::size_t>(i));
            if (!row.is_array() || static_cast<Index>(row.size()) != M) {
                throw SpecError("truth.lambda0 rows must have one entry per factor");
            }
            for (Index m = 0; m < M; ++m) {
                const double value = number(row.at(static_cast<std::size_t>(m)), "truth.lambda0");
                if (!spec.loading_free(i, m) && value != spec.loading_value(i, m)) {
                    throw SpecError("truth.lambda0 disagrees with the fixed loading " +
                                    spec.target_label(Family::lambda, i * M + m));
                }
                lambda(i, m) = value;
            }
        }
    }
    if (j.contains("theta0") && j.contains("log_theta0")) {
        throw SpecError("give either truth.theta0 or truth.log_theta0");
    }
    if (auto v = optional_vector(j, "theta0", I)) {
        if (!(v->array() > 0.0).all()) {
            throw SpecError("truth.theta0 must be positive");
        }
        p.log_theta0() = v->array().log().matrix();
    } else if (auto lv = optional_vector(j, "log_theta0", I)) {
        p.log_theta0() = *lv;
    }
    if (auto v = optional_vector(j, "alpha0", M)) {
        if (!v->isZero()) {
            throw SpecError("truth.alpha0 is fixed at zero by the identification");
        }
    }
    std::optional<Eigen::VectorXd> log_phi;
    if (auto v = optional_vector(j, "phi0", M)) {
        if (!(v->array() > 0.0).all()) {
            throw SpecError("truth.phi0 must be positive");
        }
        log_phi = v->array().log().matrix();
    } else {
        log_phi = optional_vector(j, "log_phi0", M);
    }
    if (log_phi) {
        if (spec.identification == Identification::standardized_baseline && !log_phi->isZero(1e-15)) {
            throw SpecError("baseline factor variances are fixed at 1 under standardized_baseline");
        }
        p.log_phi0() = *log_phi;
    }
    if (j.contains("gamma0") && j.contains("partial_correlations0")) {
        throw SpecError("give either truth.gamma0 or truth.partial_correlations0");
    }
    if (auto v = optional_vector(j, "gamma0", spec.n_corr())) {
        p.gamma0() = *v;
    } else if (auto pc = optional_vector(j, "partial_correlations0", spec.n_corr())) {
        if (spec.corr_param != CorrParam::partial_correlation) {
            throw SpecError("truth.partial_correlations0 requires the partial_correlation parameterization");
        }
        for (Index k = 0; k < pc->size(); ++k) {
            if (!(std::abs((*pc)(k)) < 1.0)) {
                throw SpecError("truth.partial_correlations0 entries must lie in (-1, 1)");
            }
            p.gamma0()(k) = std::atanh((*pc)(k));
        }
    }

    if (j.contains("deltas")) {
        const json& d = j.at("deltas");
        if (!d.is_object()) {
            throw SpecError("truth.deltas must map family -> covariate -> target -> value");
        }
        for (auto fit = d.begin(); fit != d.end(); ++fit) {
            const Family f = family_from_name(fit.key());
            if (!fit.value().is_object()) {
                throw SpecError("truth.deltas." + fit.key() + " must be an object");
            }
            for (auto cit = fit.value().begin(); cit != fit.value().end(); ++cit) {
                const Index cov = index_of(spec.covariate_names, cit.key(), "covariate");
                if (!cit.value().is_object()) {
                    throw SpecError("truth.deltas." + fit.key() + "." + cit.key() + " must be an object");
                }
                for (auto tit = cit.value().begin(); tit != cit.value().end(); ++tit) {
                    const Index row = resolve_target(spec, f, tit.key());
                    if (!spec.mask(f)(row, cov)) {
                        throw SpecError("truth sets a moderation effect on " + std::string(family_name(f)) + "[" +
                                        tit.key() + "] by " + cit.key() + ", which the model does not moderate");
                    }
                    p.delta_of(f)(row, cov) = number(tit.value(), "truth.deltas");
                }
            }
        }
    }
    check_consistent(p, spec);
    return p;
}

std::vector<CovariateSpec> parse_design(const json* j, const ModelSpec& spec) {
    std::vector<CovariateSpec> out;
    for (const auto& name : spec.covariate_names) {
        CovariateSpec c;
        c.name = name;
        if (j && j->contains(name)) {
            const json& d = j->at(name);
            const std::string dist = d.value("distribution", "normal");
            if (dist == "normal") {
                c.distribution = CovariateDistribution::normal;
                c.a = d.value("mean", 0.0);
                c.b = d.value("sd", 1.0);
                if (!(c.b > 0.0)) {
                    throw SpecError("design." + name + ".sd must be positive");
                }
            } else if (dist == "uniform") {
                c.distribution = CovariateDistribution::uniform;
                c.a = d.value("min", 0.0);
                c.b = d.value("max", 1.0);
                if (!(c.b > c.a)) {
                    throw SpecError("design." + name + " needs min < max");
                }
            } else if (dist == "bernoulli") {
                c.distribution = CovariateDistribution::bernoulli;
                c.a = d.value("p", 0.5);
                if (!(c.a >= 0.0 && c.a <= 1.0)) {
                    throw SpecError("design." + name + ".p must lie in [0, 1]");
                }
            } else {
                throw SpecError("unknown distribution '" + dist + "' for covariate " + name);
            }
        }
        out.push_back(c);
    }
    if (j) {
        for (auto it = j->begin(); it != j->end(); ++it) {
            (void)index_of(spec.covariate_names, it.key(), "covariate in 'design'");
        }
    }
    return out;
}

}  // namespace

void ModelConfig::refresh_penalty_blocks() {
    penalty.blocks = PenaltyConfig::default_blocks(ParameterLayout(spec), grouping);
}

ModelConfig parse_config(const std::string& json_text) {
    json root;
    try {
        root = json::parse(json_text, nullptr, true, true);
    } catch (const json::parse_error& e) {
        throw SpecError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!root.is_object()) {
        throw SpecError("config must be a JSON object");
    }
    static const std::set<std::string> known{"items",    "factors",   "covariates",        "loadings",
                                             "moderation", "correlation", "identification", "penalty",
                                             "optimizer", "missing",   "center_covariates", "jitter",
                                             "truth",    "design",    "description"};
    for (auto it = root.begin(); it != root.end(); ++it) {
        if (!known.count(it.key())) {
            throw SpecError("unknown config field '" + it.key() + "'");
        }
    }
    for (const char* required : {"items", "factors", "loadings"}) {
        if (!root.contains(required)) {
            throw SpecError(std::string("config is missing '") + required + "'");
        }
    }

    ModelConfig cfg;
    try {
        const auto items = string_list(root.at("items"), "items");
        const auto factors = string_list(root.at("factors"), "factors");
        const auto covariates =
            root.contains("covariates") ? string_list(root.at("covariates"), "covariates") : std::vector<std::string>{};
        cfg.spec = ModelSpec::make(static_cast<Index>(items.size()), static_cast<Index>(factors.size()),
                                   static_cast<Index>(covariates.size()));
        cfg.spec.item_names = items;
        cfg.spec.factor_names = factors;
        cfg.spec.covariate_names = covariates;

        const std::string corr = root.value("correlation", "partial_correlation");
        if (corr == "partial_correlation") {
            cfg.spec.corr_param = CorrParam::partial_correlation;
        } else if (corr == "hypersphere") {
            cfg.spec.corr_param = CorrParam::hypersphere;
        } else {
            throw SpecError("unknown correlation parameterization '" + corr + "'");
        }
        const std::string ident = root.value("identification", "standardized_baseline");
        if (ident == "standardized_baseline") {
            cfg.spec.identification = Identification::standardized_baseline;
        } else if (ident == "anchor_loading") {
            cfg.spec.identification = Identification::anchor_loading;
        } else {
            throw SpecError("unknown identification '" + ident + "'");
        }

        if (cfg.spec.n_items < 1 || cfg.spec.n_factors < 1) {
            throw SpecError("config needs at least one item and one factor");
        }
        parse_loadings(root.at("loadings"), cfg.spec);
        if (root.contains("moderation")) {
            parse_moderation(root.at("moderation"), cfg.spec);
        }
        cfg.warnings = cfg.spec.validate();

        if (root.contains("penalty")) {
            const json& p = root.at("penalty");
            cfg.penalty.kind = penalty_kind_from_name(p.value("kind", "none"));
            cfg.penalty.w0 = p.value("w0", 0.0);
            cfg.penalty.nu_scale = p.value("nu", 1.0);
            cfg.penalty.epsilon = p.value("epsilon", 1e-8);
            cfg.grouping = penalty_grouping_from_name(p.value("grouping", "family_covariate"));
        }
        cfg.penalty.validate();
        cfg.refresh_penalty_blocks();

        if (root.contains("optimizer")) {
            const json& o = root.at("optimizer");
            cfg.fit.max_iter = o.value("max_iter", cfg.fit.max_iter);
            cfg.fit.grad_tol = o.value("grad_tol", cfg.fit.grad_tol);
            cfg.fit.obj_rel_tol = o.value("obj_rel_tol", cfg.fit.obj_rel_tol);
            cfg.fit.n_starts = o.value("n_starts", cfg.fit.n_starts);
            cfg.fit.start_jitter = o.value("start_jitter", cfg.fit.start_jitter);
            cfg.fit.seed = o.value("seed", cfg.fit.seed);
            cfg.fit.fd_eps = o.value("fd_eps", cfg.fit.fd_eps);
        }
        cfg.fit.jitter = root.value("jitter", 0.0);
        cfg.fit.validate();

        const std::string missing = root.value("missing", "fiml");
        if (missing == "fiml") {
            cfg.missing = MissingPolicy::fiml;
        } else if (missing == "listwise") {
            cfg.missing = MissingPolicy::listwise;
        } else {
            throw SpecError("unknown missing-data policy '" + missing + "'");
        }
        cfg.center_covariates = root.value("center_covariates", false);

        if (root.contains("truth")) {
            cfg.truth = parse_truth(root.at("truth"), cfg.spec);
        }
        cfg.design = parse_design(root.contains("design") ? &root.at("design") : nullptr, cfg.spec);
    } catch (const json::exception& e) {
        throw SpecError(std::string("config field has the wrong type: ") + e.what());
    }
    return cfg;
}

ModelConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw SpecError("cannot open config '" + path + "'");
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

}  // namespace mnlfa
