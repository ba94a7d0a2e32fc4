#include "commands.hpp"

#include "mnlfa/config.hpp"
#include "mnlfa/estimate.hpp"
#include "mnlfa/gradients.hpp"
#include "mnlfa/io.hpp"
#include "mnlfa/simulate.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <fstream>
#include <ostream>
#include <random>
#include <sstream>

namespace mnlfa::cli {

namespace {

struct CommonOptions {
    std::string config;
    std::string data;
    int threads = 0;
    bool center = false;
    bool listwise = false;
    std::string penalty;
    double w0 = std::numeric_limits<double>::quiet_NaN();
    double nu = std::numeric_limits<double>::quiet_NaN();
    double epsilon = std::numeric_limits<double>::quiet_NaN();
    std::string grouping;
    int n_starts = 0;
    std::int64_t seed = -1;
};

void add_model_options(CLI::App* cmd, CommonOptions& o, bool with_data) {
    cmd->add_option("-c,--config", o.config, "Model configuration (JSON)")->required();
    if (with_data) {
        cmd->add_option("-d,--data", o.data, "Data CSV")->required();
        cmd->add_flag("--center", o.center, "Mean-center covariates before fitting");
        cmd->add_flag("--listwise", o.listwise, "Drop rows with any missing item instead of FIML");
        cmd->add_option("--penalty", o.penalty, "Penalty kind: none, ridge, lasso, alignment");
        cmd->add_option("--w0", o.w0, "Penalty weight in [0, 1)");
        cmd->add_option("--nu", o.nu, "Penalty severity divisor");
        cmd->add_option("--epsilon", o.epsilon, "Penalty smoothing constant");
        cmd->add_option("--grouping", o.grouping, "Penalty groups: family_covariate or single");
    }
    cmd->add_option("--threads", o.threads, "Worker threads (default $MNLFA_THREADS or 1)")->check(CLI::NonNegativeNumber);
}

ModelConfig load_with_overrides(const CommonOptions& o) {
    ModelConfig cfg = load_config(o.config);
    if (!o.penalty.empty()) {
        cfg.penalty.kind = penalty_kind_from_name(o.penalty);
    }
    if (!std::isnan(o.w0)) {
        cfg.penalty.w0 = o.w0;
    }
    if (!std::isnan(o.nu)) {
        cfg.penalty.nu_scale = o.nu;
    }
    if (!std::isnan(o.epsilon)) {
        cfg.penalty.epsilon = o.epsilon;
    }
    if (!o.grouping.empty()) {
        cfg.grouping = penalty_grouping_from_name(o.grouping);
        cfg.refresh_penalty_blocks();
    }
    cfg.penalty.validate();
    if (o.n_starts > 0) {
        cfg.fit.n_starts = o.n_starts;
    }
    if (o.seed >= 0) {
        cfg.fit.seed = static_cast<std::uint64_t>(o.seed);
    }
    if (o.threads > 0) {
        cfg.fit.threads = o.threads;
    }
    if (o.center) {
        cfg.center_covariates = true;
    }
    if (o.listwise) {
        cfg.missing = MissingPolicy::listwise;
    }
    return cfg;
}

Dataset prepare_data(const CommonOptions& o, const ModelConfig& cfg, std::ostream& err) {
    Dataset data = load_dataset(o.data, cfg.spec);
    if (cfg.missing == MissingPolicy::listwise) {
        const Index before = data.n_persons();
        data = listwise_complete(data);
        if (data.n_persons() < before) {
            err << "listwise deletion dropped " << before - data.n_persons() << " of " << before << " rows\n";
        }
        if (data.n_persons() == 0) {
            throw InputError("no complete rows remain after listwise deletion");
        }
    }
    if (cfg.center_covariates && data.X.n_covariates() > 0) {
        const Eigen::VectorXd means = data.X.center();
        for (Index j = 0; j < means.size(); ++j) {
            err << "centered covariate " << data.X.column_names[static_cast<std::size_t>(j)] << " (mean "
                << format_number(means(j)) << ")\n";
        }
    }
    data.validate();
    return data;
}

std::ofstream open_output(const std::string& path) {
    std::ofstream f(path);
    if (!f) {
        throw std::runtime_error("cannot write '" + path + "'");
    }
    return f;
}

std::string strip_csv(const std::string& path) {
    if (path.size() > 4 && path.compare(path.size() - 4, 4, ".csv") == 0) {
        return path.substr(0, path.size() - 4);
    }
    return path;
}

std::vector<double> parse_grid(const std::string& text) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(item, &used);
        } catch (const std::exception&) {
            throw SpecError("w0 grid entry '" + item + "' is not a number");
        }
        while (used < item.size() && std::isspace(static_cast<unsigned char>(item[used]))) {
            ++used;
        }
        if (used != item.size()) {
            throw SpecError("w0 grid entry '" + item + "' is not a number");
        }
        out.push_back(v);
    }
    if (out.empty()) {
        throw SpecError("w0 grid is empty");
    }
    return out;
}

int cmd_fit(const CommonOptions& o, const std::string& out_prefix, const std::string& start_path, bool no_se,
            std::ostream& out, std::ostream& err) {
    const ModelConfig cfg = load_with_overrides(o);
    for (const auto& w : cfg.warnings) {
        err << "warning: " << w << '\n';
    }
    const Dataset data = prepare_data(o, cfg, err);
    const ParameterLayout layout(cfg.spec);
    std::optional<Eigen::VectorXd> start;
    if (!start_path.empty()) {
        start = read_estimates(start_path, layout);
    }
    FitConfig fc = cfg.fit;
    fc.compute_se = !no_se;

    const auto t0 = std::chrono::steady_clock::now();
    const FitResult res = fit(data, cfg.spec, cfg.penalty, fc, start);
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    if (!out_prefix.empty()) {
        auto est = open_output(out_prefix + ".estimates.csv");
        write_estimates(est, layout, res.estimates, res.std_errors, cfg.penalty, res.se_caveat);
        auto sum = open_output(out_prefix + ".summary.txt");
        write_fit_summary(sum, res, cfg.penalty, data.n_persons(), wall, cfg.warnings);
    }
    write_fit_summary(out, res, cfg.penalty, data.n_persons(), wall, cfg.warnings);
    if (out_prefix.empty()) {
        write_estimates(out, layout, res.estimates, res.std_errors, cfg.penalty, res.se_caveat);
    }
    return res.converged ? kOk : kNotConverged;
}

int cmd_simulate(const CommonOptions& o, Index n, std::uint64_t seed, const std::string& out_path, std::ostream& out) {
    const ModelConfig cfg = load_with_overrides(o);
    if (!cfg.truth) {
        throw SpecError("config has no 'truth' section to simulate from");
    }
    if (n < 1) {
        throw SpecError("--n must be at least 1");
    }
    const DesignMatrix X = simulate_design(cfg.design, n, seed);
    const Dataset data = simulate_data(*cfg.truth, cfg.spec, X, seed, cfg.fit.threads);

    const ParameterLayout layout(cfg.spec);
    const Eigen::VectorXd truth = pack(*cfg.truth, layout);
    const Eigen::VectorXd none = Eigen::VectorXd::Constant(layout.size(), std::numeric_limits<double>::quiet_NaN());
    if (out_path.empty()) {
        write_dataset(out, data);
        return kOk;
    }
    auto f = open_output(out_path);
    write_dataset(f, data);
    const std::string truth_path = strip_csv(out_path) + ".truth.csv";
    auto t = open_output(truth_path);
    write_estimates(t, layout, truth, none, PenaltyConfig{});
    out << "wrote " << n << " rows to " << out_path << " and truth to " << truth_path << '\n';
    return kOk;
}

int cmd_gradcheck(const CommonOptions& o, const std::string& at_path, std::uint64_t seed, double perturb, double h,
                  bool corrupt, const std::string& out_path, std::ostream& out, std::ostream& err) {
    const ModelConfig cfg = load_with_overrides(o);
    const Dataset data = prepare_data(o, cfg, err);
    if (data.n_persons() > 200) {
        err << "warning: gradcheck on " << data.n_persons() << " persons is slow; a small dataset is enough\n";
    }
    const ParameterLayout layout(cfg.spec);
    const GradientOptions gopts = cfg.fit.gradient_options();

    Eigen::VectorXd x;
    if (!at_path.empty()) {
        x = read_estimates(at_path, layout);
    } else {
        x = default_start(data, cfg.spec, layout);
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> z(0.0, 1.0);
        for (Index k = 0; k < x.size(); ++k) {
            x(k) += perturb * z(rng);
        }
    }
    auto objective = [&](const Eigen::VectorXd& v) {
        return evaluate_objective(v, data, cfg.spec, layout, cfg.penalty, gopts).objective;
    };
    Eigen::VectorXd analytic = evaluate_objective(x, data, cfg.spec, layout, cfg.penalty, gopts).gradient;
    if (corrupt && analytic.size() > 0) {
        analytic(0) += 1e-2 * (1.0 + std::abs(analytic(0)));
    }

    std::ofstream file;
    std::ostream* report = &out;
    if (!out_path.empty()) {
        file = open_output(out_path);
        report = &file;
    }
    *report << "parameter,analytic,finite_difference,rel_error\n";
    double worst = 0.0;
    std::string worst_name;
    for (Index k = 0; k < x.size(); ++k) {
        const double step = h * std::max(1.0, std::abs(x(k)));
        Eigen::VectorXd up = x;
        Eigen::VectorXd down = x;
        up(k) += step;
        down(k) -= step;
        const double fd = (objective(up) - objective(down)) / (up(k) - down(k));
        const double rel = std::abs(analytic(k) - fd) / std::max({1.0, std::abs(analytic(k)), std::abs(fd)});
        if (rel > worst) {
            worst = rel;
            worst_name = layout.name(k);
        }
        *report << layout.name(k) << ',' << format_number(analytic(k)) << ',' << format_number(fd) << ','
                << format_number(rel) << '\n';
    }
    const bool ok = worst <= 1e-4;
    out << "coordinates: " << x.size() << '\n';
    out << "max_rel_error: " << format_number(worst) << (worst_name.empty() ? "" : " (" + worst_name + ")") << '\n';
    out << "result: " << (ok ? "pass" : "fail") << '\n';
    return ok ? kOk : kGradcheckFailed;
}

int cmd_curves(const CommonOptions& o, double x_min, double x_max, int steps, const std::string& covariate,
               const std::string& out_path, std::ostream& out) {
    const ModelConfig cfg = load_with_overrides(o);
    if (!cfg.truth) {
        throw SpecError("config has no 'truth' section with correlation parameters");
    }
    if (!std::isfinite(x_min) || !std::isfinite(x_max) || x_min > x_max) {
        throw SpecError("curve range needs finite x_min <= x_max");
    }
    if (steps < 1) {
        throw SpecError("--steps must be at least 1");
    }
    if (cfg.spec.n_factors < 2) {
        throw SpecError("correlation curves need at least two factors");
    }
    Eigen::VectorXd delta = Eigen::VectorXd::Zero(cfg.spec.n_corr());
    if (cfg.spec.n_covariates > 0) {
        Index col = 0;
        if (!covariate.empty()) {
            col = -1;
            for (std::size_t j = 0; j < cfg.spec.covariate_names.size(); ++j) {
                if (cfg.spec.covariate_names[j] == covariate) {
                    col = static_cast<Index>(j);
                }
            }
            if (col < 0) {
                throw SpecError("unknown covariate '" + covariate + "'");
            }
        }
        delta = cfg.truth->delta_of(Family::gamma).col(col);
    } else if (!covariate.empty()) {
        throw SpecError("unknown covariate '" + covariate + "'");
    }
    const auto rows =
        correlation_curves(cfg.truth->baseline_of(Family::gamma), delta, linspace(x_min, x_max, steps), cfg.spec.corr_param);
    if (out_path.empty()) {
        write_curves(out, rows, cfg.spec);
    } else {
        auto f = open_output(out_path);
        write_curves(f, rows, cfg.spec);
    }
    return kOk;
}

int cmd_profile(const CommonOptions& o, const std::string& grid_text, const std::string& out_path, std::ostream& out,
                std::ostream& err) {
    const std::vector<double> grid = parse_grid(grid_text);
    const ModelConfig cfg = load_with_overrides(o);
    const Dataset data = prepare_data(o, cfg, err);
    const auto path = penalty_path(data, cfg.spec, cfg.penalty, grid, cfg.fit);
    if (out_path.empty()) {
        write_path(out, path);
    } else {
        auto f = open_output(out_path);
        write_path(f, path);
        write_path(out, path);
    }
    return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Penalized moderated nonlinear factor analysis", "mnlfa"};
    app.require_subcommand(1);

    CommonOptions fit_o, sim_o, grad_o, curve_o, prof_o;

    auto* fit_cmd = app.add_subcommand("fit", "Estimate a model");
    add_model_options(fit_cmd, fit_o, true);
    std::string fit_out, fit_start;
    bool no_se = false;
    fit_cmd->add_option("-o,--out", fit_out, "Output prefix for <prefix>.estimates.csv and <prefix>.summary.txt");
    fit_cmd->add_option("--start", fit_start, "Start from an estimates CSV");
    fit_cmd->add_flag("--no-se", no_se, "Skip standard errors");
    fit_cmd->add_option("--starts", fit_o.n_starts, "Number of starts");
    fit_cmd->add_option("--seed", fit_o.seed, "Seed for jittered starts");

    auto* sim_cmd = app.add_subcommand("simulate", "Simulate data from the config's truth section");
    add_model_options(sim_cmd, sim_o, false);
    std::int64_t sim_n = 0;
    std::uint64_t sim_seed = 1;
    std::string sim_out;
    sim_cmd->add_option("-n,--n", sim_n, "Number of persons")->required();
    sim_cmd->add_option("--seed", sim_seed, "Random seed");
    sim_cmd->add_option("-o,--out", sim_out, "Output CSV; truth goes to <out>.truth.csv");

    auto* grad_cmd = app.add_subcommand("gradcheck", "Compare analytic and finite-difference gradients");
    add_model_options(grad_cmd, grad_o, true);
    std::string grad_at, grad_out;
    std::uint64_t grad_seed = 1;
    double perturb = 0.1;
    double fd_step = 1e-5;
    bool corrupt = false;
    grad_cmd->add_option("--at", grad_at, "Evaluate at the parameters in this estimates CSV");
    grad_cmd->add_option("--seed", grad_seed, "Seed for the perturbed evaluation point");
    grad_cmd->add_option("--perturb", perturb, "Perturbation scale around the default start");
    grad_cmd->add_option("--step", fd_step, "Relative finite-difference step");
    grad_cmd->add_option("-o,--out", grad_out, "Write the per-coordinate table here");
    grad_cmd->add_flag("--corrupt-gradient", corrupt)->group("");

    auto* curve_cmd = app.add_subcommand("curves", "Tabulate model correlations along one covariate");
    add_model_options(curve_cmd, curve_o, false);
    double x_min = 0.0;
    double x_max = 3.0;
    int steps = 31;
    std::string curve_cov, curve_out;
    curve_cmd->add_option("--x-min", x_min, "Grid start");
    curve_cmd->add_option("--x-max", x_max, "Grid end");
    curve_cmd->add_option("--steps", steps, "Grid points");
    curve_cmd->add_option("--covariate", curve_cov, "Covariate to vary (default: first)");
    curve_cmd->add_option("-o,--out", curve_out, "Output CSV");

    auto* prof_cmd = app.add_subcommand("profile", "Fit along a grid of penalty weights");
    add_model_options(prof_cmd, prof_o, true);
    std::string grid_text, prof_out;
    prof_cmd->add_option("--grid", grid_text, "Comma-separated ascending w0 values")->required();
    prof_cmd->add_option("-o,--out", prof_out, "Output CSV");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n';
        return kBadInput;
    }

    try {
        if (*fit_cmd) {
            return cmd_fit(fit_o, fit_out, fit_start, no_se, out, err);
        }
        if (*sim_cmd) {
            return cmd_simulate(sim_o, static_cast<Index>(sim_n), sim_seed, sim_out, out);
        }
        if (*grad_cmd) {
            return cmd_gradcheck(grad_o, grad_at, grad_seed, perturb, fd_step, corrupt, grad_out, out, err);
        }
        if (*curve_cmd) {
            return cmd_curves(curve_o, x_min, x_max, steps, curve_cov, curve_out, out);
        }
        if (*prof_cmd) {
            return cmd_profile(prof_o, grid_text, prof_out, out, err);
        }
    } catch (const SpecError& e) {
        err << "error: " << e.what() << '\n';
        return kBadInput;
    } catch (const InputError& e) {
        err << "error: " << e.what() << '\n';
        return kBadInput;
    } catch (const DomainError& e) {
        err << "error: " << e.what() << '\n';
        return kBadInput;
    } catch (const NumericalError& e) {
        err << "numerical failure: " << e.what();
        if (e.person() >= 0) {
            err << ", CSV line " << e.person() + 2;
        }
        err << '\n';
        return kNumerical;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kFailure;
    }
    return kFailure;
}

}  // namespace mnlfa::cli
