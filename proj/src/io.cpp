#include "mnlfa/io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <unordered_map>

namespace mnlfa {

namespace {

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t k = 0; k < line.size(); ++k) {
        const char c = line[k];
        if (quoted) {
            if (c == '"') {
                if (k + 1 < line.size() && line[k + 1] == '"') {
                    cur.push_back('"');
                    ++k;
                } else {
                    quoted = false;
                }
            } else {
                cur.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (quoted) {
        throw InputError("unterminated quote in CSV line: " + line);
    }
    out.push_back(cur);
    return out;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t");
    if (b == std::string::npos) {
        return "";
    }
    const auto e = s.find_last_not_of(" \t");
    return s.substr(b, e - b + 1);
}

double parse_cell(const std::string& cell, std::size_t line, const std::string& column) {
    try {
        std::size_t used = 0;
        const double v = std::stod(cell, &used);
        if (used == cell.size() && std::isfinite(v)) {
            return v;
        }
    } catch (const std::exception&) {
    }
    throw InputError("line " + std::to_string(line) + ", column '" + column + "': '" + cell + "' is not a number");
}

}  // namespace

Index CsvTable::column(const std::string& name) const {
    for (std::size_t k = 0; k < header.size(); ++k) {
        if (header[k] == name) {
            return static_cast<Index>(k);
        }
    }
    return -1;
}

CsvTable parse_csv(std::istream& in) {
    CsvTable t;
    std::string line;
    bool have_header = false;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (!have_header) {
            if (trim(line).empty()) {
                continue;
            }
            for (auto& h : split_line(line)) {
                t.header.push_back(trim(h));
            }
            have_header = true;
            continue;
        }
        if (line.empty()) {
            continue;
        }
        auto cells = split_line(line);
        if (cells.size() != t.header.size()) {
            throw InputError("CSV line " + std::to_string(t.rows.size() + 2) + " has " + std::to_string(cells.size()) +
                             " fields, header has " + std::to_string(t.header.size()));
        }
        for (auto& c : cells) {
            c = trim(c);
        }
        t.rows.push_back(std::move(cells));
    }
    if (!have_header) {
        throw InputError("CSV input is empty");
    }
    return t;
}

CsvTable read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw InputError("cannot open '" + path + "'");
    }
    return parse_csv(in);
}

Dataset dataset_from_table(const CsvTable& table, const ModelSpec& spec) {
    std::vector<Index> item_cols;
    std::vector<Index> cov_cols;
    for (const auto& name : spec.item_names) {
        const Index c = table.column(name);
        if (c < 0) {
            throw InputError("data has no item column '" + name + "'");
        }
        item_cols.push_back(c);
    }
    for (const auto& name : spec.covariate_names) {
        const Index c = table.column(name);
        if (c < 0) {
            throw InputError("data has no covariate column '" + name + "'");
        }
        cov_cols.push_back(c);
    }
    const auto n = static_cast<Index>(table.rows.size());
    if (n < 1) {
        throw InputError("data has no rows");
    }
    Dataset d;
    d.item_names = spec.item_names;
    d.X.column_names = spec.covariate_names;
    d.Y.resize(n, spec.n_items);
    d.X.rows.resize(n, spec.n_covariates);
    for (Index r = 0; r < n; ++r) {
        const auto& row = table.rows[static_cast<std::size_t>(r)];
        const auto line = static_cast<std::size_t>(r) + 2;
        bool any = false;
        for (std::size_t i = 0; i < item_cols.size(); ++i) {
            const auto& cell = row[static_cast<std::size_t>(item_cols[i])];
            if (cell.empty() || cell == "NA") {
                d.Y(r, static_cast<Index>(i)) = std::numeric_limits<double>::quiet_NaN();
            } else {
                d.Y(r, static_cast<Index>(i)) = parse_cell(cell, line, spec.item_names[i]);
                any = true;
            }
        }
        if (!any) {
            throw InputError("line " + std::to_string(line) + " has no observed items");
        }
        for (std::size_t j = 0; j < cov_cols.size(); ++j) {
            const auto& cell = row[static_cast<std::size_t>(cov_cols[j])];
            if (cell.empty() || cell == "NA") {
                throw InputError("line " + std::to_string(line) + ": covariate '" + spec.covariate_names[j] +
                                 "' is missing");
            }
            d.X.rows(r, static_cast<Index>(j)) = parse_cell(cell, line, spec.covariate_names[j]);
        }
    }
    return d;
}

Dataset load_dataset(const std::string& path, const ModelSpec& spec) {
    return dataset_from_table(read_csv(path), spec);
}

std::string format_number(double v) {
    if (std::isnan(v)) {
        return "NA";
    }
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

void write_dataset(std::ostream& out, const Dataset& data) {
    std::vector<std::string> header = data.item_names;
    header.insert(header.end(), data.X.column_names.begin(), data.X.column_names.end());
    for (std::size_t k = 0; k < header.size(); ++k) {
        out << (k ? "," : "") << header[k];
    }
    out << '\n';
    for (Index n = 0; n < data.n_persons(); ++n) {
        for (Index i = 0; i < data.n_items(); ++i) {
            if (i) {
                out << ',';
            }
            if (!std::isnan(data.Y(n, i))) {
                out << format_number(data.Y(n, i));
            }
        }
        for (Index j = 0; j < data.X.n_covariates(); ++j) {
            out << ',' << format_number(data.X.rows(n, j));
        }
        out << '\n';
    }
}

void write_estimates(std::ostream& out, const ParameterLayout& layout, const Eigen::VectorXd& estimates,
                     const Eigen::VectorXd& std_errors, const PenaltyConfig& pen, const std::vector<bool>& caveat) {
    std::vector<bool> penalized(static_cast<std::size_t>(layout.size()), false);
    if (pen.kind != PenaltyKind::none && pen.w0 > 0.0) {
        for (const auto& b : pen.blocks) {
            if (b.size() > 1) {
                for (Index k : b) {
                    penalized[static_cast<std::size_t>(k)] = true;
                }
            }
        }
    }
    out << "parameter,block,estimate,std_error,penalized,se_caveat\n";
    for (Index k = 0; k < layout.size(); ++k) {
        const auto s = static_cast<std::size_t>(k);
        const double se = k < std_errors.size() ? std_errors(k) : std::numeric_limits<double>::quiet_NaN();
        out << layout.name(k) << ',' << layout.block_label(k) << ',' << format_number(estimates(k)) << ','
            << format_number(se) << ',' << (penalized[s] ? 1 : 0) << ',' << (s < caveat.size() && caveat[s] ? 1 : 0)
            << '\n';
    }
}

Eigen::VectorXd read_estimates(const std::string& path, const ParameterLayout& layout) {
    const CsvTable t = read_csv(path);
    const Index name_col = t.column("parameter");
    const Index value_col = t.column("estimate");
    if (name_col < 0 || value_col < 0) {
        throw InputError("'" + path + "' needs 'parameter' and 'estimate' columns");
    }
    Eigen::VectorXd out = Eigen::VectorXd::Constant(layout.size(), std::numeric_limits<double>::quiet_NaN());
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const auto& name = t.rows[r][static_cast<std::size_t>(name_col)];
        const Index k = layout.find(name);
        if (k < 0) {
            throw InputError("'" + path + "' names parameter '" + name + "', which the model does not have");
        }
        if (!std::isnan(out(k))) {
            throw InputError("'" + path + "' lists parameter '" + name + "' twice");
        }
        out(k) = parse_cell(t.rows[r][static_cast<std::size_t>(value_col)], r + 2, "estimate");
    }
    for (Index k = 0; k < layout.size(); ++k) {
        if (std::isnan(out(k))) {
            throw InputError("'" + path + "' has no value for parameter '" + layout.name(k) + "'");
        }
    }
    return out;
}

void write_fit_summary(std::ostream& out, const FitResult& fit, const PenaltyConfig& pen, Index n_persons,
                       double wall_seconds, const std::vector<std::string>& warnings) {
    out << "persons: " << n_persons << '\n';
    out << "parameters: " << fit.estimates.size() << '\n';
    out << "penalty: " << to_string(pen.kind) << '\n';
    out << "w0: " << format_number(pen.w0) << '\n';
    out << "loglik: " << format_number(fit.loglik) << '\n';
    out << "penalty_value: " << format_number(fit.penalty) << '\n';
    out << "penalized_objective: " << format_number(fit.penalized_obj) << '\n';
    out << "converged: " << (fit.converged ? "true" : "false") << '\n';
    out << "iterations: " << fit.n_iter << '\n';
    out << "grad_norm: " << format_number(fit.grad_norm) << '\n';
    out << "message: " << fit.message << '\n';
    char wall[32];
    std::snprintf(wall, sizeof wall, "%.3f", wall_seconds);
    out << "wall_seconds: " << wall << '\n';
    for (const auto& rec : fit.per_start_records) {
        out << "start " << rec.start << ": objective " << format_number(rec.objective) << ", converged "
            << (rec.converged ? "true" : "false") << ", iterations " << rec.n_iter << '\n';
    }
    for (const auto& w : warnings) {
        out << "warning: " << w << '\n';
    }
}

void write_curves(std::ostream& out, const std::vector<CurveRow>& rows, const ModelSpec& spec) {
    out << 'x';
    for (Index k = 0; k < spec.n_corr(); ++k) {
        out << ',' << spec.target_label(Family::gamma, k);
    }
    out << '\n';
    for (const auto& r : rows) {
        out << format_number(r.x);
        for (Index k = 0; k < r.correlations.size(); ++k) {
            out << ',' << format_number(r.correlations(k));
        }
        out << '\n';
    }
}

void write_path(std::ostream& out, const std::vector<PathPoint>& path) {
    out << "w0,loglik,penalty,objective,bic,active_deltas,converged,n_iter,status\n";
    for (const auto& p : path) {
        out << format_number(p.w0) << ',' << format_number(p.fit.loglik) << ',' << format_number(p.fit.penalty) << ','
            << format_number(p.fit.penalized_obj) << ',' << format_number(p.bic) << ',' << p.active_deltas << ','
            << (p.fit.converged ? "true" : "false") << ',' << p.fit.n_iter << ',';
        // status may carry an exception message
        std::string s = p.status;
        for (char& c : s) {
            if (c == ',' || c == '\n') {
                c = ';';
            }
        }
        out << s << '\n';
    }
}

}  // namespace mnlfa
