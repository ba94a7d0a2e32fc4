#pragma once

#include "mnlfa/estimate.hpp"
#include "mnlfa/likelihood.hpp"
#include "mnlfa/model.hpp"
#include "mnlfa/penalty.hpp"
#include "mnlfa/simulate.hpp"

#include <Eigen/Dense>

#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

namespace mnlfa {

/// Malformed input file (bad CSV, missing column, non-numeric cell).
class InputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    [[nodiscard]] Index column(const std::string& name) const;  // -1 if absent
};

/// Comma-separated, first line is the header. Double quotes around a field are
/// stripped; embedded commas inside quotes are kept.
[[nodiscard]] CsvTable parse_csv(std::istream& in);
[[nodiscard]] CsvTable read_csv(const std::string& path);

/// Picks item and covariate columns by name. Empty item cells become missing;
/// covariate cells must all be present.
[[nodiscard]] Dataset dataset_from_table(const CsvTable& table, const ModelSpec& spec);
[[nodiscard]] Dataset load_dataset(const std::string& path, const ModelSpec& spec);

/// printf "%.12g"; NaN as "NA".
[[nodiscard]] std::string format_number(double v);

/// Items then covariates; missing responses written as empty cells.
void write_dataset(std::ostream& out, const Dataset& data);

/// Columns: parameter, block, estimate, std_error, penalized, se_caveat.
void write_estimates(std::ostream& out, const ParameterLayout& layout, const Eigen::VectorXd& estimates,
                     const Eigen::VectorXd& std_errors, const PenaltyConfig& pen,
                     const std::vector<bool>& caveat = {});

/// Reads an estimates (or truth) file back into a packed vector for `layout`.
/// Every packed coordinate must appear exactly once.
[[nodiscard]] Eigen::VectorXd read_estimates(const std::string& path, const ParameterLayout& layout);

void write_fit_summary(std::ostream& out, const FitResult& fit, const PenaltyConfig& pen, Index n_persons,
                       double wall_seconds, const std::vector<std::string>& warnings);

/// Header x,<f2:f1>,<f3:f1>,... then one row per grid point.
void write_curves(std::ostream& out, const std::vector<CurveRow>& rows, const ModelSpec& spec);

/// Columns: w0, loglik, penalty, objective, bic, active_deltas, converged, n_iter, status.
void write_path(std::ostream& out, const std::vector<PathPoint>& path);

}  // namespace mnlfa
