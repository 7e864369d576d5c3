#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "safetune/csv.hpp"

namespace safetune {

// Running minimum of feasible cost, tracked separately per bin id. NaN until
// a bin has a feasible row.
std::vector<double> running_bin_minimum(const std::vector<double>& f, const std::vector<std::size_t>& bin,
                                        const std::vector<char>& feasible);

struct RunSeries {
    std::string label;
    CsvTable table;
};

// Cost (with running per-bin minimum), q1 with kappa1, q2 with kappa2.
void plot_run(std::ostream& svg, const RunSeries& run, const std::vector<double>& kappa);
// Same three panels with one colour per run.
void plot_comparison(std::ostream& svg, const std::vector<RunSeries>& runs, const std::vector<double>& kappa);

}  // namespace safetune
