#pragma once

#include <cstdint>
#include <vector>

namespace dfa::stats {

struct ChiSquareResult {
  double statistic = 0.0;
  int dof = 0;
  double p_value = 1.0;
};

// Regularized upper incomplete gamma Q(a, x) = Gamma(a, x) / Gamma(a).
// Series expansion for x < a + 1, continued fraction otherwise.
double upper_regularized_gamma(double a, double x);

// Survival function of the chi-square distribution: P(X >= stat | dof).
double chi_square_sf(double stat, int dof);

// Pearson independence test on an r x c contingency table (row-major counts).
// Rows or columns whose marginal is zero are dropped before computing the
// statistic so expected counts stay positive.
ChiSquareResult chi_square_independence(const std::vector<int64_t>& table, int rows,
                                        int cols);

// Mean and sample standard deviation (n-1 denominator; 0 when n < 2).
struct MeanStd {
  double mean = 0.0;
  double stddev = 0.0;
};
MeanStd mean_std(const std::vector<double>& xs);

// Population variant (divides by n, not n-1).
MeanStd mean_std_population(const std::vector<double>& xs);

}  // namespace dfa::stats
