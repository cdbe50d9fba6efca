#include "dfa/stats.hpp"

#include <cmath>
#include <limits>

#include "dfa/errors.hpp"

namespace dfa::stats {

namespace {

// Lower regularized incomplete gamma P(a, x) via its power series.
double lower_series(double a, double x) {
  double ap = a;
  double sum = 1.0 / a;
  double del = sum;
  for (int i = 0; i < 500; ++i) {
    ap += 1.0;
    del *= x / ap;
    sum += del;
    if (std::fabs(del) < std::fabs(sum) * 1e-15) break;
  }
  return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Upper regularized incomplete gamma Q(a, x) via Lentz continued fraction.
double upper_cf(double a, double x) {
  const double tiny = std::numeric_limits<double>::min() / 1e-30;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i <= 500; ++i) {
    const double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
    b += 2.0;
    d = an * d + b;
    if (std::fabs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < 1e-15) break;
  }
  return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

}  // namespace

double upper_regularized_gamma(double a, double x) {
  if (a <= 0.0 || x < 0.0) {
    throw ContractError("upper_regularized_gamma requires a > 0 and x >= 0");
  }
  if (x == 0.0) return 1.0;
  if (x < a + 1.0) return 1.0 - lower_series(a, x);
  return upper_cf(a, x);
}

double chi_square_sf(double stat, int dof) {
  if (dof <= 0) throw ContractError("chi_square_sf requires dof > 0");
  if (stat <= 0.0) return 1.0;
  return upper_regularized_gamma(0.5 * dof, 0.5 * stat);
}

ChiSquareResult chi_square_independence(const std::vector<int64_t>& table, int rows,
                                        int cols) {
  if (rows <= 0 || cols <= 0 ||
      table.size() != static_cast<size_t>(rows) * static_cast<size_t>(cols)) {
    throw ContractError("contingency table size does not match rows*cols");
  }
  std::vector<int64_t> row_sum(static_cast<size_t>(rows), 0);
  std::vector<int64_t> col_sum(static_cast<size_t>(cols), 0);
  int64_t total = 0;
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const int64_t v = table[static_cast<size_t>(r) * cols + c];
      if (v < 0) throw ContractError("contingency table has a negative count");
      row_sum[static_cast<size_t>(r)] += v;
      col_sum[static_cast<size_t>(c)] += v;
      total += v;
    }
  }
  int live_rows = 0, live_cols = 0;
  for (int r = 0; r < rows; ++r) live_rows += row_sum[static_cast<size_t>(r)] > 0;
  for (int c = 0; c < cols; ++c) live_cols += col_sum[static_cast<size_t>(c)] > 0;

  ChiSquareResult res;
  res.dof = (live_rows - 1) * (live_cols - 1);
  if (total == 0 || res.dof <= 0) {
    res.dof = std::max(res.dof, 0);
    res.statistic = 0.0;
    res.p_value = 1.0;
    return res;
  }
  double stat = 0.0;
  for (int r = 0; r < rows; ++r) {
    if (row_sum[static_cast<size_t>(r)] == 0) continue;
    for (int c = 0; c < cols; ++c) {
      if (col_sum[static_cast<size_t>(c)] == 0) continue;
      const double expected = static_cast<double>(row_sum[static_cast<size_t>(r)]) *
                              static_cast<double>(col_sum[static_cast<size_t>(c)]) /
                              static_cast<double>(total);
      const double obs = static_cast<double>(table[static_cast<size_t>(r) * cols + c]);
      const double diff = obs - expected;
      stat += diff * diff / expected;
    }
  }
  res.statistic = stat;
  res.p_value = chi_square_sf(stat, res.dof);
  return res;
}

MeanStd mean_std(const std::vector<double>& xs) {
  MeanStd out;
  if (xs.empty()) return out;
  double sum = 0.0;
  for (double x : xs) sum += x;
  out.mean = sum / static_cast<double>(xs.size());
  if (xs.size() < 2) return out;
  double ss = 0.0;
  for (double x : xs) {
    const double d = x - out.mean;
    ss += d * d;
  }
  out.stddev = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  return out;
}

MeanStd mean_std_population(const std::vector<double>& xs) {
  MeanStd out;
  if (xs.empty()) return out;
  double sum = 0.0;
  for (double x : xs) sum += x;
  out.mean = sum / static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs) {
    const double d = x - out.mean;
    ss += d * d;
  }
  out.stddev = std::sqrt(ss / static_cast<double>(xs.size()));
  return out;
}

}  // namespace dfa::stats
