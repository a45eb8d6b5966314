#pragma once

#include <span>
#include <vector>

namespace lrne {

struct RankSumResult {
  double u_statistic = 0.0;  // Mann-Whitney U of the first sample
  double rank_sum = 0.0;     // rank sum W of the first sample (midranks)
  double p_value = 0.0;      // two-sided
  bool exact = false;
};

/// Wilcoxon rank-sum / Mann-Whitney test with midranks for ties. Uses the
/// exact permutation distribution when n+m <= 16 (counting over subsets,
/// so ties stay exact) and a tie-corrected normal approximation with
/// continuity correction otherwise. Two-sided p; samples must be non-empty.
RankSumResult wilcoxon_rank_sum(std::span<const double> a, std::span<const double> b);

/// Force one branch; the automatic version dispatches on n+m.
RankSumResult wilcoxon_rank_sum_exact(std::span<const double> a, std::span<const double> b);
RankSumResult wilcoxon_rank_sum_approx(std::span<const double> a, std::span<const double> b);

struct KruskalResult {
  double h_statistic = 0.0;  // tie-corrected
  double p_value = 0.0;      // chi-square upper tail, dof = groups-1
};

/// Kruskal-Wallis H test across two or more non-empty groups.
KruskalResult kruskal_wallis(const std::vector<std::vector<double>>& groups);

/// Glass's delta: (mean(treatment) - mean(control)) / sd(control), with the
/// unbiased (n-1) control standard deviation. Zero control variance is a
/// hard error.
double glass_delta(std::span<const double> treatment, std::span<const double> control);

/// Upper tail of the standard normal distribution.
double normal_sf(double z);

/// Upper tail of the chi-square distribution via the regularized upper
/// incomplete gamma function.
double chi_square_sf(double x, int dof);

/// Midranks of the pooled sample, in input order.
std::vector<double> midranks(std::span<const double> values);

}  // namespace lrne
