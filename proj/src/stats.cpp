#include "lrne/stats.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>

namespace lrne {

namespace {

double tie_term(std::span<const double> pooled) {
  std::map<double, int> counts;
  for (double v : pooled) ++counts[v];
  double term = 0.0;
  for (const auto& [value, t] : counts)
    term += static_cast<double>(t) * t * t - t;
  return term;
}

double gamma_p_series(double a, double x) {
  double ap = a;
  double sum = 1.0 / a;
  double del = sum;
  for (int i = 0; i < 1000; ++i) {
    ap += 1.0;
    del *= x / ap;
    sum += del;
    if (std::abs(del) < std::abs(sum) * 1e-16) break;
  }
  return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

double gamma_q_continued_fraction(double a, double x) {
  constexpr double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i <= 1000; ++i) {
    const double an = -static_cast<double>(i) * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < 1e-16) break;
  }
  return h * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

RankSumResult rank_stats(std::span<const double> a, std::span<const double> b) {
  std::vector<double> pooled(a.begin(), a.end());
  pooled.insert(pooled.end(), b.begin(), b.end());
  const std::vector<double> ranks = midranks(pooled);
  RankSumResult r;
  for (std::size_t i = 0; i < a.size(); ++i) r.rank_sum += ranks[i];
  const double n = static_cast<double>(a.size());
  r.u_statistic = r.rank_sum - n * (n + 1.0) / 2.0;
  return r;
}

}  // namespace

std::vector<double> midranks(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t i, std::size_t j) { return values[i] < values[j]; });
  std::vector<double> ranks(n, 0.0);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

double normal_sf(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

double chi_square_sf(double x, int dof) {
  if (dof < 1) throw std::invalid_argument("chi-square needs at least one degree of freedom");
  if (x <= 0.0) return 1.0;
  const double a = dof / 2.0;
  const double xx = x / 2.0;
  if (xx < a + 1.0) return 1.0 - gamma_p_series(a, xx);
  return gamma_q_continued_fraction(a, xx);
}

RankSumResult wilcoxon_rank_sum_exact(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty())
    throw std::invalid_argument("rank-sum test needs two non-empty samples");
  const std::size_t n = a.size();
  const std::size_t total = n + b.size();
  if (total > 24)
    throw std::invalid_argument("exact rank-sum enumeration is limited to n+m <= 24");

  std::vector<double> pooled(a.begin(), a.end());
  pooled.insert(pooled.end(), b.begin(), b.end());
  const std::vector<double> ranks = midranks(pooled);
  // doubled midranks are exact integers
  std::vector<long long> r2(total);
  long long sum_all = 0;
  for (std::size_t i = 0; i < total; ++i) {
    r2[i] = std::llround(2.0 * ranks[i]);
    sum_all += r2[i];
  }
  long long w2_obs = 0;
  for (std::size_t i = 0; i < n; ++i) w2_obs += r2[i];

  // ways[k][s]: subsets of size k with doubled-rank sum s
  std::vector<std::vector<double>> ways(
      n + 1, std::vector<double>(static_cast<std::size_t>(sum_all) + 1, 0.0));
  ways[0][0] = 1.0;
  for (std::size_t item = 0; item < total; ++item) {
    const std::size_t cap = std::min(item + 1, n);
    for (std::size_t k = cap; k >= 1; --k) {
      for (long long s = sum_all - r2[item]; s >= 0; --s) {
        const double w = ways[k - 1][static_cast<std::size_t>(s)];
        if (w != 0.0) ways[k][static_cast<std::size_t>(s + r2[item])] += w;
      }
    }
  }
  double below = 0.0, above = 0.0, count = 0.0;
  for (long long s = 0; s <= sum_all; ++s) {
    const double w = ways[n][static_cast<std::size_t>(s)];
    if (w == 0.0) continue;
    count += w;
    if (s <= w2_obs) below += w;
    if (s >= w2_obs) above += w;
  }
  RankSumResult r = rank_stats(a, b);
  r.exact = true;
  r.p_value = std::min(1.0, 2.0 * std::min(below / count, above / count));
  return r;
}

RankSumResult wilcoxon_rank_sum_approx(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty())
    throw std::invalid_argument("rank-sum test needs two non-empty samples");
  const double n = static_cast<double>(a.size());
  const double m = static_cast<double>(b.size());
  const double total = n + m;

  std::vector<double> pooled(a.begin(), a.end());
  pooled.insert(pooled.end(), b.begin(), b.end());

  RankSumResult r = rank_stats(a, b);
  r.exact = false;
  const double mean_w = n * (total + 1.0) / 2.0;
  const double correction = tie_term(pooled) / (total * (total - 1.0));
  const double var_w = n * m / 12.0 * ((total + 1.0) - correction);
  if (var_w <= 0.0) {
    r.p_value = 1.0;
    return r;
  }
  const double diff = r.rank_sum - mean_w;
  // continuity correction pulls the statistic half a rank toward the mean
  double adjusted = 0.0;
  if (diff > 0.5) {
    adjusted = diff - 0.5;
  } else if (diff < -0.5) {
    adjusted = diff + 0.5;
  }
  const double z = adjusted / std::sqrt(var_w);
  r.p_value = std::min(1.0, 2.0 * normal_sf(std::abs(z)));
  return r;
}

RankSumResult wilcoxon_rank_sum(std::span<const double> a, std::span<const double> b) {
  if (a.size() + b.size() <= 16) return wilcoxon_rank_sum_exact(a, b);
  return wilcoxon_rank_sum_approx(a, b);
}

KruskalResult kruskal_wallis(const std::vector<std::vector<double>>& groups) {
  if (groups.size() < 2)
    throw std::invalid_argument("kruskal-wallis needs at least two groups");
  std::vector<double> pooled;
  for (const auto& g : groups) {
    if (g.empty()) throw std::invalid_argument("kruskal-wallis groups must be non-empty");
    pooled.insert(pooled.end(), g.begin(), g.end());
  }
  const double total = static_cast<double>(pooled.size());
  const std::vector<double> ranks = midranks(pooled);

  double h = 0.0;
  std::size_t offset = 0;
  for (const auto& g : groups) {
    double rank_sum = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) rank_sum += ranks[offset + i];
    h += rank_sum * rank_sum / static_cast<double>(g.size());
    offset += g.size();
  }
  h = 12.0 / (total * (total + 1.0)) * h - 3.0 * (total + 1.0);

  const double correction = 1.0 - tie_term(pooled) / (total * total * total - total);
  KruskalResult result;
  if (correction <= 0.0) {
    // all values identical: no evidence against the null
    result.h_statistic = 0.0;
    result.p_value = 1.0;
    return result;
  }
  result.h_statistic = h / correction;
  result.p_value = chi_square_sf(result.h_statistic, static_cast<int>(groups.size()) - 1);
  return result;
}

double glass_delta(std::span<const double> treatment, std::span<const double> control) {
  if (treatment.empty() || control.size() < 2)
    throw std::invalid_argument("glass's delta needs a treatment sample and >= 2 controls");
  const double mean_t =
      std::accumulate(treatment.begin(), treatment.end(), 0.0) /
      static_cast<double>(treatment.size());
  const double mean_c = std::accumulate(control.begin(), control.end(), 0.0) /
                        static_cast<double>(control.size());
  double ss = 0.0;
  for (double v : control) ss += (v - mean_c) * (v - mean_c);
  const double sd = std::sqrt(ss / (static_cast<double>(control.size()) - 1.0));
  if (sd == 0.0)
    throw std::domain_error("glass's delta is undefined for a zero-variance control group");
  return (mean_t - mean_c) / sd;
}

}  // namespace lrne
