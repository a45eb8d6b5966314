#include <doctest.h>

#include <cmath>
#include <vector>

#include "lrne/stats.hpp"

using namespace lrne;

namespace {
std::vector<double> vec(std::initializer_list<double> v) { return std::vector<double>(v); }
}  // namespace

TEST_CASE("midranks average over ties") {
  const std::vector<double> values{3, 1, 4, 1, 5};
  const std::vector<double> r = midranks(values);
  CHECK(r[0] == 3.0);
  CHECK(r[1] == 1.5);
  CHECK(r[2] == 4.0);
  CHECK(r[3] == 1.5);
  CHECK(r[4] == 5.0);
}

TEST_CASE("exact rank-sum on fully separated tiny samples") {
  const auto a = vec({1, 2});
  const auto b = vec({3, 4});
  const RankSumResult r = wilcoxon_rank_sum(a, b);
  CHECK(r.exact);
  CHECK(r.rank_sum == 3.0);
  CHECK(r.u_statistic == 0.0);
  CHECK(r.p_value == doctest::Approx(2.0 / 6.0).epsilon(1e-12));

  // symmetric in the sample order
  const RankSumResult rev = wilcoxon_rank_sum(b, a);
  CHECK(rev.p_value == doctest::Approx(r.p_value).epsilon(1e-12));
  CHECK(rev.u_statistic == 4.0);
}

TEST_CASE("exact rank-sum 5v5 separated gives 2/252") {
  const auto a = vec({1, 2, 3, 4, 5});
  const auto b = vec({6, 7, 8, 9, 10});
  const RankSumResult r = wilcoxon_rank_sum(a, b);
  CHECK(r.exact);
  CHECK(r.p_value == doctest::Approx(2.0 / 252.0).epsilon(1e-12));
}

TEST_CASE("exact rank-sum handles ties by hand-checked enumeration") {
  // pooled {1,2,2,2,3}: midranks 1, 3, 3, 3, 5; W(a)=7; doubled sums over
  // C(5,3)=10 subsets give P(W<=7)=0.3, P(W>=7)=1 -> p=0.6
  const auto a = vec({1, 2, 2});
  const auto b = vec({2, 3});
  const RankSumResult r = wilcoxon_rank_sum(a, b);
  CHECK(r.exact);
  CHECK(r.rank_sum == 7.0);
  CHECK(r.p_value == doctest::Approx(0.6).epsilon(1e-12));
}

TEST_CASE("identical samples sit at the null center") {
  const auto a = vec({2, 2});
  const auto b = vec({2, 2});
  CHECK(wilcoxon_rank_sum(a, b).p_value == doctest::Approx(1.0));
  const auto big_a = vec({5, 5, 5, 5, 5, 5, 5, 5, 5, 5});
  const auto big_b = vec({5, 5, 5, 5, 5, 5, 5, 5, 5});
  const RankSumResult r = wilcoxon_rank_sum(big_a, big_b);  // n+m=19: approx
  CHECK(!r.exact);
  CHECK(r.p_value == doctest::Approx(1.0));
}

TEST_CASE("dispatch switches to the approximation past 16 values") {
  const auto a8 = vec({1, 2, 3, 4, 5, 6, 7, 8});
  const auto b8 = vec({1.5, 2.5, 3.5, 4.5, 5.5, 6.5, 7.5, 8.5});
  CHECK(wilcoxon_rank_sum(a8, b8).exact);
  const auto b9 = vec({1.5, 2.5, 3.5, 4.5, 5.5, 6.5, 7.5, 8.5, 9.5});
  CHECK(!wilcoxon_rank_sum(a8, b9).exact);
}

TEST_CASE("normal approximation tracks the exact tail at n=m=8") {
  const std::vector<std::pair<std::vector<double>, std::vector<double>>> cases{
      {vec({1, 5, 7, 11, 14, 16, 19, 22}), vec({2, 4, 8, 10, 13, 17, 20, 23})},
      {vec({1, 2, 3, 4, 5, 6, 7, 8}), vec({5, 6, 7, 8, 9, 10, 11, 12})},
      {vec({1, 2, 2, 3, 4, 5, 6, 7}), vec({2, 3, 3, 4, 5, 6, 7, 8})},
      {vec({1, 2, 3, 4, 5, 6, 7, 8}), vec({9, 10, 11, 12, 13, 14, 15, 16})},
  };
  for (const auto& [a, b] : cases) {
    const RankSumResult exact = wilcoxon_rank_sum_exact(a, b);
    const RankSumResult approx = wilcoxon_rank_sum_approx(a, b);
    CHECK(std::abs(exact.p_value - approx.p_value) < 0.02);
  }
}

TEST_CASE("approximation flags strong separation on larger samples") {
  std::vector<double> a(20), b(20);
  for (int i = 0; i < 20; ++i) {
    a[static_cast<std::size_t>(i)] = i;
    b[static_cast<std::size_t>(i)] = i + 100;
  }
  const RankSumResult r = wilcoxon_rank_sum(a, b);
  CHECK(!r.exact);
  CHECK(r.p_value > 0.0);
  CHECK(r.p_value < 1e-6);
}

TEST_CASE("rank-sum input validation") {
  const std::vector<double> empty;
  const auto a = vec({1, 2});
  CHECK_THROWS(wilcoxon_rank_sum(empty, a));
  CHECK_THROWS(wilcoxon_rank_sum(a, empty));
}

TEST_CASE("kruskal-wallis on three separated pairs") {
  const std::vector<std::vector<double>> groups{{1, 2}, {3, 4}, {5, 6}};
  const KruskalResult r = kruskal_wallis(groups);
  CHECK(r.h_statistic == doctest::Approx(32.0 / 7.0).epsilon(1e-12));
  // dof 2: the chi-square tail is exactly exp(-H/2)
  CHECK(r.p_value == doctest::Approx(std::exp(-16.0 / 7.0)).epsilon(1e-10));
}

TEST_CASE("kruskal-wallis on fully separated triples") {
  const std::vector<std::vector<double>> groups{{1, 2, 3}, {11, 12, 13}, {21, 22, 23}};
  const KruskalResult r = kruskal_wallis(groups);
  CHECK(r.h_statistic == doctest::Approx(7.2).epsilon(1e-12));
  CHECK(r.p_value == doctest::Approx(std::exp(-3.6)).epsilon(1e-10));
}

TEST_CASE("kruskal-wallis degenerate and invalid inputs") {
  const std::vector<std::vector<double>> same{{4, 4}, {4, 4}, {4, 4}};
  const KruskalResult r = kruskal_wallis(same);
  CHECK(r.h_statistic == 0.0);
  CHECK(r.p_value == 1.0);
  CHECK_THROWS(kruskal_wallis({{1.0, 2.0}}));
  CHECK_THROWS(kruskal_wallis({{1.0}, {}}));
}

TEST_CASE("chi-square survival function against closed forms") {
  // dof 2: exp(-x/2)
  for (double x : {1.0, 5.0, 10.0})
    CHECK(chi_square_sf(x, 2) == doctest::Approx(std::exp(-x / 2.0)).epsilon(1e-12));
  // dof 4: exp(-x/2) * (1 + x/2)
  CHECK(chi_square_sf(2.0, 4) ==
        doctest::Approx(std::exp(-1.0) * 2.0).epsilon(1e-12));
  // dof 1: 2 * normal_sf(sqrt(x)); 3.8415 is the 5% critical value
  CHECK(chi_square_sf(3.841458820694124, 1) == doctest::Approx(0.05).epsilon(1e-9));
  CHECK(chi_square_sf(0.0, 3) == 1.0);
  CHECK(chi_square_sf(-1.0, 3) == 1.0);
  CHECK_THROWS(chi_square_sf(1.0, 0));
}

TEST_CASE("normal survival function") {
  CHECK(normal_sf(0.0) == doctest::Approx(0.5));
  CHECK(normal_sf(1.959963984540054) == doctest::Approx(0.025).epsilon(1e-9));
  CHECK(normal_sf(-1.0) == doctest::Approx(1.0 - normal_sf(1.0)).epsilon(1e-12));
}

TEST_CASE("glass's delta") {
  const auto t = vec({3, 5});
  const auto c = vec({0, 2});
  CHECK(glass_delta(t, c) == doctest::Approx(3.0 / std::sqrt(2.0)).epsilon(1e-12));
  const auto flat = vec({1, 1, 1});
  CHECK_THROWS(glass_delta(t, flat));
  CHECK_THROWS(glass_delta(t, vec({1})));
}
