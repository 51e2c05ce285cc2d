#include "drag/error.hpp"
#include "drag/metrics.hpp"

#include <doctest.h>

#include <random>

using namespace drag::metrics;
using drag::metrics::Index;

namespace {

double pair_count_auc(const std::vector<double>& s, const std::vector<int>& y) {
  double wins = 0.0;
  double pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (y[i] != 1) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[j] != 0) continue;
      pairs += 1.0;
      if (s[i] > s[j]) wins += 1.0;
      if (s[i] == s[j]) wins += 0.5;
    }
  }
  return wins / pairs;
}

}  // namespace

TEST_CASE("f1_macro worked examples") {
  const std::vector<int> y{1, 1, 0, 0};
  const auto all = all_indices(4);
  CHECK(f1_macro(std::vector<double>{0.9, 0.8, 0.1, 0.3}, y, all) == 1.0);
  CHECK(f1_macro(std::vector<double>{0.9, 0.2, 0.8, 0.1}, y, all) == 0.5);
  CHECK(f1_macro(std::vector<double>{0.9, 0.9, 0.9}, std::vector<int>{1, 1, 1}, all_indices(3)) == 0.5);
}

TEST_CASE("f1 threshold is strict and the mask restricts nodes") {
  const std::vector<int> y{1, 0, 1};
  auto c = confusion(std::vector<double>{0.5, 0.4, 0.7}, y, all_indices(3));
  CHECK(c.tp == 1);
  CHECK(c.fn == 1);
  CHECK(c.tn == 1);
  const std::vector<Index> mask{1, 2};
  CHECK(f1_macro(std::vector<double>{0.0, 0.4, 0.7}, y, mask) == 1.0);
  CHECK_THROWS_AS(f1_macro(std::vector<double>{}, std::vector<int>{}, std::vector<Index>{}), drag::ValidationError);
}

TEST_CASE("auc simple cases") {
  const std::vector<int> y{0, 1, 0, 1};
  CHECK(auc(std::vector<double>{0.1, 0.9, 0.2, 0.8}, y, all_indices(4)) == 1.0);
  CHECK(auc(std::vector<double>{0.3, 0.3, 0.3, 0.3}, y, all_indices(4)) == 0.5);
  CHECK_THROWS_AS(auc(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 1}, all_indices(2)), drag::ValidationError);
}

TEST_CASE("auc matches the pair-count oracle on random instances with ties") {
  std::mt19937_64 rng(21);
  for (int t = 0; t < 300; ++t) {
    const std::size_t n = 2 + rng() % 49;
    std::vector<double> s(n);
    std::vector<int> y(n);
    const int levels = 1 + static_cast<int>(rng() % 8);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = static_cast<double>(rng() % levels) / levels;
      y[i] = static_cast<int>(rng() % 2);
    }
    y[0] = 0;
    y[1] = 1;
    const double a = auc(s, y, all_indices(n));
    CHECK(a == pair_count_auc(s, y));

    std::vector<double> neg(n), cube(n), affine(n);
    for (std::size_t i = 0; i < n; ++i) {
      neg[i] = -s[i];
      cube[i] = s[i] * s[i] * s[i];
      affine[i] = 3.0 * s[i] - 7.0;
    }
    CHECK(a + auc(neg, y, all_indices(n)) == 1.0);
    CHECK(auc(cube, y, all_indices(n)) == a);
    CHECK(auc(affine, y, all_indices(n)) == a);
  }
}

TEST_CASE("evaluate fills both metrics") {
  const std::vector<int> y{1, 0, 0, 1, 0};
  auto r = evaluate(std::vector<double>{0.7, 0.6, 0.1, 0.4, 0.2}, y, all_indices(5));
  CHECK(r.n_eval == 5);
  CHECK(r.auc == doctest::Approx(pair_count_auc({0.7, 0.6, 0.1, 0.4, 0.2}, y)));
  // tp=1 fp=1 fn=1 tn=2: fraud F1 = 0.5, normal F1 = 2/3
  CHECK(r.f1_macro == doctest::Approx((0.5 + 2.0 / 3.0) / 2.0));
}
