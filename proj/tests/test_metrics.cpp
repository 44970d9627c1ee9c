#include <doctest.h>

#include <cmath>

#include "segcl/metrics.hpp"
#include "segcl/rng.hpp"

using namespace segcl;
using namespace segcl::metrics;

namespace {

Tensor<std::uint8_t> mask_of(std::vector<int> cells, int h = 4, int w = 4) {
  Tensor<std::uint8_t> m({h, w});
  for (int c : cells) m[c] = 1;
  return m;
}

MetricRecord rec(const std::string& cls, const std::string& slice, double dice, double uvd = 0) {
  MetricRecord r;
  r.method = "m";
  r.class_name = cls;
  r.slice_id = slice;
  r.dice = dice;
  r.uvd_um3 = uvd;
  return r;
}

}  // namespace

TEST_CASE("dice: identities") {
  auto a = mask_of({0, 1, 2});
  CHECK(dice(a, a) == 1.0);
  CHECK(dice(mask_of({0, 1}), mask_of({2, 3})) == 0.0);
  CHECK(dice(mask_of({0, 1, 4, 5}), mask_of({4, 5, 8, 9})) == doctest::Approx(0.5));
  CHECK(dice(mask_of({}), mask_of({})) == 1.0);  // empty-empty convention
}

TEST_CASE("dice: symmetric and rejects shape mismatch") {
  auto a = mask_of({0, 3, 7});
  auto b = mask_of({3, 7, 9, 11});
  CHECK(dice(a, b) == dice(b, a));
  Tensor<std::uint8_t> c({2, 3});
  CHECK_THROWS_AS(dice(a, c), Error);
}

TEST_CASE("uvd: identities and hand-computed spacing case") {
  auto gt = mask_of({0, 1, 2});
  CHECK(uvd_um3(gt, gt, {10.0, 4.0}, 111.0) == 0.0);

  // complement on an 8-pixel slice at unit spacing -> all 8 pixels are errors
  Tensor<std::uint8_t> p8({2, 4}), g8({2, 4});
  for (int i = 0; i < 8; ++i) p8[i] = i % 2, g8[i] = 1 - i % 2;
  CHECK(uvd_um3(p8, g8, {1.0, 1.0}, 1.0) == doctest::Approx(8.0));

  // 2 FP + 3 FN at spacing (10,4) um, thickness 111 um -> 5 * 4440
  Tensor<std::uint8_t> pred({4, 4}), gt2({4, 4});
  pred[0] = pred[1] = 1;                      // 2 FP
  gt2[5] = gt2[6] = gt2[7] = 1;               // 3 FN
  CHECK(uvd_um3(pred, gt2, {10.0, 4.0}, 111.0) == doctest::Approx(22200.0));
}

TEST_CASE("uvd: scales linearly in each spacing component") {
  auto pred = mask_of({0, 1});
  auto gt = mask_of({1, 2, 3});
  const double base = uvd_um3(pred, gt, {2.0, 3.0}, 5.0);
  CHECK(uvd_um3(pred, gt, {4.0, 3.0}, 5.0) == doctest::Approx(2 * base));
  CHECK(uvd_um3(pred, gt, {2.0, 9.0}, 5.0) == doctest::Approx(3 * base));
  CHECK(uvd_um3(pred, gt, {2.0, 3.0}, 10.0) == doctest::Approx(2 * base));
  CHECK_THROWS_AS(uvd_um3(pred, gt, {0.0, 3.0}, 5.0), Error);
}

TEST_CASE("dice/uvd: zero together exactly when masks are equal") {
  RngStream rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    Tensor<std::uint8_t> a({4, 4}), b({4, 4});
    for (auto& v : a.data) v = rng.uniform() < 0.4;
    for (auto& v : b.data) v = rng.uniform() < 0.4;
    const bool equal = a.data == b.data;
    const double u = uvd_um3(a, b, {1.0, 1.0}, 1.0);
    const double d = dice(a, b);
    CHECK((u == 0.0) == equal);
    if (equal) CHECK(d == 1.0);
    if (!equal) CHECK(d < 1.0);
  }
}

TEST_CASE("relativize: baseline against itself is all zeros") {
  std::vector<MetricRecord> records{rec("a", "s1", 0.8, 100), rec("a", "s2", 0.6, 200),
                                    rec("b", "s1", 0.4, 300)};
  RelTable t = relativize(records, records);
  for (const auto& row : t.per_class) {
    CHECK(row.dice_rel == 0.0);
    CHECK(row.uvd_rel == 0.0);
  }
  CHECK(t.all.dice_rel == 0.0);
  CHECK(t.all.cells == 3);
}

TEST_CASE("relativize: reproduces the reference rel arithmetic to 0.01") {
  std::vector<MetricRecord> method{rec("a", "s1", 0.6388)};
  std::vector<MetricRecord> baseline{rec("a", "s1", 0.3457)};
  RelTable t = relativize(method, baseline);
  CHECK(t.all.dice_rel == doctest::Approx(29.31).epsilon(0.0004));
  CHECK(t.all.dice_abs == doctest::Approx(63.88).epsilon(1e-6));
}

TEST_CASE("relativize: opposite class shifts cancel in the grand mean") {
  std::vector<MetricRecord> method{rec("a", "s1", 0.6), rec("b", "s1", 0.4)};
  std::vector<MetricRecord> baseline{rec("a", "s1", 0.5), rec("b", "s1", 0.5)};
  RelTable t = relativize(method, baseline);
  CHECK(t.all.dice_rel == doctest::Approx(0.0));
  CHECK(t.per_class.size() == 2);
  CHECK(t.per_class[0].dice_rel == doctest::Approx(10.0));
  CHECK(t.per_class[1].dice_rel == doctest::Approx(-10.0));
}

TEST_CASE("relativize: grand mean equals the mean of per-cell rel values") {
  RngStream rng(9);
  std::vector<MetricRecord> method, baseline;
  double sum_rel = 0;
  for (int i = 0; i < 24; ++i) {
    const std::string cls = "c" + std::to_string(i % 3);
    const std::string slice = "s" + std::to_string(i / 3);
    const double dm = rng.uniform(), db = rng.uniform();
    method.push_back(rec(cls, slice, dm));
    baseline.push_back(rec(cls, slice, db));
    sum_rel += 100.0 * (dm - db);
  }
  RelTable t = relativize(method, baseline);
  CHECK(t.all.dice_rel == doctest::Approx(sum_rel / 24).epsilon(1e-9));
}

TEST_CASE("relativize: missing baseline cell names the gap") {
  std::vector<MetricRecord> method{rec("a", "s1", 0.6), rec("b", "s9", 0.4)};
  std::vector<MetricRecord> baseline{rec("a", "s1", 0.5)};
  CHECK_THROWS_WITH_AS(relativize(method, baseline), doctest::Contains("s9"), Error);
}

TEST_CASE("intergrader: method identical to one grader is always within variability") {
  // method == grader 1, so method-vs-g2 equals the g1-vs-g2 inter-grader
  // value on every cell; ties count.
  std::vector<GraderMetric> method;
  std::vector<GraderPairMetric> pairs;
  RngStream rng(3);
  for (int s = 0; s < 6; ++s)
    for (int c = 0; c < 2; ++c) {
      const std::string slice = "s" + std::to_string(s);
      const std::string cls = "c" + std::to_string(c);
      const double d12 = rng.uniform();
      method.push_back({slice, cls, 1, 1.0});    // vs itself
      method.push_back({slice, cls, 2, d12});    // vs grader 2
      pairs.push_back({slice, cls, 1, 2, d12});
    }
  CHECK(intergrader_fraction(method, pairs, true) == 1.0);
}

TEST_CASE("intergrader: method worse than every pair scores zero") {
  std::vector<GraderMetric> method;
  std::vector<GraderPairMetric> pairs;
  for (int s = 0; s < 4; ++s) {
    const std::string slice = "s" + std::to_string(s);
    method.push_back({slice, "a", 1, 0.1});
    method.push_back({slice, "a", 2, 0.2});
    pairs.push_back({slice, "a", 1, 2, 0.9});
  }
  CHECK(intergrader_fraction(method, pairs, true) == 0.0);
  // with lower-is-better the same numbers flip to fully within variability
  CHECK(intergrader_fraction(method, pairs, false) == 1.0);
}

TEST_CASE("intergrader: synthetic 3-grader grid matches exhaustive enumeration") {
  RngStream rng(17);
  std::vector<GraderMetric> method;
  std::vector<GraderPairMetric> pairs;
  const int slices = 10, classes = 3;
  for (int s = 0; s < slices; ++s)
    for (int c = 0; c < classes; ++c) {
      const std::string slice = "s" + std::to_string(s);
      const std::string cls = "c" + std::to_string(c);
      for (int g = 1; g <= 3; ++g) method.push_back({slice, cls, g, rng.uniform()});
      pairs.push_back({slice, cls, 1, 2, rng.uniform()});
      pairs.push_back({slice, cls, 1, 3, rng.uniform()});
      pairs.push_back({slice, cls, 2, 3, rng.uniform()});
    }

  // independent exhaustive count over the same grids
  int within = 0;
  for (int s = 0; s < slices; ++s)
    for (int c = 0; c < classes; ++c) {
      const std::string slice = "s" + std::to_string(s);
      const std::string cls = "c" + std::to_string(c);
      bool ok = false;
      for (const auto& m : method)
        for (const auto& p : pairs)
          if (m.slice_id == slice && m.class_name == cls && p.slice_id == slice &&
              p.class_name == cls && m.value >= p.value)
            ok = true;
      within += ok ? 1 : 0;
    }
  const double expected = static_cast<double>(within) / (slices * classes);
  CHECK(intergrader_fraction(method, pairs, true) == doctest::Approx(expected));
}

TEST_CASE("intergrader: fewer than two graders rejected") {
  std::vector<GraderMetric> method{{"s", "c", 1, 0.5}};
  std::vector<GraderPairMetric> pairs;
  CHECK_THROWS_AS(intergrader_fraction(method, pairs, true), Error);
}
