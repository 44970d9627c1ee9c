#include <doctest.h>

#include <cmath>

#include "segcl/rng.hpp"
#include "segcl/tensor.hpp"

using namespace segcl;

TEST_CASE("rng: derived streams are deterministic and tag-separated") {
  RngStream a = RngStream::derive(42, "test", 0);
  RngStream b = RngStream::derive(42, "test", 0);
  RngStream c = RngStream::derive(42, "other", 0);
  RngStream d = RngStream::derive(42, "test", 1);
  for (int i = 0; i < 16; ++i) {
    const std::uint64_t va = a.next_u64();
    CHECK(va == b.next_u64());
    CHECK(va != c.next_u64());  // astronomically unlikely to collide
    CHECK(va != d.next_u64());
  }
}

TEST_CASE("rng: uniform stays in [0,1) and has sane moments") {
  RngStream rng(7);
  double sum = 0, sum2 = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    double u = rng.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    sum += u;
    sum2 += u * u;
  }
  const double mean = sum / n;
  const double var = sum2 / n - mean * mean;
  CHECK(mean == doctest::Approx(0.5).epsilon(0.01));
  CHECK(var == doctest::Approx(1.0 / 12.0).epsilon(0.05));
}

TEST_CASE("rng: normal has sane moments") {
  RngStream rng(11);
  double sum = 0, sum2 = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    double g = rng.normal();
    sum += g;
    sum2 += g * g;
  }
  CHECK(sum / n == doctest::Approx(0.0).epsilon(0.02));
  CHECK(sum2 / n == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("rng: uniform_int covers the full range") {
  RngStream rng(3);
  int counts[5] = {0, 0, 0, 0, 0};
  for (int i = 0; i < 50000; ++i) {
    auto v = rng.uniform_int(0, 5);
    REQUIRE(v >= 0);
    REQUIRE(v < 5);
    counts[v] += 1;
  }
  for (int c : counts) CHECK(c > 9000);
}

TEST_CASE("rng: serialize round-trips the stream state") {
  RngStream rng(99);
  rng.normal();
  rng.uniform();
  const std::string state = rng.serialize();
  RngStream copy = RngStream::deserialize(state);
  for (int i = 0; i < 8; ++i) CHECK(rng.next_u64() == copy.next_u64());
}

TEST_CASE("tensor: shape arithmetic and invalid reshape") {
  Tensor<float> t({2, 3, 4});
  CHECK(t.numel() == 24);
  t.at3(1, 2, 3) = 5.0f;
  CHECK(t.data[23] == 5.0f);
  CHECK_THROWS_AS(t.reshape({5, 5}), Error);
  t.reshape({6, 4});
  CHECK(t.at2(5, 3) == 5.0f);
}
