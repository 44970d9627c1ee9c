#include <doctest.h>

#include <cmath>
#include <vector>

#include "segcl/losses.hpp"
#include "segcl/rng.hpp"

using namespace segcl;
using namespace segcl::losses;

namespace {

// Independent brute-force NT-Xent: loops every (i,k) pair and recomputes
// cosines from scratch. This is the oracle the implementation is checked
// against; it shares no code with the implementation path.
double ntxent_brute(const Tensor<double>& zp, const Tensor<double>& zpp, double tau,
                    bool include_positive) {
  const int n = zp.shape[0], d = zp.shape[1];
  auto cos = [d](const double* a, const double* b) {
    double dot = 0, na = 0, nb = 0;
    for (int k = 0; k < d; ++k) {
      dot += a[k] * b[k];
      na += a[k] * a[k];
      nb += b[k] * b[k];
    }
    return dot / (std::sqrt(na) * std::sqrt(nb));
  };
  double total = 0;
  for (int dir = 0; dir < 2; ++dir) {
    const Tensor<double>& anchors = dir == 0 ? zp : zpp;
    const Tensor<double>& cands = dir == 0 ? zpp : zp;
    for (int i = 0; i < n; ++i) {
      const double pos = cos(anchors.ptr() + i * d, cands.ptr() + i * d);
      double den = 0;
      for (int k = 0; k < n; ++k) {
        if (!include_positive && k == i) continue;
        den += std::exp(cos(anchors.ptr() + i * d, cands.ptr() + k * d) / tau);
      }
      total += -std::log(std::exp(pos / tau) / den);
    }
  }
  return total;
}

Tensor<double> random_batch(int n, int d, std::uint64_t seed) {
  Tensor<double> z({n, d});
  RngStream rng(seed);
  for (auto& v : z.data) v = rng.normal();
  return z;
}

model::ModelConfig tiny_proj_config(int dim, int hidden) {
  model::ModelConfig cfg;
  cfg.levels = 3;
  cfg.base_filters = 4;
  cfg.num_classes = 2;
  cfg.input_size = 16;
  cfg.projection_dim = dim;
  cfg.predictor_hidden = hidden;
  return cfg;
}

}  // namespace

TEST_CASE("cosine_similarity: unit identities") {
  Tensor<double> u({3});
  u.data = {1.0, 2.0, -0.5};
  Tensor<double> nu({3});
  nu.data = {-1.0, -2.0, 0.5};
  CHECK(cosine_similarity(u, u) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(cosine_similarity(u, nu) == doctest::Approx(-1.0).epsilon(1e-12));
  Tensor<double> e1({2}), e2({2});
  e1.data = {1.0, 0.0};
  e2.data = {0.0, 1.0};
  CHECK(cosine_similarity(e1, e2) == doctest::Approx(0.0));
}

TEST_CASE("cosine_similarity: zero-norm input yields 0") {
  Tensor<double> z({3}), u({3});
  u.data = {1.0, 0.0, 0.0};
  CHECK(cosine_similarity(z, u) == 0.0);
}

TEST_CASE("log_dice: perfect binary prediction gives ~0 loss") {
  Tensor<float> p({1, 1, 4, 4});
  Tensor<std::uint8_t> y({1, 1, 4, 4});
  for (int i = 0; i < 5; ++i) {
    p[i] = 1.0f;
    y[i] = 1;
  }
  CHECK(log_dice_loss<float>(p, y, 1e-6f) <= 1e-6);
}

TEST_CASE("log_dice: half-overlap case equals ln 2") {
  // |y|=4, |p|=4, overlap 2 -> dice 0.5 -> loss ln 2
  Tensor<float> p({1, 1, 4, 4});
  Tensor<std::uint8_t> y({1, 1, 4, 4});
  for (int i = 0; i < 4; ++i) y[i] = 1;
  for (int i = 2; i < 6; ++i) p[i] = 1.0f;
  CHECK(log_dice_loss<float>(p, y, 1e-6f) == doctest::Approx(std::log(2.0)).epsilon(1e-5));
}

TEST_CASE("log_dice: empty prediction on empty truth scores 0") {
  Tensor<float> p({1, 2, 4, 4});
  Tensor<std::uint8_t> y({1, 2, 4, 4});
  CHECK(log_dice_loss<float>(p, y, 1e-6f) == doctest::Approx(0.0));
}

TEST_CASE("log_dice: shape mismatch and non-binary masks rejected") {
  Tensor<float> p({1, 1, 4, 4});
  Tensor<std::uint8_t> y({1, 1, 4, 2});
  CHECK_THROWS_AS(log_dice_loss<float>(p, y, 1e-6f), Error);
  Tensor<std::uint8_t> y2({1, 1, 4, 4});
  y2[0] = 2;
  CHECK_THROWS_AS(log_dice_loss<float>(p, y2, 1e-6f), Error);
}

TEST_CASE("log_dice: permutation-invariant and strictly decreasing in overlap") {
  // 3x3 grid, |y| = |p| = 3; loss must strictly decrease as overlap grows.
  auto build = [](std::vector<int> cells) {
    Tensor<float> t({1, 1, 3, 3});
    for (int c : cells) t[c] = 1.0f;
    return t;
  };
  Tensor<std::uint8_t> y({1, 1, 3, 3});
  for (int c : {0, 1, 2}) y[c] = 1;
  double prev = 1e9;
  for (int overlap = 0; overlap <= 3; ++overlap) {
    std::vector<int> cells;
    for (int i = 0; i < overlap; ++i) cells.push_back(i);
    for (int i = 0; i < 3 - overlap; ++i) cells.push_back(3 + i);
    const double loss = log_dice_loss<float>(build(cells), y, 1e-6f);
    CHECK(loss < prev);
    prev = loss;
  }
  // pixel permutation: roll everything by 4 cells
  Tensor<float> p = build({0, 1, 5});
  Tensor<float> p_perm({1, 1, 3, 3});
  Tensor<std::uint8_t> y_perm({1, 1, 3, 3});
  for (int i = 0; i < 9; ++i) {
    p_perm[(i + 4) % 9] = p[i];
    y_perm[(i + 4) % 9] = y[i];
  }
  CHECK(log_dice_loss<float>(p, y, 1e-6f) ==
        doctest::Approx(log_dice_loss<float>(p_perm, y_perm, 1e-6f)).epsilon(1e-7));
}

TEST_CASE("log_dice: analytic gradient matches central finite differences") {
  Tensor<double> p({2, 2, 3, 3});
  Tensor<std::uint8_t> y({2, 2, 3, 3});
  RngStream rng(17);
  for (auto& v : p.data) v = 0.05 + 0.9 * rng.uniform();
  for (auto& v : y.data) v = rng.uniform() < 0.4 ? 1 : 0;
  Tensor<double> dp;
  log_dice_loss<double>(p, y, 1e-6, &dp);
  const double h = 1e-7;
  for (std::size_t i = 0; i < p.numel(); i += 7) {
    const double orig = p[i];
    p[i] = orig + h;
    const double lp = log_dice_loss<double>(p, y, 1e-6);
    p[i] = orig - h;
    const double lm = log_dice_loss<double>(p, y, 1e-6);
    p[i] = orig;
    CHECK(dp[i] == doctest::Approx((lp - lm) / (2 * h)).epsilon(1e-5));
  }
}

TEST_CASE("ntxent: identical unit projections (N=2) give exactly zero") {
  Tensor<double> z({2, 2});
  z.at2(0, 0) = 1.0;
  z.at2(1, 0) = 1.0;
  const double loss = ntxent_loss<double>(z, z, 0.7, DenominatorMode::as_written);
  CHECK(loss == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("ntxent: hand-evaluated orthogonal case gives -4") {
  Tensor<double> zp({2, 2}), zpp({2, 2});
  zp.at2(0, 0) = 1.0;
  zp.at2(1, 1) = 1.0;
  zpp = zp;
  const double loss = ntxent_loss<double>(zp, zpp, 1.0, DenominatorMode::as_written);
  CHECK(loss == doctest::Approx(-4.0).epsilon(1e-12));
}

TEST_CASE("ntxent: matches the brute-force oracle for N in 2..6") {
  for (int n = 2; n <= 6; ++n) {
    Tensor<double> zp = random_batch(n, 7, 100 + n);
    Tensor<double> zpp = random_batch(n, 7, 200 + n);
    for (auto mode : {DenominatorMode::as_written, DenominatorMode::include_positive}) {
      const double impl = ntxent_loss<double>(zp, zpp, 0.5, mode);
      const double oracle = ntxent_brute(zp, zpp, 0.5, mode == DenominatorMode::include_positive);
      CHECK(impl == doctest::Approx(oracle).epsilon(1e-9));
    }
  }
}

TEST_CASE("ntxent: invariant to positive rescaling of all projections") {
  Tensor<double> zp = random_batch(4, 6, 1);
  Tensor<double> zpp = random_batch(4, 6, 2);
  const double base = ntxent_loss<double>(zp, zpp, 0.5, DenominatorMode::as_written);
  for (auto& v : zp.data) v *= 3.7;
  for (auto& v : zpp.data) v *= 0.41;
  const double scaled = ntxent_loss<double>(zp, zpp, 0.5, DenominatorMode::as_written);
  CHECK(scaled == doctest::Approx(base).epsilon(1e-9));
}

TEST_CASE("ntxent: N=1 rejected in as_written mode (empty denominator)") {
  Tensor<double> z({1, 4});
  z[0] = 1.0;
  CHECK_THROWS_AS(ntxent_loss<double>(z, z, 0.5, DenominatorMode::as_written), Error);
}

TEST_CASE("ntxent: analytic gradients match central finite differences") {
  Tensor<double> zp = random_batch(4, 5, 11);
  Tensor<double> zpp = random_batch(4, 5, 12);
  for (auto mode : {DenominatorMode::as_written, DenominatorMode::include_positive}) {
    Tensor<double> dzp, dzpp;
    ntxent_loss<double>(zp, zpp, 0.6, mode, &dzp, &dzpp);
    const double h = 1e-7;
    for (std::size_t i = 0; i < zp.numel(); i += 3) {
      double orig = zp[i];
      zp[i] = orig + h;
      const double lp = ntxent_loss<double>(zp, zpp, 0.6, mode);
      zp[i] = orig - h;
      const double lm = ntxent_loss<double>(zp, zpp, 0.6, mode);
      zp[i] = orig;
      CHECK(dzp[i] == doctest::Approx((lp - lm) / (2 * h)).epsilon(1e-5));
    }
    for (std::size_t i = 0; i < zpp.numel(); i += 3) {
      double orig = zpp[i];
      zpp[i] = orig + h;
      const double lp = ntxent_loss<double>(zp, zpp, 0.6, mode);
      zpp[i] = orig - h;
      const double lm = ntxent_loss<double>(zp, zpp, 0.6, mode);
      zpp[i] = orig;
      CHECK(dzpp[i] == doctest::Approx((lp - lm) / (2 * h)).epsilon(1e-5));
    }
  }
}

TEST_CASE("simsiam: identity predictor on identical nonnegative unit rows gives -2N") {
  const int n = 3, d = 4;
  model::ModelConfig cfg = tiny_proj_config(d, d);
  model::Predictor<double> q(cfg);
  q.set_identity();
  Tensor<double> z({n, d});
  for (int i = 0; i < n; ++i) z.at2(i, i % d) = 1.0;  // one-hot rows, ReLU-transparent
  const double loss = simsiam_loss<double>(z, z, q);
  CHECK(loss == doctest::Approx(-2.0 * n).epsilon(1e-12));
}

TEST_CASE("simsiam: bounded below by -2N with equality only at collinearity") {
  const int n = 4, d = 6;
  model::ModelConfig cfg = tiny_proj_config(d, 3);
  model::Predictor<double> q(cfg);
  RngStream rng = RngStream::derive(5, "init");
  q.init(rng);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor<double> zp = random_batch(n, d, 300 + trial);
    Tensor<double> zpp = random_batch(n, d, 400 + trial);
    const double loss = simsiam_loss<double>(zp, zpp, q);
    CHECK(loss >= -2.0 * n - 1e-12);
  }
}

TEST_CASE("simsiam: stop-gradient branch contributes exactly zero gradient") {
  // dzpp must equal the gradient of the direction-2 term alone (zpp through
  // Q against a frozen zp); any direction-1 leakage through sg(zpp) would
  // break the match.
  const int n = 3, d = 5;
  model::ModelConfig cfg = tiny_proj_config(d, 4);
  model::Predictor<double> q(cfg);
  RngStream rng = RngStream::derive(6, "init");
  q.init(rng);
  Tensor<double> zp = random_batch(n, d, 31);
  Tensor<double> zpp = random_batch(n, d, 32);
  Tensor<double> dzp, dzpp;
  simsiam_loss<double>(zp, zpp, q, &dzp, &dzpp);

  auto active_dir2 = [&](const Tensor<double>& z) {
    model::Predictor<double> q2(cfg);
    q2.fc1_.w_.value = q.fc1_.w_.value;
    q2.fc1_.b_.value = q.fc1_.b_.value;
    q2.fc2_.w_.value = q.fc2_.w_.value;
    q2.fc2_.b_.value = q.fc2_.b_.value;
    Tensor<double> pred = q2.forward(z);
    double s = 0;
    for (int i = 0; i < n; ++i)
      s -= cosine_similarity(pred.ptr() + i * d, zp.ptr() + i * d, d);
    return s;
  };
  const double h = 1e-7;
  for (std::size_t i = 0; i < zpp.numel(); ++i) {
    double orig = zpp[i];
    zpp[i] = orig + h;
    const double lp = active_dir2(zpp);
    zpp[i] = orig - h;
    const double lm = active_dir2(zpp);
    zpp[i] = orig;
    CHECK(dzpp[i] == doctest::Approx((lp - lm) / (2 * h)).epsilon(1e-4));
  }
}

TEST_CASE("simsiam: predictor parameter gradients match finite differences") {
  const int n = 3, d = 5;
  model::ModelConfig cfg = tiny_proj_config(d, 4);
  model::Predictor<double> q(cfg);
  RngStream rng = RngStream::derive(7, "init");
  q.init(rng);
  Tensor<double> zp = random_batch(n, d, 41);
  Tensor<double> zpp = random_batch(n, d, 42);

  std::vector<nn::Param<double>*> params;
  q.visit([&params](nn::Param<double>& p) {
    p.grad.fill(0.0);
    params.push_back(&p);
  });
  Tensor<double> dzp, dzpp;
  simsiam_loss<double>(zp, zpp, q, &dzp, &dzpp);

  const double h = 1e-6;
  for (nn::Param<double>* p : params) {
    for (std::size_t i = 0; i < p->value.numel(); i += 5) {
      const double orig = p->value[i];
      p->value[i] = orig + h;
      const double lp = simsiam_loss<double>(zp, zpp, q);
      p->value[i] = orig - h;
      const double lm = simsiam_loss<double>(zp, zpp, q);
      p->value[i] = orig;
      const double fd = (lp - lm) / (2 * h);
      const double scale = std::max({std::abs(fd), std::abs(p->grad[i]), 1e-8});
      CHECK(std::abs(p->grad[i] - fd) / scale < 1e-4);
    }
  }
}

TEST_CASE("total_loss: arithmetic and degenerate lambda") {
  CHECK(total_loss<double>(0, 0, 0, 20) == 0.0);
  CHECK(total_loss<double>(2, 4, 0.1, 20) == doctest::Approx(5.0));
  CHECK(total_loss<double>(2, 4, 123.0, 0.0) == doctest::Approx(3.0));
}

TEST_CASE("total_loss: non-finite inputs rejected") {
  CHECK_THROWS_AS(total_loss<double>(std::nan(""), 0, 0, 20), Error);
  CHECK_THROWS_AS(total_loss<double>(0, INFINITY, 0, 20), Error);
}
