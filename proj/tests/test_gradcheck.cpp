#include <doctest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "segcl/losses.hpp"
#include "segcl/rng.hpp"
#include "segcl/unet.hpp"

// Central finite-difference gradient checks of every loss through a tiny
// model (levels=3, base=4, 16x16 inputs), double precision. These back the
// per-parameter comparison the acceptance suite repeats.

using namespace segcl;
using namespace segcl::model;

namespace {

ModelConfig tiny_config(HeadKind head = HeadKind::pool) {
  ModelConfig cfg;
  cfg.levels = 3;
  cfg.base_filters = 4;
  cfg.num_classes = 2;
  cfg.input_size = 16;
  cfg.projection_dim = 8;
  cfg.predictor_hidden = 8;
  cfg.head_kind = head;
  return cfg;
}

struct MaxRelErr {
  double value = 0;
  std::string where;
  // Relative error with an absolute floor: entries where both sides are
  // below 1e-4 are compared absolutely at 1e-8, well under the ~1e-10
  // roundoff of double central differences but far tighter than any sign or
  // missing-term defect.
  void update(double analytic, double fd, const std::string& name) {
    const double denom = std::max({std::abs(analytic), std::abs(fd), 1e-4});
    const double rel = std::abs(analytic - fd) / denom;
    if (rel > value) {
      value = rel;
      where = name;
    }
  }
};

/// FD sweep over every parameter reachable via `params`, comparing against
/// the grads already accumulated in them.
MaxRelErr fd_sweep(const std::vector<nn::Param<double>*>& params,
                   const std::function<double()>& loss_fn, double h = 5e-6) {
  MaxRelErr err;
  for (nn::Param<double>* p : params) {
    for (std::size_t i = 0; i < p->value.numel(); ++i) {
      const double orig = p->value[i];
      p->value[i] = orig + h;
      const double lp = loss_fn();
      p->value[i] = orig - h;
      const double lm = loss_fn();
      p->value[i] = orig;
      err.update(p->grad[i], (lp - lm) / (2 * h), p->name);
    }
  }
  return err;
}

std::vector<nn::Param<double>*> collect(UNet<double>& net, ProjectionHead<double>* head = nullptr,
                                        Predictor<double>* q = nullptr) {
  std::vector<nn::Param<double>*> out;
  auto grab = [&out](nn::Param<double>& p) {
    p.grad.fill(0.0);
    out.push_back(&p);
  };
  net.visit_params(grab);
  if (head) head->visit(grab);
  if (q) q->visit(grab);
  return out;
}

Tensor<double> random_images(int n, int s, std::uint64_t seed) {
  Tensor<double> x({n, 1, s, s});
  RngStream rng(seed);
  for (auto& v : x.data) v = rng.uniform();
  return x;
}

}  // namespace

TEST_CASE("gradcheck: log-dice through the tiny UNet (dropout active)") {
  ModelConfig cfg = tiny_config();
  UNet<double> net(cfg);
  net.init(71);
  Tensor<double> x = random_images(1, 16, 81);
  Tensor<std::uint8_t> y({1, cfg.num_classes, 16, 16});
  RngStream yr(82);
  for (auto& v : y.data) v = yr.uniform() < 0.3 ? 1 : 0;

  auto loss_fn = [&]() {
    RngStream drop = RngStream::derive(9, "gc.drop");
    Tensor<double> p = net.forward_segment(x, true, &drop);
    return losses::log_dice_loss<double>(p, y, 1e-6);
  };

  std::vector<nn::Param<double>*> params = collect(net);
  {
    RngStream drop = RngStream::derive(9, "gc.drop");
    Tensor<double> p = net.forward_segment(x, true, &drop);
    Tensor<double> dp;
    losses::log_dice_loss<double>(p, y, 1e-6, &dp);
    net.backward_segment(dp);
  }
  MaxRelErr err = fd_sweep(params, loss_fn);
  INFO("worst parameter: ", err.where);
  CHECK(err.value < 1e-4);
}

TEST_CASE("gradcheck: nt-xent through encoder and both head kinds") {
  for (HeadKind kind : {HeadKind::pool, HeadKind::ch}) {
    CAPTURE(static_cast<int>(kind));
    ModelConfig cfg = tiny_config(kind);
    UNet<double> net(cfg);
    net.init(72);
    auto head = make_head<double>(cfg);
    RngStream hr = RngStream::derive(73, "head");
    head->init(hr);
    const int pairs = 2;
    Tensor<double> x = random_images(2 * pairs, 16, 83);

    auto forward_z = [&]() {
      RngStream drop = RngStream::derive(10, "gc.drop");
      Tensor<double> h = net.forward_encode(x, true, &drop);
      return head->forward(h);
    };
    auto split = [&](const Tensor<double>& z) {
      Tensor<double> zp({pairs, cfg.projection_dim}), zpp({pairs, cfg.projection_dim});
      std::copy(z.ptr(), z.ptr() + pairs * cfg.projection_dim, zp.ptr());
      std::copy(z.ptr() + pairs * cfg.projection_dim, z.ptr() + 2 * pairs * cfg.projection_dim,
                zpp.ptr());
      return std::make_pair(zp, zpp);
    };
    auto loss_fn = [&]() {
      auto [zp, zpp] = split(forward_z());
      return losses::ntxent_loss<double>(zp, zpp, 0.5, losses::DenominatorMode::as_written);
    };

    std::vector<nn::Param<double>*> params = collect(net, head.get());
    {
      Tensor<double> z = forward_z();
      auto [zp, zpp] = split(z);
      Tensor<double> dzp, dzpp;
      losses::ntxent_loss<double>(zp, zpp, 0.5, losses::DenominatorMode::as_written, &dzp, &dzpp);
      Tensor<double> dz({2 * pairs, cfg.projection_dim});
      std::copy(dzp.data.begin(), dzp.data.end(), dz.ptr());
      std::copy(dzpp.data.begin(), dzpp.data.end(), dz.ptr() + pairs * cfg.projection_dim);
      Tensor<double> dh = head->backward(dz);
      net.backward_encode(dh);
    }
    MaxRelErr err = fd_sweep(params, loss_fn);
    INFO("worst parameter: ", err.where);
    CHECK(err.value < 1e-4);
  }
}

TEST_CASE("gradcheck: simsiam through encoder+head+predictor with frozen targets") {
  // The stop-gradient targets are frozen at the base parameters, which makes
  // the finite-difference loss match what the analytic backward optimizes.
  ModelConfig cfg = tiny_config(HeadKind::pool);
  UNet<double> net(cfg);
  net.init(74);
  auto head = make_head<double>(cfg);
  RngStream hr = RngStream::derive(75, "head");
  head->init(hr);
  Predictor<double> q(cfg);
  RngStream qr = RngStream::derive(76, "q");
  q.init(qr);

  const int pairs = 2, d = cfg.projection_dim;
  Tensor<double> x = random_images(2 * pairs, 16, 85);

  auto forward_z = [&]() {
    RngStream drop = RngStream::derive(11, "gc.drop");
    Tensor<double> h = net.forward_encode(x, true, &drop);
    return head->forward(h);
  };
  auto split = [&](const Tensor<double>& z) {
    Tensor<double> zp({pairs, d}), zpp({pairs, d});
    std::copy(z.ptr(), z.ptr() + pairs * d, zp.ptr());
    std::copy(z.ptr() + pairs * d, z.ptr() + 2 * pairs * d, zpp.ptr());
    return std::make_pair(zp, zpp);
  };

  // Frozen targets from the unperturbed parameters.
  auto [zp0, zpp0] = split(forward_z());

  auto loss_fn = [&]() {
    auto [zp, zpp] = split(forward_z());
    Tensor<double> qp = q.forward(zp);
    double loss = 0;
    for (int i = 0; i < pairs; ++i)
      loss -= losses::cosine_similarity(qp.ptr() + i * d, zpp0.ptr() + i * d, d);
    Tensor<double> qpp = q.forward(zpp);
    for (int i = 0; i < pairs; ++i)
      loss -= losses::cosine_similarity(qpp.ptr() + i * d, zp0.ptr() + i * d, d);
    return loss;
  };

  std::vector<nn::Param<double>*> params = collect(net, head.get(), &q);
  {
    auto [zp, zpp] = split(forward_z());
    Tensor<double> dzp, dzpp;
    losses::simsiam_loss<double>(zp, zpp, q, &dzp, &dzpp);
    Tensor<double> dz({2 * pairs, d});
    std::copy(dzp.data.begin(), dzp.data.end(), dz.ptr());
    std::copy(dzpp.data.begin(), dzpp.data.end(), dz.ptr() + pairs * d);
    Tensor<double> dh = head->backward(dz);
    net.backward_encode(dh);
  }
  MaxRelErr err = fd_sweep(params, loss_fn);
  INFO("worst parameter: ", err.where);
  CHECK(err.value < 1e-4);

  // Decoder parameters sit outside the encoder+head path entirely.
  for (nn::Param<double>* p : params) {
    if (p->name.rfind("dec", 0) == 0 || p->name.rfind("out.", 0) == 0) {
      for (double g : p->grad.data) CHECK(g == 0.0);
    }
  }
}
