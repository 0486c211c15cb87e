#include <doctest.h>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "dopf/comms.hpp"
#include "dopf/rng.hpp"

using dopf::ChannelKind;
using dopf::ChannelModel;
using dopf::CounterRng;
using dopf::LinkState;
using dopf::apply_bad_data;
using dopf::apply_gaussian;
using dopf::channel_kind_from_string;
using dopf::init_link;
using dopf::step_loss_channel;
using dopf::to_string;
using dopf::transmit;

namespace {

Eigen::VectorXd ramp(Eigen::Index n) {
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = 0.1 * static_cast<double>(i + 1);
  return v;
}

LinkState fresh_link(std::uint64_t seed, Eigen::Index n) {
  LinkState link;
  link.from_region = 0;
  link.to_region = 1;
  init_link(link, seed, 42, Eigen::VectorXd::Zero(n));
  return link;
}

}  // namespace

TEST_CASE("channel kind names round-trip") {
  for (const ChannelKind k :
       {ChannelKind::ideal, ChannelKind::gaussian, ChannelKind::bad_data,
        ChannelKind::intermittent_loss}) {
    CHECK(channel_kind_from_string(to_string(k)) == k);
  }
  CHECK(channel_kind_from_string("loss") == ChannelKind::intermittent_loss);
  CHECK_THROWS_AS(channel_kind_from_string("smoke-signal"),
                  std::invalid_argument);
}

TEST_CASE("parameter validation is per-kind") {
  ChannelModel m;
  m.check();  // ideal: nothing to check

  m.kind = ChannelKind::gaussian;
  m.sigma_noise = -1.0;
  CHECK_THROWS_AS(m.check(), std::invalid_argument);
  m.sigma_noise = 1e-4;
  m.check();

  m.kind = ChannelKind::bad_data;
  m.p_bad = 1.5;
  CHECK_THROWS_AS(m.check(), std::invalid_argument);
  m.p_bad = 0.01;
  m.r_max = -2.0;
  CHECK_THROWS_AS(m.check(), std::invalid_argument);
  m.r_max = 2.0;
  m.check();

  m.kind = ChannelKind::intermittent_loss;
  m.lambda_f = 1.2;
  CHECK_THROWS_AS(m.check(), std::invalid_argument);
  m.lambda_f = 0.05;
  m.lambda_r = 0.1;
  m.check();
}

TEST_CASE("content hash tracks active parameters only") {
  ChannelModel a, b;
  a.kind = b.kind = ChannelKind::gaussian;
  a.sigma_noise = b.sigma_noise = 1e-4;
  a.r_max = 2.0;
  b.r_max = 99.0;  // inactive under gaussian
  CHECK(a.content_hash() == b.content_hash());

  b.sigma_noise = 1e-3;
  CHECK(a.content_hash() != b.content_hash());

  ChannelModel ideal1, ideal2;
  ideal2.sigma_noise = 0.5;  // inactive under ideal
  CHECK(ideal1.content_hash() == ideal2.content_hash());

  ChannelModel loss;
  loss.kind = ChannelKind::intermittent_loss;
  CHECK(loss.content_hash() != ideal1.content_hash());
}

TEST_CASE("sigma = 0 and p_bad = 0 are bit-identical identities") {
  const Eigen::VectorXd v = ramp(6);
  const CounterRng rng(123, 7);
  CHECK(apply_gaussian(v, 0.0, rng, 10) == v);
  CHECK(apply_bad_data(v, 2.0, 0.0, rng, 10) == v);
}

TEST_CASE("gaussian noise is addressed, unbiased, and correctly scaled") {
  const CounterRng rng(2024, 0);
  const double sigma = 1e-3;
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(10);

  // identical addresses give identical noise
  const Eigen::VectorXd a = apply_gaussian(zero, sigma, rng, 5);
  const Eigen::VectorXd b = apply_gaussian(zero, sigma, rng, 5);
  CHECK(a == b);
  // different iterations give different noise
  CHECK(apply_gaussian(zero, sigma, rng, 6) != a);

  // moments over 1e5 samples
  double sum = 0.0, sq = 0.0;
  const int iters = 10000;
  for (int it = 0; it < iters; ++it) {
    const Eigen::VectorXd x =
        apply_gaussian(zero, sigma, rng, static_cast<std::uint64_t>(it));
    sum += x.sum();
    sq += x.squaredNorm();
  }
  const double n = 10.0 * iters;
  const double mean = sum / n;
  const double var = sq / n - mean * mean;
  CHECK(std::abs(mean) < 1e-4);                   // ~30 sigma/sqrt(n) margin
  CHECK(std::sqrt(var) == doctest::Approx(sigma).epsilon(0.03));
}

TEST_CASE("bad data corrupts the expected fraction by the expected amount") {
  const CounterRng rng(5150, 0);
  const double r = 2.0;

  SUBCASE("p = 1: every element moves, uniformly on [-r, r]") {
    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(100);
    std::vector<double> all;
    for (int it = 0; it < 1000; ++it) {
      const Eigen::VectorXd x =
          apply_bad_data(zero, r, 1.0, rng, static_cast<std::uint64_t>(it));
      for (Eigen::Index i = 0; i < x.size(); ++i) all.push_back(x[i]);
    }
    // Kolmogorov-Smirnov distance against U[-r, r]
    std::sort(all.begin(), all.end());
    double ks = 0.0;
    for (std::size_t i = 0; i < all.size(); ++i) {
      CHECK(std::abs(all[i]) <= r);
      const double cdf = (all[i] + r) / (2.0 * r);
      const double emp_hi = static_cast<double>(i + 1) / all.size();
      const double emp_lo = static_cast<double>(i) / all.size();
      ks = std::max({ks, std::abs(cdf - emp_hi), std::abs(cdf - emp_lo)});
    }
    CHECK(ks < 0.01);
    const double mean =
        std::accumulate(all.begin(), all.end(), 0.0) / all.size();
    CHECK(std::abs(mean) < 0.02);
  }
  SUBCASE("p = 0.1%: corruption rate matches over 1e6 elements") {
    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(1000);
    int corrupted = 0;
    for (int it = 0; it < 1000; ++it) {
      const Eigen::VectorXd x =
          apply_bad_data(zero, r, 0.001, rng, static_cast<std::uint64_t>(it));
      for (Eigen::Index i = 0; i < x.size(); ++i) {
        if (x[i] != 0.0) ++corrupted;
      }
    }
    CHECK(corrupted > 800);
    CHECK(corrupted < 1200);
  }
}

TEST_CASE("loss chain follows its transition probabilities") {
  const CounterRng rng(31337, 1);

  SUBCASE("lambda_f = 0 never leaves the delivering state") {
    int s = 1;
    for (int it = 0; it < 1000; ++it) {
      s = step_loss_channel(s, 0.0, 0.5, rng, it);
      CHECK(s == 1);
    }
  }
  SUBCASE("lambda_f = lambda_r = 1 alternates deterministically") {
    int s = 1;
    for (int it = 0; it < 10; ++it) {
      const int prev = s;
      s = step_loss_channel(s, 1.0, 1.0, rng, it);
      CHECK(s == 1 - prev);
    }
  }
  SUBCASE("stationary failure fraction approaches lambda_f/(lambda_f+lambda_r)") {
    // symmetric rates -> half the time failed
    int s = 1;
    long failed = 0;
    const int n = 1000000;
    for (int it = 0; it < n; ++it) {
      s = step_loss_channel(s, 0.1, 0.1, rng, it);
      failed += 1 - s;
    }
    const double frac = static_cast<double>(failed) / n;
    CHECK(frac > 0.49);
    CHECK(frac < 0.51);
  }
}

TEST_CASE("streams with different ids are independent") {
  const CounterRng a(99, 0);
  const CounterRng b(99, 1);
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(4);
  CHECK(apply_gaussian(zero, 1.0, a, 0) != apply_gaussian(zero, 1.0, b, 0));

  // same seed + stream always agree
  const CounterRng c(99, 0);
  CHECK(apply_gaussian(zero, 1.0, a, 0) == apply_gaussian(zero, 1.0, c, 0));
}

TEST_CASE("transmit: ideal channel is a pass-through") {
  LinkState link = fresh_link(1, 4);
  ChannelModel ideal;
  const Eigen::VectorXd v = ramp(4);
  CHECK(transmit(link, v, ideal, 0, 2) == v);
  CHECK(transmit(link, v, ideal, 1, 2) == v);
}

TEST_CASE("transmit corrupts only the angle prefix") {
  ChannelModel noisy;
  noisy.kind = ChannelKind::gaussian;
  noisy.sigma_noise = 0.1;

  LinkState link = fresh_link(7, 6);
  const Eigen::VectorXd v = ramp(6);
  const Eigen::VectorXd got = transmit(link, v, noisy, 0, 3);
  CHECK(got.head(3) != v.head(3));
  CHECK(got.tail(3) == v.tail(3));  // multiplier block untouched

  ChannelModel bad;
  bad.kind = ChannelKind::bad_data;
  bad.r_max = 2.0;
  bad.p_bad = 1.0;
  LinkState link2 = fresh_link(8, 6);
  const Eigen::VectorXd got2 = transmit(link2, v, bad, 0, 3);
  CHECK(got2.head(3) != v.head(3));
  CHECK(got2.tail(3) == v.tail(3));
}

TEST_CASE("transmit under loss replays the last delivered payload") {
  ChannelModel loss;
  loss.kind = ChannelKind::intermittent_loss;
  loss.lambda_f = 1.0;  // fail on the first step
  loss.lambda_r = 0.0;  // never recover

  LinkState link = fresh_link(3, 2);
  const Eigen::VectorXd v0 = Eigen::VectorXd::Zero(2);
  Eigen::VectorXd v1(2);
  v1 << 0.5, -0.5;

  // the chain drops immediately, so the receiver keeps seeing the initial
  // payload no matter what is sent
  CHECK(transmit(link, v1, loss, 0, 2) == v0);
  CHECK(transmit(link, v1, loss, 1, 2) == v0);
  CHECK(link.loss_state == 0);
}

TEST_CASE("transmit under loss delivers fresh payloads while up") {
  ChannelModel loss;
  loss.kind = ChannelKind::intermittent_loss;
  loss.lambda_f = 0.0;  // never fail
  loss.lambda_r = 0.0;

  LinkState link = fresh_link(3, 2);
  Eigen::VectorXd v1(2);
  v1 << 0.5, -0.5;
  CHECK(transmit(link, v1, loss, 0, 2) == v1);
  CHECK(link.last_good == v1);
}

TEST_CASE("transmit rejects misuse") {
  ChannelModel ideal;
  LinkState uninitialized;
  CHECK_THROWS_AS(transmit(uninitialized, ramp(2), ideal, 0, 2),
                  std::logic_error);

  LinkState link = fresh_link(1, 2);
  CHECK_THROWS_AS(transmit(link, ramp(2), ideal, 0, 5),
                  std::invalid_argument);  // prefix larger than the payload
  CHECK_THROWS_AS(transmit(link, ramp(3), ideal, 0, 2),
                  std::invalid_argument);  // payload size changed
}

TEST_CASE("degenerate channels reproduce the ideal transmission bit for bit") {
  ChannelModel ideal;
  ChannelModel g0;
  g0.kind = ChannelKind::gaussian;
  g0.sigma_noise = 0.0;
  ChannelModel b0;
  b0.kind = ChannelKind::bad_data;
  b0.p_bad = 0.0;
  ChannelModel l0;
  l0.kind = ChannelKind::intermittent_loss;
  l0.lambda_f = 0.0;
  l0.lambda_r = 0.0;

  const Eigen::VectorXd v = ramp(5);
  for (const ChannelModel* m : {&g0, &b0, &l0}) {
    LinkState li = fresh_link(11, 5);
    LinkState ld = fresh_link(11, 5);
    for (std::uint64_t it = 0; it < 5; ++it) {
      CHECK(transmit(li, v, ideal, it, 3) == transmit(ld, v, *m, it, 3));
    }
  }
}
