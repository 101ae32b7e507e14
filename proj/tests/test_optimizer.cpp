#include <doctest.h>

#include <cmath>

#include "polydiff/errors.hpp"
#include "polydiff/optimizer.hpp"

using namespace polydiff;

TEST_CASE("optimizer: adam step size approaches the learning rate") {
  ParamStore<double> store;
  store.add("w", {3}, InitKind::Zero, 1);
  store.at(0).value << 1.0, -2.0, 0.5;
  Adam<double> adam;
  const double lr = 0.01;

  // Constant gradient of mixed magnitudes; the normalized step approaches
  // lr * sign(g) both right after bias correction and in steady state.
  const VecX<double> g = (VecX<double>(3) << 0.3, -4.0, 1e-3).finished();
  VecX<double> prev = store.at(0).value;
  for (int it = 1; it <= 300; ++it) {
    store.zero_grads();
    store.at(0).grad = g;
    adam.step(store, lr);
    const VecX<double> delta = store.at(0).value - prev;
    prev = store.at(0).value;
    for (int i = 0; i < 3; ++i) {
      CHECK(std::abs(delta[i]) == doctest::Approx(lr).epsilon(0.02));
      CHECK(std::signbit(delta[i]) != std::signbit(g[i]));
    }
  }
  CHECK(adam.step_count() == 300);
}

TEST_CASE("optimizer: adam converges on a quadratic") {
  ParamStore<double> store;
  store.add("w", {2}, InitKind::Zero, 1);
  store.at(0).value << 4.0, -3.0;
  Adam<double> adam;
  const VecX<double> target = (VecX<double>(2) << 1.5, 0.25).finished();
  // Fixed-rate Adam limit-cycles near an optimum at roughly lr amplitude, so
  // anneal the rate and expect the iterate to track it down.
  double lr = 0.01;
  for (int it = 0; it < 6000; ++it) {
    store.zero_grads();
    store.at(0).grad = 2.0 * (store.at(0).value - target);
    adam.step(store, lr);
    lr *= 0.999;
  }
  CHECK((store.at(0).value - target).norm() < 1e-3);
}

TEST_CASE("optimizer: epoch learning-rate decay") {
  CHECK(lr_for_epoch(1e-3, 1, 400) == doctest::Approx(9.975e-4).epsilon(1e-12));
  CHECK(lr_for_epoch(5e-4, 2, 10) == doctest::Approx(4e-4).epsilon(1e-12));
  CHECK(lr_for_epoch(1e-3, 400, 400) == 0.0);

  // Chained across epochs the rate is strictly decreasing until it hits zero.
  double lr = 1e-3;
  double prev = lr;
  for (int k = 1; k <= 30; ++k) {
    lr = lr_for_epoch(lr, k, 30);
    CHECK(lr < prev);
    prev = std::max(lr, 1e-30);
  }
  CHECK(lr == 0.0);

  CHECK_THROWS_AS(lr_for_epoch(1e-3, 0, 10), ConfigError);
  CHECK_THROWS_AS(lr_for_epoch(1e-3, 11, 10), ConfigError);
}
