#include <doctest.h>

#include <cmath>
#include <vector>

#include "fedcycle/errors.hpp"
#include "fedcycle/rng.hpp"
#include "fedcycle/schedule.hpp"

using namespace fedcycle;

namespace {

ScheduleConfig cyclic(double gamma, double amplitude, double frequency, int horizon,
                      ScheduleEval mode = ScheduleEval::ClosedForm, int terms = 32) {
  return {ScheduleKind::Cyclic, gamma, amplitude, frequency, horizon, mode, terms};
}

}  // namespace

TEST_CASE("fixed schedule returns gamma_fixed for every round") {
  ScheduleConfig cfg;
  cfg.kind = ScheduleKind::Fixed;
  cfg.gamma_fixed = 1.0;
  cfg.horizon = 100;
  for (int r = 0; r < 100; ++r) CHECK(rate_at(cfg, r) == 1.0);
  CHECK(rate_at(cfg, 42) == 1.0);
}

TEST_CASE("zero amplitude collapses the cyclic schedule to gamma_fixed") {
  for (const auto mode : {ScheduleEval::ClosedForm, ScheduleEval::FourierTruncated}) {
    const auto cfg = cyclic(1.0, 0.0, 3.0, 100, mode, 64);
    CHECK(rate_at(cfg, 7) == 1.0);
  }
}

TEST_CASE("phase zero gives gamma_fixed minus half the amplitude") {
  const auto closed = cyclic(1.0, 0.4, 1.0, 100);
  CHECK(rate_at(closed, 0) == doctest::Approx(0.8).epsilon(1e-14));
  const auto fourier = cyclic(1.0, 0.4, 1.0, 100, ScheduleEval::FourierTruncated, 1000);
  CHECK(rate_at(fourier, 0) == doctest::Approx(0.8).epsilon(1e-14));
}

TEST_CASE("paper-style cyclic rate at a concrete round") {
  // x = 2*10/100 = 0.2, wrap(x) = 0.2, rate = 1 - 0.4*(0.5 - 0.2) = 0.88.
  const auto cfg = cyclic(1.0, 0.4, 2.0, 100);
  CHECK(rate_at(cfg, 10) == doctest::Approx(0.88).epsilon(1e-14));

  // Oracle: the truncated series with a million terms must agree to 1e-3.
  const auto oracle = cyclic(1.0, 0.4, 2.0, 100, ScheduleEval::FourierTruncated, 1000000);
  CHECK(std::abs(rate_at(oracle, 10) - rate_at(cfg, 10)) < 1e-3);
}

TEST_CASE("closed-form output stays in [gamma - a, gamma)") {
  Rng rng(123);
  for (int trial = 0; trial < 200; ++trial) {
    const double gamma = 0.2 + rng.next_double() * 2.0;
    const double amplitude = rng.next_double() * gamma;
    const double frequency = 0.5 + rng.next_double() * 9.5;
    const int horizon = rng.next_int(1, 500);
    const auto cfg = cyclic(gamma, amplitude, frequency, horizon);
    const int round = rng.next_int(0, horizon - 1);
    const double rate = rate_at(cfg, round);
    CHECK(rate >= gamma - amplitude);
    CHECK(rate < gamma);
  }
}

TEST_CASE("closed form is periodic with period horizon/frequency") {
  const auto cfg = cyclic(1.0, 0.5, 4.0, 200);  // period 50 rounds
  for (int r = 0; r < 150; ++r) {
    CHECK(rate_at(cfg, r) == doctest::Approx(rate_at(cfg, r + 50)).epsilon(1e-12));
  }
}

TEST_CASE("truncated series converges to the closed form away from the jumps") {
  const int horizon = 1250;
  std::vector<int> rounds;
  for (int r = 0; r < horizon && rounds.size() < 1000; ++r) {
    const double x = static_cast<double>(r) / horizon;
    if (std::abs(sawtooth_wrap(x + 0.5)) > 0.05) rounds.push_back(r);  // skip near half-integers
  }
  REQUIRE(rounds.size() == 1000);

  const auto closed = cyclic(1.0, 0.4, 1.0, horizon);
  double prev_mean = 1e100;
  for (const int terms : {10, 100, 1000, 10000}) {
    const auto truncated = cyclic(1.0, 0.4, 1.0, horizon, ScheduleEval::FourierTruncated, terms);
    double total = 0.0;
    double worst = 0.0;
    for (int r : rounds) {
      const double err = std::abs(rate_at(closed, r) - rate_at(truncated, r));
      total += err;
      worst = std::max(worst, err);
    }
    const double mean = total / static_cast<double>(rounds.size());
    CHECK(mean < prev_mean);  // tightens monotonically on average
    prev_mean = mean;
    if (terms == 10000) CHECK(worst < 1e-3);
  }
}

TEST_CASE("rounds beyond the horizon are rejected") {
  const auto cfg = cyclic(1.0, 0.2, 1.0, 10);
  CHECK_THROWS_AS(rate_at(cfg, 10), ConfigError);
  CHECK_THROWS_AS(rate_at(cfg, -1), ConfigError);
  CHECK_NOTHROW(rate_at(cfg, 9));
}

TEST_CASE("invalid configs are rejected") {
  CHECK_THROWS_AS(validate(cyclic(1.0, 1.5, 1.0, 10)), ConfigError);   // a > gamma
  CHECK_THROWS_AS(validate(cyclic(-1.0, 0.1, 1.0, 10)), ConfigError);  // gamma <= 0
  CHECK_THROWS_AS(validate(cyclic(1.0, 0.1, 0.0, 10)), ConfigError);   // f <= 0
  CHECK_THROWS_AS(validate(cyclic(1.0, 0.1, 1.0, 0)), ConfigError);    // horizon < 1
  CHECK_THROWS_AS(validate(cyclic(1.0, 0.1, 1.0, 10, ScheduleEval::FourierTruncated, 0)),
                  ConfigError);
  CHECK_NOTHROW(validate(cyclic(1.0, 1.0, 1.0, 10)));  // a == gamma is allowed
}
