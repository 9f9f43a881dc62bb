#include "fedcycle/schedule.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "fedcycle/errors.hpp"

namespace fedcycle {

void validate(const ScheduleConfig& cfg) {
  if (!(cfg.gamma_fixed > 0.0) || !std::isfinite(cfg.gamma_fixed)) {
    throw ConfigError("schedule.gamma_fixed must be a positive finite real, got " +
                      std::to_string(cfg.gamma_fixed));
  }
  if (cfg.horizon < 1) {
    throw ConfigError("schedule.horizon must be >= 1, got " + std::to_string(cfg.horizon));
  }
  if (cfg.kind == ScheduleKind::Fixed) {
    return;  // amplitude/frequency/eval_mode are ignored for fixed schedules
  }
  if (!(cfg.amplitude >= 0.0) || !std::isfinite(cfg.amplitude)) {
    throw ConfigError("schedule.amplitude must be a non-negative finite real");
  }
  if (cfg.amplitude > cfg.gamma_fixed) {
    throw ConfigError("schedule.amplitude must not exceed gamma_fixed (" +
                      std::to_string(cfg.amplitude) + " > " +
                      std::to_string(cfg.gamma_fixed) + "); the rate would become non-positive");
  }
  if (!(cfg.frequency > 0.0) || !std::isfinite(cfg.frequency)) {
    throw ConfigError("schedule.frequency must be a positive finite real");
  }
  if (cfg.eval_mode == ScheduleEval::FourierTruncated && cfg.fourier_terms < 1) {
    throw ConfigError("schedule.fourier_terms must be >= 1, got " +
                      std::to_string(cfg.fourier_terms));
  }
}

double sawtooth_wrap(double y) { return y - std::floor(y + 0.5); }

namespace {

// Partial sum of (1/pi) * sum_{k=1..K} (-1)^{k+1} sin(2 pi k x) / k,
// which converges to sawtooth_wrap(x) away from half-integer x.
double fourier_sawtooth(double x, int terms) {
  const double theta = 2.0 * std::numbers::pi * x;
  double acc = 0.0;
  double sign = 1.0;
  for (int k = 1; k <= terms; ++k) {
    acc += sign * std::sin(static_cast<double>(k) * theta) / static_cast<double>(k);
    sign = -sign;
  }
  return acc / std::numbers::pi;
}

}  // namespace

double rate_at(const ScheduleConfig& cfg, int round) {
  validate(cfg);
  if (round < 0 || round >= cfg.horizon) {
    throw ConfigError("round " + std::to_string(round) + " outside schedule horizon [0, " +
                      std::to_string(cfg.horizon) + ")");
  }
  if (cfg.kind == ScheduleKind::Fixed) {
    return cfg.gamma_fixed;
  }
  const double x = cfg.frequency * static_cast<double>(round) / static_cast<double>(cfg.horizon);
  const double ramp = cfg.eval_mode == ScheduleEval::ClosedForm
                          ? sawtooth_wrap(x)
                          : fourier_sawtooth(x, cfg.fourier_terms);
  const double rate = cfg.gamma_fixed - cfg.amplitude * (0.5 - ramp);
  if (!std::isfinite(rate)) {
    throw ConfigError("schedule produced a non-finite rate at round " + std::to_string(round));
  }
  return rate;
}

}  // namespace fedcycle
