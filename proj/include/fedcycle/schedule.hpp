#pragma once

#include <cstdint>

namespace fedcycle {

enum class ScheduleKind { Fixed, Cyclic };

/// How the sawtooth is evaluated: exact closed form or the truncated
/// alternating Fourier sine series it is the limit of.
enum class ScheduleEval { ClosedForm, FourierTruncated };

/// Server learning-rate schedule. The cyclic schedule ramps from
/// gamma_fixed - amplitude up to gamma_fixed, completing `frequency` full
/// cycles over `horizon` rounds.
struct ScheduleConfig {
  ScheduleKind kind = ScheduleKind::Fixed;
  double gamma_fixed = 1.0;
  double amplitude = 0.0;
  double frequency = 1.0;
  int horizon = 1;
  ScheduleEval eval_mode = ScheduleEval::ClosedForm;
  int fourier_terms = 32;  // K, only read in FourierTruncated mode

  bool operator==(const ScheduleConfig&) const = default;
};

/// Throws ConfigError when fields violate their constraints
/// (gamma_fixed > 0, 0 <= amplitude <= gamma_fixed, frequency > 0,
/// horizon >= 1, fourier_terms >= 1).
void validate(const ScheduleConfig& cfg);

/// Centered fractional part: y - floor(y + 1/2), in [-1/2, 1/2).
double sawtooth_wrap(double y);

/// Server learning rate for a global round in [0, horizon).
/// Throws ConfigError for invalid configs or round >= horizon.
double rate_at(const ScheduleConfig& cfg, int round);

}  // namespace fedcycle
