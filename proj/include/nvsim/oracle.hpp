#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "nvsim/core.hpp"
#include "nvsim/errors.hpp"
#include "nvsim/sequence.hpp"

namespace nvsim {

struct PropagateOptions {
  int initial_steps_per_half = 1024;
  int max_steps_per_half = 1 << 22;
  double population_tolerance = 1e-10;  // stop when one refinement moves P0 less than this
};

namespace detail {

// Midpoint-rule integral of the unit waveform over [u0, u1], split at
// piecewise-segment boundaries so every sub-interval is smooth.
inline double waveform_integral(const GradientWaveform& w, double u0, double u1, int steps) {
  std::vector<double> cuts{u0, u1};
  if (w.shape == WaveformShape::piecewise) {
    double acc = 0.0;
    for (const auto& s : w.segments) {
      acc += s.duration_frac;
      if (acc > u0 && acc < u1) cuts.push_back(acc);
    }
    std::sort(cuts.begin(), cuts.end());
  }
  double integral = 0.0;
  for (std::size_t c = 0; c + 1 < cuts.size(); ++c) {
    const double a = cuts[c], b = cuts[c + 1];
    const int m = std::max(1, static_cast<int>(std::lround(steps * (b - a) / (u1 - u0))));
    const double h = (b - a) / m;
    for (int i = 0; i < m; ++i) integral += w.level(a + (i + 0.5) * h) * h;
  }
  return integral;
}

}  // namespace detail

// Brute-force check of the analytic phase formulas: rotating-frame propagation
// of the echo sequence with ideal instantaneous pulses and a stepwise-sampled
// gradient detuning delta(t) = 2 pi gamma G(t) r. The step count doubles until
// the final populations stop moving. Populations agree with
// state_after_encoding(phase_integral(...)) for any supported waveform.
inline SpinState propagate_oracle(const PulseSequence& seq, const NvCenter& center,
                                  double current_ma, const PhysicalConstants& k = {},
                                  const PropagateOptions& opt = {}) {
  seq.validate();
  k.validate();
  if (!std::isfinite(current_ma))
    throw std::invalid_argument("propagate_oracle: current must be finite");
  const GradientWaveform w = seq.timed_waveform();

  // peak angular detuning, rad/s, at unit waveform level
  const double delta0 = 2.0 * std::numbers::pi * k.gamma_e_hz_per_t *
                        seq.gradient_t_per_m_per_ma * current_ma * w.amplitude_scale *
                        center.gradient_coordinate_m;

  const complexd minus_i(0.0, -1.0);
  const double inv_sqrt2 = 1.0 / std::numbers::sqrt2;

  auto run = [&](int steps) {
    complexd c0(1.0, 0.0), c1(0.0, 0.0);
    // pi/2 pulse about x
    complexd t0 = (c0 + minus_i * c1) * inv_sqrt2;
    complexd t1 = (minus_i * c0 + c1) * inv_sqrt2;
    c0 = t0;
    c1 = t1;
    // first free evolution, H = delta(t) sigma_z / 2
    const double theta1 = delta0 * seq.tau_s * detail::waveform_integral(w, 0.0, 0.5, steps);
    c0 *= std::polar(1.0, -0.5 * theta1);
    c1 *= std::polar(1.0, +0.5 * theta1);
    // pi pulse about x (echo)
    if (w.echo) {
      t0 = minus_i * c1;
      t1 = minus_i * c0;
      c0 = t0;
      c1 = t1;
    }
    // second free evolution
    const double theta2 = delta0 * seq.tau_s * detail::waveform_integral(w, 0.5, 1.0, steps);
    c0 *= std::polar(1.0, -0.5 * theta2);
    c1 *= std::polar(1.0, +0.5 * theta2);
    // final pi/2 pulse about x
    t0 = (c0 + minus_i * c1) * inv_sqrt2;
    t1 = (minus_i * c0 + c1) * inv_sqrt2;
    return SpinState{t0, t1};
  };

  SpinState prev = run(opt.initial_steps_per_half);
  for (int steps = 2 * opt.initial_steps_per_half; steps <= opt.max_steps_per_half; steps *= 2) {
    const SpinState cur = run(steps);
    if (std::abs(cur.population0() - prev.population0()) < opt.population_tolerance) return cur;
    prev = cur;
  }
  throw discretization_error(
      "propagate_oracle: populations did not settle within the step limit");
}

// Normalized signal implied by a propagated state: P0 - P1 = cos(theta).
inline double oracle_signal(const SpinState& s) { return s.population0() - s.population1(); }

}  // namespace nvsim
