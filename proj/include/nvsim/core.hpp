#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace nvsim {

using complexd = std::complex<double>;

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  double norm2() const { return x * x + y * y; }
  double norm() const { return std::sqrt(norm2()); }
};

// One switchable emitter: scan-plane position, its scalar coordinate along the
// gradient axis, and its fluorescence properties.
struct NvCenter {
  Vec2 position_m{};
  double gradient_coordinate_m = 0.0;
  double brightness = 1.0;  // C_j, relative ON-state photon rate
  double contrast = 0.3;    // fractional fluorescence drop when OFF

  void validate() const {
    if (!(brightness >= 0.0) || !std::isfinite(brightness))
      throw std::invalid_argument("NvCenter: brightness must be finite and >= 0");
    if (!(contrast > 0.0) || !(contrast <= 1.0))
      throw std::invalid_argument("NvCenter: contrast must lie in (0, 1]");
    if (!std::isfinite(gradient_coordinate_m) || !std::isfinite(position_m.x) ||
        !std::isfinite(position_m.y))
      throw std::invalid_argument("NvCenter: coordinates must be finite");
  }
};

// Two-level state amp0|0> + amp1|1>.
struct SpinState {
  complexd amp0{1.0, 0.0};
  complexd amp1{0.0, 0.0};

  double population0() const { return std::norm(amp0); }
  double population1() const { return std::norm(amp1); }
  double norm() const { return std::sqrt(population0() + population1()); }
};

// State after the full echo sequence, parametrized by the superposition angle:
// cos(phi)|0> + i sin(phi)|1>.
inline SpinState final_state(double phase_rad) {
  if (!std::isfinite(phase_rad))
    throw std::invalid_argument("final_state: phase must be finite");
  return SpinState{complexd(std::cos(phase_rad), 0.0), complexd(0.0, std::sin(phase_rad))};
}

// The sequence converts an accumulated encoding phase theta into the
// superposition angle theta/2, so that the bright population is
// cos^2(theta/2) = (1 + cos(theta)) / 2 and the normalized signal is cos(theta).
inline SpinState state_after_encoding(double encoding_phase_rad) {
  return final_state(0.5 * encoding_phase_rad);
}

// Probability of reading the bright |0> state for a given encoding phase.
// An optional coherence envelope in [0, 1] damps the oscillating part.
inline double on_population(double encoding_phase_rad, double envelope = 1.0) {
  if (!std::isfinite(encoding_phase_rad))
    throw std::invalid_argument("on_population: phase must be finite");
  return 0.5 * (1.0 + envelope * std::cos(encoding_phase_rad));
}

// Normalized single-emitter signal: the cosine of the encoding phase.
inline double signal_single(double encoding_phase_rad) {
  if (!std::isfinite(encoding_phase_rad))
    throw std::invalid_argument("signal_single: phase must be finite");
  return std::cos(encoding_phase_rad);
}

// Brightness-weighted sum of per-emitter cosine signals.
inline double signal_total(std::span<const NvCenter> centers,
                           std::span<const double> encoding_phases_rad) {
  if (centers.empty() || centers.size() != encoding_phases_rad.size())
    throw std::invalid_argument("signal_total: centers and phases must have equal nonzero length");
  double s = 0.0;
  for (std::size_t j = 0; j < centers.size(); ++j)
    s += centers[j].brightness * signal_single(encoding_phases_rad[j]);
  return s;
}

// Kronecker product of single-spin states. Index bit order puts spin 0 in the
// most significant position, so [|0>, |1>] lands on index 0b01.
inline std::vector<complexd> joint_state(std::span<const SpinState> states) {
  if (states.empty() || states.size() > 20)
    throw std::length_error("joint_state: spin count must lie in [1, 20]");
  std::vector<complexd> amps{complexd(1.0, 0.0)};
  amps.reserve(std::size_t(1) << states.size());
  for (const SpinState& s : states) {
    std::vector<complexd> next(amps.size() * 2);
    for (std::size_t i = 0; i < amps.size(); ++i) {
      next[2 * i] = amps[i] * s.amp0;
      next[2 * i + 1] = amps[i] * s.amp1;
    }
    amps = std::move(next);
  }
  return amps;
}

}  // namespace nvsim
