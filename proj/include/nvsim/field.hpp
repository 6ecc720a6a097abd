#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "nvsim/constants.hpp"
#include "nvsim/errors.hpp"
#include "nvsim/levmar.hpp"

namespace nvsim {

// Field magnitude of an infinite straight thin wire, B = mu0 I / (2 pi d).
// Baseline sanity model; the calibrated inverse law below is what experiments use.
inline double ideal_wire_field(double current_ma, double distance_m) {
  if (!(distance_m > 0.0))
    throw std::domain_error("ideal_wire_field: distance must be positive");
  constexpr double mu0_over_2pi = 2.0e-7;  // T*m/A
  return mu0_over_2pi * (current_ma * 1.0e-3) / distance_m;
}

// Inverse-law microwire model B(d, I) = a * I / (d + d0), a in T*m/mA.
// The field scales linearly with drive current.
struct WireCalibration {
  double amplitude_t_m_per_ma = 0.0;
  double offset_m = 0.0;
  double reference_current_ma = 1.0;  // current the calibration data was taken at
  double residual_norm_t = 0.0;       // least-squares residual of the fit

  void validate() const {
    if (!(amplitude_t_m_per_ma > 0.0) || !std::isfinite(amplitude_t_m_per_ma))
      throw std::invalid_argument("WireCalibration: amplitude must be positive");
    if (!std::isfinite(offset_m))
      throw std::invalid_argument("WireCalibration: offset must be finite");
  }

  double field_t(double distance_m, double current_ma) const {
    if (!(distance_m + offset_m > 0.0))
      throw std::domain_error("WireCalibration: distance + offset must be positive");
    return amplitude_t_m_per_ma * current_ma / (distance_m + offset_m);
  }

  // Calibration pinned exactly to one known gradient value.
  static WireCalibration from_gradient_anchor(double gradient_t_per_m, double distance_m,
                                              double current_ma, double offset_m = 0.0) {
    WireCalibration cal;
    cal.offset_m = offset_m;
    cal.reference_current_ma = current_ma;
    const double u = distance_m + offset_m;
    cal.amplitude_t_m_per_ma = gradient_t_per_m * u * u / current_ma;
    cal.validate();
    return cal;
  }
};

// |dB/dd| at the given distance and drive current. The field decays away from
// the wire; the magnitude is returned, the axis direction lives in the
// scan-plane projection chosen by the caller.
inline double gradient_at(const WireCalibration& cal, double distance_m, double current_ma) {
  if (!(distance_m + cal.offset_m > 0.0))
    throw std::domain_error("gradient_at: distance + offset must be positive");
  const double u = distance_m + cal.offset_m;
  return cal.amplitude_t_m_per_ma * current_ma / (u * u);
}

struct CalibrationPoint {
  double distance_m = 0.0;
  double field_t = 0.0;
};

// Least-squares fit of B(d) = a / (d + d0) to measured points taken at one
// drive current. Initialization a = B1*d1, d0 = 0.
inline WireCalibration fit_calibration(std::span<const CalibrationPoint> points,
                                       double current_ma) {
  if (points.size() < 3)
    throw std::invalid_argument("fit_calibration: need at least 3 points");
  if (!(current_ma != 0.0) || !std::isfinite(current_ma))
    throw std::invalid_argument("fit_calibration: current must be nonzero and finite");
  double dmin = points[0].distance_m, dmax = points[0].distance_m;
  for (const auto& p : points) {
    if (!(p.field_t > 0.0) || !std::isfinite(p.field_t) || !std::isfinite(p.distance_m))
      throw std::invalid_argument("fit_calibration: fields must be positive and finite");
    dmin = std::min(dmin, p.distance_m);
    dmax = std::max(dmax, p.distance_m);
  }
  if (!(dmax > dmin))
    throw fit_error("fit_calibration: degenerate data, all distances equal", 0, 0.0);

  auto model = [&](const Eigen::VectorXd& p, Eigen::VectorXd& r, Eigen::MatrixXd& J) {
    const double a = p[0], d0 = p[1];
    const auto n = static_cast<Eigen::Index>(points.size());
    r.resize(n);
    J.resize(n, 2);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double u = points[static_cast<std::size_t>(i)].distance_m + d0;
      if (!(u > 0.0)) {  // pole crossed the data; poison this step
        r[i] = std::numeric_limits<double>::infinity();
        J(i, 0) = J(i, 1) = 0.0;
        continue;
      }
      r[i] = a / u - points[static_cast<std::size_t>(i)].field_t;
      J(i, 0) = 1.0 / u;
      J(i, 1) = -a / (u * u);
    }
  };

  Eigen::VectorXd p0(2);
  p0 << points[0].field_t * points[0].distance_m, 0.0;
  const LevMarResult res = levenberg_marquardt(model, p0);
  if (!res.converged) {
    std::ostringstream msg;
    msg << "fit_calibration did not converge after " << res.iterations
        << " iterations; residual norm " << std::sqrt(res.cost) << " T";
    throw fit_error(msg.str(), res.iterations, res.cost);
  }

  WireCalibration cal;
  cal.amplitude_t_m_per_ma = res.params[0] / current_ma;
  cal.offset_m = res.params[1];
  cal.reference_current_ma = current_ma;
  cal.residual_norm_t = std::sqrt(res.cost);
  cal.validate();
  return cal;
}

// Zeeman splitting of the ms = 0 -> +1 transition to field, and back.
inline double splitting_to_field(double transition_frequency_hz,
                                 const PhysicalConstants& k = {}) {
  k.validate();
  if (!(transition_frequency_hz >= k.zero_field_splitting_hz))
    throw std::domain_error("splitting_to_field: frequency below the zero-field splitting");
  return (transition_frequency_hz - k.zero_field_splitting_hz) / k.gamma_e_hz_per_t;
}

inline double field_to_splitting(double field_t, const PhysicalConstants& k = {}) {
  k.validate();
  if (!(field_t >= 0.0))
    throw std::domain_error("field_to_splitting: field must be >= 0");
  return k.zero_field_splitting_hz + k.gamma_e_hz_per_t * field_t;
}

// ---------------------------------------------------------------------------
// Gradient drive waveforms
// ---------------------------------------------------------------------------

enum class WaveformShape {
  rectangular,  // +1 then -1, flipping with the echo pulse
  half_cosine,  // cos(pi t / tau)
  full_cosine,  // cos(2 pi t / tau)
  dc,           // constant +1
  piecewise,    // piecewise-constant levels
};

struct PiecewiseSegment {
  double duration_frac = 0.0;  // fraction of the total duration
  double level = 0.0;          // multiplier on the drive current
};

// Time profile of the drive current over one evolution window. The profile is
// normalized to t/tau in [0, 1]; duration_s carries the physical length.
struct GradientWaveform {
  WaveformShape shape = WaveformShape::half_cosine;
  bool echo = true;  // pi pulse at the midpoint flips the accumulation sign
  double amplitude_scale = 1.0;
  double duration_s = 0.0;
  std::vector<PiecewiseSegment> segments;  // piecewise shape only

  void validate() const {
    if (!std::isfinite(amplitude_scale))
      throw std::invalid_argument("GradientWaveform: amplitude scale must be finite");
    if (shape == WaveformShape::piecewise) {
      if (segments.empty())
        throw config_error("piecewise waveform needs at least one segment");
      double total = 0.0;
      for (const auto& s : segments) {
        if (!(s.duration_frac > 0.0) || !std::isfinite(s.level))
          throw config_error("piecewise segment durations must be positive, levels finite");
        total += s.duration_frac;
      }
      if (std::abs(total - 1.0) > 1e-9)
        throw config_error("piecewise segment durations must sum to 1");
    } else if (!segments.empty()) {
      throw config_error("segments are only valid for the piecewise shape");
    }
  }

  // Unit profile at normalized time u in [0, 1].
  double level(double u) const {
    switch (shape) {
      case WaveformShape::rectangular:
        return u < 0.5 ? 1.0 : -1.0;
      case WaveformShape::half_cosine:
        return std::cos(std::numbers::pi * u);
      case WaveformShape::full_cosine:
        return std::cos(2.0 * std::numbers::pi * u);
      case WaveformShape::dc:
        return 1.0;
      case WaveformShape::piecewise: {
        double acc = 0.0;
        for (const auto& s : segments) {
          acc += s.duration_frac;
          if (u < acc) return s.level;
        }
        return segments.back().level;
      }
    }
    throw config_error("unsupported waveform shape");
  }
};

// Echo sign kernel: +1 on [0, tau/2), -1 on [tau/2, tau] when the echo pulse
// is present.
inline double echo_sign(const GradientWaveform& w, double u) {
  return (w.echo && u >= 0.5) ? -1.0 : 1.0;
}

// Closed-form echo-signed integral of the unit waveform as a fraction of tau:
// kappa = (1/tau) * int_0^tau level(t) * sign(t) dt. No quadrature here; the
// numerical route lives in propagate_oracle.
inline double effective_factor(const GradientWaveform& w) {
  w.validate();
  switch (w.shape) {
    case WaveformShape::rectangular:
      return w.echo ? 1.0 : 0.0;
    case WaveformShape::half_cosine:
      return w.echo ? 2.0 / std::numbers::pi : 0.0;
    case WaveformShape::full_cosine:
      return 0.0;
    case WaveformShape::dc:
      return w.echo ? 0.0 : 1.0;
    case WaveformShape::piecewise: {
      double kappa = 0.0;
      double start = 0.0;
      for (const auto& s : w.segments) {
        const double end = start + s.duration_frac;
        const double first = std::max(0.0, std::min(end, 0.5) - start);
        const double second = std::max(0.0, end - std::max(start, 0.5));
        kappa += s.level * (first + (w.echo ? -second : second));
        start = end;
      }
      return kappa;
    }
  }
  throw config_error("unsupported waveform shape");
}

// Encoding phase accumulated over one sequence, in radians:
//   theta = 2 pi gamma * G(I) * r * tau * kappa
// with G(I) = gradient_per_mA * I * amplitude_scale. Linear in current, in r
// and in tau by construction.
inline double phase_integral(const GradientWaveform& w, double gradient_t_per_m_per_ma,
                             double current_ma, double r_m, const PhysicalConstants& k = {}) {
  k.validate();
  w.validate();
  if (!(w.duration_s > 0.0))
    throw std::invalid_argument("phase_integral: waveform duration must be positive");
  if (!std::isfinite(gradient_t_per_m_per_ma) || !std::isfinite(current_ma) ||
      !std::isfinite(r_m))
    throw std::invalid_argument("phase_integral: all magnitudes must be finite");
  const double kappa = effective_factor(w);
  return 2.0 * std::numbers::pi * k.gamma_e_hz_per_t * gradient_t_per_m_per_ma * current_ma *
         w.amplitude_scale * r_m * w.duration_s * kappa;
}

// ---------------------------------------------------------------------------
// Calibration CSV ingestion: "distance_um,field_mT" with a header row.
// ---------------------------------------------------------------------------

inline std::vector<CalibrationPoint> load_calibration_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open calibration CSV", path);

  auto trim = [](std::string s) {
    const auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; };
    while (!s.empty() && is_space(s.front())) s.erase(s.begin());
    while (!s.empty() && is_space(s.back())) s.pop_back();
    return s;
  };

  std::string line;
  if (!std::getline(in, line)) throw config_error("empty calibration CSV", path);
  {
    std::istringstream header(line);
    std::string c1, c2;
    std::getline(header, c1, ',');
    std::getline(header, c2);
    if (trim(c1) != "distance_um" || trim(c2) != "field_mT")
      throw config_error("calibration CSV header must be exactly 'distance_um,field_mT'", path);
  }

  std::vector<CalibrationPoint> points;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    std::istringstream row(line);
    std::string c1, c2;
    std::getline(row, c1, ',');
    std::getline(row, c2);
    try {
      const double d_um = std::stod(trim(c1));
      const double b_mt = std::stod(trim(c2));
      points.push_back({d_um * 1e-6, b_mt * 1e-3});
    } catch (const std::exception&) {
      throw config_error("calibration CSV: bad row at line " + std::to_string(line_no), path);
    }
  }
  return points;
}

}  // namespace nvsim
