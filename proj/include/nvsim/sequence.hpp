#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "nvsim/core.hpp"
#include "nvsim/errors.hpp"
#include "nvsim/field.hpp"

namespace nvsim {

// One phase-encoding spin-echo experiment: waveform, evolution time, local
// gradient per unit drive current, optional coherence envelope exp(-tau/T2).
struct PulseSequence {
  GradientWaveform waveform;
  double tau_s = 0.0;
  double gradient_t_per_m_per_ma = 0.0;
  std::optional<double> decoherence_t2_s;

  void validate() const {
    if (!(tau_s > 0.0) || !std::isfinite(tau_s))
      throw std::invalid_argument("PulseSequence: tau must be positive and finite");
    if (!std::isfinite(gradient_t_per_m_per_ma))
      throw std::invalid_argument("PulseSequence: gradient must be finite");
    if (decoherence_t2_s && !(*decoherence_t2_s > 0.0))
      throw std::invalid_argument("PulseSequence: T2 must be positive when set");
    GradientWaveform w = waveform;
    w.duration_s = tau_s;
    w.validate();
  }

  GradientWaveform timed_waveform() const {
    GradientWaveform w = waveform;
    w.duration_s = tau_s;
    return w;
  }

  double envelope() const {
    return decoherence_t2_s ? std::exp(-tau_s / *decoherence_t2_s) : 1.0;
  }
};

// Encoding phase of one emitter at the given drive current.
inline double encoding_phase(const PulseSequence& seq, const NvCenter& center, double current_ma,
                             const PhysicalConstants& k = {}) {
  return phase_integral(seq.timed_waveform(), seq.gradient_t_per_m_per_ma, current_ma,
                        center.gradient_coordinate_m, k);
}

struct SweepResult {
  std::vector<double> currents_ma;
  std::vector<double> signals;
  std::vector<std::vector<double>> per_center_phases_rad;  // [current][center]
};

// Weighted cosine signal versus drive current amplitude.
inline SweepResult run_current_sweep(const PulseSequence& seq, std::span<const NvCenter> centers,
                                     std::span<const double> currents_ma,
                                     const PhysicalConstants& k = {}) {
  seq.validate();
  if (currents_ma.empty())
    throw std::invalid_argument("run_current_sweep: empty current list");
  if (centers.empty())
    throw std::invalid_argument("run_current_sweep: need at least one center");
  for (const auto& c : centers) c.validate();
  for (double i : currents_ma)
    if (!std::isfinite(i))
      throw std::invalid_argument("run_current_sweep: currents must be finite");

  const double env = seq.envelope();
  SweepResult out;
  out.currents_ma.assign(currents_ma.begin(), currents_ma.end());
  out.signals.reserve(currents_ma.size());
  out.per_center_phases_rad.reserve(currents_ma.size());
  std::vector<double> phases(centers.size());
  for (double current : currents_ma) {
    for (std::size_t j = 0; j < centers.size(); ++j)
      phases[j] = encoding_phase(seq, centers[j], current, k);
    out.signals.push_back(env * signal_total(centers, phases));
    out.per_center_phases_rad.push_back(phases);
  }
  return out;
}

// CSV export: current_mA, signal, phase_1, phase_2, ...
inline void write_sweep_csv(const SweepResult& sweep, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw config_error("cannot write sweep CSV", path);
  out << std::setprecision(17);
  const std::size_t n_centers =
      sweep.per_center_phases_rad.empty() ? 0 : sweep.per_center_phases_rad.front().size();
  out << "current_mA,signal";
  for (std::size_t j = 0; j < n_centers; ++j) out << ",phase_" << (j + 1);
  out << "\n";
  for (std::size_t i = 0; i < sweep.currents_ma.size(); ++i) {
    out << sweep.currents_ma[i] << "," << sweep.signals[i];
    for (double phase : sweep.per_center_phases_rad[i]) out << "," << phase;
    out << "\n";
  }
}

// ---------------------------------------------------------------------------
// Switching-current search
// ---------------------------------------------------------------------------

enum class SwitchTarget { zero_one, one_zero };  // first x second emitter basis states

struct SwitchResult {
  double current_ma = 0.0;
  double infidelity = 0.0;
};

// Squared infidelity of both spins against the target joint basis state.
inline double switch_cost(const PulseSequence& seq, const NvCenter& first,
                          const NvCenter& second, SwitchTarget target, double current_ma,
                          const PhysicalConstants& k = {}) {
  const double env = seq.envelope();
  const double p1_on = on_population(encoding_phase(seq, first, current_ma, k), env);
  const double p2_on = on_population(encoding_phase(seq, second, current_ma, k), env);
  const double p1 = (target == SwitchTarget::zero_one) ? p1_on : 1.0 - p1_on;
  const double p2 = (target == SwitchTarget::zero_one) ? 1.0 - p2_on : p2_on;
  return (1.0 - p1) * (1.0 - p1) + (1.0 - p2) * (1.0 - p2);
}

namespace detail {

// Golden-section minimization on [lo, hi] for a unimodal bracket.
template <typename F>
inline std::pair<double, double> golden_minimize(F&& f, double lo, double hi, double tol) {
  constexpr double inv_phi = 0.6180339887498949;
  double a = lo, b = hi;
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  double fc = f(c), fd = f(d);
  while (b - a > tol) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = f(d);
    }
  }
  const double x = 0.5 * (a + b);
  return {x, f(x)};
}

}  // namespace detail

// Smallest drive current in (0, max_current] that puts the pair into the target
// joint state: grid scan followed by golden-section refinement of the first
// local cost minimum under the acceptance threshold.
inline SwitchResult find_switch_currents(const PulseSequence& seq, const NvCenter& first,
                                         const NvCenter& second, double max_current_ma,
                                         SwitchTarget target, const PhysicalConstants& k = {},
                                         double grid_step_ma = 1e-3,
                                         double accept_threshold = 0.05) {
  seq.validate();
  first.validate();
  second.validate();
  if (!(max_current_ma > 0.0) || !std::isfinite(max_current_ma))
    throw std::invalid_argument("find_switch_currents: search range must be positive and finite");
  if (first.gradient_coordinate_m == second.gradient_coordinate_m)
    throw not_switchable_error(
        "centers share a gradient coordinate; phases never differ", 0.0,
        switch_cost(seq, first, second, target, 0.0, k));

  const auto cost = [&](double current) {
    return switch_cost(seq, first, second, target, current, k);
  };

  const int n = static_cast<int>(std::ceil(max_current_ma / grid_step_ma)) + 1;
  std::vector<double> grid(static_cast<std::size_t>(n));
  double best_cost = std::numeric_limits<double>::infinity();
  double best_current = 0.0;
  for (int i = 0; i < n; ++i) {
    const double current = std::min(i * grid_step_ma, max_current_ma);
    grid[static_cast<std::size_t>(i)] = cost(current);
    if (grid[static_cast<std::size_t>(i)] < best_cost) {
      best_cost = grid[static_cast<std::size_t>(i)];
      best_current = current;
    }
  }

  for (int i = 1; i + 1 < n; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    if (grid[ui] < accept_threshold && grid[ui] <= grid[ui - 1] && grid[ui] <= grid[ui + 1]) {
      const double lo = (i - 1) * grid_step_ma;
      const double hi = std::min((i + 1) * grid_step_ma, max_current_ma);
      auto [current, value] = detail::golden_minimize(cost, lo, hi, 1e-8);
      if (value < accept_threshold) return {current, value};
    }
  }

  std::ostringstream msg;
  msg << "no switching current below infidelity " << accept_threshold << " in [0, "
      << max_current_ma << "] mA; best " << best_cost << " at " << best_current << " mA";
  throw not_switchable_error(msg.str(), best_current, best_cost);
}

// Separation whose encoding-phase difference is pi: 0.5 / (gamma G tau kappa).
inline double min_resolution(double gradient_t_per_m, const GradientWaveform& waveform,
                             const PhysicalConstants& k = {}) {
  k.validate();
  if (!(gradient_t_per_m > 0.0))
    throw std::domain_error("min_resolution: gradient must be positive");
  if (!(waveform.duration_s > 0.0))
    throw std::invalid_argument("min_resolution: waveform duration must be positive");
  const double kappa = effective_factor(waveform) * waveform.amplitude_scale;
  if (kappa == 0.0)
    throw std::domain_error("min_resolution: waveform encodes no phase (kappa = 0)");
  return 0.5 / (k.gamma_e_hz_per_t * gradient_t_per_m * waveform.duration_s * kappa);
}

// ---------------------------------------------------------------------------
// Single-cosine frequency estimation for sweep summaries and test oracles.
// ---------------------------------------------------------------------------

struct CosineFit {
  double frequency_per_ma = 0.0;  // cycles per mA
  double amplitude = 0.0;
  double offset = 0.0;
  double rms_residual = 0.0;
};

namespace detail {

// Residual of the best linear fit a cos + b sin + c at a fixed frequency.
inline double cosine_ssr(std::span<const double> x, std::span<const double> y, double freq,
                         double* amp = nullptr, double* offset = nullptr) {
  const auto n = static_cast<Eigen::Index>(x.size());
  Eigen::MatrixXd design(n, 3);
  Eigen::VectorXd rhs(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double w = 2.0 * std::numbers::pi * freq * x[static_cast<std::size_t>(i)];
    design(i, 0) = std::cos(w);
    design(i, 1) = std::sin(w);
    design(i, 2) = 1.0;
    rhs[i] = y[static_cast<std::size_t>(i)];
  }
  const Eigen::Vector3d coef =
      (design.transpose() * design).ldlt().solve(design.transpose() * rhs);
  const double ssr = (design * coef - rhs).squaredNorm();
  if (amp) *amp = std::hypot(coef[0], coef[1]);
  if (offset) *offset = coef[2];
  return ssr;
}

}  // namespace detail

// Least-squares cosine fit over a uniformly spaced sweep. The frequency is
// seeded from the coarse spectrum and refined by golden section on the SSR.
inline CosineFit fit_sweep_cosine(std::span<const double> currents_ma,
                                  std::span<const double> signals) {
  if (currents_ma.size() != signals.size() || currents_ma.size() < 8)
    throw std::invalid_argument("fit_sweep_cosine: need >= 8 matched samples");
  const std::size_t n = currents_ma.size();
  const double span = currents_ma.back() - currents_ma.front();
  if (!(span > 0.0)) throw std::invalid_argument("fit_sweep_cosine: zero sweep span");

  // coarse SSR scan up to Nyquist
  const double f_max = 0.5 * (n - 1) / span;
  const int coarse = static_cast<int>(4 * n);
  double best_f = 0.0, best_ssr = std::numeric_limits<double>::infinity();
  for (int i = 1; i < coarse; ++i) {
    const double f = f_max * i / coarse;
    const double ssr = detail::cosine_ssr(currents_ma, signals, f);
    if (ssr < best_ssr) {
      best_ssr = ssr;
      best_f = f;
    }
  }
  const double step = f_max / coarse;
  auto [f_opt, ssr_opt] = detail::golden_minimize(
      [&](double f) { return detail::cosine_ssr(currents_ma, signals, f); },
      std::max(best_f - step, 0.0), best_f + step, 1e-10 * f_max);

  CosineFit fit;
  fit.frequency_per_ma = f_opt;
  fit.rms_residual = std::sqrt(ssr_opt / static_cast<double>(n));
  detail::cosine_ssr(currents_ma, signals, f_opt, &fit.amplitude, &fit.offset);
  return fit;
}

}  // namespace nvsim
