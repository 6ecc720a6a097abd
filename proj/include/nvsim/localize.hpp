#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"

#include "nvsim/core.hpp"
#include "nvsim/errors.hpp"
#include "nvsim/fft.hpp"
#include "nvsim/imaging.hpp"
#include "nvsim/levmar.hpp"
#include "nvsim/sequence.hpp"

namespace nvsim {

// Fitted symmetric 2-D Gaussian A exp(-rho^2 / 2w^2) + b. Parameter order in
// the covariance: amplitude, x, y, width, offset.
struct LocalizationResult {
  Vec2 center_m{};
  double amplitude = 0.0;  // counts above offset at the peak
  double width_m = 0.0;    // Gaussian sigma
  double offset = 0.0;     // counts
  Eigen::Matrix<double, 5, 5> covariance = Eigen::Matrix<double, 5, 5>::Zero();
  double sigma_x_m = 0.0;
  double sigma_y_m = 0.0;
  double residual_norm = 0.0;
  int iterations = 0;

  nlohmann::json to_json() const {
    nlohmann::json cov = nlohmann::json::array();
    for (int i = 0; i < 5; ++i) {
      nlohmann::json row = nlohmann::json::array();
      for (int j = 0; j < 5; ++j) row.push_back(covariance(i, j));
      cov.push_back(row);
    }
    return nlohmann::json{{"center_x_nm", center_m.x * 1e9},
                          {"center_y_nm", center_m.y * 1e9},
                          {"amplitude_counts", amplitude},
                          {"width_nm", width_m * 1e9},
                          {"offset_counts", offset},
                          {"sigma_x_nm", sigma_x_m * 1e9},
                          {"sigma_y_nm", sigma_y_m * 1e9},
                          {"residual_norm_counts", residual_norm},
                          {"iterations", iterations},
                          {"covariance_si", cov}};
  }
};

// Levenberg-Marquardt fit of an isotropic Gaussian surface to a single-blob
// image (typically a subtraction map). Initialization comes from the
// intensity centroid and second moments.
inline LocalizationResult fit_gaussian2d(const ScanImage& image) {
  image.geometry.validate();
  const std::size_t n = image.counts.size();
  if (n < 25) throw std::invalid_argument("fit_gaussian2d: need at least 25 pixels");

  const int w_px = image.geometry.width_px;
  const int h_px = image.geometry.height_px;
  std::vector<double> xs(n), ys(n);
  for (int iy = 0; iy < h_px; ++iy) {
    for (int ix = 0; ix < w_px; ++ix) {
      const Vec2 p = image.geometry.pixel_center(ix, iy);
      const std::size_t idx = static_cast<std::size_t>(iy) * w_px + ix;
      xs[idx] = p.x;
      ys[idx] = p.y;
    }
  }

  double c_min = image.counts[0], c_max = image.counts[0];
  for (double c : image.counts) {
    c_min = std::min(c_min, c);
    c_max = std::max(c_max, c);
  }
  const double b0 = c_min;
  const double a0 = c_max - c_min;
  if (!(a0 > 0.0)) throw degenerate_blob_error("fit_gaussian2d: image has no blob above offset");

  double wsum = 0.0, x0 = 0.0, y0 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double weight = std::max(image.counts[i] - b0, 0.0);
    wsum += weight;
    x0 += weight * xs[i];
    y0 += weight * ys[i];
  }
  x0 /= wsum;
  y0 /= wsum;
  double second = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double weight = std::max(image.counts[i] - b0, 0.0);
    const double dx = xs[i] - x0, dy = ys[i] - y0;
    second += weight * (dx * dx + dy * dy);
  }
  const double extent =
      std::max(w_px, h_px) * image.geometry.pixel_size_m;
  double w0 = std::sqrt(std::max(second / wsum / 2.0, 0.0));  // per-axis sigma
  w0 = std::clamp(w0, 0.5 * image.geometry.pixel_size_m, extent);

  auto model = [&](const Eigen::VectorXd& p, Eigen::VectorXd& r, Eigen::MatrixXd& J) {
    const double amp = p[0], cx = p[1], cy = p[2], wid = p[3], off = p[4];
    const double inv_w2 = 1.0 / (wid * wid);
    r.resize(static_cast<Eigen::Index>(n));
    J.resize(static_cast<Eigen::Index>(n), 5);
    for (std::size_t i = 0; i < n; ++i) {
      const double dx = xs[i] - cx, dy = ys[i] - cy;
      const double rho2 = dx * dx + dy * dy;
      const double e = std::exp(-0.5 * rho2 * inv_w2);
      const auto k = static_cast<Eigen::Index>(i);
      r[k] = amp * e + off - image.counts[i];
      J(k, 0) = e;
      J(k, 1) = amp * e * dx * inv_w2;
      J(k, 2) = amp * e * dy * inv_w2;
      J(k, 3) = amp * e * rho2 * inv_w2 / wid;
      J(k, 4) = 1.0;
    }
  };

  Eigen::VectorXd p0(5);
  p0 << a0, x0, y0, w0, b0;
  const LevMarResult res = levenberg_marquardt(model, p0);
  if (!res.converged) {
    std::string trace = "cost trace:";
    const std::size_t first = res.cost_trace.size() > 8 ? res.cost_trace.size() - 8 : 0;
    for (std::size_t i = first; i < res.cost_trace.size(); ++i)
      trace += " " + std::to_string(res.cost_trace[i]);
    throw fit_error("fit_gaussian2d did not converge after " +
                        std::to_string(res.iterations) + " iterations; " + trace,
                    res.iterations, res.cost);
  }

  const double amp = res.params[0];
  const double width = std::abs(res.params[3]);  // model depends on w^2 only
  if (amp <= 0.0)
    throw degenerate_blob_error("fit_gaussian2d: negative-amplitude optimum");
  if (width < 0.4 * image.geometry.pixel_size_m || width > 2.0 * extent)
    throw degenerate_blob_error("fit_gaussian2d: fitted width is not a resolvable blob");

  const Eigen::MatrixXd cov = scaled_covariance(res, static_cast<int>(n));
  const double sigma_amp = std::sqrt(std::max(cov(0, 0), 0.0));
  if (amp < 3.0 * sigma_amp)
    throw degenerate_blob_error("fit_gaussian2d: amplitude is not significant against noise");

  LocalizationResult out;
  out.amplitude = amp;
  out.center_m = {res.params[1], res.params[2]};
  out.width_m = width;
  out.offset = res.params[4];
  out.covariance = cov;
  out.sigma_x_m = std::sqrt(std::max(cov(1, 1), 0.0));
  out.sigma_y_m = std::sqrt(std::max(cov(2, 2), 0.0));
  out.residual_norm = std::sqrt(res.cost);
  out.iterations = res.iterations;
  return out;
}

struct SeparationResult {
  double distance_m = 0.0;
  double sigma_m = 0.0;
};

// Euclidean separation of two fitted centers with first-order propagation of
// both position covariances along the separation direction.
inline SeparationResult pair_separation(const LocalizationResult& a,
                                        const LocalizationResult& b) {
  const double dx = b.center_m.x - a.center_m.x;
  const double dy = b.center_m.y - a.center_m.y;
  const double d = std::hypot(dx, dy);
  const Eigen::Matrix2d ca = a.covariance.block<2, 2>(1, 1);
  const Eigen::Matrix2d cb = b.covariance.block<2, 2>(1, 1);
  if (d < 1e-15) {
    // direction undefined; report the isotropic combined sigma
    return {0.0, std::sqrt(0.5 * (ca.trace() + cb.trace()))};
  }
  const Eigen::Vector2d u(dx / d, dy / d);
  const double var = u.dot(ca * u) + u.dot(cb * u);
  return {d, std::sqrt(std::max(var, 0.0))};
}

// ---------------------------------------------------------------------------
// 1-D real-space reconstruction of a current sweep
// ---------------------------------------------------------------------------

struct SpectrumPeak {
  double position_m = 0.0;
  double magnitude = 0.0;
};

struct SpatialSpectrum {
  std::vector<double> positions_m;  // gradient-axis coordinate per retained bin
  std::vector<double> magnitudes;
  double resolution_m = 0.0;  // one spectral element mapped to position
  std::vector<SpectrumPeak> peaks;  // descending magnitude
};

// Magnitude spectrum of the mean-subtracted sweep signal with the frequency
// axis rescaled to gradient-axis position, r = f_I / (gamma g tau kappa).
// Peaks are located to sub-bin precision by 3-point parabolic interpolation.
inline SpatialSpectrum fft_reconstruct(const SweepResult& sweep, const PulseSequence& seq,
                                       const PhysicalConstants& k = {},
                                       double peak_threshold_rel = 0.3) {
  const std::vector<double>& currents = sweep.currents_ma;
  const std::size_t n = currents.size();
  if (n < 16) throw sampling_error("fft_reconstruct: need at least 16 sweep points");
  const double spacing = currents[1] - currents[0];
  if (!(spacing > 0.0)) throw sampling_error("fft_reconstruct: currents must increase");
  for (std::size_t i = 1; i < n; ++i) {
    if (std::abs(currents[i] - currents[i - 1] - spacing) > 1e-6 * spacing)
      throw sampling_error("fft_reconstruct: currents must be uniformly spaced");
  }

  seq.validate();
  const double kappa = effective_factor(seq.waveform) * seq.waveform.amplitude_scale;
  if (kappa == 0.0)
    throw std::domain_error("fft_reconstruct: waveform encodes no phase (kappa = 0)");
  // cycles per (mA * meter): the sweep frequency of an emitter at unit r
  const double scale = k.gamma_e_hz_per_t * seq.gradient_t_per_m_per_ma * seq.tau_s * kappa;

  double mean = 0.0;
  for (double s : sweep.signals) mean += s;
  mean /= static_cast<double>(n);

  const std::size_t n_fft = next_pow2(4 * n);  // x4 zero padding
  std::vector<std::complex<double>> buf(n_fft, {0.0, 0.0});
  for (std::size_t i = 0; i < n; ++i) buf[i] = {sweep.signals[i] - mean, 0.0};
  fft_pow2(buf);

  SpatialSpectrum out;
  const double span = currents.back() - currents.front();
  out.resolution_m = 1.0 / (std::abs(scale) * span);
  const std::size_t n_half = n_fft / 2;
  out.positions_m.resize(n_half - 1);
  out.magnitudes.resize(n_half - 1);
  double max_mag = 0.0;
  for (std::size_t b = 1; b < n_half; ++b) {
    const double freq = static_cast<double>(b) / (static_cast<double>(n_fft) * spacing);
    out.positions_m[b - 1] = freq / scale;
    out.magnitudes[b - 1] = std::abs(buf[b]);
    max_mag = std::max(max_mag, out.magnitudes[b - 1]);
  }

  // local maxima above threshold, strongest first, separated by one element
  std::vector<std::size_t> maxima;
  for (std::size_t b = 1; b + 1 < n_half; ++b) {
    const double m = std::abs(buf[b]);
    if (m >= peak_threshold_rel * max_mag && m > std::abs(buf[b - 1]) &&
        m >= std::abs(buf[b + 1]))
      maxima.push_back(b);
  }
  std::sort(maxima.begin(), maxima.end(), [&](std::size_t a, std::size_t b2) {
    return std::abs(buf[a]) > std::abs(buf[b2]);
  });
  for (std::size_t b : maxima) {
    const double m0 = std::abs(buf[b - 1]);
    const double m1 = std::abs(buf[b]);
    const double m2 = std::abs(buf[b + 1]);
    const double denom = m0 - 2.0 * m1 + m2;
    const double shift = (std::abs(denom) > 1e-300) ? 0.5 * (m0 - m2) / denom : 0.0;
    const double freq =
        (static_cast<double>(b) + shift) / (static_cast<double>(n_fft) * spacing);
    const double pos = freq / scale;
    bool keep = true;
    for (const auto& p : out.peaks)
      if (std::abs(p.position_m - pos) < out.resolution_m) keep = false;
    if (keep) out.peaks.push_back({pos, m1 - 0.25 * (m0 - m2) * shift});
  }
  return out;
}

}  // namespace nvsim
