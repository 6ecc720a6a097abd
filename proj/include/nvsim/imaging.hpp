#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "nvsim/core.hpp"
#include "nvsim/errors.hpp"
#include "nvsim/random.hpp"

namespace nvsim {

// Isotropic Gaussian point-spread function with unit peak.
struct PsfModel {
  double fwhm_m = 436e-9;
  double peak_rate = 0.0;  // expected photons per dwell at an ON unit-brightness center

  void validate() const {
    if (!(fwhm_m > 0.0)) throw std::invalid_argument("PsfModel: FWHM must be positive");
    if (!(peak_rate >= 0.0) || !std::isfinite(peak_rate))
      throw std::invalid_argument("PsfModel: peak rate must be finite and >= 0");
  }
};

inline double psf_value(const PsfModel& psf, Vec2 offset_m) {
  if (!std::isfinite(offset_m.x) || !std::isfinite(offset_m.y))
    throw std::invalid_argument("psf_value: offset must be finite");
  return std::exp(-4.0 * std::numbers::ln2 * offset_m.norm2() / (psf.fwhm_m * psf.fwhm_m));
}

struct ScanGeometry {
  int width_px = 50;
  int height_px = 50;
  double pixel_size_m = 20e-9;
  Vec2 origin_m{};

  bool operator==(const ScanGeometry&) const = default;

  // pixels are sampled at their centers
  Vec2 pixel_center(int ix, int iy) const {
    return {origin_m.x + (ix + 0.5) * pixel_size_m, origin_m.y + (iy + 0.5) * pixel_size_m};
  }

  std::size_t pixel_count() const {
    return static_cast<std::size_t>(width_px) * static_cast<std::size_t>(height_px);
  }

  void validate() const {
    if (width_px <= 0 || height_px <= 0)
      throw std::invalid_argument("ScanGeometry: dimensions must be positive");
    if (!(pixel_size_m > 0.0))
      throw std::invalid_argument("ScanGeometry: pixel size must be positive");
  }
};

// Pixel grid of photon counts. Counts are integers when Poisson noise is on
// and reals for noiseless or subtracted maps; row-major, index iy*width + ix.
struct ScanImage {
  ScanGeometry geometry;
  std::string state_label;  // "00", "01", "10", or a subtraction label
  std::uint64_t seed = 0;
  bool noiseless = false;
  std::vector<double> counts;

  double& at(int ix, int iy) {
    return counts[static_cast<std::size_t>(iy) * geometry.width_px + ix];
  }
  double at(int ix, int iy) const {
    return counts[static_cast<std::size_t>(iy) * geometry.width_px + ix];
  }
};

enum class NoiseModel { poisson, none };

// Expected photon rate at a pixel for a given joint state. off_j follows the
// label: character '1' marks emitter j switched dark.
inline double expected_rate(std::span<const NvCenter> centers, const PsfModel& psf,
                            const std::string& joint_state, double background_rate, Vec2 p) {
  double rate = background_rate;
  for (std::size_t j = 0; j < centers.size(); ++j) {
    const double off = joint_state[j] == '1' ? 1.0 : 0.0;
    rate += centers[j].brightness * (1.0 - centers[j].contrast * off) * psf.peak_rate *
            psf_value(psf, p - centers[j].position_m);
  }
  return rate;
}

// Synthesize one confocal map. Counts are drawn per pixel from streams
// derived from (seed, pixel index), so the result is reproducible bit for bit
// regardless of evaluation order.
inline ScanImage synthesize_scan(std::span<const NvCenter> centers, const PsfModel& psf,
                                 const ScanGeometry& grid, const std::string& joint_state,
                                 double background_rate, std::uint64_t seed,
                                 NoiseModel noise = NoiseModel::poisson) {
  grid.validate();
  psf.validate();
  if (joint_state.size() != centers.size())
    throw std::invalid_argument("synthesize_scan: joint state label must assign one bit per center");
  for (char c : joint_state)
    if (c != '0' && c != '1')
      throw std::invalid_argument("synthesize_scan: joint state label must be 0/1 characters");
  if (!(background_rate >= 0.0) || !std::isfinite(background_rate))
    throw std::invalid_argument("synthesize_scan: background rate must be finite and >= 0");
  for (const auto& c : centers) c.validate();

  ScanImage img;
  img.geometry = grid;
  img.state_label = joint_state;
  img.noiseless = (noise == NoiseModel::none);
  img.seed = img.noiseless ? 0 : seed;
  img.counts.resize(grid.pixel_count());

  for (int iy = 0; iy < grid.height_px; ++iy) {
    for (int ix = 0; ix < grid.width_px; ++ix) {
      const std::size_t idx = static_cast<std::size_t>(iy) * grid.width_px + ix;
      const double rate =
          expected_rate(centers, psf, joint_state, background_rate, grid.pixel_center(ix, iy));
      if (noise == NoiseModel::poisson) {
        SplitMix64 rng = substream(seed, idx);
        img.counts[idx] = static_cast<double>(poisson_sample(rng, rate));
      } else {
        img.counts[idx] = rate;
      }
    }
  }
  return img;
}

// Pixelwise difference of two maps with identical geometry. When the two
// labels differ in exactly one emitter, the label records which one the
// difference isolates.
inline ScanImage subtract_maps(const ScanImage& on_on, const ScanImage& one_off) {
  if (!(on_on.geometry == one_off.geometry))
    throw shape_error("subtract_maps: image geometries differ");
  ScanImage out;
  out.geometry = on_on.geometry;
  out.noiseless = on_on.noiseless && one_off.noiseless;
  out.seed = 0;
  out.counts.resize(on_on.counts.size());
  for (std::size_t i = 0; i < out.counts.size(); ++i)
    out.counts[i] = on_on.counts[i] - one_off.counts[i];

  out.state_label = on_on.state_label + "-" + one_off.state_label;
  if (on_on.state_label.size() == one_off.state_label.size()) {
    int flipped = -1, n_diff = 0;
    for (std::size_t j = 0; j < on_on.state_label.size(); ++j) {
      if (on_on.state_label[j] != one_off.state_label[j]) {
        ++n_diff;
        flipped = static_cast<int>(j);
      }
    }
    if (n_diff == 1) out.state_label = "emitter_" + std::to_string(flipped + 1);
  }
  return out;
}

// ---------------------------------------------------------------------------
// File formats: ASCII PGM for viewing, CSV for exact counts, JSON sidecar for
// geometry and provenance. All outputs are byte-stable for identical inputs.
// ---------------------------------------------------------------------------

inline void write_pgm(const ScanImage& img, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw config_error("cannot write PGM", path);
  double max_count = 0.0;
  for (double c : img.counts) max_count = std::max(max_count, c);
  const long maxval = std::min(65535L, std::max(1L, static_cast<long>(std::ceil(max_count))));
  out << "P2\n" << img.geometry.width_px << " " << img.geometry.height_px << "\n" << maxval
      << "\n";
  for (int iy = 0; iy < img.geometry.height_px; ++iy) {
    for (int ix = 0; ix < img.geometry.width_px; ++ix) {
      const double c = std::clamp(img.at(ix, iy), 0.0, static_cast<double>(maxval));
      out << static_cast<long>(std::lround(c)) << (ix + 1 == img.geometry.width_px ? "\n" : " ");
    }
  }
}

inline void write_counts_csv(const ScanImage& img, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw config_error("cannot write counts CSV", path);
  out << std::setprecision(17);
  for (int iy = 0; iy < img.geometry.height_px; ++iy) {
    for (int ix = 0; ix < img.geometry.width_px; ++ix)
      out << img.at(ix, iy) << (ix + 1 == img.geometry.width_px ? "\n" : ",");
  }
}

inline nlohmann::json scan_meta_json(const ScanImage& img) {
  return nlohmann::json{{"width_px", img.geometry.width_px},
                        {"height_px", img.geometry.height_px},
                        {"pixel_size_nm", img.geometry.pixel_size_m * 1e9},
                        {"origin_x_nm", img.geometry.origin_m.x * 1e9},
                        {"origin_y_nm", img.geometry.origin_m.y * 1e9},
                        {"state_label", img.state_label},
                        {"seed", img.seed},
                        {"noiseless", img.noiseless}};
}

inline void write_scan_meta(const ScanImage& img, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw config_error("cannot write scan metadata", path);
  out << scan_meta_json(img).dump(2) << "\n";
}

// Reads a map written as <prefix>.csv + <prefix>.meta.json.
inline ScanImage load_scan(const std::string& prefix) {
  const std::string meta_path = prefix + ".meta.json";
  std::ifstream meta_in(meta_path);
  if (!meta_in) throw config_error("cannot open scan metadata", meta_path);
  nlohmann::json meta;
  try {
    meta_in >> meta;
  } catch (const nlohmann::json::exception& e) {
    throw config_error(std::string("bad scan metadata: ") + e.what(), meta_path);
  }

  ScanImage img;
  img.geometry.width_px = meta.at("width_px").get<int>();
  img.geometry.height_px = meta.at("height_px").get<int>();
  img.geometry.pixel_size_m = meta.at("pixel_size_nm").get<double>() * 1e-9;
  img.geometry.origin_m.x = meta.at("origin_x_nm").get<double>() * 1e-9;
  img.geometry.origin_m.y = meta.at("origin_y_nm").get<double>() * 1e-9;
  img.state_label = meta.at("state_label").get<std::string>();
  img.seed = meta.at("seed").get<std::uint64_t>();
  img.noiseless = meta.at("noiseless").get<bool>();
  img.geometry.validate();

  const std::string csv_path = prefix + ".csv";
  std::ifstream in(csv_path);
  if (!in) throw config_error("cannot open counts CSV", csv_path);
  img.counts.reserve(img.geometry.pixel_count());
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string cell;
    while (std::getline(row, cell, ',')) img.counts.push_back(std::stod(cell));
  }
  if (img.counts.size() != img.geometry.pixel_count())
    throw shape_error("scan counts do not match the metadata geometry");
  return img;
}

}  // namespace nvsim
