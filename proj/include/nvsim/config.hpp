#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "nvsim/constants.hpp"
#include "nvsim/core.hpp"
#include "nvsim/errors.hpp"
#include "nvsim/field.hpp"
#include "nvsim/imaging.hpp"
#include "nvsim/sequence.hpp"

namespace nvsim {

struct SweepSection {
  double start_ma = 0.0;
  double stop_ma = 0.0;
  int points = 0;
};

struct ScanSection {
  ScanGeometry geometry;
  double fwhm_m = 436e-9;
  double peak_rate = 0.0;
  double background = 0.0;
};

struct SwitchSection {
  double max_current_ma = 1.0;
};

// One experiment description. Physical quantities carry their unit in the
// key name; unknown keys are rejected so unit typos fail loudly.
struct ExperimentConfig {
  PhysicalConstants constants;
  double tau_s = 0.0;
  std::optional<double> t2_s;
  GradientWaveform waveform;
  double gradient_t_per_m_per_ma = 0.0;
  std::vector<NvCenter> centers;
  std::optional<SweepSection> sweep;
  std::optional<ScanSection> scan;
  std::optional<SwitchSection> switch_search;
  std::uint64_t seed = 1;

  PulseSequence sequence() const {
    PulseSequence seq;
    seq.waveform = waveform;
    seq.tau_s = tau_s;
    seq.gradient_t_per_m_per_ma = gradient_t_per_m_per_ma;
    seq.decoherence_t2_s = t2_s;
    seq.validate();
    return seq;
  }

  const SweepSection& require_sweep() const {
    if (!sweep) throw config_error("config has no 'sweep' section");
    return *sweep;
  }
  const ScanSection& require_scan() const {
    if (!scan) throw config_error("config has no 'scan' section");
    return *scan;
  }

  std::vector<double> sweep_currents() const {
    const SweepSection& s = require_sweep();
    std::vector<double> currents(static_cast<std::size_t>(s.points));
    for (int i = 0; i < s.points; ++i)
      currents[static_cast<std::size_t>(i)] =
          s.start_ma + (s.stop_ma - s.start_ma) * i / (s.points - 1);
    return currents;
  }

  PsfModel psf() const {
    const ScanSection& s = require_scan();
    return PsfModel{s.fwhm_m, s.peak_rate};
  }
};

namespace detail {

inline void check_keys(const nlohmann::json& obj, std::initializer_list<const char*> allowed,
                       const std::string& path) {
  for (const auto& item : obj.items()) {
    bool known = false;
    for (const char* key : allowed)
      if (item.key() == key) known = true;
    if (!known) throw config_error("unknown config key", path + "." + item.key());
  }
}

inline double get_number(const nlohmann::json& obj, const char* key, const std::string& path) {
  if (!obj.contains(key)) throw config_error("missing config key", path + "." + key);
  if (!obj.at(key).is_number()) throw config_error("expected a number", path + "." + key);
  return obj.at(key).get<double>();
}

inline double get_number_or(const nlohmann::json& obj, const char* key, double fallback) {
  return obj.contains(key) ? obj.at(key).get<double>() : fallback;
}

}  // namespace detail

inline WaveformShape parse_waveform_shape(const std::string& name) {
  if (name == "rectangular") return WaveformShape::rectangular;
  if (name == "half_cosine") return WaveformShape::half_cosine;
  if (name == "full_cosine") return WaveformShape::full_cosine;
  if (name == "dc") return WaveformShape::dc;
  if (name == "piecewise") return WaveformShape::piecewise;
  throw config_error("unknown waveform shape '" + name + "'", "waveform.shape");
}

inline std::string waveform_shape_name(WaveformShape shape) {
  switch (shape) {
    case WaveformShape::rectangular: return "rectangular";
    case WaveformShape::half_cosine: return "half_cosine";
    case WaveformShape::full_cosine: return "full_cosine";
    case WaveformShape::dc: return "dc";
    case WaveformShape::piecewise: return "piecewise";
  }
  return "?";
}

// Applies "dotted.path=value" overrides onto the raw JSON before parsing.
// Values are parsed as numbers or booleans when they look like one.
inline void apply_override(nlohmann::json& root, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw config_error("override must look like key=value", assignment);
  const std::string path = assignment.substr(0, eq);
  const std::string value = assignment.substr(eq + 1);

  nlohmann::json* node = &root;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string part = path.substr(start, dot == std::string::npos ? dot : dot - start);
    if (part.empty()) throw config_error("bad override path", path);
    const bool is_index = node->is_array() && !part.empty() &&
                          part.find_first_not_of("0123456789") == std::string::npos;
    if (dot == std::string::npos) {
      nlohmann::json parsed;
      try {
        parsed = nlohmann::json::parse(value);
        if (!parsed.is_number() && !parsed.is_boolean()) parsed = value;
      } catch (const nlohmann::json::exception&) {
        parsed = value;
      }
      if (is_index)
        node->at(std::stoul(part)) = parsed;
      else
        (*node)[part] = parsed;
      return;
    }
    node = is_index ? &node->at(std::stoul(part)) : &(*node)[part];
    start = dot + 1;
  }
}

inline ExperimentConfig parse_config(const nlohmann::json& j,
                                     const std::filesystem::path& base_dir) {
  using detail::check_keys;
  using detail::get_number;

  check_keys(j,
             {"seed", "constants", "tau_us", "decoherence_t2_us", "waveform", "gradient",
              "centers", "sweep", "scan", "switch_search"},
             "config");

  ExperimentConfig cfg;
  if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();

  if (j.contains("constants")) {
    const auto& c = j.at("constants");
    check_keys(c, {"gamma_e_hz_per_t", "zero_field_splitting_hz"}, "constants");
    cfg.constants.gamma_e_hz_per_t =
        detail::get_number_or(c, "gamma_e_hz_per_t", cfg.constants.gamma_e_hz_per_t);
    cfg.constants.zero_field_splitting_hz = detail::get_number_or(
        c, "zero_field_splitting_hz", cfg.constants.zero_field_splitting_hz);
    cfg.constants.validate();
  }

  cfg.tau_s = get_number(j, "tau_us", "config") * 1e-6;
  if (j.contains("decoherence_t2_us"))
    cfg.t2_s = j.at("decoherence_t2_us").get<double>() * 1e-6;

  if (!j.contains("waveform")) throw config_error("missing config key", "config.waveform");
  {
    const auto& w = j.at("waveform");
    check_keys(w, {"shape", "echo", "amplitude_scale", "segments"}, "waveform");
    cfg.waveform.shape = parse_waveform_shape(w.at("shape").get<std::string>());
    if (w.contains("echo")) cfg.waveform.echo = w.at("echo").get<bool>();
    cfg.waveform.amplitude_scale = detail::get_number_or(w, "amplitude_scale", 1.0);
    if (w.contains("segments")) {
      for (const auto& seg : w.at("segments")) {
        check_keys(seg, {"duration_frac", "level"}, "waveform.segments[]");
        cfg.waveform.segments.push_back({get_number(seg, "duration_frac", "waveform.segments[]"),
                                         get_number(seg, "level", "waveform.segments[]")});
      }
    }
  }

  if (!j.contains("gradient")) throw config_error("missing config key", "config.gradient");
  {
    const auto& g = j.at("gradient");
    check_keys(g, {"t_per_m_per_ma", "wire_csv", "csv_current_ma", "distance_um"}, "gradient");
    if (g.contains("t_per_m_per_ma")) {
      cfg.gradient_t_per_m_per_ma = get_number(g, "t_per_m_per_ma", "gradient");
    } else if (g.contains("wire_csv")) {
      const std::filesystem::path csv =
          base_dir / std::filesystem::path(g.at("wire_csv").get<std::string>());
      if (!std::filesystem::exists(csv))
        throw config_error("referenced file does not exist: " + csv.string(),
                           "gradient.wire_csv");
      const double csv_current = get_number(g, "csv_current_ma", "gradient");
      const double distance = get_number(g, "distance_um", "gradient") * 1e-6;
      const auto points = load_calibration_csv(csv.string());
      const WireCalibration cal = fit_calibration(points, csv_current);
      cfg.gradient_t_per_m_per_ma = gradient_at(cal, distance, 1.0);
    } else {
      throw config_error("gradient needs either t_per_m_per_ma or wire_csv", "gradient");
    }
  }

  if (!j.contains("centers") || !j.at("centers").is_array() || j.at("centers").empty())
    throw config_error("config needs a non-empty 'centers' array", "config.centers");
  for (const auto& c : j.at("centers")) {
    check_keys(c, {"x_nm", "y_nm", "gradient_coordinate_nm", "brightness", "contrast"},
               "centers[]");
    NvCenter center;
    center.position_m = {get_number(c, "x_nm", "centers[]") * 1e-9,
                         get_number(c, "y_nm", "centers[]") * 1e-9};
    center.gradient_coordinate_m = get_number(c, "gradient_coordinate_nm", "centers[]") * 1e-9;
    center.brightness = detail::get_number_or(c, "brightness", 1.0);
    center.contrast = detail::get_number_or(c, "contrast", 0.3);
    center.validate();
    cfg.centers.push_back(center);
  }

  if (j.contains("sweep")) {
    const auto& s = j.at("sweep");
    check_keys(s, {"start_ma", "stop_ma", "points"}, "sweep");
    SweepSection sweep;
    sweep.start_ma = get_number(s, "start_ma", "sweep");
    sweep.stop_ma = get_number(s, "stop_ma", "sweep");
    sweep.points = s.at("points").get<int>();
    if (!(sweep.stop_ma > sweep.start_ma))
      throw config_error("sweep range must have stop_ma > start_ma", "sweep");
    if (sweep.points < 2) throw config_error("sweep needs at least 2 points", "sweep.points");
    cfg.sweep = sweep;
  }

  if (j.contains("scan")) {
    const auto& s = j.at("scan");
    check_keys(s,
               {"width_px", "height_px", "pixel_size_nm", "origin_x_nm", "origin_y_nm",
                "fwhm_nm", "peak_rate_photons", "background_photons"},
               "scan");
    ScanSection scan;
    scan.geometry.width_px = s.at("width_px").get<int>();
    scan.geometry.height_px = s.at("height_px").get<int>();
    scan.geometry.pixel_size_m = get_number(s, "pixel_size_nm", "scan") * 1e-9;
    scan.geometry.origin_m = {detail::get_number_or(s, "origin_x_nm", 0.0) * 1e-9,
                              detail::get_number_or(s, "origin_y_nm", 0.0) * 1e-9};
    scan.geometry.validate();
    scan.fwhm_m = get_number(s, "fwhm_nm", "scan") * 1e-9;
    scan.peak_rate = get_number(s, "peak_rate_photons", "scan");
    scan.background = detail::get_number_or(s, "background_photons", 0.0);
    if (!(scan.background >= 0.0) || !(scan.peak_rate >= 0.0))
      throw config_error("scan rates must be >= 0", "scan");
    cfg.scan = scan;
  }

  if (j.contains("switch_search")) {
    const auto& s = j.at("switch_search");
    check_keys(s, {"max_current_ma"}, "switch_search");
    cfg.switch_search = SwitchSection{get_number(s, "max_current_ma", "switch_search")};
  }

  cfg.sequence();  // validates tau/waveform/gradient together
  return cfg;
}

inline ExperimentConfig load_config(const std::string& path,
                                    const std::vector<std::string>& overrides = {}) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open config file", path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw config_error(std::string("config parse failure: ") + e.what(), path);
  }
  for (const std::string& o : overrides) apply_override(j, o);
  return parse_config(j, std::filesystem::path(path).parent_path());
}

}  // namespace nvsim
