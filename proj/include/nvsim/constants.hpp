#pragma once

#include <stdexcept>

namespace nvsim {

// Electron-spin constants. The gyromagnetic ratio is kept in cycles/s/T
// (Hz per tesla); angular-frequency quantities multiply by 2*pi where used.
struct PhysicalConstants {
  double gamma_e_hz_per_t = 28.024e9;
  double zero_field_splitting_hz = 2.87e9;

  void validate() const {
    if (!(gamma_e_hz_per_t > 0.0))
      throw std::invalid_argument("PhysicalConstants: gamma_e must be positive");
    if (!(zero_field_splitting_hz > 0.0))
      throw std::invalid_argument("PhysicalConstants: zero-field splitting must be positive");
  }
};

}  // namespace nvsim
