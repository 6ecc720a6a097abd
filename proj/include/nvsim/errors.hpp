#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace nvsim {

// Nonlinear least-squares fit stopped without meeting the convergence criterion.
class fit_error : public std::runtime_error {
 public:
  fit_error(const std::string& what, int iterations, double final_cost)
      : std::runtime_error(what), iterations(iterations), final_cost(final_cost) {}
  int iterations;
  double final_cost;
};

// Fit landed on a non-physical optimum (no blob, negative amplitude, collapsed width).
class degenerate_blob_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// No drive current inside the search range switches the pair with acceptable infidelity.
class not_switchable_error : public std::runtime_error {
 public:
  not_switchable_error(const std::string& what, double best_current_ma, double best_cost)
      : std::runtime_error(what), best_current_ma(best_current_ma), best_cost(best_cost) {}
  double best_current_ma;
  double best_cost;
};

// Numerical propagation hit the step limit before the populations settled.
class discretization_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Image geometries disagree.
class shape_error : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Sweep sampling cannot be Fourier-inverted (too few or non-uniform points).
class sampling_error : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Configuration file or key is malformed, unknown, or inconsistent.
class config_error : public std::runtime_error {
 public:
  explicit config_error(const std::string& what, std::string key = {})
      : std::runtime_error(key.empty() ? what : what + " [" + key + "]"), key(std::move(key)) {}
  std::string key;
};

}  // namespace nvsim
