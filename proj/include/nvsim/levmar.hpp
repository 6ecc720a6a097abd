#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "nvsim/errors.hpp"

namespace nvsim {

struct LevMarOptions {
  int max_iterations = 200;
  double relative_cost_tolerance = 1e-10;
  // damping starts at this fraction of trace(JtJ)/n_params
  double initial_damping_rel = 1e-3;
};

struct LevMarResult {
  Eigen::VectorXd params;
  double cost = 0.0;  // sum of squared residuals
  int iterations = 0;
  bool converged = false;
  Eigen::MatrixXd normal_matrix;  // JtJ at the solution
  Eigen::VectorXd residuals;
  std::vector<double> cost_trace;  // cost after each accepted step
};

// Damped least squares with multiplicative damping control: x10 when a step
// raises the cost, x0.1 when it lowers it. `model(p, r, J)` fills the residual
// vector and its Jacobian at p.
template <typename Model>
LevMarResult levenberg_marquardt(Model&& model, Eigen::VectorXd p, const LevMarOptions& opt = {}) {
  const int n_params = static_cast<int>(p.size());
  Eigen::VectorXd r;
  Eigen::MatrixXd J;
  model(p, r, J);
  double cost = r.squaredNorm();
  Eigen::MatrixXd JtJ = J.transpose() * J;
  Eigen::VectorXd g = J.transpose() * r;

  double lambda = opt.initial_damping_rel * JtJ.trace() / std::max(n_params, 1);
  if (!(lambda > 0.0) || !std::isfinite(lambda)) lambda = opt.initial_damping_rel;

  LevMarResult out;
  out.cost_trace.push_back(cost);

  int it = 0;
  bool converged = false;
  while (it < opt.max_iterations) {
    ++it;
    Eigen::MatrixXd damped = JtJ;
    damped.diagonal().array() += lambda;
    Eigen::VectorXd step = damped.ldlt().solve(g);
    Eigen::VectorXd p_try = p - step;

    Eigen::VectorXd r_try;
    Eigen::MatrixXd J_try;
    model(p_try, r_try, J_try);
    const double cost_try = r_try.squaredNorm();

    if (std::isfinite(cost_try) && cost_try <= cost) {
      const double rel_drop = (cost - cost_try) / std::max(cost, 1e-300);
      p = std::move(p_try);
      cost = cost_try;
      J.swap(J_try);
      r = std::move(r_try);
      JtJ = J.transpose() * J;
      g = J.transpose() * r;
      lambda *= 0.1;
      out.cost_trace.push_back(cost);
      if (rel_drop < opt.relative_cost_tolerance) {
        converged = true;
        break;
      }
    } else {
      lambda *= 10.0;
      if (!std::isfinite(lambda) || lambda > 1e280) break;  // stalled
    }
  }

  out.params = std::move(p);
  out.cost = cost;
  out.iterations = it;
  out.converged = converged;
  out.normal_matrix = std::move(JtJ);
  out.residuals = std::move(r);
  return out;
}

// Parameter covariance: residual-variance-scaled inverse of the normal matrix.
inline Eigen::MatrixXd scaled_covariance(const LevMarResult& fit, int n_observations) {
  const int n_params = static_cast<int>(fit.params.size());
  const int dof = n_observations - n_params;
  if (dof <= 0)
    throw fit_error("covariance needs more observations than parameters", fit.iterations, fit.cost);
  const double s2 = fit.cost / dof;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(fit.normal_matrix);
  if (ldlt.info() != Eigen::Success)
    throw fit_error("normal matrix is not factorizable; covariance undefined", fit.iterations,
                    fit.cost);
  Eigen::MatrixXd cov =
      s2 * ldlt.solve(Eigen::MatrixXd::Identity(n_params, n_params));
  cov = 0.5 * (cov + cov.transpose()).eval();  // kill rounding asymmetry
  return cov;
}

}  // namespace nvsim
