#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ifdfm/data.hpp"
#include "ifdfm/error.hpp"
#include "ifdfm/model.hpp"
#include "ifdfm/solvers.hpp"

namespace ifdfm {

// Which perturbations to fold into the vanilla parameters.
//
// `reversed` (J) indexes the training set: samples observed negative at
// `cutoff` whose conversion has since arrived. `arrivals` (K) are new
// samples with the labels known when the update is computed.
struct InfluenceRequest {
  Timestamp cutoff;
  std::vector<Index> reversed;
  Dataset arrivals;
  std::vector<double> arrival_labels;
  bool include_delay = true;
  bool include_add = true;
  double lambda = 1e-3;
  SolverConfig solver;
  // Return the best iterate with converged = false instead of throwing when
  // the solver stops above its tolerance.
  bool allow_unconverged = false;
  // When in (0, n), the Hessian is the mean over this many training rows drawn
  // without replacement by hessian_seed instead of over the full set. The
  // right-hand side always uses every row.
  Index hessian_rows = 0;
  std::uint64_t hessian_seed = 0;
};

struct InfluenceRhs {
  Vector b;
  Index n = 0;  // training-set size behind the 1/n scaling
};

struct UpdateReport {
  Vector delta;
  std::optional<double> residual_rel;  // absent when b = 0
  int solver_iters = 0;
  bool converged = true;
  double wall_time = 0.0;  // seconds for rhs + solve
  std::string solver;
  std::vector<TracePoint> trace;
};

// The solver hit its iteration cap above tolerance. Carries the best iterate.
class SolverNotConverged : public NumericalError {
 public:
  SolverNotConverged(const std::string& what, Vector best, double residual_rel)
      : NumericalError(what), best_(std::move(best)), residual_(residual_rel) {}

  const Vector& best_iterate() const noexcept { return best_; }
  double residual_rel() const noexcept { return residual_; }

 private:
  Vector best_;
  double residual_;
};

// Per-sample loss gradient used by the influence terms: the gradient of the
// single-sample batch loss (BCE plus the L2 term).
GradVector sample_grad(const Model& model, const ParamVector& params,
                       std::span<const double> x, double label);

// b = (1/n) [ sum_J grad L(x_j, 0) - sum_J grad L(x_j, 1)
//             - sum_K grad L(x_k, y_k) ], each part gated by its flag.
// Throws InvariantViolation if a J sample is already positive at the cutoff,
// ConfigError for out-of-range or repeated indices.
InfluenceRhs build_rhs(const ModelSpec& spec, const ParamVector& theta_hat,
                       const Dataset& train, const InfluenceRequest& request);

// Solves (H + lambda I) delta = b, H the Hessian of the observed-label
// training loss at theta_hat. Throws SolverNotConverged when the solver stops
// above its tolerance, unless the request allows it.
UpdateReport delta_total(const ModelSpec& spec, const ParamVector& theta_hat,
                         const Dataset& train, const InfluenceRequest& request);

// theta_hat + delta. Throws NumericalError on non-finite input.
ParamVector apply_update(const ParamVector& theta_hat,
                         const UpdateReport& report);

// {"solver", "delta_norm", "residual_rel", "iterations", "converged",
//  "wall_time"}
std::string to_json(const UpdateReport& report);

}  // namespace ifdfm
