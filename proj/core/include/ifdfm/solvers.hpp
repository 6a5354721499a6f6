#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ifdfm/common.hpp"
#include "ifdfm/model.hpp"

namespace ifdfm {

// Symmetric operator A = mean_i H_i + lambda * I with per-piece access, so it
// can serve both full-pass solvers and minibatch ones.
class FiniteSumOperator {
 public:
  virtual ~FiniteSumOperator() = default;

  virtual Index dim() const = 0;
  virtual Index num_pieces() const = 0;
  virtual double damping() const = 0;

  // A v over every piece.
  virtual Vector apply(const Vector& v) const = 0;
  // (mean over `pieces` of H_i + lambda I) v.
  virtual Vector apply_pieces(std::span<const Index> pieces,
                              const Vector& v) const = 0;
};

// Explicit dense pieces. Used for small systems and as a test double.
class DenseOperator final : public FiniteSumOperator {
 public:
  DenseOperator(std::vector<Eigen::MatrixXd> pieces, double lambda);

  Index dim() const override { return dim_; }
  Index num_pieces() const override {
    return static_cast<Index>(pieces_.size());
  }
  double damping() const override { return lambda_; }
  Vector apply(const Vector& v) const override;
  Vector apply_pieces(std::span<const Index> pieces,
                      const Vector& v) const override;

  // The full matrix mean_i H_i + lambda I.
  Eigen::MatrixXd matrix() const;

 private:
  std::vector<Eigen::MatrixXd> pieces_;
  Eigen::MatrixXd mean_;
  double lambda_;
  Index dim_;
};

// (Hessian of the mean training loss at theta_hat) + lambda I, evaluated by
// exact Hessian-vector products. One piece per training sample. Keeps a
// reference to `x`, which must outlive the operator.
class DampedHessianOperator final : public FiniteSumOperator {
 public:
  DampedHessianOperator(ModelSpec spec, ParamVector theta_hat,
                        const FeatureMatrix& x, std::vector<double> labels,
                        double lambda);

  Index dim() const override { return model_.num_params(); }
  Index num_pieces() const override { return x_->rows(); }
  double damping() const override { return lambda_; }
  Vector apply(const Vector& v) const override;
  Vector apply_pieces(std::span<const Index> pieces,
                      const Vector& v) const override;

  // Undamped Hessian-vector product.
  Vector hessian_apply(const Vector& v) const;

  const Model& model() const noexcept { return model_; }
  const ParamVector& theta() const noexcept { return theta_; }

 private:
  Model model_;
  ParamVector theta_;
  const FeatureMatrix* x_;
  std::vector<double> labels_;
  double lambda_;
};

enum class SolverKind { kConjugateGradient, kNeumann, kStochasticQuadratic };

std::string_view solver_name(SolverKind kind);
SolverKind parse_solver(std::string_view name);

struct SolverConfig {
  SolverKind kind = SolverKind::kStochasticQuadratic;
  // Relative residual target. <= 0 picks the per-solver default: 1e-4 for CG,
  // 1e-2 for the stochastic and Neumann solvers.
  double tol = 0.0;
  int max_iters = 1000;  // CG
  int max_epochs = 50;   // stochastic quadratic
  Index minibatch_size = 256;
  double learning_rate = 0.01;
  double lr_decay = 1.0;  // per-epoch multiplier on the Adam step
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int neumann_terms = 100;
  double neumann_scale = 0.0;  // <= 0: 0.9 / (power-iteration estimate)
  int power_iters = 100;
  std::uint64_t seed = 0;

  double effective_tol() const;
  void validate() const;
};

struct TracePoint {
  int iter = 0;
  double residual_rel = 0.0;
  double objective = 0.0;  // 1/2 x'Ax - b'x
};

struct SolveResult {
  Vector delta;
  double residual_rel = 0.0;  // ||A delta - b|| / ||b||, 0 when b = 0
  int iterations = 0;         // CG iterations, Neumann terms or SQ epochs
  bool converged = false;
  std::vector<TracePoint> trace;
};

// Called with (iteration, current iterate) after every solver iteration.
using IterateObserver = std::function<void(int, const Vector&)>;

// Conjugate gradient from zero. Stops at the tolerance or after
// min(p, max_iters) iterations and returns the best iterate seen. Throws
// NumericalError on a direction of non-positive curvature and ConfigError when
// the operator is undamped.
SolveResult cg_solve(const FiniteSumOperator& op, const Vector& b,
                     const SolverConfig& cfg,
                     const IterateObserver& observer = {});

// Truncated power series s * sum_{t<T} (I - sA)^t b. Throws NumericalError if
// the spectral-norm estimate is >= 1/s.
SolveResult neumann_solve(const FiniteSumOperator& op, const Vector& b,
                          const SolverConfig& cfg);

// Rayleigh-quotient estimate of the largest eigenvalue after `iters`
// normalized products. Requires iters >= 10.
double power_iteration(const FiniteSumOperator& op, int iters,
                       std::uint64_t seed);

// Gradient of the mean of f_i(x) = 1/2 x'(H_i + lambda I)x - <b, x> over
// `pieces`.
Vector stochastic_gradient(const FiniteSumOperator& op,
                           std::span<const Index> pieces, const Vector& x,
                           const Vector& b);

// Minimizes mean_i f_i with Adam over shuffled minibatches, checking the
// full residual once per epoch; returns the best-residual iterate.
SolveResult sq_solve(const FiniteSumOperator& op, const Vector& b,
                     const SolverConfig& cfg,
                     const IterateObserver& observer = {});

// Dispatches on cfg.kind.
SolveResult solve(const FiniteSumOperator& op, const Vector& b,
                  const SolverConfig& cfg);

// Header row then one row per trace point:
// solver,iter,residual_rel,objective
void write_trace_csv(std::ostream& out, std::string_view solver,
                     std::span<const TracePoint> trace);

}  // namespace ifdfm
