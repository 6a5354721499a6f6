#include "ifdfm/solvers.hpp"

#include <cmath>
#include <limits>
#include <ostream>

#include "ifdfm/error.hpp"
#include "ifdfm/rng.hpp"

namespace ifdfm {

// ---------------------------------------------------------------------------
// Operators

DenseOperator::DenseOperator(std::vector<Eigen::MatrixXd> pieces, double lambda)
    : pieces_(std::move(pieces)), lambda_(lambda) {
  if (pieces_.empty()) throw ConfigError("dense operator: no pieces");
  if (!(lambda_ >= 0.0)) throw ConfigError("dense operator: lambda < 0");
  dim_ = pieces_.front().rows();
  mean_ = Eigen::MatrixXd::Zero(dim_, dim_);
  for (const auto& h : pieces_) {
    if (h.rows() != dim_ || h.cols() != dim_) {
      throw ConfigError("dense operator: pieces must be square and equal size");
    }
    mean_ += h;
  }
  mean_ /= static_cast<double>(pieces_.size());
}

Vector DenseOperator::apply(const Vector& v) const {
  return mean_ * v + lambda_ * v;
}

Vector DenseOperator::apply_pieces(std::span<const Index> pieces,
                                   const Vector& v) const {
  if (pieces.empty()) throw ConfigError("dense operator: empty piece set");
  Vector out = Vector::Zero(dim_);
  for (Index i : pieces) out.noalias() += pieces_.at(i) * v;
  out /= static_cast<double>(pieces.size());
  return out + lambda_ * v;
}

Eigen::MatrixXd DenseOperator::matrix() const {
  return mean_ + lambda_ * Eigen::MatrixXd::Identity(dim_, dim_);
}

DampedHessianOperator::DampedHessianOperator(ModelSpec spec,
                                             ParamVector theta_hat,
                                             const FeatureMatrix& x,
                                             std::vector<double> labels,
                                             double lambda)
    : model_(std::move(spec)),
      theta_(std::move(theta_hat)),
      x_(&x),
      labels_(std::move(labels)),
      lambda_(lambda) {
  if (!(lambda_ >= 0.0)) throw ConfigError("hessian operator: lambda < 0");
  if (theta_.size() != model_.num_params()) {
    throw ConfigError("hessian operator: parameter count mismatch");
  }
  if (static_cast<Index>(labels_.size()) != x.rows() || x.rows() == 0) {
    throw ConfigError("hessian operator: needs one label per (non-empty) row");
  }
}

Vector DampedHessianOperator::hessian_apply(const Vector& v) const {
  return model_.hvp(theta_, *x_, labels_, v);
}

Vector DampedHessianOperator::apply(const Vector& v) const {
  return hessian_apply(v) + lambda_ * v;
}

Vector DampedHessianOperator::apply_pieces(std::span<const Index> pieces,
                                           const Vector& v) const {
  if (pieces.empty()) throw ConfigError("hessian operator: empty piece set");
  const auto m = static_cast<Index>(pieces.size());
  FeatureMatrix xb(m, x_->cols());
  std::vector<double> yb(pieces.size());
  for (Index k = 0; k < m; ++k) {
    xb.row(k) = x_->row(pieces[k]);
    yb[k] = labels_[pieces[k]];
  }
  return model_.hvp(theta_, xb, yb, v) + lambda_ * v;
}

// ---------------------------------------------------------------------------
// Configuration

std::string_view solver_name(SolverKind kind) {
  switch (kind) {
    case SolverKind::kConjugateGradient:
      return "cg";
    case SolverKind::kNeumann:
      return "neumann";
    case SolverKind::kStochasticQuadratic:
      return "sq";
  }
  return "unknown";
}

SolverKind parse_solver(std::string_view name) {
  if (name == "cg") return SolverKind::kConjugateGradient;
  if (name == "neumann") return SolverKind::kNeumann;
  if (name == "sq") return SolverKind::kStochasticQuadratic;
  throw ConfigError("unknown solver '" + std::string(name) +
                    "' (expected cg, neumann or sq)");
}

double SolverConfig::effective_tol() const {
  if (tol > 0.0) return tol;
  return kind == SolverKind::kConjugateGradient ? 1e-4 : 1e-2;
}

void SolverConfig::validate() const {
  if (!(tol >= 0.0)) throw ConfigError("solver: tol must be >= 0");
  if (max_iters < 1) throw ConfigError("solver: max_iters must be >= 1");
  if (max_epochs < 1) throw ConfigError("solver: max_epochs must be >= 1");
  if (minibatch_size < 1) throw ConfigError("solver: minibatch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("solver: learning_rate must be > 0");
  if (!(lr_decay > 0.0 && lr_decay <= 1.0)) {
    throw ConfigError("solver: lr_decay must lie in (0, 1]");
  }
  if (neumann_terms < 1) throw ConfigError("solver: neumann_terms must be >= 1");
  if (power_iters < 10) throw ConfigError("solver: power_iters must be >= 10");
}

// ---------------------------------------------------------------------------
// Solvers

namespace {

SolveResult zero_result(Index p) {
  SolveResult r;
  r.delta = Vector::Zero(p);
  r.converged = true;
  return r;
}

void check_rhs(const FiniteSumOperator& op, const Vector& b) {
  if (b.size() != op.dim()) throw ConfigError("solver: rhs has wrong length");
  if (!b.allFinite()) throw NumericalError("solver: non-finite rhs");
}

}  // namespace

SolveResult cg_solve(const FiniteSumOperator& op, const Vector& b,
                     const SolverConfig& cfg, const IterateObserver& observer) {
  cfg.validate();
  check_rhs(op, b);
  if (!(op.damping() > 0.0)) {
    throw ConfigError("cg: operator must be damped (lambda > 0)");
  }
  const double b_norm = b.norm();
  if (b_norm == 0.0) return zero_result(op.dim());
  const double tol = cfg.effective_tol();
  const int cap = static_cast<int>(
      std::min<Index>(op.dim(), static_cast<Index>(cfg.max_iters)));

  Vector x = Vector::Zero(op.dim());
  Vector r = b;
  Vector p = r;
  double rs = r.squaredNorm();
  Vector best = x;
  double best_rel = 1.0;

  SolveResult result;
  int it = 0;
  while (it < cap) {
    const Vector ap = op.apply(p);
    const double curvature = p.dot(ap);
    if (!(curvature > 0.0)) {
      throw NumericalError(
          "cg: non-positive curvature <d, Ad> = " + std::to_string(curvature) +
          " at iteration " + std::to_string(it) +
          "; increase the damping lambda");
    }
    const double alpha = rs / curvature;
    x.noalias() += alpha * p;
    r.noalias() -= alpha * ap;
    const double rs_new = r.squaredNorm();
    ++it;
    const double rel = std::sqrt(rs_new) / b_norm;
    if (!std::isfinite(rel)) throw NumericalError("cg: non-finite residual");
    result.trace.push_back({it, rel, -0.5 * x.dot(b) - 0.5 * x.dot(r)});
    if (observer) observer(it, x);
    if (rel < best_rel) {
      best_rel = rel;
      best = x;
    }
    if (rel <= tol) {
      result.converged = true;
      break;
    }
    p = r + (rs_new / rs) * p;
    rs = rs_new;
  }
  result.iterations = it;
  result.residual_rel = (op.apply(best) - b).norm() / b_norm;
  result.delta = std::move(best);
  return result;
}

double power_iteration(const FiniteSumOperator& op, int iters,
                       std::uint64_t seed) {
  if (iters < 10) throw ConfigError("power_iteration: iters must be >= 10");
  Rng rng(derive_seed(seed, 0x504f574552ULL));
  Vector v(op.dim());
  for (Index i = 0; i < v.size(); ++i) v[i] = rng.normal();
  v.normalize();
  for (int k = 0; k < iters; ++k) {
    Vector w = op.apply(v);
    const double norm = w.norm();
    if (!(norm > 0.0) || !std::isfinite(norm)) return 0.0;
    v = w / norm;
  }
  return v.dot(op.apply(v));
}

SolveResult neumann_solve(const FiniteSumOperator& op, const Vector& b,
                          const SolverConfig& cfg) {
  cfg.validate();
  check_rhs(op, b);
  const double b_norm = b.norm();
  if (b_norm == 0.0) return zero_result(op.dim());

  const double estimate = power_iteration(op, cfg.power_iters, cfg.seed);
  const double s = cfg.neumann_scale > 0.0 ? cfg.neumann_scale : 0.9 / estimate;
  if (!(estimate > 0.0) || !(estimate < 1.0 / s)) {
    throw NumericalError("neumann: spectral norm estimate " +
                         std::to_string(estimate) + " >= 1/s = " +
                         std::to_string(1.0 / s) + "; the series diverges");
  }

  SolveResult result;
  // v_{t+1} = b + (I - sA) v_t, v_0 = 0; delta_t = s v_t.
  Vector v = b;
  for (int t = 1; t < cfg.neumann_terms; ++t) {
    const Vector av = op.apply(v);
    const double rel = (s * av - b).norm() / b_norm;
    if (!std::isfinite(rel)) throw NumericalError("neumann: non-finite residual");
    result.trace.push_back({t, rel, 0.5 * s * s * v.dot(av) - s * b.dot(v)});
    v += b - s * av;
  }
  result.delta = s * v;
  const Vector ad = op.apply(result.delta);
  result.residual_rel = (ad - b).norm() / b_norm;
  result.trace.push_back({cfg.neumann_terms, result.residual_rel,
                          0.5 * result.delta.dot(ad) - b.dot(result.delta)});
  result.iterations = cfg.neumann_terms;
  result.converged = result.residual_rel <= cfg.effective_tol();
  return result;
}

Vector stochastic_gradient(const FiniteSumOperator& op,
                           std::span<const Index> pieces, const Vector& x,
                           const Vector& b) {
  return op.apply_pieces(pieces, x) - b;
}

SolveResult sq_solve(const FiniteSumOperator& op, const Vector& b,
                     const SolverConfig& cfg, const IterateObserver& observer) {
  cfg.validate();
  check_rhs(op, b);
  if (!(op.damping() > 0.0)) {
    throw ConfigError("sq: operator must be damped (lambda > 0)");
  }
  const double b_norm = b.norm();
  if (b_norm == 0.0) return zero_result(op.dim());
  const double tol = cfg.effective_tol();
  const Index n = op.num_pieces();
  const Index batch = std::min(cfg.minibatch_size, n);

  Vector x = Vector::Zero(op.dim());
  Vector m = Vector::Zero(op.dim());
  Vector v = Vector::Zero(op.dim());
  double beta1_pow = 1.0, beta2_pow = 1.0;
  double lr = cfg.learning_rate;

  SolveResult result;
  Vector best = x;
  double best_rel = 1.0;
  std::vector<Index> pieces(static_cast<std::size_t>(batch));

  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    const auto order = epoch_permutation(static_cast<std::size_t>(n), cfg.seed,
                                         static_cast<std::uint64_t>(epoch));
    for (Index start = 0; start < n; start += batch) {
      const Index rows = std::min(batch, n - start);
      for (Index k = 0; k < rows; ++k) {
        pieces[k] = static_cast<Index>(order[start + k]);
      }
      const Vector g = stochastic_gradient(
          op, std::span<const Index>(pieces.data(), rows), x, b);
      beta1_pow *= cfg.beta1;
      beta2_pow *= cfg.beta2;
      m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
      v = cfg.beta2 * v + (1.0 - cfg.beta2) * g.cwiseAbs2();
      const double step = lr * std::sqrt(1.0 - beta2_pow) / (1.0 - beta1_pow);
      x.array() -= step * m.array() /
                   (v.array().sqrt() + cfg.epsilon * std::sqrt(1.0 - beta2_pow));
    }

    const Vector ax = op.apply(x);
    const double rel = (ax - b).norm() / b_norm;
    if (!std::isfinite(rel)) {
      throw NumericalError("sq: non-finite residual at epoch " +
                           std::to_string(epoch));
    }
    result.trace.push_back({epoch + 1, rel, 0.5 * x.dot(ax) - b.dot(x)});
    result.iterations = epoch + 1;
    if (observer) observer(epoch + 1, x);
    if (rel < best_rel) {
      best_rel = rel;
      best = x;
    }
    if (rel <= tol) {
      result.converged = true;
      break;
    }
    lr *= cfg.lr_decay;
  }
  result.residual_rel = best_rel;
  result.delta = std::move(best);
  return result;
}

SolveResult solve(const FiniteSumOperator& op, const Vector& b,
                  const SolverConfig& cfg) {
  switch (cfg.kind) {
    case SolverKind::kConjugateGradient:
      return cg_solve(op, b, cfg);
    case SolverKind::kNeumann:
      return neumann_solve(op, b, cfg);
    case SolverKind::kStochasticQuadratic:
      return sq_solve(op, b, cfg);
  }
  throw ConfigError("unknown solver kind");
}

void write_trace_csv(std::ostream& out, std::string_view solver,
                     std::span<const TracePoint> trace) {
  out << "solver,iter,residual_rel,objective\n";
  for (const auto& t : trace) {
    out << solver << ',' << t.iter << ',' << format_double(t.residual_rel)
        << ',' << format_double(t.objective) << '\n';
  }
}

}  // namespace ifdfm
