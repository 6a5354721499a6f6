#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ifdfm/common.hpp"

namespace ifdfm {

using ParamVector = Vector;
using GradVector = Vector;
using FeaturesRef = Eigen::Ref<const FeatureMatrix>;

inline constexpr double kLogitClamp = 30.0;
inline constexpr double kProbClip = 1e-7;

// Architecture of a CVR predictor. ReLU hidden layers, sigmoid output.
//
// Parameter layout: for each layer in order, the weight matrix (out x in,
// row-major) followed by its bias vector. The L2 penalty covers weights only.
struct ModelSpec {
  enum class Kind { kLogistic, kMlp };

  Kind kind = Kind::kLogistic;
  Index input_dim = 0;
  std::vector<Index> hidden;  // empty for logistic regression
  double l2 = 1e-4;

  static ModelSpec logistic(Index d, double l2 = 1e-4);
  static ModelSpec mlp(Index d, std::vector<Index> hidden, double l2 = 1e-4);

  Index num_params() const;

  // e.g. "logreg d=20 l2=0.01" or "mlp d=16 hidden=64,64 l2=0.0001".
  std::string describe() const;
  static ModelSpec parse(std::string_view text);

  void validate() const;

  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

struct LossAndGrad {
  double loss = 0.0;
  GradVector grad;
};

// Stateless evaluator for one ModelSpec. All batch quantities are means over
// the rows of `x` plus the L2 term charged once, so that the batch loss equals
// mean BCE + l2/2 * ||weights||^2. Reductions run in row order; results are
// bit-reproducible for identical inputs.
class Model {
 public:
  explicit Model(ModelSpec spec);

  const ModelSpec& spec() const noexcept { return spec_; }
  Index num_params() const noexcept { return num_params_; }

  // Raw output pre-activation before clamping.
  double logit(const ParamVector& params, std::span<const double> x) const;
  double predict(const ParamVector& params, std::span<const double> x) const;
  Vector predict_batch(const ParamVector& params, FeaturesRef x) const;

  double loss(const ParamVector& params, FeaturesRef x,
              std::span<const double> y) const;
  LossAndGrad loss_and_grad(const ParamVector& params, FeaturesRef x,
                            std::span<const double> y) const;
  GradVector grad(const ParamVector& params, FeaturesRef x,
                  std::span<const double> y) const;

  // Exact Hessian-vector product of `loss` by forward-over-reverse
  // differentiation.
  GradVector hvp(const ParamVector& params, FeaturesRef x,
                 std::span<const double> y, const Vector& v) const;

  // 1 on weight entries, 0 on bias entries.
  Vector weight_mask() const;

  double l2_penalty(const ParamVector& params) const;

 private:
  struct Layer {
    Index in = 0;
    Index out = 0;
    Index w_offset = 0;
    Index b_offset = 0;
  };
  struct Cache;

  void check(const ParamVector& params, FeaturesRef x,
             std::span<const double> y) const;
  void forward(const ParamVector& params, FeaturesRef x, Cache& cache) const;
  double accumulate_grad(const ParamVector& params, FeaturesRef x,
                         std::span<const double> y, double scale,
                         GradVector* grad) const;
  void accumulate_hvp(const ParamVector& params, FeaturesRef x,
                      std::span<const double> y, const Vector& v, double scale,
                      GradVector& out) const;

  ModelSpec spec_;
  std::vector<Layer> layers_;
  Index num_params_ = 0;
};

// Free-function forms of the Model operations.
double predict(const ModelSpec& spec, const ParamVector& params,
               std::span<const double> x);
double bce_loss(const ModelSpec& spec, const ParamVector& params,
                std::span<const double> x, double label);
GradVector grad(const ModelSpec& spec, const ParamVector& params,
                FeaturesRef x, std::span<const double> y);
GradVector hvp(const ModelSpec& spec, const ParamVector& params, FeaturesRef x,
               std::span<const double> y, const Vector& v);

// Zeros for logistic regression; He-uniform weights and zero biases for MLPs.
ParamVector initial_params(const ModelSpec& spec, std::uint64_t seed);

// Checkpoint file: magic "IFDFMCKP", u32 format version, u32 length + spec
// description, u64 p, then p little-endian IEEE-754 doubles.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ModelSpec spec;
  ParamVector params;
};

void save_checkpoint(const std::filesystem::path& path, const ModelSpec& spec,
                     const ParamVector& params);
Checkpoint load_checkpoint(const std::filesystem::path& path);
// Rejects files whose parameter count differs from `expected`.
Checkpoint load_checkpoint(const std::filesystem::path& path,
                           const ModelSpec& expected);

}  // namespace ifdfm
