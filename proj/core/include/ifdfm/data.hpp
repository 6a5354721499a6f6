#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "ifdfm/common.hpp"

namespace ifdfm {

inline constexpr std::int64_t kSecondsPerDay = 86400;

struct Timestamp {
  std::int64_t seconds = 0;

  friend constexpr auto operator<=>(Timestamp, Timestamp) = default;

  friend constexpr Timestamp operator+(Timestamp t, std::int64_t dt) {
    return Timestamp{t.seconds + dt};
  }
  friend constexpr Timestamp operator-(Timestamp t, std::int64_t dt) {
    return Timestamp{t.seconds - dt};
  }
};

// One click event. Labels are never stored; see `label_of`.
struct Sample {
  std::vector<double> features;
  Timestamp click_ts;
  std::optional<Timestamp> pay_ts;  // absent: no conversion ever observed
};

// Immutable, columnar collection of samples. Row i is sample i.
class Dataset {
 public:
  Dataset() = default;

  // Validates every sample (shared dimension, finite features,
  // pay_ts >= click_ts). Throws ConfigError on violation.
  Dataset(std::vector<Sample> samples, Index feature_dim);

  Dataset(FeatureMatrix features, std::vector<Timestamp> click_ts,
          std::vector<std::optional<Timestamp>> pay_ts);

  Index size() const noexcept { return static_cast<Index>(click_ts_.size()); }
  bool empty() const noexcept { return click_ts_.empty(); }
  Index feature_dim() const noexcept { return feature_dim_; }

  const FeatureMatrix& features() const noexcept { return features_; }
  std::span<const double> row(Index i) const {
    return {features_.data() + i * feature_dim_,
            static_cast<std::size_t>(feature_dim_)};
  }
  Timestamp click_ts(Index i) const { return click_ts_[i]; }
  const std::optional<Timestamp>& pay_ts(Index i) const { return pay_ts_[i]; }

  Sample sample(Index i) const;

  // New dataset holding rows `indices` in the given order.
  Dataset subset(std::span<const Index> indices) const;

  // Rows of `this` followed by rows of `other`.
  Dataset concat(const Dataset& other) const;

  // Exact equality of every field (bitwise on features).
  friend bool operator==(const Dataset& a, const Dataset& b);

 private:
  void validate() const;

  Index feature_dim_ = 0;
  FeatureMatrix features_;
  std::vector<Timestamp> click_ts_;
  std::vector<std::optional<Timestamp>> pay_ts_;
};

// Time-dependent label semantics.
struct ObservedView {
  Timestamp cutoff;  // T
};
struct RetrainView {
  Timestamp cutoff;  // T'
};
struct OracleView {};
using LabelView = std::variant<ObservedView, RetrainView, OracleView>;

std::string describe(const LabelView& view);

int label_of(const std::optional<Timestamp>& pay_ts, const LabelView& view);
int label_of(const Sample& sample, const LabelView& view);

// Labels of every row under `view`, as 0.0/1.0.
std::vector<double> labels(const Dataset& data, const LabelView& view);

struct Split {
  Dataset train;
  Dataset valid;
  Dataset test;
};

// train: click < T; valid: [T' - d_test, T'); test: [T', T' + d_test).
// Clicks in [T, T' - d_test) form the online arrival pool and belong to no
// split. Throws ConfigError if the windows are malformed or a split is empty.
Split temporal_split(const Dataset& data, Timestamp t, Timestamp t_prime,
                     std::int64_t d_test);

// Indices of samples clicked before T that convert within [T, T').
std::vector<Index> reversal_set(const Dataset& data, Timestamp t,
                                Timestamp t_prime);

struct LabeledSet {
  Dataset data;
  std::vector<double> labels;
};

// Samples clicked in [T, T'), labeled with what is known at T'.
LabeledSet arrival_set(const Dataset& data, Timestamp t, Timestamp t_prime);

struct SyntheticConfig {
  Index n = 50000;
  Index d = 16;
  double target_cvr = 0.2227;
  double delay_mean_tau = 2.0 * kSecondsPerDay;  // seconds
  std::int64_t horizon = 14 * kSecondsPerDay;     // seconds
  double drift_angle_per_day = 0.0;               // radians
  double signal_scale = 1.0;  // norm of the latent weight vector
  std::uint64_t seed = 0;

  void validate() const;
};

// Deterministic synthetic delayed-feedback click log, sorted by click time.
Dataset generate_synthetic(const SyntheticConfig& config);

// Canonical CSV: header row, then click_ts,pay_ts,f0..f{d-1}; pay_ts -1 means
// no conversion.
Dataset load_csv(const std::filesystem::path& path);
void save_csv(const Dataset& data, const std::filesystem::path& path);

}  // namespace ifdfm
