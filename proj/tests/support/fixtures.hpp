#pragma once

// Convex delayed-feedback fixture shared by the influence unit tests and the
// acceptance suite.

#include <cstdint>
#include <vector>

#include "ifdfm/data.hpp"
#include "ifdfm/influence.hpp"
#include "ifdfm/model.hpp"

namespace fixture {

inline constexpr std::int64_t kT = 1000;
inline constexpr std::int64_t kTPrime = 2000;

// n samples from a logistic ground truth. Observed positives convert before
// T, the `flips` negatives (chosen by `flip_order`) convert inside [T, T'),
// the rest never convert.
struct Convex {
  ifdfm::ModelSpec spec;
  ifdfm::Dataset train;
  std::vector<ifdfm::Index> negatives;  // observed-negative rows, shuffled
};

Convex make_convex(ifdfm::Index n, ifdfm::Index d, double rho,
                   std::uint64_t seed);

// Same rows with the first `count` entries of `negatives` reversed.
Convex with_reversals(const Convex& base, ifdfm::Index count);

// Fresh labelled samples from the same ground truth.
ifdfm::LabeledSet fresh_samples(ifdfm::Index count, ifdfm::Index d,
                                std::uint64_t seed);

// Exact minimizer of the observed-label loss (Newton, ||grad|| <= 1e-10).
ifdfm::ParamVector fit(const ifdfm::ModelSpec& spec, const ifdfm::FeatureMatrix& x,
                       const std::vector<double>& y,
                       const ifdfm::ParamVector& start);

// Splits a symmetric matrix into `k` symmetric pieces whose mean is `a`.
std::vector<Eigen::MatrixXd> spd_pieces(const Eigen::MatrixXd& a, int k,
                                        std::uint64_t seed);

// Standard normal entries.
ifdfm::Vector normal_vector(ifdfm::Index p, std::uint64_t seed);

double cosine(const ifdfm::Vector& a, const ifdfm::Vector& b);

}  // namespace fixture
