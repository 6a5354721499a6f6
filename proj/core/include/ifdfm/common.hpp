#pragma once

#include <Eigen/Core>

#include <charconv>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace ifdfm {

using Index = std::ptrdiff_t;

// Dense real vector used for parameters, gradients and solver iterates.
using Vector = Eigen::VectorXd;

// Row-major feature matrix: one sample per row, contiguous.
using FeatureMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline bool all_finite(const Vector& v) { return v.allFinite(); }

// Shortest decimal text that reads back to the same double.
inline std::string format_double(double value) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, res.ptr);
}

}  // namespace ifdfm
