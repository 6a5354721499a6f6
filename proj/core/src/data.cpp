#include "ifdfm/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "ifdfm/error.hpp"
#include "ifdfm/rng.hpp"

namespace ifdfm {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};

}  // namespace

Dataset::Dataset(std::vector<Sample> samples, Index feature_dim)
    : feature_dim_(feature_dim),
      features_(static_cast<Index>(samples.size()), feature_dim) {
  if (feature_dim < 0) throw ConfigError("negative feature dimension");
  click_ts_.reserve(samples.size());
  pay_ts_.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Sample& s = samples[i];
    if (static_cast<Index>(s.features.size()) != feature_dim) {
      throw ConfigError("sample " + std::to_string(i) + " has " +
                        std::to_string(s.features.size()) +
                        " features, expected " + std::to_string(feature_dim));
    }
    std::copy(s.features.begin(), s.features.end(),
              features_.data() + static_cast<Index>(i) * feature_dim);
    click_ts_.push_back(s.click_ts);
    pay_ts_.push_back(s.pay_ts);
  }
  validate();
}

Dataset::Dataset(FeatureMatrix features, std::vector<Timestamp> click_ts,
                 std::vector<std::optional<Timestamp>> pay_ts)
    : feature_dim_(features.cols()),
      features_(std::move(features)),
      click_ts_(std::move(click_ts)),
      pay_ts_(std::move(pay_ts)) {
  if (features_.rows() != static_cast<Index>(click_ts_.size()) ||
      click_ts_.size() != pay_ts_.size()) {
    throw ConfigError("dataset columns have mismatched lengths");
  }
  validate();
}

void Dataset::validate() const {
  for (Index i = 0; i < size(); ++i) {
    if (click_ts_[i].seconds < 0) {
      throw ConfigError("sample " + std::to_string(i) +
                        " has a negative click timestamp");
    }
    if (pay_ts_[i] && *pay_ts_[i] < click_ts_[i]) {
      throw ConfigError("sample " + std::to_string(i) +
                        " converts before it was clicked");
    }
  }
  if (!features_.allFinite()) throw ConfigError("non-finite feature value");
}

Sample Dataset::sample(Index i) const {
  const auto r = row(i);
  return Sample{std::vector<double>(r.begin(), r.end()), click_ts_[i],
                pay_ts_[i]};
}

Dataset Dataset::subset(std::span<const Index> indices) const {
  FeatureMatrix x(static_cast<Index>(indices.size()), feature_dim_);
  std::vector<Timestamp> click;
  std::vector<std::optional<Timestamp>> pay;
  click.reserve(indices.size());
  pay.reserve(indices.size());
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const Index i = indices[k];
    x.row(static_cast<Index>(k)) = features_.row(i);
    click.push_back(click_ts_[i]);
    pay.push_back(pay_ts_[i]);
  }
  Dataset out;
  out.feature_dim_ = feature_dim_;
  out.features_ = std::move(x);
  out.click_ts_ = std::move(click);
  out.pay_ts_ = std::move(pay);
  return out;
}

Dataset Dataset::concat(const Dataset& other) const {
  if (other.feature_dim_ != feature_dim_ && !other.empty() && !empty()) {
    throw ConfigError("cannot concatenate datasets of different dimension");
  }
  if (empty()) return other;
  if (other.empty()) return *this;
  Dataset out;
  out.feature_dim_ = feature_dim_;
  out.features_.resize(size() + other.size(), feature_dim_);
  out.features_.topRows(size()) = features_;
  out.features_.bottomRows(other.size()) = other.features_;
  out.click_ts_ = click_ts_;
  out.click_ts_.insert(out.click_ts_.end(), other.click_ts_.begin(),
                       other.click_ts_.end());
  out.pay_ts_ = pay_ts_;
  out.pay_ts_.insert(out.pay_ts_.end(), other.pay_ts_.begin(),
                     other.pay_ts_.end());
  return out;
}

bool operator==(const Dataset& a, const Dataset& b) {
  return a.feature_dim_ == b.feature_dim_ &&
         a.features_.rows() == b.features_.rows() &&
         std::equal(a.features_.data(),
                    a.features_.data() + a.features_.size(),
                    b.features_.data()) &&
         a.click_ts_ == b.click_ts_ && a.pay_ts_ == b.pay_ts_;
}

std::string describe(const LabelView& view) {
  return std::visit(
      overloaded{
          [](ObservedView v) {
            return "observed@" + std::to_string(v.cutoff.seconds);
          },
          [](RetrainView v) {
            return "retrain@" + std::to_string(v.cutoff.seconds);
          },
          [](OracleView) { return std::string("oracle"); },
      },
      view);
}

int label_of(const std::optional<Timestamp>& pay_ts, const LabelView& view) {
  if (!pay_ts) return 0;
  return std::visit(overloaded{
                        [&](ObservedView v) { return *pay_ts < v.cutoff; },
                        [&](RetrainView v) { return *pay_ts < v.cutoff; },
                        [](OracleView) { return true; },
                    },
                    view)
             ? 1
             : 0;
}

int label_of(const Sample& sample, const LabelView& view) {
  return label_of(sample.pay_ts, view);
}

std::vector<double> labels(const Dataset& data, const LabelView& view) {
  std::vector<double> y(static_cast<std::size_t>(data.size()));
  for (Index i = 0; i < data.size(); ++i) {
    y[i] = static_cast<double>(label_of(data.pay_ts(i), view));
  }
  return y;
}

Split temporal_split(const Dataset& data, Timestamp t, Timestamp t_prime,
                     std::int64_t d_test) {
  if (d_test <= 0) throw ConfigError("d_test must be positive");
  if (t > t_prime - d_test) {
    throw ConfigError("temporal split requires T <= T' - d_test");
  }
  const Timestamp valid_begin = t_prime - d_test;
  const Timestamp test_end = t_prime + d_test;
  std::vector<Index> train, valid, test;
  for (Index i = 0; i < data.size(); ++i) {
    const Timestamp c = data.click_ts(i);
    if (c < t) {
      train.push_back(i);
    } else if (c >= valid_begin && c < t_prime) {
      valid.push_back(i);
    } else if (c >= t_prime && c < test_end) {
      test.push_back(i);
    }
  }
  if (train.empty()) throw ConfigError("temporal split: training split empty");
  if (valid.empty()) {
    throw ConfigError("temporal split: validation split empty");
  }
  if (test.empty()) throw ConfigError("temporal split: test split empty");
  return Split{data.subset(train), data.subset(valid), data.subset(test)};
}

std::vector<Index> reversal_set(const Dataset& data, Timestamp t,
                                Timestamp t_prime) {
  if (!(t < t_prime)) throw ConfigError("reversal_set requires T < T'");
  std::vector<Index> out;
  for (Index i = 0; i < data.size(); ++i) {
    const auto& pay = data.pay_ts(i);
    if (data.click_ts(i) < t && pay && *pay >= t && *pay < t_prime) {
      out.push_back(i);
    }
  }
  return out;
}

LabeledSet arrival_set(const Dataset& data, Timestamp t, Timestamp t_prime) {
  if (!(t < t_prime)) throw ConfigError("arrival_set requires T < T'");
  std::vector<Index> rows;
  for (Index i = 0; i < data.size(); ++i) {
    const Timestamp c = data.click_ts(i);
    if (c >= t && c < t_prime) rows.push_back(i);
  }
  LabeledSet out{data.subset(rows), {}};
  out.labels = labels(out.data, ObservedView{t_prime});
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic generator

void SyntheticConfig::validate() const {
  if (n <= 0) throw ConfigError("synthetic: n must be positive");
  if (d <= 0) throw ConfigError("synthetic: d must be positive");
  if (!(target_cvr > 0.0 && target_cvr < 1.0)) {
    throw ConfigError("synthetic: target_cvr must lie in (0, 1)");
  }
  if (!(delay_mean_tau > 0.0)) {
    throw ConfigError("synthetic: delay_mean_tau must be positive");
  }
  if (horizon <= 0) throw ConfigError("synthetic: horizon must be positive");
  if (!(drift_angle_per_day >= 0.0)) {
    throw ConfigError("synthetic: drift_angle_per_day must be >= 0");
  }
  if (drift_angle_per_day > 0.0 && d < 2) {
    throw ConfigError("synthetic: drift needs at least two features");
  }
  if (!(signal_scale > 0.0)) {
    throw ConfigError("synthetic: signal_scale must be positive");
  }
}

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Orthonormal pair (u, v) spanning the drift plane.
std::pair<Vector, Vector> latent_plane(Index d, std::uint64_t seed) {
  Rng rng(derive_seed(seed, 1));
  Vector u(d), v(d);
  for (Index k = 0; k < d; ++k) u[k] = rng.normal();
  for (Index k = 0; k < d; ++k) v[k] = rng.normal();
  u.normalize();
  if (d > 1) {
    v -= v.dot(u) * u;
    v.normalize();
  } else {
    v.setZero();
  }
  return {u, v};
}

}  // namespace

Dataset generate_synthetic(const SyntheticConfig& config) {
  config.validate();
  const Index n = config.n;
  const Index d = config.d;
  const auto [u, v] = latent_plane(d, config.seed);

  Rng rng(derive_seed(config.seed, 2));
  std::vector<std::int64_t> clicks(static_cast<std::size_t>(n));
  for (auto& c : clicks) {
    c = static_cast<std::int64_t>(std::floor(
        rng.uniform() * static_cast<double>(config.horizon)));
  }
  FeatureMatrix raw(n, d);
  for (Index i = 0; i < n; ++i) {
    for (Index k = 0; k < d; ++k) raw(i, k) = rng.normal();
  }

  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
    return clicks[a] < clicks[b];
  });

  FeatureMatrix x(n, d);
  std::vector<Timestamp> click_ts(static_cast<std::size_t>(n));
  Vector logits(n);
  for (Index i = 0; i < n; ++i) {
    const Index src = order[i];
    x.row(i) = raw.row(src);
    click_ts[i] = Timestamp{clicks[src]};
    const double days =
        static_cast<double>(clicks[src]) / static_cast<double>(kSecondsPerDay);
    const double angle = config.drift_angle_per_day * days;
    const Vector w = config.signal_scale *
                     (std::cos(angle) * u + std::sin(angle) * v);
    logits[i] = x.row(i).dot(w);
  }

  auto mean_cvr = [&](double b0) {
    double s = 0.0;
    for (Index i = 0; i < n; ++i) s += sigmoid(logits[i] + b0);
    return s / static_cast<double>(n);
  };
  double lo = -60.0, hi = 60.0;
  if (mean_cvr(lo) > config.target_cvr || mean_cvr(hi) < config.target_cvr) {
    throw ConfigError("synthetic: cannot bracket target CVR");
  }
  for (int it = 0; it < 100; ++it) {
    const double mid = 0.5 * (lo + hi);
    (mean_cvr(mid) < config.target_cvr ? lo : hi) = mid;
  }
  const double b0 = 0.5 * (lo + hi);
  if (std::abs(mean_cvr(b0) - config.target_cvr) > 1e-6) {
    throw ConfigError("synthetic: bisection for the CVR offset did not converge");
  }

  Rng outcome(derive_seed(config.seed, 3));
  std::vector<std::optional<Timestamp>> pay_ts(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    const double p = sigmoid(logits[i] + b0);
    const double draw = outcome.uniform();
    const double delay = outcome.exponential(config.delay_mean_tau);
    if (draw < p) {
      pay_ts[i] = click_ts[i] + static_cast<std::int64_t>(std::floor(delay));
    }
  }
  return Dataset(std::move(x), std::move(click_ts), std::move(pay_ts));
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) {
    s.remove_prefix(1);
  }
  while (!s.empty() &&
         (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(trim(line.substr(start)));
      break;
    }
    out.push_back(trim(line.substr(start, pos - start)));
    start = pos + 1;
  }
  return out;
}

template <typename T>
T parse_number(std::string_view field, std::size_t line, const char* what) {
  T value{};
  const char* first = field.data();
  const char* last = field.data() + field.size();
  if (!field.empty() && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (field.empty() || ec != std::errc() || ptr != last) {
    throw ParseError(std::string("non-numeric ") + what + " '" +
                         std::string(field) + "'",
                     line);
  }
  return value;
}

}  // namespace

Dataset load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string(), 0);
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw ParseError("missing header row", 1);
  ++line_no;
  const auto header = split_commas(line);
  if (header.size() < 2 || header[0] != "click_ts" || header[1] != "pay_ts") {
    throw ParseError("header must start with click_ts,pay_ts", line_no);
  }
  const Index d = static_cast<Index>(header.size()) - 2;

  std::vector<double> values;
  std::vector<Timestamp> click;
  std::vector<std::optional<Timestamp>> pay;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_commas(line);
    if (static_cast<Index>(fields.size()) != d + 2) {
      throw ParseError("expected " + std::to_string(d + 2) + " columns, got " +
                           std::to_string(fields.size()),
                       line_no);
    }
    const auto c = parse_number<std::int64_t>(fields[0], line_no, "click_ts");
    const auto p = parse_number<std::int64_t>(fields[1], line_no, "pay_ts");
    if (c < 0) throw ParseError("negative click_ts", line_no);
    if (p != -1 && p < c) throw ParseError("pay_ts < click_ts", line_no);
    if (p < -1) throw ParseError("pay_ts below the -1 sentinel", line_no);
    for (Index k = 0; k < d; ++k) {
      const double x = parse_number<double>(fields[k + 2], line_no, "feature");
      if (!std::isfinite(x)) throw ParseError("non-finite feature", line_no);
      values.push_back(x);
    }
    click.push_back(Timestamp{c});
    pay.push_back(p == -1 ? std::nullopt : std::optional(Timestamp{p}));
  }
  const Index n = static_cast<Index>(click.size());
  FeatureMatrix x(n, d);
  std::copy(values.begin(), values.end(), x.data());
  return Dataset(std::move(x), std::move(click), std::move(pay));
}

void save_csv(const Dataset& data, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << "click_ts,pay_ts";
  for (Index k = 0; k < data.feature_dim(); ++k) out << ",f" << k;
  out << '\n';
  char buf[64];
  for (Index i = 0; i < data.size(); ++i) {
    out << data.click_ts(i).seconds << ','
        << (data.pay_ts(i) ? data.pay_ts(i)->seconds : -1);
    for (double x : data.row(i)) {
      const auto res = std::to_chars(buf, buf + sizeof(buf), x);
      out << ',' << std::string_view(buf, res.ptr - buf);
    }
    out << '\n';
  }
  if (!out) throw ConfigError("write failed for " + path.string());
}

}  // namespace ifdfm
