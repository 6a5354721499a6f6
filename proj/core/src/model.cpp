#include "ifdfm/model.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "ifdfm/error.hpp"
#include "ifdfm/rng.hpp"

namespace ifdfm {

namespace {

constexpr Index kChunkRows = 4096;

using RowMajorMap = Eigen::Map<const FeatureMatrix>;
using MutRowMajorMap = Eigen::Map<FeatureMatrix>;

// Per-sample output quantities of the clamped/clipped BCE head.
struct Head {
  double loss;
  double dz;   // d loss / d raw logit
  double d2z;  // d^2 loss / d raw logit^2
};

Head head(double z, double y) {
  const bool clamped = z < -kLogitClamp || z > kLogitClamp;
  const double zc = std::clamp(z, -kLogitClamp, kLogitClamp);
  const double f = 1.0 / (1.0 + std::exp(-zc));
  const double fc = std::clamp(f, kProbClip, 1.0 - kProbClip);
  const bool active = !clamped && fc == f;
  Head h;
  h.loss = -(y * std::log(fc) + (1.0 - y) * std::log(1.0 - fc));
  h.dz = active ? f - y : 0.0;
  h.d2z = active ? f * (1.0 - f) : 0.0;
  return h;
}

}  // namespace

// ---------------------------------------------------------------------------
// ModelSpec

ModelSpec ModelSpec::logistic(Index d, double l2) {
  ModelSpec s;
  s.kind = Kind::kLogistic;
  s.input_dim = d;
  s.l2 = l2;
  s.validate();
  return s;
}

ModelSpec ModelSpec::mlp(Index d, std::vector<Index> hidden, double l2) {
  ModelSpec s;
  s.kind = Kind::kMlp;
  s.input_dim = d;
  s.hidden = std::move(hidden);
  s.l2 = l2;
  s.validate();
  return s;
}

void ModelSpec::validate() const {
  if (input_dim <= 0) throw ConfigError("model: input dimension must be > 0");
  if (!(l2 >= 0.0) || !std::isfinite(l2)) {
    throw ConfigError("model: l2 coefficient must be finite and >= 0");
  }
  if (kind == Kind::kLogistic && !hidden.empty()) {
    throw ConfigError("model: logistic regression has no hidden layers");
  }
  if (kind == Kind::kMlp) {
    if (hidden.empty()) throw ConfigError("model: MLP needs hidden layers");
    for (Index h : hidden) {
      if (h <= 0) throw ConfigError("model: hidden widths must be positive");
    }
  }
}

Index ModelSpec::num_params() const {
  Index p = 0;
  Index in = input_dim;
  for (Index h : hidden) {
    p += h * in + h;
    in = h;
  }
  return p + in + 1;
}

std::string ModelSpec::describe() const {
  std::ostringstream out;
  if (kind == Kind::kLogistic) {
    out << "logreg d=" << input_dim;
  } else {
    out << "mlp d=" << input_dim << " hidden=";
    for (std::size_t i = 0; i < hidden.size(); ++i) {
      out << (i ? "," : "") << hidden[i];
    }
  }
  out << " l2=" << format_double(l2);
  return out.str();
}

ModelSpec ModelSpec::parse(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string kind;
  in >> kind;
  ModelSpec s;
  if (kind == "logreg") {
    s.kind = Kind::kLogistic;
  } else if (kind == "mlp") {
    s.kind = Kind::kMlp;
  } else {
    throw ConfigError("model: unknown kind '" + kind + "'");
  }
  std::string token;
  while (in >> token) {
    const auto eq = token.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("model: malformed token '" + token + "'");
    }
    const std::string key = token.substr(0, eq);
    const std::string value = token.substr(eq + 1);
    try {
      if (key == "d") {
        s.input_dim = std::stoll(value);
      } else if (key == "l2") {
        s.l2 = std::stod(value);
      } else if (key == "hidden") {
        s.hidden.clear();
        std::istringstream widths(value);
        std::string w;
        while (std::getline(widths, w, ',')) s.hidden.push_back(std::stoll(w));
      } else {
        throw ConfigError("model: unknown key '" + key + "'");
      }
    } catch (const std::logic_error&) {
      throw ConfigError("model: bad value for '" + key + "'");
    }
  }
  s.validate();
  return s;
}

// ---------------------------------------------------------------------------
// Model

struct Model::Cache {
  std::vector<Eigen::MatrixXd> acts;  // post-ReLU hidden activations
  Eigen::VectorXd logit;
};

Model::Model(ModelSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  Index in = spec_.input_dim;
  Index offset = 0;
  auto add = [&](Index out) {
    Layer l{in, out, offset, offset + in * out};
    offset = l.b_offset + out;
    layers_.push_back(l);
    in = out;
  };
  for (Index h : spec_.hidden) add(h);
  add(1);
  num_params_ = offset;
}

void Model::check(const ParamVector& params, FeaturesRef x,
                  std::span<const double> y) const {
  if (params.size() != num_params_) {
    throw ConfigError("model: expected " + std::to_string(num_params_) +
                      " parameters, got " + std::to_string(params.size()));
  }
  if (x.cols() != spec_.input_dim) {
    throw ConfigError("model: feature dimension mismatch (" +
                      std::to_string(x.cols()) + " vs " +
                      std::to_string(spec_.input_dim) + ")");
  }
  if (static_cast<Index>(y.size()) != x.rows()) {
    throw ConfigError("model: label count does not match batch size");
  }
}

void Model::forward(const ParamVector& params, FeaturesRef x,
                    Cache& cache) const {
  const std::size_t depth = layers_.size();
  cache.acts.resize(depth - 1);
  Eigen::MatrixXd z;
  for (std::size_t l = 0; l < depth; ++l) {
    const Layer& layer = layers_[l];
    RowMajorMap w(params.data() + layer.w_offset, layer.out, layer.in);
    const auto b = params.segment(layer.b_offset, layer.out);
    if (l == 0) {
      z.noalias() = x * w.transpose();
    } else {
      z.noalias() = cache.acts[l - 1] * w.transpose();
    }
    z.rowwise() += b.transpose();
    if (l + 1 < depth) {
      cache.acts[l] = z.cwiseMax(0.0);
    } else {
      cache.logit = z.col(0);
    }
  }
}

double Model::accumulate_grad(const ParamVector& params, FeaturesRef x,
                              std::span<const double> y, double scale,
                              GradVector* grad) const {
  Cache cache;
  forward(params, x, cache);
  const Index rows = x.rows();
  Eigen::MatrixXd delta(rows, 1);
  double loss_sum = 0.0;
  for (Index i = 0; i < rows; ++i) {
    const Head h = head(cache.logit[i], y[i]);
    loss_sum += h.loss;
    delta(i, 0) = scale * h.dz;
  }
  if (grad == nullptr) return loss_sum;

  for (std::size_t l = layers_.size(); l-- > 0;) {
    const Layer& layer = layers_[l];
    MutRowMajorMap gw(grad->data() + layer.w_offset, layer.out, layer.in);
    if (l == 0) {
      gw.noalias() += delta.transpose() * x;
    } else {
      gw.noalias() += delta.transpose() * cache.acts[l - 1];
    }
    grad->segment(layer.b_offset, layer.out) +=
        delta.colwise().sum().transpose();
    if (l > 0) {
      RowMajorMap w(params.data() + layer.w_offset, layer.out, layer.in);
      Eigen::MatrixXd back = delta * w;
      delta = back.cwiseProduct(
          (cache.acts[l - 1].array() > 0.0).cast<double>().matrix());
    }
  }
  return loss_sum;
}

void Model::accumulate_hvp(const ParamVector& params, FeaturesRef x,
                           std::span<const double> y, const Vector& v,
                           double scale, GradVector& out) const {
  Cache cache;
  forward(params, x, cache);
  const Index rows = x.rows();
  const std::size_t depth = layers_.size();

  // Forward tangent pass: r_acts[l] = directional derivative of acts[l].
  std::vector<Eigen::MatrixXd> r_acts(depth - 1);
  Eigen::VectorXd r_logit;
  {
    Eigen::MatrixXd rz;
    for (std::size_t l = 0; l < depth; ++l) {
      const Layer& layer = layers_[l];
      RowMajorMap w(params.data() + layer.w_offset, layer.out, layer.in);
      RowMajorMap vw(v.data() + layer.w_offset, layer.out, layer.in);
      const auto vb = v.segment(layer.b_offset, layer.out);
      if (l == 0) {
        rz.noalias() = x * vw.transpose();
      } else {
        rz.noalias() = cache.acts[l - 1] * vw.transpose();
        rz.noalias() += r_acts[l - 1] * w.transpose();
      }
      rz.rowwise() += vb.transpose();
      if (l + 1 < depth) {
        r_acts[l] = rz.cwiseProduct(
            (cache.acts[l].array() > 0.0).cast<double>().matrix());
      } else {
        r_logit = rz.col(0);
      }
    }
  }

  Eigen::MatrixXd delta(rows, 1), r_delta(rows, 1);
  for (Index i = 0; i < rows; ++i) {
    const Head h = head(cache.logit[i], y[i]);
    delta(i, 0) = scale * h.dz;
    r_delta(i, 0) = scale * h.d2z * r_logit[i];
  }

  // Reverse pass and its tangent.
  for (std::size_t l = depth; l-- > 0;) {
    const Layer& layer = layers_[l];
    MutRowMajorMap hw(out.data() + layer.w_offset, layer.out, layer.in);
    if (l == 0) {
      hw.noalias() += r_delta.transpose() * x;
    } else {
      hw.noalias() += r_delta.transpose() * cache.acts[l - 1];
      hw.noalias() += delta.transpose() * r_acts[l - 1];
    }
    out.segment(layer.b_offset, layer.out) +=
        r_delta.colwise().sum().transpose();
    if (l > 0) {
      RowMajorMap w(params.data() + layer.w_offset, layer.out, layer.in);
      RowMajorMap vw(v.data() + layer.w_offset, layer.out, layer.in);
      const Eigen::MatrixXd mask =
          (cache.acts[l - 1].array() > 0.0).cast<double>().matrix();
      Eigen::MatrixXd next_r = r_delta * w;
      next_r.noalias() += delta * vw;
      r_delta = next_r.cwiseProduct(mask);
      Eigen::MatrixXd next = delta * w;
      delta = next.cwiseProduct(mask);
    }
  }
}

double Model::logit(const ParamVector& params, std::span<const double> x) const {
  if (static_cast<Index>(x.size()) != spec_.input_dim) {
    throw ConfigError("model: feature dimension mismatch");
  }
  RowMajorMap row(x.data(), 1, spec_.input_dim);
  Cache cache;
  const double dummy = 0.0;
  check(params, row, std::span<const double>(&dummy, 1));
  forward(params, row, cache);
  return cache.logit[0];
}

double Model::predict(const ParamVector& params,
                      std::span<const double> x) const {
  const double z = std::clamp(logit(params, x), -kLogitClamp, kLogitClamp);
  return 1.0 / (1.0 + std::exp(-z));
}

Vector Model::predict_batch(const ParamVector& params, FeaturesRef x) const {
  if (params.size() != num_params_ || x.cols() != spec_.input_dim) {
    throw ConfigError("model: shape mismatch in predict_batch");
  }
  Vector out(x.rows());
  Cache cache;
  for (Index start = 0; start < x.rows(); start += kChunkRows) {
    const Index m = std::min(kChunkRows, x.rows() - start);
    forward(params, x.middleRows(start, m), cache);
    for (Index i = 0; i < m; ++i) {
      const double z = std::clamp(cache.logit[i], -kLogitClamp, kLogitClamp);
      out[start + i] = 1.0 / (1.0 + std::exp(-z));
    }
  }
  return out;
}

double Model::l2_penalty(const ParamVector& params) const {
  double s = 0.0;
  for (const Layer& l : layers_) {
    s += params.segment(l.w_offset, l.in * l.out).squaredNorm();
  }
  return 0.5 * spec_.l2 * s;
}

Vector Model::weight_mask() const {
  Vector m = Vector::Zero(num_params_);
  for (const Layer& l : layers_) m.segment(l.w_offset, l.in * l.out).setOnes();
  return m;
}

double Model::loss(const ParamVector& params, FeaturesRef x,
                   std::span<const double> y) const {
  check(params, x, y);
  if (x.rows() == 0) throw ConfigError("model: empty batch");
  double sum = 0.0;
  for (Index start = 0; start < x.rows(); start += kChunkRows) {
    const Index m = std::min(kChunkRows, x.rows() - start);
    sum += accumulate_grad(params, x.middleRows(start, m), y.subspan(start, m),
                           0.0, nullptr);
  }
  return sum / static_cast<double>(x.rows()) + l2_penalty(params);
}

LossAndGrad Model::loss_and_grad(const ParamVector& params, FeaturesRef x,
                                 std::span<const double> y) const {
  check(params, x, y);
  if (x.rows() == 0) throw ConfigError("model: empty batch");
  LossAndGrad out;
  out.grad = GradVector::Zero(num_params_);
  const double scale = 1.0 / static_cast<double>(x.rows());
  double sum = 0.0;
  for (Index start = 0; start < x.rows(); start += kChunkRows) {
    const Index m = std::min(kChunkRows, x.rows() - start);
    sum += accumulate_grad(params, x.middleRows(start, m), y.subspan(start, m),
                           scale, &out.grad);
  }
  out.loss = sum * scale + l2_penalty(params);
  if (spec_.l2 > 0.0) {
    for (const Layer& l : layers_) {
      out.grad.segment(l.w_offset, l.in * l.out) +=
          spec_.l2 * params.segment(l.w_offset, l.in * l.out);
    }
  }
  return out;
}

GradVector Model::grad(const ParamVector& params, FeaturesRef x,
                       std::span<const double> y) const {
  return loss_and_grad(params, x, y).grad;
}

GradVector Model::hvp(const ParamVector& params, FeaturesRef x,
                      std::span<const double> y, const Vector& v) const {
  check(params, x, y);
  if (x.rows() == 0) throw ConfigError("model: empty batch");
  if (v.size() != num_params_) {
    throw ConfigError("model: direction has wrong length");
  }
  GradVector out = GradVector::Zero(num_params_);
  const double scale = 1.0 / static_cast<double>(x.rows());
  for (Index start = 0; start < x.rows(); start += kChunkRows) {
    const Index m = std::min(kChunkRows, x.rows() - start);
    accumulate_hvp(params, x.middleRows(start, m), y.subspan(start, m), v,
                   scale, out);
  }
  if (spec_.l2 > 0.0) {
    for (const Layer& l : layers_) {
      out.segment(l.w_offset, l.in * l.out) +=
          spec_.l2 * v.segment(l.w_offset, l.in * l.out);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Free functions

double predict(const ModelSpec& spec, const ParamVector& params,
               std::span<const double> x) {
  return Model(spec).predict(params, x);
}

double bce_loss(const ModelSpec& spec, const ParamVector& params,
                std::span<const double> x, double label) {
  const Model model(spec);
  if (static_cast<Index>(x.size()) != spec.input_dim) {
    throw ConfigError("model: feature dimension mismatch");
  }
  RowMajorMap row(x.data(), 1, spec.input_dim);
  return model.loss(params, row, std::span<const double>(&label, 1));
}

GradVector grad(const ModelSpec& spec, const ParamVector& params,
                FeaturesRef x, std::span<const double> y) {
  return Model(spec).grad(params, x, y);
}

GradVector hvp(const ModelSpec& spec, const ParamVector& params, FeaturesRef x,
               std::span<const double> y, const Vector& v) {
  return Model(spec).hvp(params, x, y, v);
}

ParamVector initial_params(const ModelSpec& spec, std::uint64_t seed) {
  spec.validate();
  ParamVector p = ParamVector::Zero(spec.num_params());
  if (spec.kind == ModelSpec::Kind::kLogistic) return p;
  Rng rng(derive_seed(seed, 0x494e4954ULL));
  Index in = spec.input_dim;
  Index offset = 0;
  std::vector<Index> widths = spec.hidden;
  widths.push_back(1);
  for (Index out : widths) {
    const double limit = std::sqrt(6.0 / static_cast<double>(in));
    for (Index k = 0; k < in * out; ++k) p[offset + k] = rng.uniform(-limit, limit);
    offset += in * out + out;
    in = out;
  }
  return p;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr char kMagic[8] = {'I', 'F', 'D', 'F', 'M', 'C', 'K', 'P'};

template <typename T>
void write_le(std::ostream& out, T value) {
  using U = std::make_unsigned_t<T>;
  auto u = static_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.put(static_cast<char>(u & 0xff));
    u = static_cast<U>(u >> 8);
  }
}

template <typename T>
T read_le(std::istream& in) {
  using U = std::make_unsigned_t<T>;
  U u = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    const int c = in.get();
    if (c == EOF) throw ParseError("checkpoint truncated", 0);
    u |= static_cast<U>(static_cast<U>(c & 0xff) << (8 * i));
  }
  return static_cast<T>(u);
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ModelSpec& spec,
                     const ParamVector& params) {
  if (params.size() != spec.num_params()) {
    throw ConfigError("checkpoint: parameter count does not match the model");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out.write(kMagic, sizeof(kMagic));
  write_le<std::uint32_t>(out, kCheckpointVersion);
  const std::string desc = spec.describe();
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(desc.size()));
  out.write(desc.data(), static_cast<std::streamsize>(desc.size()));
  write_le<std::uint64_t>(out, static_cast<std::uint64_t>(params.size()));
  for (Index i = 0; i < params.size(); ++i) {
    write_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(params[i]));
  }
  if (!out) throw ConfigError("write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string(), 0);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || !std::equal(magic, magic + 8, kMagic)) {
    throw ParseError("not a checkpoint file: " + path.string(), 0);
  }
  const auto version = read_le<std::uint32_t>(in);
  if (version != kCheckpointVersion) {
    throw ParseError("unsupported checkpoint version " +
                         std::to_string(version),
                     0);
  }
  const auto len = read_le<std::uint32_t>(in);
  if (len > 4096) throw ParseError("checkpoint header too long", 0);
  std::string desc(len, '\0');
  in.read(desc.data(), len);
  if (!in) throw ParseError("checkpoint truncated", 0);
  Checkpoint ck;
  ck.spec = ModelSpec::parse(desc);
  const auto p = read_le<std::uint64_t>(in);
  if (p != static_cast<std::uint64_t>(ck.spec.num_params())) {
    throw ParseError("checkpoint parameter count " + std::to_string(p) +
                         " does not match its spec",
                     0);
  }
  ck.params.resize(static_cast<Index>(p));
  for (Index i = 0; i < ck.params.size(); ++i) {
    ck.params[i] = std::bit_cast<double>(read_le<std::uint64_t>(in));
  }
  if (!ck.params.allFinite()) throw ParseError("non-finite parameter", 0);
  return ck;
}

Checkpoint load_checkpoint(const std::filesystem::path& path,
                           const ModelSpec& expected) {
  Checkpoint ck = load_checkpoint(path);
  if (ck.params.size() != expected.num_params()) {
    throw ConfigError("checkpoint has " + std::to_string(ck.params.size()) +
                      " parameters, expected " +
                      std::to_string(expected.num_params()));
  }
  return ck;
}

}  // namespace ifdfm
