#include "ifdfm/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "ifdfm/error.hpp"

namespace ifdfm {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string_view> split_list(std::string_view s) {
  std::vector<std::string_view> parts;
  s = trim(s);
  if (s.empty()) return parts;
  std::size_t start = 0;
  while (true) {
    const auto comma = s.find(',', start);
    parts.push_back(trim(s.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return parts;
}

template <typename T>
T parse_number(std::string_view text, std::string_view what) {
  text = trim(text);
  T value{};
  const auto [ptr, ec] =
      std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size() || text.empty()) {
    throw ConfigError(std::string(what) + ": cannot parse '" +
                      std::string(text) + "'");
  }
  if constexpr (std::is_floating_point_v<T>) {
    if (!std::isfinite(value)) {
      throw ConfigError(std::string(what) + ": value must be finite");
    }
  }
  return value;
}

bool parse_bool(std::string_view text, std::string_view what) {
  text = trim(text);
  if (text == "true" || text == "1" || text == "on" || text == "yes") {
    return true;
  }
  if (text == "false" || text == "0" || text == "off" || text == "no") {
    return false;
  }
  throw ConfigError(std::string(what) + ": expected true or false, got '" +
                    std::string(text) + "'");
}

std::string format_bool(bool b) { return b ? "true" : "false"; }

template <typename T>
std::string join(const std::vector<T>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i > 0) out += ',';
    if constexpr (std::is_same_v<T, std::string>) {
      out += items[i];
    } else {
      out += std::to_string(items[i]);
    }
  }
  return out;
}

template <typename T>
std::vector<T> parse_number_list(std::string_view text, std::string_view what) {
  std::vector<T> out;
  for (auto part : split_list(text)) out.push_back(parse_number<T>(part, what));
  return out;
}

using Cfg = ExperimentConfig;

ConfigKey key(std::string name, std::string help,
              std::function<void(Cfg&, std::string_view)> set,
              std::function<std::string(const Cfg&)> get) {
  return ConfigKey{std::move(name), std::move(help), std::move(set),
                   std::move(get)};
}

// Binds a numeric member reached through `field`.
template <typename T, typename Field>
ConfigKey number_key(std::string name, std::string help, Field field) {
  const std::string what = name;
  return key(
      std::move(name), std::move(help),
      [field, what](Cfg& c, std::string_view v) {
        field(c) = parse_number<T>(v, what);
      },
      [field](const Cfg& c) {
        if constexpr (std::is_floating_point_v<T>) {
          return format_double(field(c));
        } else {
          return std::to_string(field(c));
        }
      });
}

template <typename Field>
ConfigKey bool_key(std::string name, std::string help, Field field) {
  const std::string what = name;
  return key(
      std::move(name), std::move(help),
      [field, what](Cfg& c, std::string_view v) {
        field(c) = parse_bool(v, what);
      },
      [field](const Cfg& c) { return format_bool(field(c)); });
}

std::vector<ConfigKey> build_keys() {
  std::vector<ConfigKey> keys;

  keys.push_back(key(
      "data.source", "synthetic or csv",
      [](Cfg& c, std::string_view v) {
        v = trim(v);
        if (v != "synthetic" && v != "csv") {
          throw ConfigError("data.source: expected synthetic or csv");
        }
        c.data_source = std::string(v);
      },
      [](const Cfg& c) { return c.data_source; }));
  keys.push_back(key(
      "data.csv_path", "dataset file when data.source = csv",
      [](Cfg& c, std::string_view v) { c.csv_path = std::string(trim(v)); },
      [](const Cfg& c) { return c.csv_path.string(); }));

  keys.push_back(number_key<Index>("synth.n", "number of clicks",
                                   [](auto& c) -> auto& { return c.synth.n; }));
  keys.push_back(number_key<Index>("synth.d", "feature dimension",
                                   [](auto& c) -> auto& { return c.synth.d; }));
  keys.push_back(number_key<double>(
      "synth.target_cvr", "target conversion rate",
      [](auto& c) -> auto& { return c.synth.target_cvr; }));
  keys.push_back(key(
      "synth.delay_mean_tau", "mean conversion delay (duration)",
      [](Cfg& c, std::string_view v) {
        c.synth.delay_mean_tau = static_cast<double>(parse_duration(v));
      },
      [](const Cfg& c) {
        return format_duration(std::llround(c.synth.delay_mean_tau));
      }));
  keys.push_back(key(
      "synth.horizon", "click time range (duration)",
      [](Cfg& c, std::string_view v) { c.synth.horizon = parse_duration(v); },
      [](const Cfg& c) { return format_duration(c.synth.horizon); }));
  keys.push_back(number_key<double>(
      "synth.drift_angle_per_day", "latent rotation in radians per day",
      [](auto& c) -> auto& { return c.synth.drift_angle_per_day; }));
  keys.push_back(number_key<double>(
      "synth.signal_scale", "norm of the latent weight vector",
      [](auto& c) -> auto& { return c.synth.signal_scale; }));
  keys.push_back(number_key<std::uint64_t>(
      "synth.seed", "generator seed",
      [](auto& c) -> auto& { return c.synth.seed; }));

  keys.push_back(key(
      "split.T", "training cutoff (duration since time zero)",
      [](Cfg& c, std::string_view v) { c.t = Timestamp{parse_duration(v)}; },
      [](const Cfg& c) { return format_duration(c.t.seconds); }));
  keys.push_back(key(
      "split.T_prime", "evaluation time, start of the test window",
      [](Cfg& c, std::string_view v) {
        c.t_prime = Timestamp{parse_duration(v)};
      },
      [](const Cfg& c) { return format_duration(c.t_prime.seconds); }));
  keys.push_back(key(
      "split.d_test", "width of the validation and test windows",
      [](Cfg& c, std::string_view v) { c.d_test = parse_duration(v); },
      [](const Cfg& c) { return format_duration(c.d_test); }));

  keys.push_back(key(
      "model.type", "logreg or mlp",
      [](Cfg& c, std::string_view v) {
        v = trim(v);
        if (v == "logreg") {
          c.model_kind = ModelSpec::Kind::kLogistic;
        } else if (v == "mlp") {
          c.model_kind = ModelSpec::Kind::kMlp;
        } else {
          throw ConfigError("model.type: expected logreg or mlp");
        }
      },
      [](const Cfg& c) {
        return std::string(c.model_kind == ModelSpec::Kind::kMlp ? "mlp"
                                                                 : "logreg");
      }));
  keys.push_back(key(
      "model.hidden", "comma-separated hidden widths",
      [](Cfg& c, std::string_view v) {
        c.hidden = parse_number_list<Index>(v, "model.hidden");
      },
      [](const Cfg& c) { return join(c.hidden); }));
  keys.push_back(number_key<double>("model.l2", "L2 coefficient on weights",
                                    [](auto& c) -> auto& { return c.l2; }));

  keys.push_back(number_key<Index>(
      "train.batch_size", "minibatch size",
      [](auto& c) -> auto& { return c.train.batch_size; }));
  keys.push_back(number_key<double>(
      "train.learning_rate", "Adam step size",
      [](auto& c) -> auto& { return c.train.learning_rate; }));
  keys.push_back(number_key<int>(
      "train.max_epochs", "epoch cap",
      [](auto& c) -> auto& { return c.train.max_epochs; }));
  keys.push_back(number_key<int>(
      "train.early_stop_patience", "epochs without improvement; 0 disables",
      [](auto& c) -> auto& { return c.train.early_stop_patience; }));

  keys.push_back(bool_key("influence.delay", "fold in label reversals",
                          [](auto& c) -> auto& { return c.include_delay; }));
  keys.push_back(bool_key("influence.add", "fold in newly arrived samples",
                          [](auto& c) -> auto& { return c.include_add; }));
  keys.push_back(number_key<double>("influence.lambda", "Hessian damping",
                                    [](auto& c) -> auto& { return c.lambda; }));
  keys.push_back(number_key<Index>(
      "influence.hessian_rows",
      "training rows sampled for the Hessian; 0 uses all",
      [](auto& c) -> auto& { return c.hessian_rows; }));
  keys.push_back(bool_key(
      "influence.accept_unconverged",
      "keep the best iterate when the solver misses its tolerance",
      [](auto& c) -> auto& { return c.accept_unconverged; }));

  keys.push_back(key(
      "solver.kind", "cg, neumann or sq",
      [](Cfg& c, std::string_view v) { c.solver.kind = parse_solver(trim(v)); },
      [](const Cfg& c) { return std::string(solver_name(c.solver.kind)); }));
  keys.push_back(number_key<double>(
      "solver.tol", "relative residual target; 0 picks the solver default",
      [](auto& c) -> auto& { return c.solver.tol; }));
  keys.push_back(number_key<int>(
      "solver.max_iters", "conjugate gradient iteration cap",
      [](auto& c) -> auto& { return c.solver.max_iters; }));
  keys.push_back(number_key<int>(
      "solver.max_epochs", "stochastic solver epoch cap",
      [](auto& c) -> auto& { return c.solver.max_epochs; }));
  keys.push_back(number_key<Index>(
      "solver.minibatch_size", "stochastic solver minibatch",
      [](auto& c) -> auto& { return c.solver.minibatch_size; }));
  keys.push_back(number_key<double>(
      "solver.learning_rate", "stochastic solver Adam step",
      [](auto& c) -> auto& { return c.solver.learning_rate; }));
  keys.push_back(number_key<double>(
      "solver.lr_decay", "per-epoch step multiplier",
      [](auto& c) -> auto& { return c.solver.lr_decay; }));
  keys.push_back(number_key<int>(
      "solver.neumann_terms", "power series length",
      [](auto& c) -> auto& { return c.solver.neumann_terms; }));
  keys.push_back(number_key<double>(
      "solver.neumann_scale", "series scale; 0 estimates it",
      [](auto& c) -> auto& { return c.solver.neumann_scale; }));
  keys.push_back(number_key<int>(
      "solver.power_iters", "power iterations for the scale estimate",
      [](auto& c) -> auto& { return c.solver.power_iters; }));

  keys.push_back(key(
      "methods", "comma-separated subset of vanilla,retrain,oracle,ifdfm,"
                 "ifdfm_wo_add",
      [](Cfg& c, std::string_view v) {
        c.methods.clear();
        for (auto m : split_list(v)) c.methods.emplace_back(m);
      },
      [](const Cfg& c) { return join(c.methods); }));
  keys.push_back(key(
      "seeds", "comma-separated run seeds",
      [](Cfg& c, std::string_view v) {
        c.seeds = parse_number_list<std::uint64_t>(v, "seeds");
      },
      [](const Cfg& c) { return join(c.seeds); }));
  keys.push_back(key(
      "output_dir", "directory for reports and checkpoints",
      [](Cfg& c, std::string_view v) { c.output_dir = std::string(trim(v)); },
      [](const Cfg& c) { return c.output_dir.string(); }));
  keys.push_back(key(
      "timing.sizes", "comma-separated dataset sizes for the timing study",
      [](Cfg& c, std::string_view v) {
        c.timing_sizes = parse_number_list<Index>(v, "timing.sizes");
      },
      [](const Cfg& c) { return join(c.timing_sizes); }));
  return keys;
}

}  // namespace

std::int64_t parse_duration(std::string_view text) {
  text = trim(text);
  if (text.empty()) throw ConfigError("duration: empty value");
  double unit = 1.0;
  switch (text.back()) {
    case 's': unit = 1.0; break;
    case 'm': unit = 60.0; break;
    case 'h': unit = 3600.0; break;
    case 'd': unit = static_cast<double>(kSecondsPerDay); break;
    default: return parse_number<std::int64_t>(text, "duration");
  }
  const double amount =
      parse_number<double>(text.substr(0, text.size() - 1), "duration");
  const double seconds = amount * unit;
  if (std::abs(seconds) > 1e15) throw ConfigError("duration: out of range");
  return std::llround(seconds);
}

std::string format_duration(std::int64_t seconds) {
  if (seconds != 0 && seconds % kSecondsPerDay == 0) {
    return std::to_string(seconds / kSecondsPerDay) + "d";
  }
  if (seconds != 0 && seconds % 3600 == 0) {
    return std::to_string(seconds / 3600) + "h";
  }
  return std::to_string(seconds);
}

ModelSpec ExperimentConfig::model_spec(Index input_dim) const {
  return model_kind == ModelSpec::Kind::kMlp
             ? ModelSpec::mlp(input_dim, hidden, l2)
             : ModelSpec::logistic(input_dim, l2);
}

bool ExperimentConfig::has_method(std::string_view name) const {
  return std::find(methods.begin(), methods.end(), name) != methods.end();
}

void ExperimentConfig::validate() const {
  if (data_source == "csv" && csv_path.empty()) {
    throw ConfigError("data.csv_path is required when data.source = csv");
  }
  if (data_source == "synthetic") synth.validate();
  if (d_test <= 0) throw ConfigError("split.d_test must be positive");
  if (!(t < t_prime - d_test)) {
    throw ConfigError("split: require T < T_prime - d_test");
  }
  if (t.seconds < 0) throw ConfigError("split.T must be non-negative");
  if (model_kind == ModelSpec::Kind::kMlp && hidden.empty()) {
    throw ConfigError("model.hidden must be non-empty for mlp");
  }
  model_spec(1).validate();
  train.validate();
  solver.validate();
  if (!include_delay && !include_add) {
    throw ConfigError("influence: enable at least one of delay and add");
  }
  if (!(lambda > 0.0)) throw ConfigError("influence.lambda must be positive");
  if (hessian_rows < 0) throw ConfigError("influence.hessian_rows must be >= 0");
  if (methods.empty()) throw ConfigError("methods must be non-empty");
  std::set<std::string> seen;
  for (const auto& m : methods) {
    if (m != kMethodVanilla && m != kMethodRetrain && m != kMethodOracle &&
        m != kMethodIfdfm && m != kMethodIfdfmWoAdd) {
      throw ConfigError("methods: unknown method '" + m + "'");
    }
    if (!seen.insert(m).second) {
      throw ConfigError("methods: '" + m + "' listed twice");
    }
  }
  if (seeds.empty()) throw ConfigError("seeds must be non-empty");
  if (timing_sizes.empty()) throw ConfigError("timing.sizes must be non-empty");
  for (Index n : timing_sizes) {
    if (n < 1) throw ConfigError("timing.sizes entries must be positive");
  }
}

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = build_keys();
  return keys;
}

void set_config_value(ExperimentConfig& cfg, std::string_view key,
                      std::string_view value) {
  for (const auto& k : config_keys()) {
    if (k.name == key) {
      k.set(cfg, value);
      return;
    }
  }
  throw ConfigError("unknown config key '" + std::string(key) + "'");
}

ExperimentConfig parse_config(std::string_view text, ExperimentConfig base) {
  std::set<std::string, std::less<>> seen;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto end = std::min(text.find('\n', pos), text.size());
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) {
      line = line.substr(0, hash);
    }
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ParseError("expected 'key = value'", line_no);
    }
    const std::string_view k = trim(line.substr(0, eq));
    const std::string_view v = trim(line.substr(eq + 1));
    if (!seen.emplace(k).second) {
      throw ParseError("key '" + std::string(k) + "' repeated", line_no);
    }
    try {
      set_config_value(base, k, v);
    } catch (const ConfigError& e) {
      throw ParseError(e.what(), line_no);
    }
  }
  return base;
}

ExperimentConfig load_config(const std::filesystem::path& path,
                             ExperimentConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  try {
    return parse_config(buffer.str(), std::move(base));
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what(), 0);
  }
}

std::map<std::string, std::string> resolved(const ExperimentConfig& cfg) {
  std::map<std::string, std::string> out;
  for (const auto& k : config_keys()) out[k.name] = k.get(cfg);
  return out;
}

std::string to_text(const ExperimentConfig& cfg) {
  std::string out;
  for (const auto& k : config_keys()) {
    out += k.name + " = " + k.get(cfg) + "\n";
  }
  return out;
}

}  // namespace ifdfm
