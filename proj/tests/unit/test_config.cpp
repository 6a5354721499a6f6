#include <gtest/gtest.h>

#include "ifdfm/config.hpp"
#include "ifdfm/error.hpp"

using namespace ifdfm;

TEST(Duration, ParsesUnits) {
  EXPECT_EQ(parse_duration("90"), 90);
  EXPECT_EQ(parse_duration("2m"), 120);
  EXPECT_EQ(parse_duration("36h"), 36 * 3600);
  EXPECT_EQ(parse_duration("1.5d"), 129600);
  EXPECT_THROW(parse_duration("three days"), ConfigError);
  EXPECT_THROW(parse_duration(""), ConfigError);
  EXPECT_EQ(format_duration(3 * kSecondsPerDay), "3d");
  EXPECT_EQ(format_duration(7200), "2h");
  EXPECT_EQ(format_duration(61), "61");
}

TEST(ConfigText, ParsesKeysAndComments) {
  const ExperimentConfig cfg = parse_config(
      "# desk setup\n"
      "synth.n = 1234\n"
      "split.T = 5d   # cutoff\n"
      "\n"
      "model.type = logreg\n"
      "solver.kind = cg\n"
      "methods = vanilla, ifdfm\n"
      "seeds = 4,5\n"
      "influence.add = true\n"
      "influence.hessian_rows = 5000\n");
  EXPECT_EQ(cfg.synth.n, 1234);
  EXPECT_EQ(cfg.t, Timestamp{5 * kSecondsPerDay});
  EXPECT_EQ(cfg.model_kind, ModelSpec::Kind::kLogistic);
  EXPECT_EQ(cfg.solver.kind, SolverKind::kConjugateGradient);
  EXPECT_EQ(cfg.methods, (std::vector<std::string>{"vanilla", "ifdfm"}));
  EXPECT_EQ(cfg.seeds, (std::vector<std::uint64_t>{4, 5}));
  EXPECT_TRUE(cfg.include_add);
  EXPECT_EQ(cfg.hessian_rows, 5000);
}

TEST(ConfigText, ErrorsNameTheLine) {
  auto line_of = [](const std::string& text) -> std::size_t {
    try {
      parse_config(text);
    } catch (const ParseError& e) {
      return e.line();
    }
    return 0;
  };
  EXPECT_EQ(line_of("synth.n = 5\nbogus.key = 1\n"), 2u);
  EXPECT_EQ(line_of("synth.n = 5\n\nsynth.n = 6\n"), 3u);
  EXPECT_EQ(line_of("no equals sign here\n"), 1u);
  EXPECT_EQ(line_of("# c\ntrain.learning_rate = fast\n"), 2u);
}

TEST(ConfigText, ResolvedRoundTrip) {
  ExperimentConfig cfg;
  cfg.synth.drift_angle_per_day = 0.08;
  cfg.lambda = 0.03;
  cfg.hidden = {32, 16};
  cfg.t_prime = Timestamp{12 * kSecondsPerDay + 3600};
  const ExperimentConfig back = parse_config(to_text(cfg));
  EXPECT_EQ(resolved(back), resolved(cfg));
  EXPECT_EQ(resolved(cfg).at("influence.lambda"), "0.03");
  EXPECT_EQ(resolved(cfg).size(), config_keys().size());
}

TEST(ConfigValidate, RejectsBadExperiments) {
  ExperimentConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.t = Timestamp{12 * kSecondsPerDay};
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.methods = {};
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.methods = {"vanilla", "dfm"};
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.data_source = "csv";
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.hessian_rows = -1;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.include_delay = false;
  EXPECT_THROW(cfg.validate(), ConfigError);
  EXPECT_THROW(set_config_value(cfg, "model.type", "tree"), ConfigError);
  EXPECT_THROW(set_config_value(cfg, "nope", "1"), ConfigError);
}

TEST(ConfigModel, SpecFollowsType) {
  ExperimentConfig cfg;
  EXPECT_EQ(cfg.model_spec(16), ModelSpec::mlp(16, {64, 64}, 1e-4));
  set_config_value(cfg, "model.type", "logreg");
  set_config_value(cfg, "model.l2", "0.01");
  EXPECT_EQ(cfg.model_spec(5), ModelSpec::logistic(5, 0.01));
}

TEST(ConfigFile, DeskConfigLoads) {
  const ExperimentConfig cfg = load_config(IFDFM_DESK_CONFIG);
  EXPECT_NO_THROW(cfg.validate());
  EXPECT_EQ(cfg.hessian_rows, 10000);
  EXPECT_EQ(cfg.seeds.size(), 3u);
}
