#include <gtest/gtest.h>

#include "helpers.hpp"

using namespace trajclust;

TEST(Config, PrintParseRoundTrip) {
  RunConfig cfg;
  cfg.t_kl = 2.5;
  cfg.init = InitMethod::kSpectral;
  cfg.n_k_max = 6;
  cfg.seed = 123;
  cfg.ekf.r_diag = {0.1, 0.2, 0.3, 0.4};
  cfg.ekf.process_noise = ProcessNoise::kPerStep;
  cfg.cluster.kl_weighting = KlWeighting::kOld;
  cfg.export_traces = true;
  cfg.data = "some dir/with # hash.json";
  cfg.out = "";
  const auto back = parse_config(print_config(cfg));
  EXPECT_TRUE(back == cfg);
  EXPECT_EQ(print_config(back), print_config(cfg));
}

TEST(Config, DefaultsRoundTripWithoutTkl) {
  const RunConfig cfg;
  const auto back = parse_config(print_config(cfg));
  EXPECT_TRUE(back == cfg);
  EXPECT_FALSE(back.t_kl.has_value());
}

TEST(Config, TklRequiredForClustering) {
  RunConfig cfg;
  EXPECT_THROW(cfg.cluster_config(), ConfigError);
  cfg.t_kl = 4.0;
  EXPECT_DOUBLE_EQ(cfg.cluster_config().t_kl, 4.0);
}

TEST(Config, CommentsQuotesAndErrors) {
  const auto cfg = parse_config("# header\n\nt_kl = 3   # threshold\ninit = \"pam\"\nseed=9\n");
  EXPECT_EQ(cfg.t_kl, 3.0);
  EXPECT_EQ(cfg.init, InitMethod::kPam);
  EXPECT_EQ(cfg.seed, 9u);
  EXPECT_THROW(parse_config("bogus = 1\n"), ConfigError);
  EXPECT_THROW(parse_config("t_kl 3\n"), ConfigError);
  EXPECT_THROW(parse_config("seed = -1\n"), ConfigError);
  EXPECT_THROW(parse_config("r_diag = 1,2,3\n"), ConfigError);
  EXPECT_THROW(parse_config("kl_weighting = sometimes\n"), ConfigError);
  try {
    parse_config("seed = 1\nfoo = 2\n");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
}

TEST(Config, Overrides) {
  RunConfig cfg;
  apply_override(cfg, "t_kl=1.5");
  apply_override(cfg, " threads = 4 ");
  EXPECT_EQ(cfg.t_kl, 1.5);
  EXPECT_EQ(cfg.threads, 4u);
  EXPECT_THROW(apply_override(cfg, "threads"), ConfigError);
  EXPECT_THROW(apply_override(cfg, "nope=1"), ConfigError);
}

TEST(Config, Validation) {
  RunConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.n_k_min = 5;
  cfg.n_k_max = 3;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = RunConfig{};
  cfg.t_kl = -1.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = RunConfig{};
  cfg.heatmap_bin = 0.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Config, LoadFromFile) {
  const auto dir = testutil::scratch_dir("config");
  write_text_file((dir / "c.txt").string(), "t_kl = 3\nn_k_max = 4\n");
  const auto cfg = load_config((dir / "c.txt").string());
  EXPECT_EQ(cfg.n_k_max, 4u);
  EXPECT_THROW(load_config((dir / "missing.txt").string()), ConfigError);
}
