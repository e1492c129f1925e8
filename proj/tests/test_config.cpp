#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <string>

#include "raincycle/config.hpp"
#include "raincycle/error.hpp"

using namespace raincycle;

TEST_CASE("effective text round trips to the same hash") {
  TrainingConfig cfg;
  cfg.epochs = 11;
  cfg.lr = 3.25e-4;
  cfg.att_prior_mode = "constant";
  cfg.seed = 987654321;
  const std::string text = effective_config_text(cfg);
  const TrainingConfig back = parse_config_text(text);
  CHECK(config_hash(back) == config_hash(cfg));
  CHECK(effective_config_text(back) == text);
}

TEST_CASE("parser accepts comments and blank lines") {
  const TrainingConfig cfg = parse_config_text(
      "# a comment\n"
      "\n"
      "epochs = 5\n"
      "lr = 2e-3   # trailing comment\n"
      "data_root = some/dir\n");
  CHECK(cfg.epochs == 5);
  CHECK(cfg.lr == doctest::Approx(2e-3));
  CHECK(cfg.data_root == "some/dir");
}

TEST_CASE("unknown keys and malformed lines fail with the line number") {
  try {
    parse_config_text("epochs = 5\nnot_a_key = 1\n");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("not_a_key") != std::string::npos);
    CHECK(msg.find("2") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_config_text("epochs\n"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("epochs = abc\n"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("epochs = \n"), ConfigError);
}

TEST_CASE("overrides hit every declared type") {
  TrainingConfig cfg;
  apply_override_kv(cfg, "epochs=7");
  apply_override_kv(cfg, "lr=0.5");
  apply_override_kv(cfg, "seed=42");
  apply_override_kv(cfg, "enable_gmm=false");
  apply_override_kv(cfg, "data_root=elsewhere");
  CHECK(cfg.epochs == 7);
  CHECK(cfg.lr == 0.5);
  CHECK(cfg.seed == 42);
  CHECK(cfg.enable_gmm == false);
  CHECK(cfg.data_root == "elsewhere");
  CHECK_THROWS_AS(apply_override_kv(cfg, "bogus=1"), ConfigError);
  CHECK_THROWS_AS(apply_override_kv(cfg, "no_equals"), ConfigError);
  try {
    apply_override(cfg, "bogus_key", "1");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("bogus_key") != std::string::npos);
  }
}

TEST_CASE("validation catches structural mistakes") {
  TrainingConfig cfg;
  CHECK_NOTHROW(validate_config(cfg));

  TrainingConfig c1;
  c1.crop = 20;  // not a multiple of 8
  CHECK_THROWS_AS(validate_config(c1), ConfigError);

  TrainingConfig c2;
  c2.crop = 8;  // below the model minimum
  CHECK_THROWS_AS(validate_config(c2), ConfigError);

  TrainingConfig c3;
  c3.synth_size = c3.crop - 8;
  CHECK_THROWS_AS(validate_config(c3), ConfigError);

  TrainingConfig c4;
  c4.rain_len_min = 30.0;  // above rain_len_max
  CHECK_THROWS_AS(validate_config(c4), ConfigError);

  TrainingConfig c5;
  c5.att_prior_mode = "weird";
  CHECK_THROWS_AS(validate_config(c5), ConfigError);

  TrainingConfig c6;
  c6.lstm_candidate_activation = "softmax";
  CHECK_THROWS_AS(validate_config(c6), ConfigError);

  TrainingConfig c7;
  c7.epochs = 0;
  CHECK_THROWS_AS(validate_config(c7), ConfigError);

  TrainingConfig c8;
  c8.lambda_cc = -1.0;
  CHECK_THROWS_AS(validate_config(c8), ConfigError);

  TrainingConfig c9;
  c9.lr_decay_start = c9.epochs + 1;
  CHECK_THROWS_AS(validate_config(c9), ConfigError);
}

TEST_CASE("hash reacts to every field change") {
  const uint64_t base = config_hash(TrainingConfig{});
  TrainingConfig a;
  a.epochs = 401;
  CHECK(config_hash(a) != base);
  TrainingConfig b;
  b.flip_probability = 0.25;
  CHECK(config_hash(b) != base);
  TrainingConfig c;
  c.perceptual_mode = "archive";
  c.perceptual_archive = "x.rcta";
  CHECK(config_hash(c) != base);
  CHECK(config_hash(TrainingConfig{}) == base);
}

TEST_CASE("loss presets mirror the ablation grid") {
  auto flags = [](const TrainingConfig& c) {
    return std::vector<bool>{c.enable_adv, c.enable_cc, c.enable_p,
                             c.enable_att, c.enable_gmm, c.enable_r};
  };
  TrainingConfig base;
  apply_loss_preset(base, "base");
  CHECK(flags(base) == std::vector<bool>{true, true, false, false, false, false});

  TrainingConfig p;
  apply_loss_preset(p, "base+p");
  CHECK(flags(p) == std::vector<bool>{true, true, true, false, false, false});

  TrainingConfig att;
  apply_loss_preset(att, "base+p+att");
  CHECK(flags(att) == std::vector<bool>{true, true, true, true, false, false});

  TrainingConfig gmm;
  apply_loss_preset(gmm, "base+p+att+gmm");
  CHECK(flags(gmm) == std::vector<bool>{true, true, true, true, true, false});

  TrainingConfig total;
  apply_loss_preset(total, "total");
  CHECK(flags(total) == std::vector<bool>{true, true, true, true, true, true});

  TrainingConfig bad;
  CHECK_THROWS_AS(apply_loss_preset(bad, "everything"), ConfigError);
}

TEST_CASE("effective text lists keys deterministically") {
  const std::string t1 = effective_config_text(TrainingConfig{});
  const std::string t2 = effective_config_text(TrainingConfig{});
  CHECK(t1 == t2);
  CHECK(t1.find("epochs = ") != std::string::npos);
  CHECK(t1.find("lambda_gmm = ") != std::string::npos);
  CHECK(t1.find("rain_intensity_max = ") != std::string::npos);
}
