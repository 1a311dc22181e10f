#include <string>

#include "doctest.h"
#include "s2x/config.hpp"

using namespace s2x;

TEST_CASE("defaults mirror the training recipe") {
  ExperimentConfig cfg;
  CHECK(cfg.pretrain.batch == 512);
  CHECK(cfg.pretrain.lr == 1e-3);
  CHECK(cfg.pretrain.lr_decay == 0.99);
  CHECK(cfg.pretrain.alpha == 0.5);
  CHECK(cfg.pretrain.band_tau == 0.3);
  CHECK(cfg.pretrain.beta_min == 1e-4);
  CHECK(cfg.pretrain.beta_max == 2e-2);
  CHECK(cfg.encoder.masking_ratio == 0.75);
  CHECK(cfg.encoder.cross_layers == 2);
  CHECK(cfg.finetune.shots == 5);
  CHECK(cfg.finetune.lr == 1e-3);
  CHECK(cfg.finetune.lambda == 1.0);
  CHECK(cfg.seeds == std::vector<uint64_t>{1});
  CHECK(!cfg.no_s2former);
  CHECK(!cfg.no_fdc);
  CHECK(!cfg.no_daft);
}

TEST_CASE("parsing accepts comments, blanks and spacing variants") {
  const std::string text =
      "# an experiment\n"
      "\n"
      "data.source = scenes/a.hsic\n"
      "pretrain.epochs=3   # inline note\n"
      "  finetune.lambda =  0.25\n"
      "seeds = 4, 5,6\n"
      "ablate.no_fdc = true\n";
  ExperimentConfig cfg = ExperimentConfig::parse_text(text, "inline");
  CHECK(cfg.source == "scenes/a.hsic");
  CHECK(cfg.pretrain.epochs == 3);
  CHECK(cfg.finetune.lambda == 0.25);
  CHECK(cfg.seeds == std::vector<uint64_t>{4, 5, 6});
  CHECK(cfg.no_fdc);
  // untouched keys keep defaults
  CHECK(cfg.pretrain.batch == 512);
}

TEST_CASE("unknown keys and bad values are hard errors with locations") {
  CHECK_THROWS_WITH_AS(ExperimentConfig::parse_text("pretrain.epoch = 3\n", "f"),
                       doctest::Contains("f:1: unknown key 'pretrain.epoch'"), ConfigError);
  CHECK_THROWS_WITH_AS(ExperimentConfig::parse_text("\n\npretrain.lr = fast\n", "f"),
                       doctest::Contains("f:3"), ConfigError);
  CHECK_THROWS_WITH_AS(ExperimentConfig::parse_text("pretrain.epochs = 3.5\n", "f"),
                       doctest::Contains("not an integer"), ConfigError);
  CHECK_THROWS_WITH_AS(ExperimentConfig::parse_text("ablate.no_fdc = maybe\n", "f"),
                       doctest::Contains("boolean"), ConfigError);
  CHECK_THROWS_WITH_AS(ExperimentConfig::parse_text("pretrain.seed = -1\n", "f"),
                       doctest::Contains("non-negative"), ConfigError);
  CHECK_THROWS_WITH_AS(ExperimentConfig::parse_text("just words\n", "f"),
                       doctest::Contains("expected 'key = value'"), ConfigError);
  CHECK_THROWS_WITH_AS(ExperimentConfig::parse_text("seeds = \n", "f"),
                       doctest::Contains("empty"), ConfigError);
}

TEST_CASE("dump and parse round-trip exactly") {
  ExperimentConfig cfg;
  cfg.source = "scenes/src.hsic";
  cfg.target = "scenes/tgt.hsic";
  cfg.out = "runs/exp1";
  cfg.seeds = {7, 8, 9};
  cfg.no_daft = true;
  cfg.synth.shift = 0.35;
  cfg.encoder.width = 48;
  cfg.pretrain.lr = 0.0007;
  cfg.pretrain.beta_max = 0.019999999999;
  cfg.finetune.lambda = 0.123456789012345678;
  cfg.finetune.seed = 12345678901234567ull;

  std::string text = cfg.dump();
  ExperimentConfig back = ExperimentConfig::parse_text(text, "dump");
  CHECK(back.dump() == text);
  CHECK(back.source == cfg.source);
  CHECK(back.seeds == cfg.seeds);
  CHECK(back.no_daft == cfg.no_daft);
  CHECK(back.pretrain.lr == cfg.pretrain.lr);
  CHECK(back.pretrain.beta_max == cfg.pretrain.beta_max);
  CHECK(back.finetune.lambda == cfg.finetune.lambda);
  CHECK(back.finetune.seed == cfg.finetune.seed);
}

TEST_CASE("dump marks values the literature leaves open") {
  std::string text = ExperimentConfig().dump();
  auto line_of = [&](const std::string& key) {
    size_t at = text.find(key + " = ");
    REQUIRE(at != std::string::npos);
    size_t end = text.find('\n', at);
    return text.substr(at, end - at);
  };
  CHECK(line_of("encoder.width").find("# chosen") != std::string::npos);
  CHECK(line_of("pretrain.timesteps").find("# chosen") != std::string::npos);
  CHECK(line_of("pretrain.window").find("# chosen") != std::string::npos);
  CHECK(line_of("finetune.lambda").find("# chosen") != std::string::npos);
  CHECK(line_of("finetune.traj_draws").find("# chosen") != std::string::npos);

  CHECK(line_of("pretrain.batch").find("# chosen") == std::string::npos);
  CHECK(line_of("pretrain.lr").find("# chosen") == std::string::npos);
  CHECK(line_of("encoder.masking_ratio").find("# chosen") == std::string::npos);
  CHECK(line_of("finetune.shots").find("# chosen") == std::string::npos);
  CHECK(line_of("pretrain.band_tau").find("# chosen") == std::string::npos);
}

TEST_CASE("later assignments win") {
  ExperimentConfig cfg =
      ExperimentConfig::parse_text("pretrain.epochs = 3\npretrain.epochs = 9\n", "f");
  CHECK(cfg.pretrain.epochs == 9);
}

TEST_CASE("dataset names pick the fine-tuning batch") {
  CHECK(dataset_default_batch("PU") == 45);
  CHECK(dataset_default_batch("pc") == 45);
  CHECK(dataset_default_batch("SA") == 80);
  CHECK(dataset_default_batch("hu") == 75);
  CHECK(dataset_default_batch("synthetic-source") == 0);

  ExperimentConfig cfg;
  CHECK(resolved_finetune(cfg, "PU").batch == 45);
  CHECK(resolved_finetune(cfg, "whatever").batch == 0);
  cfg.finetune.batch = 16;  // explicit settings beat the table
  CHECK(resolved_finetune(cfg, "PU").batch == 16);
}

TEST_CASE("ablation switches fold into the resolved configs") {
  ExperimentConfig cfg;
  cfg.encoder.width = 24;

  PretrainConfig pc = resolved_pretrain(cfg);
  CHECK(pc.encoder.width == 24);
  CHECK(pc.encoder.use_cross_attention);
  CHECK(!pc.encoder.with_class_token);
  CHECK(pc.alpha == 0.5);

  cfg.no_s2former = true;
  cfg.no_fdc = true;
  pc = resolved_pretrain(cfg);
  CHECK(!pc.encoder.use_cross_attention);
  CHECK(pc.alpha == 0.0);

  FinetuneConfig fc = resolved_finetune(cfg, "x");
  CHECK(fc.lambda == 1.0);
  cfg.no_daft = true;
  fc = resolved_finetune(cfg, "x");
  CHECK(fc.lambda == 0.0);
}

TEST_CASE("missing config files are config errors") {
  CHECK_THROWS_AS(ExperimentConfig::parse_file("/nonexistent/config.txt"), ConfigError);
}
