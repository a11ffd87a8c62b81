#include <gtest/gtest.h>

#include "stgcrl/config.hpp"

using namespace stgcrl;

TEST(Config, PretrainRoundTrip) {
  PretrainConfig c;
  c.epochs = 7;
  c.tau = 0.2;
  c.mode = PretrainMode::single_view;
  c.local = LocalBranch::both;
  c.local_mode = LocalMode::stated_count;
  c.combine = CombineMode::linear;
  c.aug.kind = AugKind::shear;
  c.encoder.blocks = {{3, 5, 2}};
  c.encoder.output_dim = 5;
  c.lr_schedule = {0.3, {2, 4}, 10.0};
  c.normalize_input = false;
  c.seed = 99;
  PretrainConfig back;
  from_json(to_json(c), back);
  EXPECT_EQ(to_json(back), to_json(c));
  EXPECT_EQ(back.mode, PretrainMode::single_view);
  EXPECT_EQ(back.encoder.blocks.size(), 1u);
  EXPECT_FALSE(back.normalize_input);
}

TEST(Config, DefaultsMatchTheTrainingRecipe) {
  const PretrainConfig p;
  EXPECT_EQ(p.epochs, 40);
  EXPECT_EQ(p.batch_size, 16u);
  EXPECT_EQ(p.tau, 0.07);
  EXPECT_EQ(p.S, 5u);
  EXPECT_EQ(p.lr_schedule.base_lr, 0.1);
  EXPECT_EQ(p.lr_schedule.drop_epochs, (std::vector<int>{20, 30, 35}));
  EXPECT_EQ(p.momentum, 0.9);
  EXPECT_EQ(p.local, LocalBranch::temporal);
  EXPECT_TRUE(p.use_global);
  EXPECT_EQ(p.combine, CombineMode::uncertainty);
  const LinearEvalConfig l;
  EXPECT_EQ(l.epochs, 45);
  EXPECT_EQ(l.lr_schedule.drop_epochs, (std::vector<int>{25, 35, 40}));
}

TEST(Config, PartialObjectKeepsDefaults) {
  PretrainConfig c;
  from_json(json{{"epochs", 3}}, c);
  EXPECT_EQ(c.epochs, 3);
  EXPECT_EQ(c.batch_size, 16u);
  SynthConfig s;
  from_json(json{{"num_classes", 5}, {"occlusion_prob", {0.1, 0.2}}}, s);
  EXPECT_EQ(s.num_classes, 5u);
  EXPECT_EQ(s.occlusion_prob, (std::vector<double>{0.1, 0.2}));
  EXPECT_EQ(s.T, 100u);
}

TEST(Config, UnknownKeysAndBadEnumsRejected) {
  PretrainConfig c;
  EXPECT_THROW(from_json(json{{"epoch", 3}}, c), ContractViolation);
  EXPECT_THROW(from_json(json{{"mode", "xv"}}, c), ContractViolation);
  LinearEvalConfig l;
  EXPECT_THROW(from_json(json{{"momentun", 0.5}}, l), ContractViolation);
  SynthConfig s;
  EXPECT_THROW(from_json(json{{"classes", 5}}, s), ContractViolation);
}

TEST(Config, LossSetParsing) {
  bool g = false;
  LocalBranch l = LocalBranch::none;
  parse_loss_set("global+temlocal", g, l);
  EXPECT_TRUE(g);
  EXPECT_EQ(l, LocalBranch::temporal);
  parse_loss_set("spalocal", g, l);
  EXPECT_FALSE(g);
  EXPECT_EQ(l, LocalBranch::spatial);
  parse_loss_set("global+temlocal+spalocal", g, l);
  EXPECT_EQ(l, LocalBranch::both);
  EXPECT_EQ(loss_set_string(true, LocalBranch::both), "global+temlocal+spalocal");
  EXPECT_THROW(parse_loss_set("global+bogus", g, l), ContractViolation);
  EXPECT_THROW(parse_loss_set("", g, l), ContractViolation);
}

TEST(Config, HashIsCanonical) {
  const json a = json::parse(R"({"b": 1, "a": [1, 2]})");
  const json b = json::parse(R"({"a": [1, 2], "b": 1})");
  EXPECT_EQ(config_hash(a), config_hash(b));
  EXPECT_EQ(config_hash(a).size(), 16u);
  EXPECT_NE(config_hash(a), config_hash(json::parse(R"({"a": [2, 1], "b": 1})")));
  PretrainConfig p;
  const std::string h = config_hash(to_json(p));
  p.seed = 1;
  EXPECT_NE(config_hash(to_json(p)), h);
}

TEST(Config, EvalReportCarriesHashAndSeed) {
  EvalResult r;
  r.top1 = 0.5;
  r.per_class = {1.0, std::numeric_limits<double>::quiet_NaN()};
  r.per_class_count = {2, 0};
  r.count = 2;
  const json j = eval_report(r, "abc", 7);
  EXPECT_EQ(j.at("top1").get<double>(), 0.5);
  EXPECT_EQ(j.at("config_hash").get<std::string>(), "abc");
  EXPECT_EQ(j.at("seed").get<std::uint64_t>(), 7u);
  EXPECT_TRUE(j.at("per_class").at(1).is_null());
}
