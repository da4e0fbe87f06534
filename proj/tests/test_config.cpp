#include <gtest/gtest.h>

#include "wsol/config.hpp"

using namespace wsol;

TEST(RunConfig, DefaultsCarryReferenceHyperparameters) {
  const RunConfig c;
  EXPECT_EQ(c.train.momentum, 0.9);
  EXPECT_EQ(c.train.base_lr, 0.1);
  EXPECT_EQ(c.train.lr_drop_every, 250);
  EXPECT_EQ(c.train.lr_drop_factor, 10.0);
  EXPECT_EQ(c.train.weight_decay, 1e-4);
  EXPECT_EQ(c.train.epochs, 1500);
  EXPECT_EQ(c.train.augment.hns_grid_sizes, (std::vector<int>{0, 4, 8, 16}));
  EXPECT_EQ(c.train.augment.area_range.lo, 0.08);
  EXPECT_EQ(c.train.augment.area_range.hi, 1.0);
  EXPECT_EQ(c.train.augment.aspect_range.lo, 0.75);
  EXPECT_NEAR(c.train.augment.aspect_range.hi, 1.3333, 1e-4);
  EXPECT_EQ(c.eval.threshold_frac, 0.2);
  EXPECT_EQ(c.eval.connectivity, 8);
  EXPECT_EQ(c.model.input_side, 64);
}

TEST(RunConfig, JsonRoundTrip) {
  RunConfig c;
  c.train.epochs = 7;
  c.train.augment.policy = Policy::hns_then_gr;
  c.train.augment.fill_value = Rgb{0.25, 0.5, 0.75};
  c.eval.connectivity = 4;
  c.matrix.seeds = {3, 4};
  c.init_seed = 11;
  const Json j = to_json(c);
  EXPECT_EQ(to_json(run_config_from_json(j)), j);
}

TEST(RunConfig, UnknownKeysRejectedWithPath) {
  try {
    run_config_from_json(Json::parse(R"({"train": {"epochs": 3, "epoch": 4}})"));
    FAIL();
  } catch (const InvalidArgument& e) {
    EXPECT_NE(std::string(e.what()).find("train.epoch"), std::string::npos) << e.what();
  }
  EXPECT_THROW(run_config_from_json(Json::parse(R"({"optimizer": {}})")), InvalidArgument);
  EXPECT_THROW(run_config_from_json(Json::parse(R"({"augment": {"grid": [4]}})")), InvalidArgument);
}

TEST(RunConfig, WrongTypesAndValuesRejected) {
  EXPECT_THROW(run_config_from_json(Json::parse(R"({"train": {"epochs": "ten"}})")), InvalidArgument);
  EXPECT_THROW(run_config_from_json(Json::parse(R"({"augment": {"policy": "cutout"}})")), InvalidArgument);
  EXPECT_THROW(run_config_from_json(Json::parse(R"({"augment": {"area_range": [0.5]}})")), InvalidArgument);
  EXPECT_THROW(run_config_from_json(Json::parse(R"({"eval": {"threshold_frac": 0}})")), InvalidArgument);
  EXPECT_THROW(run_config_from_json(Json::parse(R"({"matrix": {"variants": ["vgg"]}})")), InvalidArgument);
}

TEST(RunConfig, DataSideFollowsModelInputUnlessSet) {
  EXPECT_EQ(run_config_from_json(Json::parse(R"({"model": {"input_side": 32}})")).data.synthetic.side, 32);
  EXPECT_EQ(run_config_from_json(Json::parse(R"({"model": {"input_side": 32}, "data": {"side": 48}})"))
                .data.synthetic.side,
            48);
}

TEST(Override, DottedPathsAndValueParsing) {
  Json doc = Json::object();
  apply_override(doc, "train.epochs=0");
  apply_override(doc, "augment.policy=hns");
  apply_override(doc, "augment.hns_grid_sizes=[0,8]");
  apply_override(doc, "augment.fill_value=null");
  const RunConfig c = run_config_from_json(doc);
  EXPECT_EQ(c.train.epochs, 0);
  EXPECT_EQ(c.train.augment.policy, Policy::hns);
  EXPECT_EQ(c.train.augment.hns_grid_sizes, (std::vector<int>{0, 8}));
  EXPECT_FALSE(c.train.augment.fill_value);
}

TEST(Override, MalformedAssignments) {
  Json doc = Json::object();
  EXPECT_THROW(apply_override(doc, "train.epochs"), InvalidArgument);
  EXPECT_THROW(apply_override(doc, "=3"), InvalidArgument);
  EXPECT_THROW(apply_override(doc, "train..epochs=3"), InvalidArgument);
  apply_override(doc, "train.epochs=3");
  EXPECT_THROW(apply_override(doc, "train.epochs.x=1"), InvalidArgument);
}
