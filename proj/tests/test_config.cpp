// Copyright Contributors to the splatseg project
// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <set>

#include "json.hpp"
#include "splatseg/config.hpp"
#include "splatseg/error.hpp"

using namespace splatseg;
using nlohmann::json;

namespace {

ErrorKind kind_of(const std::function<void()> &f) {
  try {
    f();
  } catch (const Error &e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorKind::Contract;
}

void leaves(const json &j, const std::string &prefix, std::set<std::string> &out) {
  if (j.is_object()) {
    for (auto it = j.begin(); it != j.end(); ++it) leaves(it.value(), prefix.empty() ? it.key() : prefix + "." + it.key(), out);
  } else {
    out.insert(prefix);
  }
}

} // namespace

TEST(Config, DefaultsMatchPublishedConstants) {
  const TrainConfig c;
  EXPECT_EQ(c.feature_dim, 16);
  EXPECT_EQ(c.gamma, 0.01);
  EXPECT_EQ(c.delta, 0.5);
  EXPECT_EQ(c.sample_budget, 4096);
  EXPECT_EQ(c.weights.rgb, 1.0);
  EXPECT_EQ(c.weights.contrastive, 0.1);
  EXPECT_EQ(c.weights.transient_reg, 0.01);
  EXPECT_EQ(c.lr.transient, 1e-5);
  c.validate();
}

TEST(Config, JsonRoundTripOfNonDefaults) {
  TrainConfig c;
  c.feature_dim = 5;
  c.gamma = 0.3;
  c.iterations = 17;
  c.transient_net.channels = {3, 5};
  c.densify.thresholds.grad_threshold = 1.0 / 3.0;
  c.lr.position_scaled_by_extent = false;
  c.seed = 0xFFFFFFFFFFFFull;
  const TrainConfig back = config_from_json(config_to_json(c));
  EXPECT_EQ(back, c);
  EXPECT_EQ(back.densify.thresholds.grad_threshold, 1.0 / 3.0);
  EXPECT_EQ(back.seed, c.seed);
  EXPECT_EQ(config_to_json(back), config_to_json(c));
}

TEST(Config, PartialDocumentOverlaysBase) {
  TrainConfig base;
  base.iterations = 9;
  const TrainConfig c = config_from_json(R"({"gamma": 0.5, "densify": {"start": 3}})", base);
  EXPECT_EQ(c.gamma, 0.5);
  EXPECT_EQ(c.densify.start, 3);
  EXPECT_EQ(c.iterations, 9);
}

TEST(Config, RejectsUnknownKeysTypesAndVersions) {
  EXPECT_EQ(kind_of([] { config_from_json(R"({"gama": 0.5})"); }), ErrorKind::Config);
  EXPECT_EQ(kind_of([] { config_from_json(R"({"densify": {"strat": 1}})"); }), ErrorKind::Config);
  EXPECT_EQ(kind_of([] { config_from_json(R"({"iterations": "many"})"); }), ErrorKind::Config);
  EXPECT_EQ(kind_of([] { config_from_json(R"({"config_version": 2})"); }), ErrorKind::Config);
  EXPECT_EQ(kind_of([] { config_from_json("{not json"); }), ErrorKind::Config);
  EXPECT_NO_THROW(config_from_json(R"({"config_version": 1})"));
}

TEST(Config, ValidateRejectsEachBrokenInvariant) {
  const std::vector<std::function<void(TrainConfig &)>> breakers{
      [](TrainConfig &c) { c.feature_dim = 0; },
      [](TrainConfig &c) { c.gamma = 0.0; },
      [](TrainConfig &c) { c.delta = 1.0; },
      [](TrainConfig &c) { c.weights.contrastive = -1.0; },
      [](TrainConfig &c) { c.sample_budget = 1; },
      [](TrainConfig &c) { c.iterations = -1; },
      [](TrainConfig &c) { c.lr.position_final = 1.0; },
      [](TrainConfig &c) { c.densify.interval = 0; },
      [](TrainConfig &c) { c.densify.thresholds.prune_opacity = 1.0; },
      [](TrainConfig &c) { c.sh_degree = 4; },
      [](TrainConfig &c) { c.init_opacity = 1.0; },
      [](TrainConfig &c) { c.transient_net.channels.clear(); },
  };
  for (std::size_t k = 0; k < breakers.size(); ++k) {
    TrainConfig c;
    breakers[k](c);
    EXPECT_EQ(kind_of([&] { c.validate(); }), ErrorKind::Config) << "breaker " << k;
  }
}

TEST(Config, OverridesParseValuesAndKeepStateOnFailure) {
  TrainConfig c;
  apply_override(c, "densify.start=7");
  apply_override(c, "transient.channels=[4,8]");
  apply_override(c, "transient.enabled=false");
  apply_override(c, "gamma=0.25");
  EXPECT_EQ(c.densify.start, 7);
  EXPECT_EQ(c.transient_net.channels, (std::vector<int>{4, 8}));
  EXPECT_FALSE(c.transient_enabled);
  EXPECT_EQ(c.gamma, 0.25);
  const TrainConfig before = c;
  EXPECT_EQ(kind_of([&] { apply_override(c, "gamma=abc"); }), ErrorKind::Config);
  EXPECT_EQ(kind_of([&] { apply_override(c, "gamma=-1"); }), ErrorKind::Config);
  EXPECT_EQ(kind_of([&] { apply_override(c, "nope=1"); }), ErrorKind::Config);
  EXPECT_EQ(kind_of([&] { apply_override(c, "gamma"); }), ErrorKind::Config);
  EXPECT_EQ(c, before);
}

TEST(Config, KeyDocsCoverEverySerializedKey) {
  std::set<std::string> serialized;
  leaves(json::parse(config_to_json(TrainConfig{})), "", serialized);
  serialized.erase("config_version");
  std::set<std::string> documented;
  for (const auto &d : config_key_docs()) {
    EXPECT_TRUE(documented.insert(d.key).second) << "duplicate doc " << d.key;
    EXPECT_FALSE(d.type.empty()) << d.key;
  }
  EXPECT_EQ(documented, serialized);
}
