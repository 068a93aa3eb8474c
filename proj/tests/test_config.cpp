// Copyright 2026 The mgvmc Authors
// SPDX-License-Identifier: Apache-2.0

#include <catch_amalgamated.hpp>

#include <cstdlib>

#include "mgvmc/config.hpp"
#include "mgvmc/errors.hpp"

using namespace mgvmc;
using nlohmann::json;

namespace {

json h2_doc() {
  return json::parse(R"({
    "preset": "desk",
    "seed": 5,
    "system": {"template": "diatomic", "charges": [1, 1], "n_up": 1, "n_dn": 1,
               "bins": {"lower": 1.0, "upper": 2.0, "count": 5}}
  })");
}

std::string error_of(const json& doc) {
  try {
    config_from_json(doc);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_CASE("paper preset carries the published hyperparameters", "[config]") {
  const RunConfig c = preset("paper");
  CHECK(c.model.n_layers == 4);
  CHECK(c.model.single_width == 256);
  CHECK(c.model.double_width == 32);
  CHECK(c.model.n_determinants == 16);
  CHECK(c.model.embedding_dim == 64);
  CHECK(c.gnn.n_steps == 2);
  CHECK(c.gnn.message_dim == 32);
  CHECK(c.gnn.n_sbf == 7);
  CHECK(c.gnn.n_rbf == 6);
  CHECK(c.gnn.mlp_depth == 2);
  CHECK(c.sampler.step_size == 0.02);
  CHECK(c.sampler.steps_per_update == 40);
  CHECK(c.sampler.n_geometry_walkers == 16);
  CHECK(c.train.batch_size == 4096);
  CHECK(c.train.iterations == 60000);
  CHECK(c.train.clip_window == 5.0);
  CHECK(c.train.optimizer.cg.max_steps == 100);
  CHECK(c.pretrain.iterations == 2000);
  CHECK(c.pretrain.lamb.learning_rate == 0.003);
  CHECK(c.eval.samples == 1000000);
  CHECK(c.eval.burn_in == 200);

  CHECK(preset("desk").train.batch_size == 512);
  CHECK_THROWS_AS(preset("huge"), ConfigError);
}

TEST_CASE("template systems split the batch over bins", "[config]") {
  const RunConfig c = config_from_json(h2_doc());
  CHECK(c.seed == 5);
  CHECK(c.n_geometries() == 5);
  CHECK(c.walkers_per_geometry() == 102);
  CHECK(c.n_up() == 1);
  CHECK(c.n_dn() == 1);
  CHECK(c.n_nuclei() == 2);
  CHECK(c.gnn.charges == std::vector<int>{1});

  json doc = h2_doc();
  doc["preset"] = "paper";
  doc["system"]["bins"].erase("count");
  CHECK(config_from_json(doc).walkers_per_geometry() == 256);
}

TEST_CASE("unknown keys and bad types are rejected by name", "[config]") {
  json doc = h2_doc();
  doc["sampler"] = {{"stepsize", 0.1}};
  CHECK(error_of(doc).find("sampler.stepsize") != std::string::npos);

  doc = h2_doc();
  doc["optimizer"] = {{"batch_size", "big"}};
  CHECK(error_of(doc).find("optimizer.batch_size") != std::string::npos);

  doc = h2_doc();
  doc["colour"] = "blue";
  CHECK(error_of(doc).find("colour") != std::string::npos);
}

TEST_CASE("invalid values fail validation", "[config]") {
  json doc = h2_doc();
  doc["model"] = {{"single_width", 0}};
  CHECK_FALSE(error_of(doc).empty());

  doc = h2_doc();
  doc["system"]["bins"]["lower"] = 3.0;
  CHECK_FALSE(error_of(doc).empty());

  doc = h2_doc();
  doc["system"]["template"] = "triangle";
  CHECK(error_of(doc).find("triangle") != std::string::npos);

  doc = h2_doc();
  doc["pretraining"] = {{"provider", "file"}};
  CHECK(error_of(doc).find("pretraining.file") != std::string::npos);

  doc = json::parse(R"({"system": {"geometries": [
      {"charges": [1], "positions": [[0, 0, 0]], "n_up": 1, "n_dn": 0},
      {"charges": [1], "positions": [[0, 0, 0]], "n_up": 0, "n_dn": 1}]}})");
  CHECK(error_of(doc).find("spin") != std::string::npos);

  CHECK(error_of(json::parse(R"({"system": {}})")).find("template or at least one geometry") != std::string::npos);
}

TEST_CASE("angstrom input is stored in bohr", "[config]") {
  json doc = json::parse(R"({"system": {"units": "angstrom", "geometries": [
      {"charges": [1, 1], "positions": [[0, 0, 0], [0, 0, 0.74]], "n_up": 1, "n_dn": 1}]}})");
  const RunConfig c = config_from_json(doc);
  CHECK(c.system.geometries[0].positions(1, 2) == Catch::Approx(0.74 * 1.8897261254578281).epsilon(1e-15));

  json bins = h2_doc();
  bins["system"]["units"] = "angstrom";
  CHECK(config_from_json(bins).system.upper == Catch::Approx(2.0 * kBohrPerAngstrom));

  json g = json::parse(R"({"charges": [2], "positions": [[1, 0, 0]], "n_up": 1, "n_dn": 1, "units": "angstrom"})");
  CHECK(geometry_from_json(g).positions(0, 0) == Catch::Approx(kBohrPerAngstrom));
  g["units"] = "furlong";
  CHECK_THROWS_AS(geometry_from_json(g), ConfigError);
}

TEST_CASE("serialized configs read back identically", "[config]") {
  json doc = h2_doc();
  doc["optimizer"] = {{"learning_rate", 0.05}, {"centered_fisher", true}};
  doc["gnn"] = {{"charges", {1, 3}}};
  const RunConfig c = config_from_json(doc);
  CHECK(c.gnn.charges == std::vector<int>{1, 3});
  const RunConfig back = config_from_json(to_json(c));
  CHECK(to_json(back) == to_json(c));

  const RunConfig list = config_from_json(json::parse(R"({"system": {"geometries": [
      {"charges": [3, 1], "positions": [[0, 0, 0], [0, 0, 3.0]], "n_up": 2, "n_dn": 2}]}})"));
  CHECK(list.gnn.charges == std::vector<int>{1, 3});
  CHECK(to_json(config_from_json(to_json(list))) == to_json(list));
}

TEST_CASE("seed override from the environment", "[config]") {
  RunConfig c = config_from_json(h2_doc());
  ::setenv("MGVMC_SEED", "12345", 1);
  apply_environment(c);
  CHECK(c.seed == 12345);
  ::setenv("MGVMC_SEED", "twelve", 1);
  CHECK_THROWS_AS(apply_environment(c), ConfigError);
  ::unsetenv("MGVMC_SEED");
  apply_environment(c);
  CHECK(c.seed == 12345);
}
