// Copyright 2026 The mgvmc Authors
// SPDX-License-Identifier: Apache-2.0

#include "mgvmc/config.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <set>

#include "mgvmc/errors.hpp"

namespace mgvmc {

using json = nlohmann::json;

namespace {

/// Reads fields of one JSON object and rejects keys nobody asked for.
class Fields {
 public:
  Fields(const json& doc, std::string where) : doc_(doc), where_(std::move(where)) {
    if (!doc_.is_object()) throw ConfigError(where_ + " must be an object");
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!doc_.contains(key)) return;
    try {
      out = doc_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError(where_ + "." + key + " has the wrong type");
    }
  }

  const json* object(const char* key) {
    seen_.insert(key);
    return doc_.contains(key) ? &doc_.at(key) : nullptr;
  }

  void finish() const {
    for (const auto& item : doc_.items()) {
      if (!seen_.count(item.key())) throw ConfigError("unknown key " + where_ + "." + item.key());
    }
  }

 private:
  const json& doc_;
  std::string where_;
  std::set<std::string> seen_;
};

double length_factor(const std::string& units) {
  if (units == "bohr") return 1.0;
  if (units == "angstrom") return kBohrPerAngstrom;
  throw ConfigError("units must be 'bohr' or 'angstrom', got '" + units + "'");
}

void positive(bool ok, const std::string& what) {
  if (!ok) throw ConfigError(what + " must be positive");
}

}  // namespace

int RunConfig::n_up() const {
  return system.uses_template() ? system.n_up : system.geometries.at(0).n_up;
}

int RunConfig::n_dn() const {
  return system.uses_template() ? system.n_dn : system.geometries.at(0).n_dn;
}

int RunConfig::n_nuclei() const {
  return system.uses_template() ? static_cast<int>(system.charges.size())
                                : static_cast<int>(system.geometries.at(0).n_nuclei());
}

int RunConfig::n_geometries() const {
  if (!system.uses_template()) return static_cast<int>(system.geometries.size());
  return system.bins > 0 ? system.bins : sampler.n_geometry_walkers;
}

int RunConfig::walkers_per_geometry() const { return std::max(1, train.batch_size / n_geometries()); }

RunConfig preset(const std::string& name) {
  RunConfig c;
  c.preset = name;
  if (name == "paper") return c;
  if (name != "desk") throw ConfigError("unknown preset '" + name + "' (expected 'paper' or 'desk')");
  c.model.n_layers = 2;
  c.model.single_width = 32;
  c.model.double_width = 8;
  c.model.n_determinants = 4;
  c.model.embedding_dim = 16;
  c.gnn.embedding_dim = 16;
  c.gnn.message_dim = 8;
  c.gnn.n_sbf = 4;
  c.gnn.n_rbf = 4;
  c.sampler.adapt_step_size = true;
  c.sampler.steps_per_update = 10;
  c.sampler.burn_in = 200;
  c.train.batch_size = 512;
  c.train.iterations = 2000;
  c.train.checkpoint_every = 500;
  c.pretrain.iterations = 500;
  c.eval.samples = 100000;
  c.eval.walkers = 1000;
  c.eval.thinning = 2;
  return c;
}

MolecularConfiguration geometry_from_json(const json& doc) {
  Fields f(doc, "geometry");
  std::vector<int> charges;
  std::vector<std::vector<double>> positions;
  int n_up = 0, n_dn = 0;
  std::string units = "bohr";
  f.get("charges", charges);
  f.get("positions", positions);
  f.get("n_up", n_up);
  f.get("n_dn", n_dn);
  f.get("units", units);
  f.finish();
  const double scale = length_factor(units);
  if (positions.size() != charges.size()) throw ConfigError("geometry needs one position per charge");
  Eigen::Matrix<double, Eigen::Dynamic, 3> pos(static_cast<Eigen::Index>(positions.size()), 3);
  for (size_t m = 0; m < positions.size(); ++m) {
    if (positions[m].size() != 3) throw ConfigError("geometry positions need three coordinates");
    for (int c = 0; c < 3; ++c) pos(static_cast<Eigen::Index>(m), c) = scale * positions[m][static_cast<size_t>(c)];
  }
  return make_configuration(std::move(pos), std::move(charges), n_up, n_dn);
}

json geometry_to_json(const MolecularConfiguration& config) {
  json pos = json::array();
  for (Eigen::Index m = 0; m < config.n_nuclei(); ++m) {
    pos.push_back({config.positions(m, 0), config.positions(m, 1), config.positions(m, 2)});
  }
  return {{"charges", config.charges}, {"positions", pos}, {"n_up", config.n_up}, {"n_dn", config.n_dn},
          {"units", "bohr"}};
}

RunConfig config_from_json(const json& doc) {
  Fields top(doc, "config");
  std::string name = "paper";
  top.get("preset", name);
  RunConfig c = preset(name);
  top.get("seed", c.seed);
  top.get("output_dir", c.output_dir);
  top.get("log_file", c.log_file);

  if (const json* s = top.object("system")) {
    Fields f(*s, "system");
    std::string units = "bohr";
    f.get("units", units);
    const double scale = length_factor(units);
    f.get("template", c.system.template_name);
    f.get("charges", c.system.charges);
    f.get("n_up", c.system.n_up);
    f.get("n_dn", c.system.n_dn);
    if (const json* b = f.object("bins")) {
      Fields bf(*b, "system.bins");
      bf.get("lower", c.system.lower);
      bf.get("upper", c.system.upper);
      bf.get("count", c.system.bins);
      bf.finish();
      c.system.lower *= scale;
      c.system.upper *= scale;
    }
    if (const json* g = f.object("geometries")) {
      if (!g->is_array()) throw ConfigError("system.geometries must be a list");
      for (const auto& item : *g) {
        json copy = item;
        if (!copy.contains("units")) copy["units"] = units;
        c.system.geometries.push_back(geometry_from_json(copy));
      }
    }
    f.finish();
  }
  if (const json* m = top.object("model")) {
    Fields f(*m, "model");
    f.get("n_layers", c.model.n_layers);
    f.get("single_width", c.model.single_width);
    f.get("double_width", c.model.double_width);
    f.get("n_determinants", c.model.n_determinants);
    f.get("embedding_dim", c.model.embedding_dim);
    f.get("orbital_bias_init", c.model.orbital_bias_init);
    f.finish();
  }
  if (const json* g = top.object("gnn")) {
    Fields f(*g, "gnn");
    f.get("embedding_dim", c.gnn.embedding_dim);
    f.get("message_dim", c.gnn.message_dim);
    f.get("n_steps", c.gnn.n_steps);
    f.get("mlp_depth", c.gnn.mlp_depth);
    f.get("n_sbf", c.gnn.n_sbf);
    f.get("n_rbf", c.gnn.n_rbf);
    f.get("length_scale", c.gnn.length_scale);
    f.get("head_scale", c.gnn.head_scale);
    f.get("charges", c.gnn.charges);
    f.finish();
  }
  if (const json* s = top.object("sampler")) {
    Fields f(*s, "sampler");
    f.get("step_size", c.sampler.step_size);
    f.get("steps_per_update", c.sampler.steps_per_update);
    f.get("n_geometry_walkers", c.sampler.n_geometry_walkers);
    f.get("burn_in", c.sampler.burn_in);
    f.get("adapt_step_size", c.sampler.adapt_step_size);
    f.get("target_acceptance", c.sampler.target_acceptance);
    f.get("jitter_scale", c.sampler.jitter_scale);
    f.finish();
  }
  if (const json* o = top.object("optimizer")) {
    Fields f(*o, "optimizer");
    f.get("batch_size", c.train.batch_size);
    f.get("iterations", c.train.iterations);
    f.get("clip_window", c.train.clip_window);
    f.get("checkpoint_every", c.train.checkpoint_every);
    f.get("learning_rate", c.train.optimizer.learning_rate);
    f.get("decay_steps", c.train.optimizer.decay_steps);
    f.get("max_step_norm", c.train.optimizer.max_step_norm);
    f.get("damping_scale", c.train.optimizer.damping_scale);
    f.get("damping_floor", c.train.optimizer.damping_floor);
    f.get("centered_fisher", c.train.optimizer.centered_fisher);
    f.get("cg_max_steps", c.train.optimizer.cg.max_steps);
    f.get("cg_tolerance", c.train.optimizer.cg.tolerance);
    f.get("cg_window", c.train.optimizer.cg.window);
    f.finish();
  }
  if (const json* p = top.object("pretraining")) {
    Fields f(*p, "pretraining");
    f.get("enabled", c.pretrain.enabled);
    f.get("iterations", c.pretrain.iterations);
    f.get("learning_rate", c.pretrain.lamb.learning_rate);
    f.get("beta1", c.pretrain.lamb.beta1);
    f.get("beta2", c.pretrain.lamb.beta2);
    f.get("epsilon", c.pretrain.lamb.epsilon);
    f.get("weight_decay", c.pretrain.lamb.weight_decay);
    f.get("provider", c.pretrain.provider);
    f.get("file", c.pretrain.file);
    f.get("sweeps_per_step", c.pretrain.sweeps_per_step);
    f.finish();
  }
  if (const json* e = top.object("evaluation")) {
    Fields f(*e, "evaluation");
    f.get("samples", c.eval.samples);
    f.get("burn_in", c.eval.burn_in);
    f.get("walkers", c.eval.walkers);
    f.get("thinning", c.eval.thinning);
    f.finish();
  }
  top.finish();

  // the charge table covers every charge of the system
  std::vector<int> charges = c.gnn.charges;
  if (c.system.uses_template()) {
    charges.insert(charges.end(), c.system.charges.begin(), c.system.charges.end());
  }
  for (const auto& g : c.system.geometries) charges.insert(charges.end(), g.charges.begin(), g.charges.end());
  std::sort(charges.begin(), charges.end());
  charges.erase(std::unique(charges.begin(), charges.end()), charges.end());
  c.gnn.charges = charges;
  validate(c);
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config " + path + ": " + e.what());
  }
  return config_from_json(doc);
}

json to_json(const RunConfig& c) {
  json system;
  if (c.system.uses_template()) {
    system = {{"template", c.system.template_name}, {"charges", c.system.charges}, {"n_up", c.system.n_up},
              {"n_dn", c.system.n_dn}, {"units", "bohr"},
              {"bins", {{"lower", c.system.lower}, {"upper", c.system.upper}, {"count", c.system.bins}}}};
  } else {
    system = {{"units", "bohr"}, {"geometries", json::array()}};
    for (const auto& g : c.system.geometries) system["geometries"].push_back(geometry_to_json(g));
  }
  const auto& o = c.train.optimizer;
  return {
      {"preset", c.preset},
      {"seed", c.seed},
      {"output_dir", c.output_dir},
      {"log_file", c.log_file},
      {"system", system},
      {"model",
       {{"n_layers", c.model.n_layers}, {"single_width", c.model.single_width},
        {"double_width", c.model.double_width}, {"n_determinants", c.model.n_determinants},
        {"embedding_dim", c.model.embedding_dim}, {"orbital_bias_init", c.model.orbital_bias_init}}},
      {"gnn",
       {{"embedding_dim", c.gnn.embedding_dim}, {"message_dim", c.gnn.message_dim}, {"n_steps", c.gnn.n_steps},
        {"mlp_depth", c.gnn.mlp_depth}, {"n_sbf", c.gnn.n_sbf}, {"n_rbf", c.gnn.n_rbf},
        {"length_scale", c.gnn.length_scale}, {"head_scale", c.gnn.head_scale}, {"charges", c.gnn.charges}}},
      {"sampler",
       {{"step_size", c.sampler.step_size}, {"steps_per_update", c.sampler.steps_per_update},
        {"n_geometry_walkers", c.sampler.n_geometry_walkers}, {"burn_in", c.sampler.burn_in},
        {"adapt_step_size", c.sampler.adapt_step_size}, {"target_acceptance", c.sampler.target_acceptance},
        {"jitter_scale", c.sampler.jitter_scale}}},
      {"optimizer",
       {{"batch_size", c.train.batch_size}, {"iterations", c.train.iterations},
        {"clip_window", c.train.clip_window}, {"checkpoint_every", c.train.checkpoint_every},
        {"learning_rate", o.learning_rate}, {"decay_steps", o.decay_steps}, {"max_step_norm", o.max_step_norm},
        {"damping_scale", o.damping_scale}, {"damping_floor", o.damping_floor},
        {"centered_fisher", o.centered_fisher}, {"cg_max_steps", o.cg.max_steps}, {"cg_tolerance", o.cg.tolerance},
        {"cg_window", o.cg.window}}},
      {"pretraining",
       {{"enabled", c.pretrain.enabled}, {"iterations", c.pretrain.iterations},
        {"learning_rate", c.pretrain.lamb.learning_rate}, {"beta1", c.pretrain.lamb.beta1},
        {"beta2", c.pretrain.lamb.beta2}, {"epsilon", c.pretrain.lamb.epsilon},
        {"weight_decay", c.pretrain.lamb.weight_decay}, {"provider", c.pretrain.provider},
        {"file", c.pretrain.file}, {"sweeps_per_step", c.pretrain.sweeps_per_step}}},
      {"evaluation",
       {{"samples", c.eval.samples}, {"burn_in", c.eval.burn_in}, {"walkers", c.eval.walkers},
        {"thinning", c.eval.thinning}}},
  };
}

void validate(const RunConfig& c) {
  const auto& s = c.system;
  if (s.uses_template()) {
    if (!s.geometries.empty()) throw ConfigError("system takes a template or a geometry list, not both");
    make_template(s.template_name, s.charges, s.n_up, s.n_dn);
    if (!(s.lower > 0.0) || !(s.upper >= s.lower)) throw ConfigError("system.bins needs 0 < lower <= upper");
    if (s.bins < 0) throw ConfigError("system.bins.count must not be negative");
  } else {
    if (s.geometries.empty()) throw ConfigError("system needs a template or at least one geometry");
    for (const auto& g : s.geometries) {
      if (g.n_up != s.geometries[0].n_up || g.n_dn != s.geometries[0].n_dn ||
          g.n_nuclei() != s.geometries[0].n_nuclei()) {
        throw ConfigError("all geometries must share electron spin counts and nucleus count");
      }
    }
  }
  positive(c.model.n_layers > 0 && c.model.single_width > 0 && c.model.double_width > 0 &&
               c.model.n_determinants > 0 && c.model.embedding_dim > 0,
           "model sizes");
  positive(c.gnn.embedding_dim > 0 && c.gnn.message_dim > 0 && c.gnn.n_steps > 0 && c.gnn.mlp_depth > 0 &&
               c.gnn.n_sbf > 0 && c.gnn.n_rbf > 0 && c.gnn.length_scale > 0,
           "gnn sizes");
  positive(c.sampler.step_size > 0 && c.sampler.steps_per_update > 0 && c.sampler.n_geometry_walkers > 0 &&
               c.sampler.burn_in >= 0 && c.sampler.jitter_scale >= 0,
           "sampler settings");
  positive(c.train.batch_size > 0 && c.train.iterations >= 0 && c.train.clip_window > 0 &&
               c.train.checkpoint_every > 0,
           "optimizer counts");
  const auto& o = c.train.optimizer;
  positive(o.learning_rate > 0 && o.decay_steps > 0 && o.max_step_norm > 0 && o.damping_scale >= 0 &&
               o.damping_floor > 0 && o.cg.max_steps > 0 && o.cg.window > 0 && o.cg.tolerance >= 0,
           "optimizer hyperparameters");
  if (c.train.batch_size < c.n_geometries()) throw ConfigError("batch size is smaller than the geometry count");
  positive(c.pretrain.iterations >= 0 && c.pretrain.lamb.learning_rate > 0 && c.pretrain.sweeps_per_step >= 0,
           "pretraining settings");
  if (c.pretrain.provider != "lcao" && c.pretrain.provider != "file") {
    throw ConfigError("pretraining.provider must be 'lcao' or 'file'");
  }
  if (c.pretrain.provider == "file" && c.pretrain.file.empty()) throw ConfigError("pretraining.file is required");
  positive(c.eval.samples > 0 && c.eval.burn_in >= 0 && c.eval.walkers > 0 && c.eval.thinning > 0,
           "evaluation settings");
}

std::optional<GeometryTemplate> system_template(const SystemConfig& system) {
  if (!system.uses_template()) return std::nullopt;
  return make_template(system.template_name, system.charges, system.n_up, system.n_dn);
}

void apply_environment(RunConfig& config) {
  if (const char* seed = std::getenv("MGVMC_SEED")) {
    try {
      config.seed = std::stoull(seed);
    } catch (const std::exception&) {
      throw ConfigError(std::string("MGVMC_SEED is not an unsigned integer: ") + seed);
    }
  }
}

}  // namespace mgvmc
