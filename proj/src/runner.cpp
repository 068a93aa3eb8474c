// Copyright 2026 The mgvmc Authors
// SPDX-License-Identifier: Apache-2.0

#include "mgvmc/runner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <iomanip>
#include <limits>
#include <sstream>

#include "mgvmc/errors.hpp"
#include "mgvmc/pretraining.hpp"

namespace mgvmc {

using Eigen::Index;
namespace fs = std::filesystem;

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// ---------------------------------------------------------------- energy log

EnergyLog::EnergyLog(const std::string& path, bool append) {
  const bool fresh = !append || !fs::exists(path) || fs::file_size(path) == 0;
  out_.open(path, append ? std::ios::app : std::ios::trunc);
  if (!out_) throw ConfigError("cannot write energy log " + path);
  if (fresh) out_ << kHeader << '\n';
  out_.flush();
}

void EnergyLog::write(const std::vector<EnergyRecord>& records) {
  for (const auto& r : records) {
    out_ << r.step << ',' << r.geom_id << ',' << std::setprecision(17) << r.param << ',' << r.energy << ','
         << r.variance << ',' << r.std_error << ',' << r.acceptance << ',' << std::setprecision(6) << r.seconds
         << '\n';
  }
  out_.flush();
}

// ---------------------------------------------------------------- checkpoint

namespace {

constexpr char kMagic[8] = {'M', 'G', 'V', 'M', 'C', 'C', 'K', 'P'};

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}
  template <class T>
  void pod(const T& v) {
    out_.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  void str(const std::string& s) {
    pod<std::uint64_t>(s.size());
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
  void matrix(const Eigen::MatrixXd& m) {
    pod<std::int64_t>(m.rows());
    pod<std::int64_t>(m.cols());
    out_.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
  }
  template <class Rng>
  void rng(const Rng& r) {
    std::ostringstream s;
    s << r;
    str(s.str());
  }

 private:
  std::ostream& out_;
};

class Reader {
 public:
  Reader(std::istream& in, std::string path) : in_(in), path_(std::move(path)) {}
  template <class T>
  T pod() {
    T v{};
    in_.read(reinterpret_cast<char*>(&v), sizeof(T));
    check();
    return v;
  }
  std::string str() {
    const auto n = pod<std::uint64_t>();
    if (n > (1ULL << 32)) throw ConfigError("checkpoint " + path_ + " is corrupt");
    std::string s(n, '\0');
    in_.read(s.data(), static_cast<std::streamsize>(n));
    check();
    return s;
  }
  Eigen::MatrixXd matrix() {
    const auto rows = pod<std::int64_t>();
    const auto cols = pod<std::int64_t>();
    if (rows < 0 || cols < 0 || rows * cols > (1LL << 32)) throw ConfigError("checkpoint " + path_ + " is corrupt");
    Eigen::MatrixXd m(rows, cols);
    in_.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
    check();
    return m;
  }
  template <class Rng>
  void rng(Rng& r) {
    std::istringstream s(str());
    s >> r;
    if (!s) throw ConfigError("checkpoint " + path_ + " has a bad generator state");
  }

 private:
  void check() {
    if (!in_) throw ConfigError("checkpoint " + path_ + " is truncated");
  }
  std::istream& in_;
  std::string path_;
};

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot write checkpoint " + path);
    Writer w(out);
    out.write(kMagic, sizeof(kMagic));
    w.pod(kCheckpointVersion);
    w.str(to_json(ckpt.config).dump());
    w.pod<std::int64_t>(ckpt.state.step);
    w.matrix(ckpt.state.params);
    w.pod<std::uint8_t>(ckpt.pretrained);
    w.pod<std::uint8_t>(ckpt.burned_in);
    w.pod<std::uint64_t>(ckpt.geometry_walkers.size());
    for (const auto& g : ckpt.geometry_walkers) {
      w.matrix(g.lower);
      w.matrix(g.upper);
      w.matrix(g.current);
      w.rng(g.rng);
    }
    w.pod<std::uint64_t>(ckpt.walkers.size());
    for (const auto& s : ckpt.walkers) {
      w.matrix(s.positions);
      w.pod(s.step_size);
      w.pod(s.accepted);
      w.pod(s.proposed);
      w.rng(s.rng);
    }
    if (!out) throw ConfigError("cannot write checkpoint " + path);
  }
  fs::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read checkpoint " + path);
  Reader r(in, path);
  char magic[sizeof(kMagic)] = {};
  in.read(magic, sizeof(magic));
  if (!in || !std::equal(magic, magic + sizeof(magic), kMagic)) {
    throw ConfigError(path + " is not an mgvmc checkpoint");
  }
  const auto version = r.pod<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw ConfigError("checkpoint " + path + " has format version " + std::to_string(version) +
                      ", this build reads version " + std::to_string(kCheckpointVersion));
  }
  Checkpoint ckpt;
  try {
    ckpt.config = config_from_json(nlohmann::json::parse(r.str()));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("checkpoint " + path + " has a bad config: " + e.what());
  }
  ckpt.state.step = r.pod<std::int64_t>();
  ckpt.state.params = r.matrix();
  ckpt.pretrained = r.pod<std::uint8_t>() != 0;
  ckpt.burned_in = r.pod<std::uint8_t>() != 0;
  const auto n_geom = r.pod<std::uint64_t>();
  for (std::uint64_t k = 0; k < n_geom; ++k) {
    GeometryWalker g;
    g.lower = r.matrix();
    g.upper = r.matrix();
    g.current = r.matrix();
    r.rng(g.rng);
    ckpt.geometry_walkers.push_back(std::move(g));
  }
  const auto n_walk = r.pod<std::uint64_t>();
  for (std::uint64_t k = 0; k < n_walk; ++k) {
    WalkerState s;
    s.positions = r.matrix();
    s.step_size = r.pod<double>();
    s.accepted = r.pod<std::int64_t>();
    s.proposed = r.pod<std::int64_t>();
    r.rng(s.rng);
    ckpt.walkers.push_back(std::move(s));
  }
  return ckpt;
}

// ---------------------------------------------------------------- trainer

std::unique_ptr<Ansatz> make_ansatz(const RunConfig& config) {
  GnnConfig gnn = config.gnn;
  if (config.system.uses_template()) {
    gnn.charges.insert(gnn.charges.end(), config.system.charges.begin(), config.system.charges.end());
  }
  for (const auto& g : config.system.geometries) gnn.charges.insert(gnn.charges.end(), g.charges.begin(), g.charges.end());
  return std::make_unique<Ansatz>(config.model, gnn, config.n_up(), config.n_dn(), config.n_nuclei());
}

Trainer::Trainer(RunConfig config) : config_(std::move(config)) {
  validate(config_);
  ansatz_ = make_ansatz(config_);
  template_ = system_template(config_.system);
  std::mt19937_64 rng(derive_seed(config_.seed, 0));
  state_.params = ansatz_->initial_params(rng);
  if (template_) {
    geometry_walkers_ = make_geometry_walkers(config_.system.lower, config_.system.upper, config_.n_geometries(),
                                              derive_seed(config_.seed, 1));
    for (const auto& g : geometry_walkers_) geometries_.push_back(template_->realize(g.current));
  } else {
    geometries_ = config_.system.geometries;
  }
  for (size_t k = 0; k < geometries_.size(); ++k) {
    const auto wf = ansatz_->bind(state_.params, geometries_[k]);
    walkers_.push_back(init_walkers(geometries_[k], config_.walkers_per_geometry(), derive_seed(config_.seed, 100 + k),
                                    config_.sampler.step_size, wf));
  }
}

Trainer::Trainer(Checkpoint ckpt) : config_(std::move(ckpt.config)) {
  validate(config_);
  ansatz_ = make_ansatz(config_);
  template_ = system_template(config_.system);
  if (ckpt.state.params.size() != ansatz_->n_params()) {
    throw ConfigError("checkpoint holds " + std::to_string(ckpt.state.params.size()) + " parameters, config needs " +
                      std::to_string(ansatz_->n_params()));
  }
  state_ = std::move(ckpt.state);
  pretrained_ = ckpt.pretrained;
  burned_in_ = ckpt.burned_in;
  geometry_walkers_ = std::move(ckpt.geometry_walkers);
  if (template_) {
    for (const auto& g : geometry_walkers_) geometries_.push_back(template_->realize(g.current));
  } else {
    geometries_ = config_.system.geometries;
  }
  walkers_ = std::move(ckpt.walkers);
  if (static_cast<int>(geometries_.size()) != config_.n_geometries() || walkers_.size() != geometries_.size()) {
    throw ConfigError("checkpoint sampler state does not match its config");
  }
  for (size_t k = 0; k < walkers_.size(); ++k) {
    const auto wf = ansatz_->bind(state_.params, geometries_[k]);
    refresh(walkers_[k], wf);
  }
}

double Trainer::geometry_param(int k) const {
  return template_ ? geometry_walkers_[static_cast<size_t>(k)].current(0) : std::numeric_limits<double>::quiet_NaN();
}

void Trainer::move_geometries() {
  if (template_) geometries_ = step_geometry_walkers(geometry_walkers_, *template_, config_.sampler.jitter_scale);
}

std::vector<double> Trainer::pretrain(int iterations) {
  const auto provider = make_provider(config_.pretrain.provider, config_.pretrain.file);
  const auto groups = pretrain_groups(*ansatz_);
  LambState lamb;
  std::vector<double> losses;
  const size_t n = geometries_.size();
  for (int it = 0; it < iterations; ++it) {
    move_geometries();
    std::vector<PretrainBatch> batches;
    for (size_t k = 0; k < n; ++k) {
      const auto wf = ansatz_->bind(state_.params, geometries_[k]);
      refresh(walkers_[k], wf);
      run_chain(walkers_[k], wf, config_.pretrain.sweeps_per_step);
      PretrainBatch b{geometries_[k], walkers_[k].positions, {}};
      for (size_t j = 0; j < n; ++j) b.references.push_back(geometries_[(k + j) % n]);
      batches.push_back(std::move(b));
    }
    losses.push_back(pretrain_step(*ansatz_, *provider, state_.params, lamb, batches, config_.pretrain.lamb));
  }
  pretrained_ = true;
  return losses;
}

void Trainer::burn_in() {
  for (size_t k = 0; k < geometries_.size(); ++k) {
    const auto wf = ansatz_->bind(state_.params, geometries_[k]);
    refresh(walkers_[k], wf);
    for (int done = 0; done < config_.sampler.burn_in; done += 10) {
      run_chain(walkers_[k], wf, std::min(10, config_.sampler.burn_in - done));
      if (config_.sampler.adapt_step_size) adapt_step_size(walkers_[k], config_.sampler.target_acceptance);
    }
  }
  burned_in_ = true;
}

std::vector<EnergyRecord> Trainer::step() {
  const auto start = std::chrono::steady_clock::now();
  move_geometries();
  const size_t n = geometries_.size();
  std::vector<GeometryBatch> batches(n);
  std::vector<EnergyRecord> records(n);
  for (size_t k = 0; k < n; ++k) {
    const auto& geom = geometries_[k];
    const auto wf = ansatz_->bind(state_.params, geom);
    WalkerState& w = walkers_[k];
    refresh(w, wf);
    run_chain(w, wf, config_.sampler.steps_per_update);
    records[k].acceptance = w.acceptance();
    if (config_.sampler.adapt_step_size) adapt_step_size(w, config_.sampler.target_acceptance);

    const Eigen::VectorXd e_loc = local_energies(wf.derivatives(w.positions), w.positions, geom);
    const EnergyStatistics raw = statistics(e_loc);
    records[k].geom_id = static_cast<int>(k);
    records[k].param = geometry_param(static_cast<int>(k));
    records[k].energy = raw.mean;
    records[k].variance = raw.variance;
    records[k].std_error = raw.std_error;
    batches[k].local_energies = clip_local_energies(e_loc, config_.train.clip_window);
    batches[k].grad_logpsi = ansatz_->per_sample_gradients(state_.params, geom, wf.frame(), w.positions);
  }
  apply_update(state_, config_.train.optimizer, batches);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  for (auto& r : records) {
    r.step = state_.step;
    r.seconds = seconds;
  }
  return records;
}

Checkpoint Trainer::checkpoint() const {
  Checkpoint c;
  c.config = config_;
  c.state = state_;
  c.pretrained = pretrained_;
  c.burned_in = burned_in_;
  c.geometry_walkers = geometry_walkers_;
  c.walkers = walkers_;
  return c;
}

void run_training(Trainer& trainer, EnergyLog& log,
                  const std::function<void(const std::vector<EnergyRecord>&)>& on_step) {
  const RunConfig& cfg = trainer.config();
  const fs::path dir(cfg.output_dir);
  fs::create_directories(dir);
  if (cfg.pretrain.enabled && !trainer.pretrained()) trainer.pretrain(cfg.pretrain.iterations);
  if (!trainer.burned_in()) trainer.burn_in();
  while (trainer.state().step < cfg.train.iterations) {
    Checkpoint before = trainer.checkpoint();
    std::vector<EnergyRecord> records;
    try {
      records = trainer.step();
    } catch (const NumericalError&) {
      save_checkpoint((dir / "failed.ckpt").string(), before);
      throw;
    } catch (const NodeError&) {
      save_checkpoint((dir / "failed.ckpt").string(), before);
      throw;
    } catch (const SingularityError&) {
      save_checkpoint((dir / "failed.ckpt").string(), before);
      throw;
    }
    log.write(records);
    if (on_step) on_step(records);
    if (trainer.state().step % cfg.train.checkpoint_every == 0) {
      save_checkpoint((dir / "latest.ckpt").string(), trainer.checkpoint());
    }
  }
  save_checkpoint((dir / "final.ckpt").string(), trainer.checkpoint());
}

// ---------------------------------------------------------------- evaluation

EnergyStatistics evaluate_energy(const WaveFunction& wf, const MolecularConfiguration& config,
                                 const EvalConfig& eval, double step_size, std::uint64_t seed) {
  WalkerState s = init_walkers(config, eval.walkers, seed, step_size, wf);
  for (int done = 0; done < eval.burn_in; done += 10) {
    run_chain(s, wf, std::min(10, eval.burn_in - done));
    adapt_step_size(s, 0.5);
  }
  RunningStatistics stats;
  for (std::int64_t remaining = eval.samples; remaining > 0;) {
    run_chain(s, wf, eval.thinning);
    const Eigen::VectorXd e_loc = local_energies(wf, s.positions, config);
    const Index take = static_cast<Index>(std::min<std::int64_t>(remaining, e_loc.size()));
    stats.add(Eigen::VectorXd(e_loc.head(take)));
    remaining -= take;
  }
  return stats.stats();
}

EnergyStatistics evaluate_checkpoint(const Checkpoint& ckpt, const MolecularConfiguration& config,
                                     std::int64_t samples) {
  const RunConfig& rc = ckpt.config;
  if (config.n_up != rc.n_up() || config.n_dn != rc.n_dn()) {
    throw ConfigError("geometry has spins (" + std::to_string(config.n_up) + ", " + std::to_string(config.n_dn) +
                      ") but the model was trained for (" + std::to_string(rc.n_up()) + ", " +
                      std::to_string(rc.n_dn()) + ")");
  }
  if (config.n_nuclei() != rc.n_nuclei()) {
    throw ConfigError("geometry has " + std::to_string(config.n_nuclei()) + " nuclei, the model expects " +
                      std::to_string(rc.n_nuclei()));
  }
  const auto ansatz = make_ansatz(rc);
  const auto wf = ansatz->bind(ckpt.state.params, config);
  EvalConfig eval = rc.eval;
  if (samples > 0) eval.samples = samples;
  double step_size = rc.sampler.step_size;
  if (!ckpt.walkers.empty()) {
    step_size = 0.0;
    for (const auto& w : ckpt.walkers) step_size += w.step_size;
    step_size /= static_cast<double>(ckpt.walkers.size());
  }
  return evaluate_energy(wf, config, eval, step_size, derive_seed(rc.seed, 7));
}

std::vector<double> parse_grid(const std::string& spec) {
  auto number = [&](const std::string& s) {
    size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(s, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != s.size() || !std::isfinite(v)) throw ConfigError("bad grid value '" + s + "' in " + spec);
    return v;
  };
  std::vector<double> out;
  if (spec.find(':') != std::string::npos) {
    std::vector<std::string> parts;
    std::stringstream in(spec);
    for (std::string p; std::getline(in, p, ':');) parts.push_back(p);
    if (parts.size() != 3) throw ConfigError("grid '" + spec + "' must be a:b:n");
    const double a = number(parts[0]), b = number(parts[1]);
    const double nd = number(parts[2]);
    const int n = static_cast<int>(nd);
    if (n < 1 || n != nd) throw ConfigError("grid point count in '" + spec + "' must be a positive integer");
    for (int i = 0; i < n; ++i) out.push_back(n == 1 ? a : a + (b - a) * i / (n - 1));
    return out;
  }
  std::stringstream in(spec);
  for (std::string p; std::getline(in, p, ',');) out.push_back(number(p));
  if (out.empty()) throw ConfigError("empty grid");
  return out;
}

MolecularConfiguration parse_geometry(const std::string& spec, const RunConfig& config) {
  if (!spec.empty() && spec.front() == '{') {
    try {
      return geometry_from_json(nlohmann::json::parse(spec));
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("bad inline geometry: ") + e.what());
    }
  }
  size_t used = 0;
  double param = 0.0;
  try {
    param = std::stod(spec, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used > 0 && used == spec.size()) {
    const auto tmpl = system_template(config.system);
    if (!tmpl) throw ConfigError("a numeric geometry needs a config with a geometry template");
    return tmpl->realize(Eigen::VectorXd::Constant(1, param));
  }
  std::ifstream in(spec);
  if (!in) throw ConfigError("geometry '" + spec + "' is neither a number, inline JSON nor a readable file");
  try {
    return geometry_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("geometry file " + spec + ": " + e.what());
  }
}

std::vector<ScanPoint> scan(const Checkpoint& ckpt, const std::vector<double>& grid, std::int64_t samples) {
  const auto tmpl = system_template(ckpt.config.system);
  if (!tmpl) throw ConfigError("scan needs a checkpoint trained on a geometry template");
  std::vector<ScanPoint> out;
  for (double p : grid) {
    ScanPoint point;
    point.param = p;
    try {
      point.stats = evaluate_checkpoint(ckpt, tmpl->realize(Eigen::VectorXd::Constant(1, p)), samples);
    } catch (const std::exception& e) {
      point.error = e.what();
      const double nan = std::numeric_limits<double>::quiet_NaN();
      point.stats = {nan, nan, nan, 0};
    }
    out.push_back(point);
  }
  return out;
}

void write_scan_csv(const std::string& path, const std::vector<ScanPoint>& points) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path);
  out << "param,energy_hartree,stderr_hartree,variance\n" << std::setprecision(17);
  for (const auto& p : points) {
    out << p.param << ',' << p.stats.mean << ',' << p.stats.std_error << ',' << p.stats.variance << '\n';
  }
  if (!out) throw ConfigError("cannot write " + path);
}

}  // namespace mgvmc
