#include "run_config.hpp"

#include <json.hpp>
#include <set>

#include "mpipn/error.hpp"
#include "mpipn/io.hpp"

namespace mpipn::cli {

namespace {

using nlohmann::json;

void only_keys(const json& j, std::string_view where, std::initializer_list<const char*> allowed) {
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, value] : j.items()) {
    if (!ok.count(key)) throw ConfigError("run config: unknown key '" + key + "' in " + std::string(where));
  }
}

template <class T>
void read(const json& j, const char* key, T& into) {
  if (j.contains(key)) into = j.at(key).get<T>();
}

}  // namespace

training::DatasetOptions RunConfig::dataset_options() const {
  auto d = dataset;
  d.case_id = case_id;
  d.seed = seed;
  return d;
}

training::TrainConfig RunConfig::train_config() const {
  auto t = train;
  t.seed = seed;
  t.out_dir = out_dir;
  t.alpha = dataset.physics.alpha;
  t.beta = dataset.physics.beta;
  return t;
}

RunConfig parse_run_config(const std::string& text) {
  RunConfig c;
  try {
    const json j = json::parse(text);
    only_keys(j, "root", {"case", "seed", "out_dir", "dataset", "physics", "train", "arch", "eval"});
    read(j, "case", c.case_id);
    read(j, "seed", c.seed);
    if (j.contains("out_dir")) c.out_dir = j["out_dir"].get<std::string>();

    if (j.contains("dataset")) {
      const auto& d = j["dataset"];
      only_keys(d, "dataset", {"train_conditions", "test_conditions", "observations", "synthetic_truth"});
      read(d, "train_conditions", c.dataset.train_conditions);
      read(d, "test_conditions", c.dataset.test_conditions);
      read(d, "synthetic_truth", c.dataset.synthetic_truth);
      if (d.contains("observations")) {
        const auto o = d["observations"].get<std::vector<std::size_t>>();
        if (o.size() != 3) throw ConfigError("run config: dataset.observations needs three counts");
        c.dataset.observations = geometry::DomainCounts{o[0], o[1], o[2]};
      }
    }
    if (j.contains("physics")) {
      const auto& p = j["physics"];
      only_keys(p, "physics", {"wavenumber_mode", "coupling_mode", "rho", "c", "p0", "ek", "alpha", "beta"});
      auto& ph = c.dataset.physics;
      if (p.contains("wavenumber_mode")) ph.wavenumber_mode = physics::wavenumber_mode_from(p["wavenumber_mode"].get<std::string>());
      if (p.contains("coupling_mode")) ph.coupling_mode = physics::coupling_mode_from(p["coupling_mode"].get<std::string>());
      read(p, "rho", ph.medium.rho);
      read(p, "c", ph.medium.c);
      read(p, "p0", ph.wave.p0);
      read(p, "alpha", ph.alpha);
      read(p, "beta", ph.beta);
      if (p.contains("ek")) {
        const auto ek = p["ek"].get<std::vector<double>>();
        if (ek.size() != 2) throw ConfigError("run config: physics.ek needs two components");
        ph.wave.ek = {ek[0], ek[1]};
      }
    }
    if (j.contains("train")) {
      const auto& t = j["train"];
      only_keys(t, "train", {"epochs", "lr", "final_lr", "beta1", "beta2", "eps", "lookahead", "lookahead_k",
                             "lookahead_alpha", "checkpoint_every", "snapshots", "divergence_threshold"});
      auto& tr = c.train;
      read(t, "epochs", tr.epochs);
      read(t, "lr", tr.optimizer.radam.lr);
      read(t, "final_lr", tr.final_lr);
      read(t, "beta1", tr.optimizer.radam.beta1);
      read(t, "beta2", tr.optimizer.radam.beta2);
      read(t, "eps", tr.optimizer.radam.eps);
      read(t, "lookahead", tr.optimizer.lookahead);
      read(t, "lookahead_k", tr.optimizer.lookahead_k);
      read(t, "lookahead_alpha", tr.optimizer.lookahead_alpha);
      read(t, "checkpoint_every", tr.checkpoint_every);
      read(t, "snapshots", tr.snapshot_epochs);
      read(t, "divergence_threshold", tr.divergence_threshold);
    }
    if (j.contains("arch")) {
      const auto& a = j["arch"];
      only_keys(a, "arch", {"output_channels"});
      read(a, "output_channels", c.arch.output_channels);
    }
    if (j.contains("eval")) {
      const auto& e = j["eval"];
      only_keys(e, "eval", {"held_out_only", "ape_conditions"});
      read(e, "held_out_only", c.held_out_only);
      read(e, "ape_conditions", c.ape_conditions);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("run config: ") + e.what());
  }
  geometry::case_config(c.case_id);  // rejects unknown cases
  c.arch.validate();
  c.train_config().validate();
  if (c.arch.output_channels != 2) {
    throw ConfigError("run config: the physics losses need two output channels (Re, Im)");
  }
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) { return parse_run_config(io::read_file(path)); }

std::string to_json(const RunConfig& c) {
  nlohmann::ordered_json j;
  j["case"] = c.case_id;
  j["seed"] = c.seed;
  j["out_dir"] = c.out_dir.string();
  auto& d = j["dataset"];
  d["train_conditions"] = c.dataset.train_conditions;
  d["test_conditions"] = c.dataset.test_conditions;
  d["synthetic_truth"] = c.dataset.synthetic_truth;
  if (c.dataset.observations) {
    const auto& o = *c.dataset.observations;
    d["observations"] = {o.interior, o.radiation, o.coupling};
  }
  const auto& ph = c.dataset.physics;
  j["physics"] = {{"wavenumber_mode", physics::to_string(ph.wavenumber_mode)},
                  {"coupling_mode", physics::to_string(ph.coupling_mode)},
                  {"rho", ph.medium.rho},
                  {"c", ph.medium.c},
                  {"p0", ph.wave.p0},
                  {"ek", {ph.wave.ek.x, ph.wave.ek.y}},
                  {"alpha", ph.alpha},
                  {"beta", ph.beta}};
  const auto& tr = c.train;
  j["train"] = {{"epochs", tr.epochs},
                {"lr", tr.optimizer.radam.lr},
                {"final_lr", tr.final_lr},
                {"beta1", tr.optimizer.radam.beta1},
                {"beta2", tr.optimizer.radam.beta2},
                {"eps", tr.optimizer.radam.eps},
                {"lookahead", tr.optimizer.lookahead},
                {"lookahead_k", tr.optimizer.lookahead_k},
                {"lookahead_alpha", tr.optimizer.lookahead_alpha},
                {"checkpoint_every", tr.checkpoint_every},
                {"snapshots", tr.snapshot_epochs},
                {"divergence_threshold", tr.divergence_threshold}};
  j["arch"] = {{"output_channels", c.arch.output_channels}};
  j["eval"] = {{"held_out_only", c.held_out_only}, {"ape_conditions", c.ape_conditions}};
  return j.dump(2);
}

}  // namespace mpipn::cli
