#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <sstream>

#include "mpipn/error.hpp"
#include "mpipn/io.hpp"
#include "mpipn/rng.hpp"
#include "mpipn/training.hpp"

namespace mpipn::training {

namespace {

using physics::kSubunits;
using physics::kWaterDensity;
using physics::kWaterModulus;
using physics::ParametricCondition;

constexpr double kDensityLo = kWaterDensity / 3.0, kDensityHi = 2.0 * kWaterDensity;
constexpr double kModulusLo = kWaterModulus / 3.0, kModulusHi = 5.0 * kWaterModulus;
constexpr double kFreqLo = 300.0, kFreqHi = 500.0;

// Rng stream ids; each stochastic stage of dataset construction draws from its own.
constexpr std::uint64_t kConditionStream = 30;
constexpr std::uint64_t kSplitStream = 31;
constexpr std::uint64_t kTruthStream = 1000;

void draw_materials(Rng& rng, ParametricCondition& c) {
  for (auto& r : c.densities) r = rng.uniform(kDensityLo, kDensityHi);
  for (auto& e : c.moduli) e = rng.uniform(kModulusLo, kModulusHi);
}

bool contains(const std::vector<ParametricCondition>& set, const ParametricCondition& c) {
  return std::find(set.begin(), set.end(), c) != set.end();
}

// Independent random conditions; exact repeats are redrawn.
std::vector<ParametricCondition> random_conditions(std::size_t n, bool random_frequency, std::uint64_t seed) {
  Rng rng = Rng::derive(seed, kConditionStream);
  std::vector<ParametricCondition> out;
  out.reserve(n);
  while (out.size() < n) {
    ParametricCondition c;
    c.f_hz = random_frequency ? rng.uniform(kFreqLo, kFreqHi) : kFreqLo;
    draw_materials(rng, c);
    if (!contains(out, c)) out.push_back(c);
  }
  return out;
}

// 12 material groups crossed with 100 evenly spaced frequencies, shuffled.
std::vector<ParametricCondition> grouped_conditions(std::uint64_t seed) {
  constexpr std::size_t kGroups = 12, kFrequencies = 100;
  Rng rng = Rng::derive(seed, kConditionStream);
  std::vector<ParametricCondition> groups(kGroups);
  for (auto& g : groups) draw_materials(rng, g);
  std::vector<ParametricCondition> out;
  for (const auto& g : groups) {
    for (std::size_t j = 0; j < kFrequencies; ++j) {
      ParametricCondition c = g;
      c.f_hz = kFreqLo + (kFreqHi - kFreqLo) * static_cast<double>(j) / static_cast<double>(kFrequencies - 1);
      out.push_back(c);
    }
  }
  Rng split = Rng::derive(seed, kSplitStream);
  split.shuffle(out.begin(), out.end());
  return out;
}

void attach_truth(ConditionData& d, const Dataset& data, std::uint64_t stream, bool desk) {
  const double k = physics::wavenumber(d.condition.f_hz, data.physics.medium, data.physics.wavenumber_mode);
  if (desk) {
    d.field = physics::manufactured_solution(k, 1.0, {0.6, 0.8});
  } else {
    Rng rng = Rng::derive(data.seed, kTruthStream + stream);
    const double theta = rng.uniform(0.0, 2.0 * physics::kPi);
    const cd amp = std::polar(rng.uniform(0.2, 1.0), rng.uniform(0.0, 2.0 * physics::kPi));
    d.field = physics::manufactured_solution(k, amp, {std::cos(theta), std::sin(theta)});
  }
  for (auto tag : geometry::kAllDomains) {
    d.truth[geometry::domain_index(tag)] = d.field->evaluate(data.cloud.points(tag)).value;
  }
  const auto& coupling = data.cloud.coupling;
  if (!coupling.empty()) {
    std::vector<geometry::Point2> pts;
    for (const auto& s : coupling) pts.push_back(s.point);
    const auto total = physics::add_fields(d.field->evaluate(pts), physics::background_pressure(pts, data.physics.wave, k));
    d.displacement = physics::derived_displacement(total, data.physics.medium,
                                                   physics::angular_frequency(d.condition.f_hz), coupling);
  }
}

void fit_implicit_stats(Dataset& data) {
  const std::size_t dim = 2 * kSubunits;
  data.implicit_mean.assign(dim, 0.0);
  data.implicit_std.assign(dim, 0.0);
  const auto interval = [&](std::size_t i, double& mean, double& sd) {
    const double lo = i < kSubunits ? kDensityLo : kModulusLo;
    const double hi = i < kSubunits ? kDensityHi : kModulusHi;
    mean = 0.5 * (lo + hi);
    sd = (hi - lo) / std::sqrt(12.0);
  };
  const auto& g = data.train;
  if (g.size() < 2) {
    for (std::size_t i = 0; i < dim; ++i) interval(i, data.implicit_mean[i], data.implicit_std[i]);
    return;
  }
  for (const auto& c : g) {
    const auto raw = c.condition.implicit_raw();
    for (std::size_t i = 0; i < dim; ++i) data.implicit_mean[i] += raw[i];
  }
  for (auto& m : data.implicit_mean) m /= static_cast<double>(g.size());
  for (const auto& c : g) {
    const auto raw = c.condition.implicit_raw();
    for (std::size_t i = 0; i < dim; ++i) data.implicit_std[i] += std::pow(raw[i] - data.implicit_mean[i], 2);
  }
  for (std::size_t i = 0; i < dim; ++i) {
    data.implicit_std[i] = std::sqrt(data.implicit_std[i] / static_cast<double>(g.size()));
    if (data.implicit_std[i] == 0.0) {
      double unused = 0.0;
      interval(i, unused, data.implicit_std[i]);
    }
  }
}

}  // namespace

bool ConditionData::has_truth() const {
  return std::any_of(truth.begin(), truth.end(), [](const auto& v) { return !v.empty(); });
}

Dataset build_dataset(const DatasetOptions& options) {
  const auto& id = options.case_id;
  geometry::CaseConfig cfg = geometry::case_config(id);
  if (options.observations) cfg.observations = *options.observations;
  cfg.validate();

  Dataset data;
  data.case_id = id;
  data.seed = options.seed;
  data.physics = options.physics;
  data.cloud = geometry::build_case_geometry(cfg, options.seed);

  const bool desk = id == "manufactured";
  std::vector<ParametricCondition> conditions;
  std::size_t n_train = options.train_conditions, n_test = options.test_conditions;
  if (desk) {
    if (n_train > 1 || n_test > 0) throw ConfigError("dataset: the manufactured case has exactly one condition");
    ParametricCondition c;
    c.f_hz = kDeskWavenumber * data.physics.medium.c / (2.0 * physics::kPi);
    c.densities.fill(kWaterDensity);
    c.moduli.fill(kWaterModulus);
    conditions.push_back(c);
    n_train = 1;
    n_test = 0;
  } else {
    if (n_train == 0) n_train = 1000;
    if (n_test == 0) n_test = 200;
    if (id == "case3") {
      conditions = grouped_conditions(options.seed);
      if (n_train + n_test > conditions.size()) {
        throw ConfigError("dataset: case3 has only " + std::to_string(conditions.size()) + " conditions");
      }
      conditions.resize(n_train + n_test);
    } else {
      conditions = random_conditions(n_train + n_test, id != "case1", options.seed);
    }
  }

  const auto sensors = geometry::sample_observation_indices(data.cloud, cfg.observations, options.seed);
  for (std::size_t i = 0; i < conditions.size(); ++i) {
    conditions[i].validate();
    ConditionData d;
    d.condition = conditions[i];
    if (options.synthetic_truth) attach_truth(d, data, i, desk);
    const bool training = i < n_train;
    if (training && d.has_truth()) {
      d.observations.indices = sensors.indices;
      for (std::size_t t = 0; t < 3; ++t) {
        for (std::size_t idx : sensors.indices[t]) d.observations.values[t].push_back(d.truth[t][idx]);
      }
    }
    (training ? data.train : data.test).push_back(std::move(d));
  }

  fit_implicit_stats(data);
  data.f_min = data.f_max = conditions.front().f_hz;
  for (const auto& c : conditions) {
    data.f_min = std::min(data.f_min, c.f_hz);
    data.f_max = std::max(data.f_max, c.f_hz);
  }
  return data;
}

net::ModelParams init_model(const Dataset& data, std::uint64_t seed, const net::ArchConfig& arch) {
  net::ModelParams m = net::init_params(seed, arch);
  net::set_input_normalization(m, geometry::case_config(data.case_id).outer, data.f_min, data.f_max);
  net::set_implicit_stats(m, data.implicit_mean, data.implicit_std);
  return m;
}

std::string Dataset::manifest_json() const {
  nlohmann::ordered_json j;
  j["case"] = case_id;
  j["seed"] = seed;
  for (const auto* part : {&train, &test}) {
    auto& arr = j[part == &train ? "train" : "test"];
    arr = nlohmann::ordered_json::array();
    for (const auto& c : *part) {
      arr.push_back(nlohmann::ordered_json::parse(physics::condition_manifest_json(c.condition, physics)));
    }
  }
  return j.dump(2);
}

std::uint64_t Dataset::hash() const {
  std::ostringstream s;
  s << manifest_json();
  geometry::write_cloud_csv(s, cloud);
  for (const auto& c : train) {
    for (const auto& idx : c.observations.indices) {
      for (std::size_t i : idx) s << i << ',';
      s << ';';
    }
  }
  return io::fnv1a64(s.str());
}

}  // namespace mpipn::training
