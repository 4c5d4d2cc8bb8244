#include "mpipn/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <numeric>

#include "mpipn/error.hpp"
#include "mpipn/io.hpp"

namespace mpipn::eval {

namespace {

using geometry::Point2;

std::vector<cd> as_complex(const ad::Tensor& t) { return physics::to_complex(t); }

template <class T>
std::vector<T> pick(const std::vector<T>& v, const std::vector<std::size_t>& idx) {
  std::vector<T> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(v[i]);
  return out;
}

// Indices 0..n-1 not in the sorted `excluded` list.
std::vector<std::size_t> complement(std::size_t n, const std::vector<std::size_t>& excluded) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::binary_search(excluded.begin(), excluded.end(), i)) out.push_back(i);
  }
  return out;
}

// Disjoint-set forest with path halving.
struct UnionFind {
  std::vector<std::size_t> parent;
  explicit UnionFind(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), std::size_t{0}); }
  std::size_t find(std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  void unite(std::size_t a, std::size_t b) { parent[find(a)] = find(b); }
};

double dist(Point2 a, Point2 b) { return std::hypot(a.x - b.x, a.y - b.y); }

}  // namespace

double rde(const std::vector<cd>& pred, const std::vector<cd>& truth) {
  if (pred.size() != truth.size()) throw ShapeError("rde: prediction and truth lengths differ");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    num += std::abs(pred[i] - truth[i]);
    den += std::abs(truth[i]);
  }
  if (den == 0.0) throw ConfigError("rde: truth is identically zero");
  return num / den;
}

double ape(cd pred, cd truth) {
  const cd e = pred - truth;
  return std::abs(e.real()) + std::abs(e.imag());
}

std::vector<double> ape(const std::vector<cd>& pred, const std::vector<cd>& truth) {
  if (pred.size() != truth.size()) throw ShapeError("ape: prediction and truth lengths differ");
  std::vector<double> out(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) out[i] = ape(pred[i], truth[i]);
  return out;
}

double ConditionMetrics::average() const {
  double s = 0.0;
  int n = 0;
  for (const auto& r : rde) {
    if (r) {
      s += *r;
      ++n;
    }
  }
  return n ? s / n : 0.0;
}

double EvaluationReport::average_rde() const {
  double s = 0.0;
  int n = 0;
  for (const auto& d : domains) {
    if (d.count) {
      s += d.average;
      ++n;
    }
  }
  return n ? s / n : 0.0;
}

EvaluationReport evaluate(const net::ModelParams& model, const training::Dataset& data, const EvalOptions& options) {
  EvaluationReport report;
  report.label = options.label;
  report.dataset_hash = data.hash();
  const bool fallback = options.split == training::Split::Test && data.test.empty();
  const auto& split = data.split(fallback ? training::Split::Train : options.split);

  for (std::size_t c = 0; c < split.size(); ++c) {
    const auto& cond = split[c];
    if (!cond.has_truth()) throw ConfigError("evaluate: condition " + std::to_string(c) + " has no ground truth");
    const auto pred = net::forward(model, data.cloud, cond.condition.f_hz, cond.condition.implicit_raw());
    ConditionMetrics m;
    m.index = c;
    m.f_hz = cond.condition.f_hz;
    ApeMap map;
    map.condition = c;
    for (auto tag : geometry::kAllDomains) {
      const std::size_t d = geometry::domain_index(tag);
      const std::size_t n = data.cloud.size(tag);
      if (n == 0) continue;
      const auto scored =
          options.held_out_only ? complement(n, cond.observations.indices[d]) : complement(n, {});
      if (scored.empty()) continue;
      const auto p = pick(as_complex(pred[d]), scored);
      const auto t = pick(cond.truth[d], scored);
      m.rde[d] = rde(p, t);
      if (c < options.ape_conditions) {
        const auto pts = pick(data.cloud.points(tag), scored);
        const auto e = ape(p, t);
        map.points.insert(map.points.end(), pts.begin(), pts.end());
        map.ape.insert(map.ape.end(), e.begin(), e.end());
      }
    }
    report.conditions.push_back(m);
    if (c < options.ape_conditions) report.ape_maps.push_back(std::move(map));
  }

  for (std::size_t d = 0; d < 3; ++d) {
    std::vector<double> v;
    for (const auto& m : report.conditions) {
      if (m.rde[d]) v.push_back(*m.rde[d]);
    }
    auto& s = report.domains[d];
    s.count = v.size();
    if (v.empty()) continue;
    s.average = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    s.max = *std::max_element(v.begin(), v.end());
    s.min = *std::min_element(v.begin(), v.end());
    for (double x : v) s.variance += (x - s.average) * (x - s.average);
    s.variance /= static_cast<double>(v.size());
  }
  return report;
}

std::string report_csv(const EvaluationReport& report) {
  std::string out = "condition,f_hz,rde_interior,rde_radiation,rde_coupling,average\n";
  const auto cell = [](const std::optional<double>& v) { return v ? io::fmt(*v) : std::string(); };
  for (const auto& m : report.conditions) {
    out += std::to_string(m.index) + "," + io::fmt(m.f_hz);
    for (const auto& r : m.rde) out += "," + cell(r);
    out += "," + io::fmt(m.average()) + "\n";
  }
  const std::array<std::pair<const char*, double DomainSummary::*>, 4> rows = {
      {{"Average", &DomainSummary::average},
       {"Max", &DomainSummary::max},
       {"Min", &DomainSummary::min},
       {"Variance", &DomainSummary::variance}}};
  for (const auto& [name, field] : rows) {
    out += std::string(name) + ",";
    for (const auto& d : report.domains) out += "," + (d.count ? io::fmt(d.*field) : std::string());
    out += ",";
    if (field == &DomainSummary::average) out += io::fmt(report.average_rde());
    out += "\n";
  }
  return out;
}

std::string report_json(const EvaluationReport& report) {
  nlohmann::ordered_json j;
  j["label"] = report.label;
  j["dataset_hash"] = report.dataset_hash;
  j["conditions"] = report.conditions.size();
  auto& domains = j["domains"];
  for (auto tag : geometry::kAllDomains) {
    const auto& d = report.domains[geometry::domain_index(tag)];
    domains[std::string(geometry::domain_name(tag))] = {
        {"count", d.count}, {"average", d.average}, {"max", d.max}, {"min", d.min}, {"variance", d.variance}};
  }
  j["average_rde"] = report.average_rde();
  return j.dump(2);
}

std::string ape_csv(const ApeMap& map) {
  std::string out = "x,y,ape\n";
  for (std::size_t i = 0; i < map.points.size(); ++i) {
    out += io::fmt(map.points[i].x) + "," + io::fmt(map.points[i].y) + "," + io::fmt(map.ape[i]) + "\n";
  }
  return out;
}

double AblationResult::improvement_ratio() const {
  const double p = physics.average_rde();
  return p > 0.0 ? data_driven.average_rde() / p : std::numeric_limits<double>::infinity();
}

AblationResult ablation_run(const training::Dataset& data, const training::TrainConfig& config,
                            std::uint64_t model_seed, const EvalOptions& options) {
  const net::ModelParams init = training::init_model(data, model_seed);
  AblationResult r;

  training::TrainConfig arm = config;
  if (!config.out_dir.empty()) arm.out_dir = config.out_dir / "physics";
  auto a = training::train(init, data, arm);
  EvalOptions o = options;
  o.label = "physics_informed";
  r.physics = evaluate(a.model, data, o);
  r.physics_history = std::move(a.history);

  arm.beta = 0.0;
  if (!config.out_dir.empty()) arm.out_dir = config.out_dir / "data_driven";
  auto b = training::train(init, data, arm);
  o.label = "data_driven";
  r.data_driven = evaluate(b.model, data, o);
  r.data_history = std::move(b.history);
  return r;
}

std::string ablation_csv(const AblationResult& result) {
  std::string out = "arm,dataset_hash,rde_interior,rde_radiation,rde_coupling,average,improvement_ratio\n";
  for (const auto* rep : {&result.physics, &result.data_driven}) {
    out += rep->label + "," + std::to_string(rep->dataset_hash);
    for (const auto& d : rep->domains) out += "," + (d.count ? io::fmt(d.average) : std::string());
    out += "," + io::fmt(rep->average_rde()) + "," + io::fmt(result.improvement_ratio()) + "\n";
  }
  return out;
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw ConfigError("percentile: no values");
  std::sort(values.begin(), values.end());
  const double pos = std::clamp(q, 0.0, 100.0) / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

double cluster_radius(const std::vector<Point2>& points) {
  if (points.size() < 2) return 0.0;
  std::vector<double> nn(points.size(), std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < points.size(); ++i) {
    for (std::size_t j = 0; j < points.size(); ++j) {
      if (i != j) nn[i] = std::min(nn[i], dist(points[i], points[j]));
    }
  }
  return 2.0 * percentile(nn, 50.0);
}

std::vector<Cluster> high_error_clusters(const std::vector<Point2>& points, const std::vector<double>& ape,
                                         double threshold, double radius) {
  if (points.size() != ape.size()) throw ShapeError("high_error_clusters: points and errors differ in length");
  std::vector<std::size_t> hot;
  for (std::size_t i = 0; i < ape.size(); ++i) {
    if (ape[i] > threshold) hot.push_back(i);
  }
  UnionFind uf(hot.size());
  for (std::size_t a = 0; a < hot.size(); ++a) {
    for (std::size_t b = a + 1; b < hot.size(); ++b) {
      if (dist(points[hot[a]], points[hot[b]]) <= radius) uf.unite(a, b);
    }
  }
  std::vector<std::size_t> root_slot(hot.size(), SIZE_MAX);
  std::vector<Cluster> out;
  for (std::size_t a = 0; a < hot.size(); ++a) {
    const std::size_t r = uf.find(a);
    if (root_slot[r] == SIZE_MAX) {
      root_slot[r] = out.size();
      out.push_back({});
    }
    auto& c = out[root_slot[r]];
    ++c.size;
    c.area += radius * radius / 4.0;
  }
  return out;
}

std::vector<ClusterSnapshot> cluster_snapshot(const std::vector<std::pair<std::size_t, std::filesystem::path>>& ckpts,
                                              const training::Dataset& data, std::size_t condition) {
  if (condition >= data.train.size()) throw ConfigError("cluster_snapshot: condition out of range");
  const auto& cond = data.train[condition];
  if (!cond.has_truth()) throw ConfigError("cluster_snapshot: condition has no ground truth");
  const auto pts = data.cloud.interior;
  const double radius = cluster_radius(pts);
  std::vector<ClusterSnapshot> out;
  for (const auto& [epoch, path] : ckpts) {
    if (!std::filesystem::exists(path)) throw IoError("missing checkpoint " + path.string());
    const auto model = net::load_checkpoint(path);
    const auto pred = net::forward(model, data.cloud, cond.condition.f_hz, cond.condition.implicit_raw());
    const auto e = ape(as_complex(pred[0]), cond.truth[0]);
    ClusterSnapshot s;
    s.epoch = epoch;
    s.threshold = percentile(e, 90.0);
    s.clusters = high_error_clusters(pts, e, s.threshold, radius);
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace mpipn::eval
