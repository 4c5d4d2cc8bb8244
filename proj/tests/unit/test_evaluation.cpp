#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>

#include "mpipn/error.hpp"
#include "mpipn/evaluation.hpp"
#include "mpipn/rng.hpp"

using namespace mpipn;
using namespace mpipn::eval;
namespace fs = std::filesystem;

namespace {

std::vector<cd> random_field(std::uint64_t seed, std::size_t n) {
  Rng rng(seed);
  std::vector<cd> v(n);
  for (auto& z : v) z = {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
  return v;
}

training::Dataset tiny_desk(std::size_t n_obs = 15) {
  training::DatasetOptions o;
  o.observations = geometry::DomainCounts{n_obs, 0, 0};
  return training::build_dataset(o);
}

}  // namespace

TEST_CASE("rde examples") {
  const auto truth = random_field(1, 30);
  CHECK(rde(truth, truth) == 0.0);
  std::vector<cd> twice = truth, zero(truth.size());
  for (auto& z : twice) z *= 2.0;
  CHECK(rde(twice, truth) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(rde(zero, truth) == 1.0);
  CHECK_THROWS_AS(rde(truth, zero), ConfigError);
  CHECK_THROWS_AS(rde({cd{}}, truth), ShapeError);
}

TEST_CASE("rde scales with the error and ignores point order") {
  const auto p = random_field(2, 40);
  const auto e = random_field(3, 40);
  std::vector<cd> p1 = p, p2 = p;
  for (std::size_t i = 0; i < p.size(); ++i) {
    p1[i] += e[i];
    p2[i] += 2.0 * e[i];
  }
  CHECK(rde(p2, p) == doctest::Approx(2.0 * rde(p1, p)).epsilon(1e-14));

  std::vector<std::size_t> perm(p.size());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng(4);
  rng.shuffle(perm.begin(), perm.end());
  std::vector<cd> pp, pt;
  for (std::size_t i : perm) {
    pp.push_back(p1[i]);
    pt.push_back(p[i]);
  }
  CHECK(rde(pp, pt) == doctest::Approx(rde(p1, p)).epsilon(1e-14));
}

TEST_CASE("ape examples and monotonicity") {
  CHECK(ape(cd(0.3, -0.2), cd(0.3, -0.2)) == 0.0);
  CHECK(ape(cd(1.5, 0.0), cd(1.0, 0.0)) == 0.5);
  CHECK(ape(cd(1.0, 1.0), cd(0.0, 0.0)) == 2.0);

  const auto truth = random_field(5, 25);
  double last = -1.0;
  for (double m : {0.0, 0.01, 0.1, 0.5, 2.0}) {
    std::vector<cd> pred = truth;
    for (auto& z : pred) z += cd(m, -m);
    const auto a = ape(pred, truth);
    const double mean = std::accumulate(a.begin(), a.end(), 0.0) / static_cast<double>(a.size());
    CHECK(mean > last);
    last = mean;
  }
}

TEST_CASE("percentile and cluster radius") {
  CHECK(percentile({3.0, 1.0, 2.0}, 50.0) == 2.0);
  CHECK(percentile({0.0, 10.0}, 90.0) == doctest::Approx(9.0));
  CHECK_THROWS_AS(percentile({}, 50.0), ConfigError);
  const std::vector<geometry::Point2> grid = {{0, 0}, {1, 0}, {2, 0}, {0, 1}, {1, 1}, {2, 1}};
  CHECK(cluster_radius(grid) == 2.0);
}

TEST_CASE("high-error clusters") {
  std::vector<geometry::Point2> pts;
  for (int i = 0; i < 10; ++i) {
    for (int j = 0; j < 10; ++j) pts.push_back({0.1 * i, 0.1 * j});
  }
  const double radius = cluster_radius(pts);
  std::vector<double> e(pts.size(), 0.0);
  CHECK(high_error_clusters(pts, e, percentile(e, 90.0), radius).empty());

  e[55] = 1.0;
  auto c = high_error_clusters(pts, e, percentile(e, 90.0), radius);
  REQUIRE(c.size() == 1);
  CHECK(c[0].size == 1);

  // Two separated patches.
  e.assign(pts.size(), 0.0);
  for (std::size_t i : {0, 1, 10, 99, 98}) e[i] = 1.0;
  c = high_error_clusters(pts, e, 0.5, radius);
  REQUIRE(c.size() == 2);
  CHECK(c[0].size + c[1].size == 5);
  CHECK(c[0].area == doctest::Approx(static_cast<double>(c[0].size) * radius * radius / 4.0));
}

TEST_CASE("evaluation report layout on the desk case") {
  const auto d = tiny_desk();
  const auto model = training::init_model(d, 0);
  const auto r = evaluate(model, d, {});
  REQUIRE(r.conditions.size() == 1);
  CHECK(r.domains[0].count == 1);
  CHECK(r.domains[1].count == 0);
  CHECK(r.domains[0].min <= r.domains[0].average);
  CHECK(r.domains[0].average <= r.domains[0].max);
  REQUIRE(r.ape_maps.size() == 1);
  CHECK(r.ape_maps[0].points.size() == 485);  // held-out points only

  // Scoring every point instead of the held-out ones.
  EvalOptions all;
  all.held_out_only = false;
  CHECK(evaluate(model, d, all).ape_maps[0].points.size() == 500);

  const std::string csv = report_csv(r);
  CHECK(csv.rfind("condition,f_hz,rde_interior,rde_radiation,rde_coupling,average\n", 0) == 0);
  for (const char* row : {"\nAverage,", "\nMax,", "\nMin,", "\nVariance,"}) CHECK(csv.find(row) != std::string::npos);
  CHECK(report_json(r).find("\"interior\"") != std::string::npos);
  CHECK(ape_csv(r.ape_maps[0]).rfind("x,y,ape\n", 0) == 0);
}

TEST_CASE("ablation with beta zero in both arms gives identical reports") {
  const auto d = tiny_desk();
  training::TrainConfig cfg;
  cfg.epochs = 3;
  cfg.beta = 0.0;
  const auto r = ablation_run(d, cfg, 1);
  CHECK(report_csv(r.physics) == report_csv(r.data_driven));
  CHECK(r.physics.dataset_hash == r.data_driven.dataset_hash);
  CHECK(r.improvement_ratio() == 1.0);
  const std::string csv = ablation_csv(r);
  CHECK(csv.find("improvement_ratio") != std::string::npos);
}

TEST_CASE("cluster snapshots need their checkpoints") {
  const auto d = tiny_desk();
  const fs::path dir = fs::temp_directory_path() / "mpipn_test_clusters";
  fs::remove_all(dir);
  training::TrainConfig cfg;
  cfg.epochs = 2;
  cfg.out_dir = dir;
  training::train(training::init_model(d, 0), d, cfg);
  const auto snaps = cluster_snapshot({{0, training::checkpoint_path(dir, 0)}, {2, training::checkpoint_path(dir, 2)}}, d);
  REQUIRE(snaps.size() == 2);
  for (const auto& s : snaps) {
    std::size_t members = 0;
    for (const auto& c : s.clusters) members += c.size;
    CHECK(members <= 50);  // at most the points above the 90th percentile of 500
    CHECK(members >= 1);
  }
  CHECK_THROWS_AS(cluster_snapshot({{5, dir / "ckpt_5.bin"}}, d), IoError);
  fs::remove_all(dir);
}
