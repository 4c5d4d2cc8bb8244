#include "mpipn/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>

#include "mpipn/error.hpp"
#include "mpipn/io.hpp"
#include "mpipn/rng.hpp"

namespace mpipn::geometry {

namespace {

constexpr double kWaterSoundSpeed = 1481.0;
constexpr double kLowestFrequency = 300.0;

double tolerance(const CaseConfig& c) {
  const double scale = std::max({1.0, std::abs(c.outer.x0), std::abs(c.outer.x1), std::abs(c.outer.y0),
                                  std::abs(c.outer.y1)});
  return 1e-9 * scale;
}

bool near(double a, double b, double tol) { return std::abs(a - b) <= tol; }

bool inside_closed(const Rect& r, Point2 p, double tol) {
  return p.x >= r.x0 - tol && p.x <= r.x1 + tol && p.y >= r.y0 - tol && p.y <= r.y1 + tol;
}

bool inside_open(const Rect& r, Point2 p, double tol) {
  return p.x > r.x0 + tol && p.x < r.x1 - tol && p.y > r.y0 + tol && p.y < r.y1 - tol;
}

// Outward normal of a rectangle at a point on its perimeter; vertical edges own corners.
std::optional<Point2> rect_normal(const Rect& r, Point2 p, double tol) {
  if (!inside_closed(r, p, tol)) return std::nullopt;
  if (near(p.x, r.x0, tol)) return Point2{-1.0, 0.0};
  if (near(p.x, r.x1, tol)) return Point2{1.0, 0.0};
  if (near(p.y, r.y0, tol)) return Point2{0.0, -1.0};
  if (near(p.y, r.y1, tol)) return Point2{0.0, 1.0};
  return std::nullopt;
}

// Points per edge (left, right, bottom, top) for n equally spaced samples on the
// perimeter. Vertical edges carry both corners, horizontal edges neither.
std::array<std::size_t, 4> allocate_edges(const Rect& r, std::size_t n) {
  if (n < 4) throw ConfigError("boundary of " + std::to_string(n) + " points cannot cover four corners");
  const double h = r.perimeter() / static_cast<double>(n);
  const auto vert = static_cast<std::size_t>(std::max(2.0, std::round(r.height() / h) + 1.0));
  const auto horiz = static_cast<std::size_t>(std::max(0.0, std::round(r.width() / h) - 1.0));
  std::array<std::size_t, 4> counts = {vert, vert, horiz, horiz};
  const double lengths[4] = {r.height(), r.height(), r.width(), r.width()};
  auto spacing = [&](int e, std::size_t c) {
    return e < 2 ? lengths[e] / static_cast<double>(c - 1) : lengths[e] / static_cast<double>(c + 1);
  };
  auto total = [&] { return counts[0] + counts[1] + counts[2] + counts[3]; };
  while (total() < n) {
    int best = 0;
    for (int e = 1; e < 4; ++e) {
      if (spacing(e, counts[e]) > spacing(best, counts[best])) best = e;
    }
    ++counts[best];
  }
  while (total() > n) {
    int best = -1;
    for (int e = 0; e < 4; ++e) {
      const std::size_t floor = e < 2 ? 2 : 0;
      if (counts[e] <= floor) continue;
      if (best < 0 || spacing(e, counts[e]) < spacing(best, counts[best])) best = e;
    }
    --counts[best];
  }
  return counts;
}

std::vector<BoundarySample> rect_boundary(const Rect& r, std::size_t n, const CaseConfig& config, bool solid) {
  std::vector<BoundarySample> out;
  if (n == 0) return out;
  const auto counts = allocate_edges(r, n);
  out.reserve(n);
  auto push = [&](Point2 p, Point2 normal) {
    BoundarySample s{p, normal, tangent_of(normal), -1};
    if (solid) s.subunit = subunit_of(p, config);
    out.push_back(s);
  };
  for (int side = 0; side < 2; ++side) {
    const double x = side == 0 ? r.x0 : r.x1;
    const std::size_t c = counts[static_cast<std::size_t>(side)];
    for (std::size_t j = 0; j < c; ++j) {
      const double y = j + 1 == c ? r.y1 : r.y0 + r.height() * static_cast<double>(j) / static_cast<double>(c - 1);
      push({x, y}, {side == 0 ? -1.0 : 1.0, 0.0});
    }
  }
  for (int side = 0; side < 2; ++side) {
    const double y = side == 0 ? r.y0 : r.y1;
    const std::size_t c = counts[static_cast<std::size_t>(2 + side)];
    for (std::size_t j = 0; j < c; ++j) {
      const double x = r.x0 + r.width() * static_cast<double>(j + 1) / static_cast<double>(c + 1);
      push({x, y}, {0.0, side == 0 ? -1.0 : 1.0});
    }
  }
  return out;
}

double outer_clearance(const Rect& r, Point2 p) {
  return std::min({p.x - r.x0, r.x1 - p.x, p.y - r.y0, r.y1 - p.y});
}

double clearance(const CaseConfig& c, Point2 p) {
  double d = outer_clearance(c.outer, p);
  if (c.solid) d = std::min(d, c.solid->distance(p));
  return d;
}

// Jittered cell centres at resolution nx: coarse cells, split 2x2 inside the refinement band.
std::vector<Point2> interior_candidates(const CaseConfig& c, std::size_t nx, std::uint64_t seed) {
  const Rect& o = c.outer;
  const double sx = o.width() / static_cast<double>(nx);
  const auto ny = static_cast<std::size_t>(std::max(1.0, std::round(o.height() / sx)));
  const double sy = o.height() / static_cast<double>(ny);
  Rng rng = Rng::derive(seed, 1);
  std::vector<Point2> pts;
  auto emit = [&](Point2 centre, double s) {
    const double jx = rng.uniform(-0.2, 0.2) * s;
    const double jy = rng.uniform(-0.2, 0.2) * s;
    if (clearance(c, centre) < 0.3 * s) return;
    const Point2 moved{centre.x + jx, centre.y + jy};
    pts.push_back(clearance(c, moved) >= 0.05 * s ? moved : centre);
  };
  for (std::size_t j = 0; j < ny; ++j) {
    for (std::size_t i = 0; i < nx; ++i) {
      const Point2 centre{o.x0 + (static_cast<double>(i) + 0.5) * sx, o.y0 + (static_cast<double>(j) + 0.5) * sy};
      const double s = std::min(sx, sy);
      const bool refine = c.solid && c.refine_band > 0.0 && c.solid->distance(centre) <= c.refine_band;
      if (!refine) {
        emit(centre, s);
        continue;
      }
      for (int q = 0; q < 4; ++q) {
        const Point2 sub{centre.x + ((q & 1) ? 0.25 : -0.25) * sx, centre.y + ((q & 2) ? 0.25 : -0.25) * sy};
        emit(sub, 0.5 * s);
      }
    }
  }
  return pts;
}

std::vector<Point2> build_interior(const CaseConfig& c, std::uint64_t seed) {
  const std::size_t target = c.targets.interior;
  if (target == 0) return {};
  for (std::size_t nx = 1; nx <= 20000; ++nx) {
    auto pts = interior_candidates(c, nx, seed);
    if (pts.size() < target) continue;
    Rng rng = Rng::derive(seed, 2);
    while (pts.size() > target) {
      const auto k = rng.below(pts.size());
      pts.erase(pts.begin() + static_cast<std::ptrdiff_t>(k));
    }
    return pts;
  }
  throw ConfigError("interior target " + std::to_string(target) + " is infeasible for case " + c.case_id);
}

}  // namespace

std::string_view domain_name(DomainTag tag) {
  switch (tag) {
    case DomainTag::PressureAcoustic: return "interior";
    case DomainTag::PlaneWaveRadiation: return "radiation";
    case DomainTag::AcousticStructureCoupling: return "coupling";
  }
  return "?";
}

DomainTag domain_from_name(std::string_view name) {
  for (auto tag : kAllDomains) {
    if (domain_name(tag) == name) return tag;
  }
  throw ConfigError("unknown domain tag '" + std::string(name) + "'");
}

double Rect::distance(Point2 p) const {
  const double dx = std::max({x0 - p.x, 0.0, p.x - x1});
  const double dy = std::max({y0 - p.y, 0.0, p.y - y1});
  return std::hypot(dx, dy);
}

std::size_t DomainCounts::operator[](DomainTag tag) const {
  switch (tag) {
    case DomainTag::PressureAcoustic: return interior;
    case DomainTag::PlaneWaveRadiation: return radiation;
    case DomainTag::AcousticStructureCoupling: return coupling;
  }
  return 0;
}

void CaseConfig::validate() const {
  if (!(outer.width() > 0.0 && outer.height() > 0.0)) throw ConfigError("case " + case_id + ": empty outer rectangle");
  if (solid) {
    const double tol = tolerance(*this);
    if (!(solid->width() > 0.0 && solid->height() > 0.0) ||
        !inside_open(outer, {solid->x0, solid->y0}, tol) || !inside_open(outer, {solid->x1, solid->y1}, tol)) {
      throw ConfigError("case " + case_id + ": solid must lie strictly inside the outer rectangle");
    }
  } else if (targets.coupling > 0) {
    throw ConfigError("case " + case_id + ": coupling points requested without a solid");
  }
  if (subunits < 1) throw ConfigError("case " + case_id + ": subunit count must be positive");
  if (observations.interior > targets.interior || observations.radiation > targets.radiation ||
      observations.coupling > targets.coupling) {
    throw ConfigError("case " + case_id + ": observation counts exceed point targets");
  }
}

CaseConfig case_config(std::string_view name) {
  CaseConfig c;
  c.case_id = std::string(name);
  if (name == "case1" || name == "case2") {
    c.outer = {-10.0, -4.0, 10.0, 11.0};
    c.solid = Rect{-5.0, -2.0, 5.0, 0.08};
    c.targets = {1377, 88, 158};
    c.observations = {30, 4, 16};
    c.refine_band = kWaterSoundSpeed / kLowestFrequency;
  } else if (name == "case3") {
    c.outer = {-6.0, -4.0, 14.0, 11.0};
    c.solid = Rect{0.0, -2.0, 10.0, 0.08};
    c.targets = {4928, 140, 554};
    c.observations = {100, 10, 40};
    c.refine_band = kWaterSoundSpeed / kLowestFrequency;
  } else if (name == "manufactured") {
    c.outer = {0.0, 0.0, 1.0, 1.0};
    c.targets = {500, 0, 0};
    c.observations = {15, 0, 0};
  } else if (name == "degenerate") {
    c.outer = {0.0, 0.0, 1.0, 1.0};
    c.solid = Rect{0.4, 0.4, 0.6, 0.6};
    c.thickness = 0.0;
    c.targets = {4, 4, 4};
    c.observations = {0, 0, 0};
  } else {
    throw ConfigError("unknown case '" + std::string(name) + "' (expected case1, case2, case3, manufactured)");
  }
  return c;
}

std::vector<Point2> PointCloudSet::points(DomainTag tag) const {
  if (tag == DomainTag::PressureAcoustic) return interior;
  std::vector<Point2> out;
  for (const auto& s : boundary(tag)) out.push_back(s.point);
  return out;
}

const std::vector<BoundarySample>& PointCloudSet::boundary(DomainTag tag) const {
  if (tag == DomainTag::PlaneWaveRadiation) return radiation;
  if (tag == DomainTag::AcousticStructureCoupling) return coupling;
  throw ConfigError("interior points carry no boundary samples");
}

PointCloudSet build_case_geometry(const CaseConfig& config, std::uint64_t seed) {
  config.validate();
  PointCloudSet cloud;
  cloud.case_id = config.case_id;
  cloud.radiation = rect_boundary(config.outer, config.targets.radiation, config, false);
  if (config.solid) cloud.coupling = rect_boundary(*config.solid, config.targets.coupling, config, true);
  cloud.interior = build_interior(config, seed);
  return cloud;
}

DomainTag classify_point(Point2 p, const CaseConfig& config) {
  const double tol = tolerance(config);
  if (!std::isfinite(p.x) || !std::isfinite(p.y) || !inside_closed(config.outer, p, tol)) {
    throw ConfigError("point (" + io::fmt(p.x) + ", " + io::fmt(p.y) + ") lies outside the fluid region");
  }
  if (rect_normal(config.outer, p, tol)) return DomainTag::PlaneWaveRadiation;
  if (config.solid) {
    if (inside_open(*config.solid, p, tol)) {
      throw ConfigError("point (" + io::fmt(p.x) + ", " + io::fmt(p.y) + ") lies inside the solid");
    }
    if (rect_normal(*config.solid, p, tol)) return DomainTag::AcousticStructureCoupling;
  }
  return DomainTag::PressureAcoustic;
}

Point2 boundary_normal(Point2 p, const CaseConfig& config) {
  const DomainTag tag = classify_point(p, config);
  const double tol = tolerance(config);
  if (tag == DomainTag::PlaneWaveRadiation) return *rect_normal(config.outer, p, tol);
  if (tag == DomainTag::AcousticStructureCoupling) return *rect_normal(*config.solid, p, tol);
  throw ConfigError("point (" + io::fmt(p.x) + ", " + io::fmt(p.y) + ") is interior and has no normal");
}

int subunit_of(Point2 p, const CaseConfig& config) {
  if (!config.solid) return -1;
  const Rect& s = *config.solid;
  const double tol = tolerance(config);
  if (!near(p.y, s.y1, tol) || p.x <= s.x0 + tol || p.x >= s.x1 - tol) return -1;
  const int idx = static_cast<int>(std::floor(config.subunits * (p.x - s.x0) / s.width()));
  return std::clamp(idx, 0, config.subunits - 1);
}

ObservationSet sample_observation_indices(const PointCloudSet& cloud, const DomainCounts& counts,
                                          std::uint64_t seed) {
  ObservationSet obs;
  for (auto tag : kAllDomains) {
    const std::size_t d = domain_index(tag);
    const std::size_t n = cloud.size(tag), k = counts[tag];
    if (k > n) {
      throw ConfigError("cannot observe " + std::to_string(k) + " of " + std::to_string(n) + " " +
                        std::string(domain_name(tag)) + " points");
    }
    std::vector<std::size_t> pool(n);
    for (std::size_t i = 0; i < n; ++i) pool[i] = i;
    Rng rng = Rng::derive(seed, 100 + d);
    for (std::size_t i = 0; i < k; ++i) {
      const auto j = i + rng.below(n - i);
      std::swap(pool[i], pool[j]);
    }
    pool.resize(k);
    std::sort(pool.begin(), pool.end());
    obs.indices[d] = std::move(pool);
  }
  return obs;
}

ObservationSet sample_observations(const PointCloudSet& cloud, const DomainCounts& counts, std::uint64_t seed,
                                   const DomainField& truth) {
  ObservationSet obs = sample_observation_indices(cloud, counts, seed);
  for (auto tag : kAllDomains) {
    const std::size_t d = domain_index(tag);
    if (!obs.indices[d].empty() && truth[d].size() != cloud.size(tag)) {
      throw ShapeError("truth for " + std::string(domain_name(tag)) + " has " + std::to_string(truth[d].size()) +
                       " values, cloud has " + std::to_string(cloud.size(tag)));
    }
    for (auto i : obs.indices[d]) obs.values[d].push_back(truth[d][i]);
  }
  return obs;
}

void write_cloud_csv(std::ostream& out, const PointCloudSet& cloud) {
  out << "x,y,tag,nx,ny,subunit\n";
  for (const auto& p : cloud.interior) out << io::fmt(p.x) << ',' << io::fmt(p.y) << ",interior,,,\n";
  for (auto tag : {DomainTag::PlaneWaveRadiation, DomainTag::AcousticStructureCoupling}) {
    for (const auto& s : cloud.boundary(tag)) {
      out << io::fmt(s.point.x) << ',' << io::fmt(s.point.y) << ',' << domain_name(tag) << ',' << io::fmt(s.normal.x)
          << ',' << io::fmt(s.normal.y) << ',';
      if (s.subunit >= 0) out << s.subunit;
      out << '\n';
    }
  }
}

PointCloudSet read_cloud_csv(std::istream& in, std::string case_id) {
  const auto table = io::read_csv(in);
  const auto cx = table.column("x"), cy = table.column("y"), ct = table.column("tag");
  const auto cnx = table.column("nx"), cny = table.column("ny"), cs = table.column("subunit");
  PointCloudSet cloud;
  cloud.case_id = std::move(case_id);
  for (const auto& row : table.rows) {
    const Point2 p{io::to_double(row[cx]), io::to_double(row[cy])};
    const DomainTag tag = domain_from_name(row[ct]);
    if (tag == DomainTag::PressureAcoustic) {
      cloud.interior.push_back(p);
      continue;
    }
    const Point2 n{io::to_double(row[cnx]), io::to_double(row[cny])};
    BoundarySample s{p, n, tangent_of(n), row[cs].empty() ? -1 : static_cast<int>(io::to_int(row[cs]))};
    (tag == DomainTag::PlaneWaveRadiation ? cloud.radiation : cloud.coupling).push_back(s);
  }
  return cloud;
}

void write_observations_csv(std::ostream& out, const ObservationSet& obs) {
  out << "domain,index,ps_re,ps_im\n";
  for (auto tag : kAllDomains) {
    const std::size_t d = domain_index(tag);
    for (std::size_t i = 0; i < obs.indices[d].size(); ++i) {
      const auto v = i < obs.values[d].size() ? obs.values[d][i] : std::complex<double>{};
      out << domain_name(tag) << ',' << obs.indices[d][i] << ',' << io::fmt(v.real()) << ',' << io::fmt(v.imag())
          << '\n';
    }
  }
}

ObservationSet read_observations_csv(std::istream& in) {
  const auto table = io::read_csv(in);
  const auto cd = table.column("domain"), ci = table.column("index");
  const auto cr = table.column("ps_re"), cm = table.column("ps_im");
  ObservationSet obs;
  for (const auto& row : table.rows) {
    const std::size_t d = domain_index(domain_from_name(row[cd]));
    const auto idx = io::to_int(row[ci]);
    if (idx < 0) throw IoError("negative observation index");
    obs.indices[d].push_back(static_cast<std::size_t>(idx));
    obs.values[d].emplace_back(io::to_double(row[cr]), io::to_double(row[cm]));
  }
  return obs;
}

}  // namespace mpipn::geometry
