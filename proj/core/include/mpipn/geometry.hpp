#pragma once

#include <array>
#include <complex>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace mpipn::geometry {

struct Point2 {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Point2&, const Point2&) = default;
};

enum class DomainTag : int { PressureAcoustic = 0, PlaneWaveRadiation = 1, AcousticStructureCoupling = 2 };

inline constexpr std::array<DomainTag, 3> kAllDomains = {
    DomainTag::PressureAcoustic, DomainTag::PlaneWaveRadiation, DomainTag::AcousticStructureCoupling};

inline constexpr std::size_t domain_index(DomainTag tag) { return static_cast<std::size_t>(tag); }

/// Short stable names used in files: "interior", "radiation", "coupling".
std::string_view domain_name(DomainTag tag);
DomainTag domain_from_name(std::string_view name);

/// Axis-aligned rectangle [x0, x1] x [y0, y1].
struct Rect {
  double x0 = 0.0, y0 = 0.0, x1 = 1.0, y1 = 1.0;
  double width() const { return x1 - x0; }
  double height() const { return y1 - y0; }
  double perimeter() const { return 2.0 * (width() + height()); }
  /// Euclidean distance from p to the closed rectangle (0 inside).
  double distance(Point2 p) const;
};

struct BoundarySample {
  Point2 point;
  Point2 normal;
  Point2 tangent;
  int subunit = -1;  // metasurface subunit on the solid's top face, else -1
};

/// Counts ordered (interior, radiation, coupling).
struct DomainCounts {
  std::size_t interior = 0;
  std::size_t radiation = 0;
  std::size_t coupling = 0;

  std::size_t total() const { return interior + radiation + coupling; }
  std::size_t operator[](DomainTag tag) const;
  friend bool operator==(const DomainCounts&, const DomainCounts&) = default;
};

struct CaseConfig {
  std::string case_id;
  Rect outer;
  std::optional<Rect> solid;
  double thickness = 0.08;
  int subunits = 25;
  DomainCounts targets;
  DomainCounts observations;
  /// Interior points within this distance of the solid are sampled at half spacing.
  double refine_band = 0.0;

  void validate() const;
};

/// Presets: "case1", "case2", "case3", "manufactured" (unit-square desk case),
/// "degenerate" (unit square, centered solid, 4/4/4 points).
CaseConfig case_config(std::string_view name);

struct PointCloudSet {
  std::string case_id;
  std::vector<Point2> interior;
  std::vector<BoundarySample> radiation;
  std::vector<BoundarySample> coupling;

  DomainCounts counts() const { return {interior.size(), radiation.size(), coupling.size()}; }
  std::size_t size(DomainTag tag) const { return counts()[tag]; }
  /// Coordinates of the points of one domain, in storage order.
  std::vector<Point2> points(DomainTag tag) const;
  const std::vector<BoundarySample>& boundary(DomainTag tag) const;
};

/// Deterministic cloud for (config, seed).
PointCloudSet build_case_geometry(const CaseConfig& config, std::uint64_t seed);

DomainTag classify_point(Point2 p, const CaseConfig& config);
Point2 boundary_normal(Point2 p, const CaseConfig& config);
inline Point2 tangent_of(Point2 n) { return {-n.y, n.x}; }

/// Metasurface subunit of a point on the solid's top face, or -1.
int subunit_of(Point2 p, const CaseConfig& config);

/// Complex scattered pressure per domain, aligned with the cloud's storage order.
using DomainField = std::array<std::vector<std::complex<double>>, 3>;

struct ObservationSet {
  std::array<std::vector<std::size_t>, 3> indices;
  std::array<std::vector<std::complex<double>>, 3> values;

  std::size_t total() const { return indices[0].size() + indices[1].size() + indices[2].size(); }
  DomainCounts counts() const { return {indices[0].size(), indices[1].size(), indices[2].size()}; }
};

/// Uniform draws without replacement per domain; indices sorted ascending.
ObservationSet sample_observations(const PointCloudSet& cloud, const DomainCounts& counts, std::uint64_t seed,
                                   const DomainField& truth);

/// Observation positions only (values left empty); same draws as sample_observations.
ObservationSet sample_observation_indices(const PointCloudSet& cloud, const DomainCounts& counts,
                                          std::uint64_t seed);

// CSV `x,y,tag,nx,ny,subunit`; numbers written with round-trip precision.
void write_cloud_csv(std::ostream& out, const PointCloudSet& cloud);
PointCloudSet read_cloud_csv(std::istream& in, std::string case_id = {});

// CSV `domain,index,ps_re,ps_im`.
void write_observations_csv(std::ostream& out, const ObservationSet& obs);
ObservationSet read_observations_csv(std::istream& in);

}  // namespace mpipn::geometry
