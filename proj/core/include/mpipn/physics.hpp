#pragma once

#include <array>
#include <complex>
#include <string>
#include <vector>

#include "mpipn/autodiff/ops.hpp"
#include "mpipn/geometry.hpp"

namespace mpipn::physics {

using cd = std::complex<double>;
using ad::Tape;
using ad::Tensor;
using ad::Var;
using geometry::Point2;

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kWaterDensity = 1000.0;     // kg/m^3
inline constexpr double kWaterModulus = 2.25e6;     // Pa
inline constexpr double kWaterSoundSpeed = 1481.0;  // m/s
inline constexpr std::size_t kSubunits = 25;

enum class WavenumberMode { Standard, PaperLiteral };
enum class CouplingMode { PaperLiteral, ContinuumConsistent };

struct Medium {
  double rho = kWaterDensity;
  double c = kWaterSoundSpeed;
};

struct WaveSpec {
  double p0 = 1.0;
  Point2 ek{0.0, -1.0};  // travelling downward onto the solid
};

/// One member of the parametric family.
struct ParametricCondition {
  double f_hz = 300.0;
  std::array<double, kSubunits> densities{};
  std::array<double, kSubunits> moduli{};

  /// Densities 1..25 then moduli 1..25.
  std::vector<double> implicit_raw() const;
  /// Throws ConfigError unless f > 0 and every quantity lies in the sampling intervals.
  void validate() const;
  friend bool operator==(const ParametricCondition&, const ParametricCondition&) = default;
};

struct PhysicsConfig {
  Medium medium;
  WaveSpec wave;
  WavenumberMode wavenumber_mode = WavenumberMode::Standard;
  CouplingMode coupling_mode = CouplingMode::PaperLiteral;
  double alpha = 1.0;
  double beta = 0.1;
};

std::string to_string(WavenumberMode m);
std::string to_string(CouplingMode m);
WavenumberMode wavenumber_mode_from(std::string_view s);
CouplingMode coupling_mode_from(std::string_view s);

/// standard: 2 pi f / c; paper_literal: (2 pi f)^2 / c.
double wavenumber(double f_hz, const Medium& medium, WavenumberMode mode = WavenumberMode::Standard);
inline double angular_frequency(double f_hz) { return 2.0 * kPi * f_hz; }

/// Complex field with closed-form first and diagonal second derivatives per point.
struct ComplexField {
  std::vector<cd> value, dx, dy, dxx, dyy;
  std::size_t size() const { return value.size(); }
};

/// A e^{-i k (x . d)}.
struct PlaneWave {
  cd amplitude{1.0, 0.0};
  Point2 direction{1.0, 0.0};
  double k = 1.0;
};

/// Superposition of plane waves; each satisfies grad^2 p + k^2 p = 0 for its own k.
struct ManufacturedField {
  std::vector<PlaneWave> waves;
  ComplexField evaluate(const std::vector<Point2>& points) const;
  cd value(Point2 p) const;
};

ManufacturedField manufactured_solution(double k, cd amplitude, Point2 direction);
ComplexField background_pressure(const std::vector<Point2>& points, const WaveSpec& wave, double k);

/// Network field on a tape: N x 2 (Re, Im) value plus derivatives along x and y.
/// Derivative entries stay invalid when the tape carries no jets.
struct FieldVars {
  Var value, dx, dxx, dy, dyy;
  bool has_derivatives() const { return dx.valid() && dxx.valid() && dy.valid() && dyy.valid(); }
};

/// Splits a jet seeded along (x, y) into its five blocks; a plain value gives only `value`.
FieldVars split_field(Var prediction);
/// Closed-form field as constant tape leaves.
FieldVars constant_field(Tape& tape, const ComplexField& field);

Tensor to_tensor(const std::vector<cd>& values);
std::vector<cd> to_complex(const Tensor& t);

// Per-point complex residuals (N x 2).

/// lap(ps) + lap(pb) + k^2 (ps + pb).
Var residual_pad(const FieldVars& ps, const ComplexField& pb, double k);
/// -n . (grad ps + grad pb).
Var residual_pwr_real(const FieldVars& ps, const ComplexField& pb, const std::vector<geometry::BoundarySample>& at);
/// k ps + (tx^2 ps_xx + ty^2 ps_yy) / (2k).
Var residual_pwr_imag(const FieldVars& ps, double k, const std::vector<geometry::BoundarySample>& at);
/// paper_literal: nx pt_xx + ny pt_yy - omega^2 u_n; continuum_consistent: (1/rho) n . grad pt - omega^2 u_n.
Var residual_asc(const FieldVars& ps, const ComplexField& pb, const std::vector<cd>& normal_displacement,
                 double omega, const std::vector<geometry::BoundarySample>& at, const Medium& medium,
                 CouplingMode mode);

/// Mean over points of |Re| + |Im|.
Var l1_loss(Var residual);

/// Sum over observed points of |pred - truth|^2 (to be divided by the global N4).
Var observation_sum(Var prediction, const std::vector<std::size_t>& indices, const std::vector<cd>& truth);

struct LossBreakdown {
  double pad = 0.0, pwr_r = 0.0, pwr_i = 0.0, asc = 0.0, obs = 0.0;
  double total = 0.0;
  bool no_observations = false;
  double pde_sum() const { return pad + pwr_r + pwr_i + asc; }
};

/// Mean squared complex error; empty sets give 0 with `empty` raised.
double loss_obs(const std::vector<cd>& pred, const std::vector<cd>& truth, bool* empty = nullptr);

/// alpha * L_obs + beta * (L_pad + L_pwr_r + L_pwr_i + L_asc).
double total_loss(const LossBreakdown& b, double alpha = 1.0, double beta = 0.1);

/// n . u = (n . grad pt) / (rho omega^2) at each boundary sample.
std::vector<cd> derived_displacement(const ComplexField& total_field, const Medium& medium, double omega,
                                     const std::vector<geometry::BoundarySample>& at);

ComplexField add_fields(const ComplexField& a, const ComplexField& b);

/// JSON condition manifest: f_hz, densities[25], moduli[25], medium {rho, c},
/// wave {p0, ek}, modes {wavenumber, coupling}.
std::string condition_manifest_json(const ParametricCondition& cond, const PhysicsConfig& physics);
void parse_condition_manifest(const std::string& json, ParametricCondition& cond, PhysicsConfig& physics);

}  // namespace mpipn::physics
