#include "mpipn/physics.hpp"

#include <cmath>
#include <json.hpp>

#include "mpipn/error.hpp"

namespace mpipn::physics {

namespace {

constexpr cd kI{0.0, 1.0};

// Per-point scalar replicated over the (Re, Im) channels.
Var channel_constant(Tape& tape, const std::vector<double>& per_point) {
  Tensor t({per_point.size(), 2});
  for (std::size_t i = 0; i < per_point.size(); ++i) t(i, 0) = t(i, 1) = per_point[i];
  return tape.leaf(std::move(t));
}

void require_size(std::string_view what, std::size_t got, std::size_t want) {
  if (got != want) {
    throw ShapeError(std::string(what) + ": " + std::to_string(got) + " points, expected " + std::to_string(want));
  }
}

void require_derivatives(std::string_view what, const FieldVars& f) {
  if (!f.has_derivatives()) throw Error(std::string(what) + ": field derivatives are missing");
}

std::vector<double> component(const std::vector<geometry::BoundarySample>& at, bool normal, bool x, bool squared) {
  std::vector<double> out(at.size());
  for (std::size_t i = 0; i < at.size(); ++i) {
    const Point2 v = normal ? at[i].normal : at[i].tangent;
    const double c = x ? v.x : v.y;
    out[i] = squared ? c * c : c;
  }
  return out;
}

bool in_range(double v, double lo, double hi) {
  const double tol = 1e-9 * std::max(std::abs(lo), std::abs(hi));
  return v >= lo - tol && v <= hi + tol;
}

}  // namespace

std::vector<double> ParametricCondition::implicit_raw() const {
  std::vector<double> out(densities.begin(), densities.end());
  out.insert(out.end(), moduli.begin(), moduli.end());
  return out;
}

void ParametricCondition::validate() const {
  if (!(f_hz > 0.0) || !std::isfinite(f_hz)) throw ConfigError("condition: frequency must be positive");
  for (double r : densities) {
    if (!in_range(r, kWaterDensity / 3.0, 2.0 * kWaterDensity)) {
      throw ConfigError("condition: density " + std::to_string(r) + " outside [rho_w/3, 2 rho_w]");
    }
  }
  for (double e : moduli) {
    if (!in_range(e, kWaterModulus / 3.0, 5.0 * kWaterModulus)) {
      throw ConfigError("condition: modulus " + std::to_string(e) + " outside [E_w/3, 5 E_w]");
    }
  }
}

std::string to_string(WavenumberMode m) { return m == WavenumberMode::Standard ? "standard" : "paper_literal"; }
std::string to_string(CouplingMode m) {
  return m == CouplingMode::PaperLiteral ? "paper_literal" : "continuum_consistent";
}

WavenumberMode wavenumber_mode_from(std::string_view s) {
  if (s == "standard") return WavenumberMode::Standard;
  if (s == "paper_literal") return WavenumberMode::PaperLiteral;
  throw ConfigError("unknown wavenumber mode '" + std::string(s) + "'");
}

CouplingMode coupling_mode_from(std::string_view s) {
  if (s == "paper_literal") return CouplingMode::PaperLiteral;
  if (s == "continuum_consistent") return CouplingMode::ContinuumConsistent;
  throw ConfigError("unknown coupling mode '" + std::string(s) + "'");
}

double wavenumber(double f_hz, const Medium& medium, WavenumberMode mode) {
  if (!(f_hz > 0.0)) throw ConfigError("wavenumber: frequency must be positive");
  if (!(medium.c > 0.0)) throw ConfigError("wavenumber: sound speed must be positive");
  const double w = angular_frequency(f_hz);
  return mode == WavenumberMode::Standard ? w / medium.c : w * w / medium.c;
}

ComplexField ManufacturedField::evaluate(const std::vector<Point2>& points) const {
  ComplexField f;
  const std::size_t n = points.size();
  f.value.assign(n, {});
  f.dx.assign(n, {});
  f.dy.assign(n, {});
  f.dxx.assign(n, {});
  f.dyy.assign(n, {});
  for (const auto& w : waves) {
    for (std::size_t i = 0; i < n; ++i) {
      const double phase = w.k * (points[i].x * w.direction.x + points[i].y * w.direction.y);
      const cd p = w.amplitude * std::exp(-kI * phase);
      f.value[i] += p;
      f.dx[i] += -kI * w.k * w.direction.x * p;
      f.dy[i] += -kI * w.k * w.direction.y * p;
      f.dxx[i] += -w.k * w.k * w.direction.x * w.direction.x * p;
      f.dyy[i] += -w.k * w.k * w.direction.y * w.direction.y * p;
    }
  }
  return f;
}

cd ManufacturedField::value(Point2 p) const { return evaluate({p}).value.front(); }

ManufacturedField manufactured_solution(double k, cd amplitude, Point2 direction) {
  const double norm = std::hypot(direction.x, direction.y);
  if (std::abs(norm - 1.0) > 1e-12) throw ConfigError("manufactured_solution: direction must be a unit vector");
  return ManufacturedField{{PlaneWave{amplitude, direction, k}}};
}

ComplexField background_pressure(const std::vector<Point2>& points, const WaveSpec& wave, double k) {
  return manufactured_solution(k, {wave.p0, 0.0}, wave.ek).evaluate(points);
}

ComplexField add_fields(const ComplexField& a, const ComplexField& b) {
  require_size("add_fields", b.size(), a.size());
  ComplexField out = a;
  for (std::size_t i = 0; i < a.size(); ++i) {
    out.value[i] += b.value[i];
    out.dx[i] += b.dx[i];
    out.dy[i] += b.dy[i];
    out.dxx[i] += b.dxx[i];
    out.dyy[i] += b.dyy[i];
  }
  return out;
}

Tensor to_tensor(const std::vector<cd>& values) {
  Tensor t({values.size(), 2});
  for (std::size_t i = 0; i < values.size(); ++i) {
    t(i, 0) = values[i].real();
    t(i, 1) = values[i].imag();
  }
  return t;
}

std::vector<cd> to_complex(const Tensor& t) {
  if (t.cols() != 2) throw ShapeError("to_complex: expected N x 2, got " + t.shape_string());
  std::vector<cd> out(t.rows());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = {t(i, 0), t(i, 1)};
  return out;
}

FieldVars split_field(Var prediction) {
  FieldVars f;
  if (prediction.blocks() == 1) {
    f.value = prediction;
    return f;
  }
  if (prediction.blocks() != 5) {
    throw ShapeError("split_field: expected a jet seeded along x and y (5 blocks), got " +
                     std::to_string(prediction.blocks()));
  }
  f.value = ad::block(prediction, 0);
  f.dx = ad::block(prediction, 1);
  f.dxx = ad::block(prediction, 2);
  f.dy = ad::block(prediction, 3);
  f.dyy = ad::block(prediction, 4);
  return f;
}

FieldVars constant_field(Tape& tape, const ComplexField& field) {
  return {tape.leaf(to_tensor(field.value)), tape.leaf(to_tensor(field.dx)), tape.leaf(to_tensor(field.dxx)),
          tape.leaf(to_tensor(field.dy)), tape.leaf(to_tensor(field.dyy))};
}

Var residual_pad(const FieldVars& ps, const ComplexField& pb, double k) {
  require_derivatives("residual_pad", ps);
  require_size("residual_pad", pb.size(), ps.value.rows());
  Tape& tape = *ps.value.tape;
  std::vector<cd> background(pb.size());
  for (std::size_t i = 0; i < pb.size(); ++i) background[i] = pb.dxx[i] + pb.dyy[i] + k * k * pb.value[i];
  const Var lap = ad::add(ps.dxx, ps.dyy);
  return ad::add(ad::add(lap, ad::scale(ps.value, k * k)), tape.leaf(to_tensor(background)));
}

Var residual_pwr_real(const FieldVars& ps, const ComplexField& pb, const std::vector<geometry::BoundarySample>& at) {
  if (!ps.dx.valid() || !ps.dy.valid()) throw Error("residual_pwr: field derivatives are missing");
  require_size("residual_pwr", at.size(), ps.value.rows());
  require_size("residual_pwr", pb.size(), at.size());
  Tape& tape = *ps.value.tape;
  std::vector<cd> background(at.size());
  for (std::size_t i = 0; i < at.size(); ++i) {
    background[i] = -(at[i].normal.x * pb.dx[i] + at[i].normal.y * pb.dy[i]);
  }
  const Var nx = channel_constant(tape, component(at, true, true, false));
  const Var ny = channel_constant(tape, component(at, true, false, false));
  const Var flux = ad::add(ad::mul(nx, ps.dx), ad::mul(ny, ps.dy));
  return ad::sub(tape.leaf(to_tensor(background)), flux);
}

Var residual_pwr_imag(const FieldVars& ps, double k, const std::vector<geometry::BoundarySample>& at) {
  if (k == 0.0) throw ConfigError("residual_pwr: wavenumber must be nonzero");
  require_derivatives("residual_pwr", ps);
  require_size("residual_pwr", at.size(), ps.value.rows());
  Tape& tape = *ps.value.tape;
  const Var tx2 = channel_constant(tape, component(at, false, true, true));
  const Var ty2 = channel_constant(tape, component(at, false, false, true));
  const Var tangential = ad::add(ad::mul(tx2, ps.dxx), ad::mul(ty2, ps.dyy));
  return ad::add(ad::scale(ps.value, k), ad::scale(tangential, 1.0 / (2.0 * k)));
}

Var residual_asc(const FieldVars& ps, const ComplexField& pb, const std::vector<cd>& normal_displacement,
                 double omega, const std::vector<geometry::BoundarySample>& at, const Medium& medium,
                 CouplingMode mode) {
  if (normal_displacement.empty() && !at.empty()) throw Error("residual_asc: displacement is missing");
  require_size("residual_asc displacement", normal_displacement.size(), at.size());
  require_size("residual_asc", at.size(), ps.value.rows());
  require_size("residual_asc", pb.size(), at.size());
  Tape& tape = *ps.value.tape;
  const Var nx = channel_constant(tape, component(at, true, true, false));
  const Var ny = channel_constant(tape, component(at, true, false, false));
  std::vector<cd> constant(at.size());
  Var field_term;
  if (mode == CouplingMode::PaperLiteral) {
    require_derivatives("residual_asc", ps);
    for (std::size_t i = 0; i < at.size(); ++i) {
      constant[i] = at[i].normal.x * pb.dxx[i] + at[i].normal.y * pb.dyy[i] - omega * omega * normal_displacement[i];
    }
    field_term = ad::add(ad::mul(nx, ps.dxx), ad::mul(ny, ps.dyy));
  } else {
    if (!ps.dx.valid() || !ps.dy.valid()) throw Error("residual_asc: field derivatives are missing");
    if (!(medium.rho > 0.0)) throw ConfigError("residual_asc: density must be positive");
    for (std::size_t i = 0; i < at.size(); ++i) {
      constant[i] = (at[i].normal.x * pb.dx[i] + at[i].normal.y * pb.dy[i]) / medium.rho -
                    omega * omega * normal_displacement[i];
    }
    field_term = ad::scale(ad::add(ad::mul(nx, ps.dx), ad::mul(ny, ps.dy)), 1.0 / medium.rho);
  }
  return ad::add(field_term, tape.leaf(to_tensor(constant)));
}

Var l1_loss(Var residual) {
  return ad::scale(ad::sum(ad::abs(residual)), 1.0 / static_cast<double>(residual.rows()));
}

Var observation_sum(Var prediction, const std::vector<std::size_t>& indices, const std::vector<cd>& truth) {
  require_size("observation_sum truth", truth.size(), indices.size());
  if (indices.empty()) throw ConfigError("observation_sum: no observed points");
  const Var primal = prediction.blocks() == 1 ? prediction : ad::block(prediction, 0);
  const Var picked = ad::gather_rows(primal, indices);
  const Var err = ad::sub(picked, prediction.tape->leaf(to_tensor(truth)));
  return ad::sum(ad::square(err));
}

double loss_obs(const std::vector<cd>& pred, const std::vector<cd>& truth, bool* empty) {
  require_size("loss_obs", pred.size(), truth.size());
  if (empty) *empty = pred.empty();
  if (pred.empty()) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += std::norm(pred[i] - truth[i]);
  return s / static_cast<double>(pred.size());
}

double total_loss(const LossBreakdown& b, double alpha, double beta) {
  if (alpha < 0.0 || beta < 0.0) throw ConfigError("total_loss: weights must be nonnegative");
  return alpha * b.obs + beta * b.pde_sum();
}

std::vector<cd> derived_displacement(const ComplexField& total_field, const Medium& medium, double omega,
                                     const std::vector<geometry::BoundarySample>& at) {
  if (omega == 0.0) throw ConfigError("derived_displacement: angular frequency must be nonzero");
  require_size("derived_displacement", total_field.size(), at.size());
  std::vector<cd> u(at.size());
  for (std::size_t i = 0; i < at.size(); ++i) {
    const cd flux = at[i].normal.x * total_field.dx[i] + at[i].normal.y * total_field.dy[i];
    u[i] = flux / (medium.rho * omega * omega);
  }
  return u;
}

std::string condition_manifest_json(const ParametricCondition& cond, const PhysicsConfig& physics) {
  nlohmann::ordered_json j;
  j["f_hz"] = cond.f_hz;
  j["densities"] = cond.densities;
  j["moduli"] = cond.moduli;
  j["medium"] = {{"rho", physics.medium.rho}, {"c", physics.medium.c}};
  j["wave"] = {{"p0", physics.wave.p0}, {"ek", {physics.wave.ek.x, physics.wave.ek.y}}};
  j["modes"] = {{"wavenumber", to_string(physics.wavenumber_mode)}, {"coupling", to_string(physics.coupling_mode)}};
  return j.dump(2);
}

void parse_condition_manifest(const std::string& json, ParametricCondition& cond, PhysicsConfig& physics) {
  try {
    const auto j = nlohmann::json::parse(json);
    cond.f_hz = j.at("f_hz").get<double>();
    const auto d = j.at("densities").get<std::vector<double>>();
    const auto m = j.at("moduli").get<std::vector<double>>();
    if (d.size() != kSubunits || m.size() != kSubunits) throw IoError("manifest needs 25 densities and 25 moduli");
    std::copy(d.begin(), d.end(), cond.densities.begin());
    std::copy(m.begin(), m.end(), cond.moduli.begin());
    if (j.contains("medium")) {
      physics.medium.rho = j["medium"].value("rho", physics.medium.rho);
      physics.medium.c = j["medium"].value("c", physics.medium.c);
    }
    if (j.contains("wave")) {
      physics.wave.p0 = j["wave"].value("p0", physics.wave.p0);
      if (j["wave"].contains("ek")) {
        const auto ek = j["wave"]["ek"].get<std::vector<double>>();
        if (ek.size() != 2) throw IoError("manifest wave.ek must have two entries");
        physics.wave.ek = {ek[0], ek[1]};
      }
    }
    if (j.contains("modes")) {
      physics.wavenumber_mode = wavenumber_mode_from(j["modes"].value("wavenumber", "standard"));
      physics.coupling_mode = coupling_mode_from(j["modes"].value("coupling", "paper_literal"));
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("condition manifest: ") + e.what());
  }
}

}  // namespace mpipn::physics
