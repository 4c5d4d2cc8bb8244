#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "mpipn/error.hpp"
#include "mpipn/io.hpp"
#include "mpipn/rng.hpp"
#include "mpipn/training.hpp"

namespace mpipn::training {

namespace {

using ad::Tensor;
using ad::Var;
using geometry::DomainTag;

constexpr std::uint64_t kShuffleStream = 20;

std::vector<double> column(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

void add_into(Tensor& acc, const Tensor& g) {
  auto a = acc.data();
  const auto b = g.data();
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
}

}  // namespace

void TrainConfig::validate() const {
  optimizer.validate();
  if (alpha < 0.0 || beta < 0.0) throw ConfigError("train: loss weights must be nonnegative");
  if (!(divergence_threshold > 0.0)) throw ConfigError("train: divergence threshold must be positive");
}

double TrainConfig::learning_rate(std::size_t epoch) const {
  const double base = optimizer.radam.lr;
  if (final_lr < 0.0 || epochs <= 1) return base;
  const double t = static_cast<double>(epoch - 1) / static_cast<double>(epochs - 1);
  return final_lr + 0.5 * (base - final_lr) * (1.0 + std::cos(physics::kPi * t));
}

double TrainConfig::pde_weight(std::size_t epoch) const {
  if (beta_warmup == 0 || epoch >= beta_warmup) return beta;
  return beta * static_cast<double>(epoch) / static_cast<double>(beta_warmup);
}

physics::LossBreakdown condition_loss(const net::ModelParams& model, const Dataset& data, const ConditionData& cond,
                                      double alpha, double beta, std::vector<Tensor>* grads) {
  if (grads && grads->empty()) {
    for (const auto& t : model.tensors) grads->push_back(Tensor::zeros(t.value.rows(), t.value.cols()));
  }
  if (grads && grads->size() != model.tensors.size()) {
    throw ShapeError("condition_loss: " + std::to_string(grads->size()) + " gradient tensors for " +
                     std::to_string(model.tensors.size()) + " model tensors");
  }
  const auto& phys = data.physics;
  const double f = cond.condition.f_hz;
  const double k = physics::wavenumber(f, phys.medium, phys.wavenumber_mode);
  const auto code = net::encode_implicit(cond.condition.implicit_raw(), column(model.at("implicit.mean")),
                                         column(model.at("implicit.std")));
  const std::size_t n_obs = cond.observations.total();
  const bool jets = beta > 0.0;
  static constexpr std::array<std::size_t, 2> kAxes = {0, 1};

  physics::LossBreakdown b;
  b.no_observations = n_obs == 0;
  for (auto tag : geometry::kAllDomains) {
    const std::size_t d = geometry::domain_index(tag);
    const auto pts = data.cloud.points(tag);
    if (pts.empty()) continue;
    const auto& obs_idx = cond.observations.indices[d];
    if (!jets && obs_idx.empty()) continue;

    Tensor stacked({pts.size(), 3});
    for (std::size_t i = 0; i < pts.size(); ++i) {
      stacked(i, 0) = pts[i].x;
      stacked(i, 1) = pts[i].y;
      stacked(i, 2) = f;
    }
    ad::Tape tape;
    const net::Bound p = net::bind(tape, model, grads != nullptr);
    const Var input = jets ? tape.leaf(ad::seed_jet(stacked, kAxes), false, 5) : tape.leaf(stacked);
    const Var pred = net::forward_domain(input, code, tag, p);

    Var objective;
    if (jets) {
      const physics::FieldVars ps = physics::split_field(pred);
      const auto pb = physics::background_pressure(pts, phys.wave, k);
      Var pde;
      switch (tag) {
        case DomainTag::PressureAcoustic: {
          pde = physics::l1_loss(physics::residual_pad(ps, pb, k));
          b.pad = pde.value().item();
          break;
        }
        case DomainTag::PlaneWaveRadiation: {
          const auto& at = data.cloud.radiation;
          const Var lr = physics::l1_loss(physics::residual_pwr_real(ps, pb, at));
          const Var li = physics::l1_loss(physics::residual_pwr_imag(ps, k, at));
          b.pwr_r = lr.value().item();
          b.pwr_i = li.value().item();
          pde = ad::add(lr, li);
          break;
        }
        case DomainTag::AcousticStructureCoupling: {
          // Without supplied displacement the coupling term cannot be formed.
          if (cond.displacement.empty()) break;
          pde = physics::l1_loss(physics::residual_asc(ps, pb, cond.displacement, physics::angular_frequency(f),
                                                       data.cloud.coupling, phys.medium, phys.coupling_mode));
          b.asc = pde.value().item();
          break;
        }
      }
      if (pde.valid()) objective = ad::scale(pde, beta);
    }
    if (!obs_idx.empty()) {
      const Var s = ad::scale(physics::observation_sum(pred, obs_idx, cond.observations.values[d]),
                              1.0 / static_cast<double>(n_obs));
      b.obs += s.value().item();
      const Var weighted = ad::scale(s, alpha);
      objective = objective.valid() ? ad::add(objective, weighted) : weighted;
    }
    if (grads && objective.valid()) {
      tape.backward(objective);
      for (std::size_t i = 0; i < model.tensors.size(); ++i) {
        if (model.tensors[i].trainable) add_into((*grads)[i], tape.grad(p.vars[i]));
      }
    }
  }
  b.total = physics::total_loss(b, alpha, beta);
  return b;
}

std::filesystem::path checkpoint_path(const std::filesystem::path& dir, std::size_t epoch) {
  return dir / ("ckpt_" + std::to_string(epoch) + ".bin");
}

std::string history_csv(const std::vector<EpochRecord>& history) {
  std::string out = "epoch,L_pad,L_pwr_r,L_pwr_i,L_asc,L_obs,total\n";
  for (const auto& r : history) {
    const auto& l = r.loss;
    out += std::to_string(r.epoch);
    for (double v : {l.pad, l.pwr_r, l.pwr_i, l.asc, l.obs, l.total}) out += "," + io::fmt(v);
    out += '\n';
  }
  return out;
}

std::vector<EpochRecord> parse_history_csv(const std::string& text) {
  std::istringstream in(text);
  const auto table = io::read_csv(in);
  const std::array<std::size_t, 7> col = {table.column("epoch"), table.column("L_pad"), table.column("L_pwr_r"),
                                          table.column("L_pwr_i"), table.column("L_asc"), table.column("L_obs"),
                                          table.column("total")};
  std::vector<EpochRecord> out;
  for (const auto& row : table.rows) {
    EpochRecord r;
    r.epoch = static_cast<std::size_t>(io::to_int(row.at(col[0])));
    r.loss.pad = io::to_double(row.at(col[1]));
    r.loss.pwr_r = io::to_double(row.at(col[2]));
    r.loss.pwr_i = io::to_double(row.at(col[3]));
    r.loss.asc = io::to_double(row.at(col[4]));
    r.loss.obs = io::to_double(row.at(col[5]));
    r.loss.total = io::to_double(row.at(col[6]));
    out.push_back(r);
  }
  return out;
}

TrainResult train(net::ModelParams model, const Dataset& data, const TrainConfig& config) {
  config.validate();
  if (data.train.empty()) throw ConfigError("train: the training set is empty");

  TrainResult result;
  const bool files = !config.out_dir.empty();
  const auto write_history = [&] {
    if (files) io::write_file(config.out_dir / "history.csv", history_csv(result.history));
  };
  if (files) net::save_checkpoint(checkpoint_path(config.out_dir, 0), model);

  Optimizer opt(model, config.optimizer);
  Rng order_rng = Rng::derive(config.seed, kShuffleStream);
  std::vector<std::size_t> order(data.train.size());

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    order_rng.shuffle(order.begin(), order.end());
    opt.set_learning_rate(config.learning_rate(epoch));
    const double beta = config.pde_weight(epoch);

    physics::LossBreakdown mean;
    for (std::size_t c : order) {
      std::vector<Tensor> grads;
      grads.reserve(model.tensors.size());
      for (const auto& t : model.tensors) grads.push_back(Tensor::zeros(t.value.rows(), t.value.cols()));
      const auto b = condition_loss(model, data, data.train[c], config.alpha, beta, &grads);
      if (!std::isfinite(b.total) || b.total > config.divergence_threshold) {
        write_history();
        throw NumericError("training diverged at epoch " + std::to_string(epoch) + " (loss " + io::fmt(b.total) + ")");
      }
      opt.step(model, grads);
      mean.pad += b.pad;
      mean.pwr_r += b.pwr_r;
      mean.pwr_i += b.pwr_i;
      mean.asc += b.asc;
      mean.obs += b.obs;
      mean.no_observations = mean.no_observations || b.no_observations;
    }
    const double n = static_cast<double>(order.size());
    mean.pad /= n;
    mean.pwr_r /= n;
    mean.pwr_i /= n;
    mean.asc /= n;
    mean.obs /= n;
    mean.total = physics::total_loss(mean, config.alpha, beta);
    result.history.push_back({epoch, mean});
    if (config.on_epoch) config.on_epoch(epoch, mean);

    const bool periodic = config.checkpoint_every > 0 && epoch % config.checkpoint_every == 0;
    const bool snapshot = std::find(config.snapshot_epochs.begin(), config.snapshot_epochs.end(), epoch) !=
                          config.snapshot_epochs.end();
    if (files && (periodic || snapshot || epoch == config.epochs)) {
      net::save_checkpoint(checkpoint_path(config.out_dir, epoch), model);
      write_history();
    }
  }
  write_history();
  result.model = std::move(model);
  return result;
}

}  // namespace mpipn::training
