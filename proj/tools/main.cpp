#include <CLI11.hpp>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "mpipn/error.hpp"
#include "mpipn/evaluation.hpp"
#include "mpipn/io.hpp"
#include "mpipn/training.hpp"
#include "run_config.hpp"

namespace fs = std::filesystem;
using namespace mpipn;
using cd = std::complex<double>;

namespace {

// Exit codes.
constexpr int kOk = 0, kUsage = 1, kIo = 2, kNumeric = 3;

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string checkpoint;
  std::string out;
  std::string case_id;
};

cli::RunConfig resolve(const Common& c) {
  cli::RunConfig rc = c.config_path.empty() ? cli::RunConfig{} : cli::load_run_config(c.config_path);
  if (!c.case_id.empty()) {
    geometry::case_config(c.case_id);
    rc.case_id = c.case_id;
  }
  if (const char* env = std::getenv("MPIPN_SEED")) {
    try {
      rc.seed = static_cast<std::uint64_t>(io::to_int(env));
    } catch (const Error&) {
      throw ConfigError("MPIPN_SEED is not an integer: '" + std::string(env) + "'");
    }
  }
  if (c.seed) rc.seed = *c.seed;
  if (!c.out.empty()) rc.out_dir = c.out;
  return rc;
}

std::string counts_line(const geometry::DomainCounts& n) {
  return std::to_string(n.interior) + " " + std::to_string(n.radiation) + " " + std::to_string(n.coupling);
}

int cmd_geometry(const cli::RunConfig& rc) {
  const auto cfg = geometry::case_config(rc.case_id);
  const auto cloud = geometry::build_case_geometry(cfg, rc.seed);
  std::ostringstream s;
  geometry::write_cloud_csv(s, cloud);
  io::write_file(rc.out_dir / "cloud.csv", s.str());
  std::cout << counts_line(cloud.counts()) << "\n";
  return kOk;
}

std::string observations_csv(const training::Dataset& data) {
  std::string out = "condition,domain,index,ps_re,ps_im\n";
  for (std::size_t c = 0; c < data.train.size(); ++c) {
    const auto& obs = data.train[c].observations;
    for (auto tag : geometry::kAllDomains) {
      const std::size_t d = geometry::domain_index(tag);
      for (std::size_t i = 0; i < obs.indices[d].size(); ++i) {
        out += std::to_string(c) + "," + std::string(geometry::domain_name(tag)) + "," +
               std::to_string(obs.indices[d][i]) + "," + io::fmt(obs.values[d][i].real()) + "," +
               io::fmt(obs.values[d][i].imag()) + "\n";
      }
    }
  }
  return out;
}

int cmd_dataset(const cli::RunConfig& rc) {
  const auto data = training::build_dataset(rc.dataset_options());
  std::ostringstream cloud;
  geometry::write_cloud_csv(cloud, data.cloud);
  io::write_file(rc.out_dir / "cloud.csv", cloud.str());
  io::write_file(rc.out_dir / "manifest.json", data.manifest_json());
  io::write_file(rc.out_dir / "observations.csv", observations_csv(data));
  std::cout << counts_line(data.cloud.counts()) << "\n"
            << "train " << data.train.size() << " test " << data.test.size() << "\n"
            << "dataset_hash " << data.hash() << "\n";
  return kOk;
}

int cmd_train(const cli::RunConfig& rc) {
  const auto data = training::build_dataset(rc.dataset_options());
  io::write_file(rc.out_dir / "run.json", cli::to_json(rc));
  auto cfg = rc.train_config();
  cfg.on_epoch = [&](std::size_t epoch, const physics::LossBreakdown& b) {
    if (epoch % 100 == 0 || epoch == cfg.epochs) {
      std::fprintf(stderr, "epoch %zu total %.6e obs %.6e pde %.6e\n", epoch, b.total, b.obs, b.pde_sum());
    }
  };
  const auto result = training::train(training::init_model(data, rc.seed, rc.arch), data, cfg);
  std::cout << "dataset_hash " << data.hash() << "\n";
  if (!result.history.empty()) std::cout << "final_total " << io::fmt(result.history.back().loss.total) << "\n";
  std::cout << "checkpoint " << training::checkpoint_path(rc.out_dir, cfg.epochs).string() << "\n";
  return kOk;
}

void write_report(const fs::path& dir, const std::string& stem, const eval::EvaluationReport& r) {
  io::write_file(dir / (stem + ".csv"), eval::report_csv(r));
  io::write_file(dir / (stem + ".json"), eval::report_json(r));
  for (const auto& m : r.ape_maps) {
    io::write_file(dir / (stem + "_ape_" + std::to_string(m.condition) + ".csv"), eval::ape_csv(m));
  }
}

eval::EvalOptions eval_options(const cli::RunConfig& rc) {
  eval::EvalOptions o;
  o.held_out_only = rc.held_out_only;
  o.ape_conditions = rc.ape_conditions;
  return o;
}

int cmd_eval(const cli::RunConfig& rc, const std::string& checkpoint) {
  const fs::path ckpt = checkpoint.empty() ? training::checkpoint_path(rc.out_dir, rc.train.epochs) : fs::path(checkpoint);
  if (!fs::exists(ckpt)) throw IoError("checkpoint not found: " + ckpt.string());
  const auto model = net::load_checkpoint(ckpt);
  const auto data = training::build_dataset(rc.dataset_options());
  const auto report = eval::evaluate(model, data, eval_options(rc));
  write_report(rc.out_dir, "report", report);
  for (auto tag : geometry::kAllDomains) {
    const auto& d = report.domains[geometry::domain_index(tag)];
    std::cout << geometry::domain_name(tag) << " " << (d.count ? io::fmt(d.average) : std::string("-")) << "\n";
  }
  std::cout << "average " << io::fmt(report.average_rde()) << "\n";
  return kOk;
}

int cmd_ablate(const cli::RunConfig& rc) {
  const auto data = training::build_dataset(rc.dataset_options());
  io::write_file(rc.out_dir / "run.json", cli::to_json(rc));
  const auto r = eval::ablation_run(data, rc.train_config(), rc.seed, eval_options(rc));
  io::write_file(rc.out_dir / "ablation.csv", eval::ablation_csv(r));
  write_report(rc.out_dir, "physics_report", r.physics);
  write_report(rc.out_dir, "data_driven_report", r.data_driven);
  std::cout << eval::ablation_csv(r);
  return kOk;
}

std::string long_history(const std::vector<training::EpochRecord>& h) {
  std::string out = "epoch,component,value\n";
  for (const auto& r : h) {
    const std::pair<const char*, double> parts[] = {{"L_pad", r.loss.pad}, {"L_pwr_r", r.loss.pwr_r},
                                                    {"L_pwr_i", r.loss.pwr_i}, {"L_asc", r.loss.asc},
                                                    {"L_obs", r.loss.obs}, {"total", r.loss.total}};
    for (const auto& [name, v] : parts) out += std::to_string(r.epoch) + "," + name + "," + io::fmt(v) + "\n";
  }
  return out;
}

int cmd_export(const fs::path& run_dir, const std::string& out, const std::string& checkpoint) {
  const fs::path history = run_dir / "history.csv";
  const fs::path run_json = run_dir / "run.json";
  if (!fs::exists(history) || !fs::exists(run_json)) {
    throw IoError("export: " + run_dir.string() + " holds no finished run (history.csv and run.json needed)");
  }
  const fs::path dest = out.empty() ? run_dir / "export" : fs::path(out);
  const auto rc = cli::load_run_config(run_json);
  io::write_file(dest / "loss_long.csv", long_history(training::parse_history_csv(io::read_file(history))));

  const fs::path ckpt = checkpoint.empty() ? training::checkpoint_path(run_dir, rc.train.epochs) : fs::path(checkpoint);
  if (!fs::exists(ckpt)) throw IoError("export: checkpoint not found: " + ckpt.string());
  const auto model = net::load_checkpoint(ckpt);
  const auto data = training::build_dataset(rc.dataset_options());
  const auto report = eval::evaluate(model, data, eval_options(rc));
  for (const auto& m : report.ape_maps) {
    io::write_file(dest / ("ape_" + std::to_string(m.condition) + ".csv"), eval::ape_csv(m));
  }
  // Predicted and true fields of the first scored condition.
  const auto& conds = data.test.empty() ? data.train : data.test;
  const auto& cond = conds.front();
  const auto pred = net::forward(model, data.cloud, cond.condition.f_hz, cond.condition.implicit_raw());
  std::string fields = "x,y,domain,pred_re,pred_im,truth_re,truth_im\n";
  for (auto tag : geometry::kAllDomains) {
    const std::size_t d = geometry::domain_index(tag);
    const auto pts = data.cloud.points(tag);
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const cd t = cond.truth[d].empty() ? cd{} : cond.truth[d][i];
      fields += io::fmt(pts[i].x) + "," + io::fmt(pts[i].y) + "," + std::string(geometry::domain_name(tag)) + "," +
                io::fmt(pred[d](i, 0)) + "," + io::fmt(pred[d](i, 1)) + "," + io::fmt(t.real()) + "," +
                io::fmt(t.imag()) + "\n";
    }
  }
  io::write_file(dest / "fields.csv", fields);
  io::write_file(dest / "summary.json", eval::report_json(report));
  std::cout << "exported " << dest.string() << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  ad::retain_freed_memory();
  CLI::App app{"Point-cloud physics-informed solver for parametric Helmholtz acoustic-structure problems"};
  app.require_subcommand(1);
  Common common;
  const auto add_common = [&](CLI::App* sub, bool with_checkpoint) {
    sub->add_option("--config", common.config_path, "Run configuration (JSON)")->check(CLI::ExistingFile);
    sub->add_option("--seed", common.seed, "Seed; overrides MPIPN_SEED and the config");
    sub->add_option("--out", common.out, "Output directory");
    sub->add_option("--case", common.case_id, "case1 | case2 | case3 | manufactured | degenerate");
    if (with_checkpoint) sub->add_option("--checkpoint", common.checkpoint, "Checkpoint file");
  };
  auto* geometry_cmd = app.add_subcommand("geometry", "Write the point cloud and print per-domain counts");
  auto* dataset_cmd = app.add_subcommand("dataset", "Write the condition manifest and observations");
  auto* train_cmd = app.add_subcommand("train", "Train and write checkpoints plus history.csv");
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint (RDE tables and APE maps)");
  auto* ablate_cmd = app.add_subcommand("ablate", "Physics-informed vs data-driven paired run");
  auto* export_cmd = app.add_subcommand("export", "Plot-ready bundle from a finished run directory");
  for (auto* s : {geometry_cmd, dataset_cmd, train_cmd, ablate_cmd}) add_common(s, false);
  add_common(eval_cmd, true);
  std::string run_dir;
  export_cmd->add_option("run_dir", run_dir, "Run directory")->required();
  export_cmd->add_option("--out", common.out, "Destination (default RUN_DIR/export)");
  export_cmd->add_option("--checkpoint", common.checkpoint, "Checkpoint file (default: the final one)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*export_cmd) return cmd_export(run_dir, common.out, common.checkpoint);
    const auto rc = resolve(common);
    if (*geometry_cmd) return cmd_geometry(rc);
    if (*dataset_cmd) return cmd_dataset(rc);
    if (*train_cmd) return cmd_train(rc);
    if (*eval_cmd) return cmd_eval(rc, common.checkpoint);
    if (*ablate_cmd) return cmd_ablate(rc);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return kUsage;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kIo;
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }
  return kUsage;
}
