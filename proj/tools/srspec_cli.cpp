// srspec: simulate | label | train | infer | evaluate | bench
// Exit codes: 0 success, 2 validation error, 3 runtime/data error.

#include "srspec/experiment.hpp"

#include "CLI11.hpp"

#include <iostream>

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  unsigned workers = 1;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c, bool out_required = true) {
  cmd->add_option("--config", c.config, "experiment config (JSON); defaults apply when omitted")
      ->check(CLI::ExistingFile);
  cmd->add_option("--seed", c.seed, "override the config seed");
  cmd->add_option("--workers", c.workers, "worker threads (0 = all cores)")->default_val(1);
  auto* o = cmd->add_option("--out", c.out, "output directory");
  if (out_required) o->required();
}

srspec::RunContext context(const Common& c) {
  srspec::RunContext ctx;
  ctx.cfg = c.config.empty() ? srspec::ExperimentConfig{} : srspec::load_config(c.config);
  if (c.seed) ctx.cfg.seed = *c.seed;
  ctx.workers = srspec::resolve_workers(c.workers);
  return ctx;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Radar super-resolution spectrum toolkit"};
  app.set_version_flag("--version", std::string(srspec::kVersion));
  app.require_subcommand(1);

  Common sim_c, lab_c, tr_c, inf_c, ev_c, b_c;

  auto* sim = app.add_subcommand("simulate", "synthesize ADC cubes and a scene manifest");
  add_common(sim, sim_c);
  std::string split = "train";
  std::optional<std::size_t> frames;
  sim->add_option("--split", split, "train or test")->check(CLI::IsMember({"train", "test"}));
  sim->add_option("--frames", frames, "override the frame count");

  auto* lab = app.add_subcommand("label", "IAA-label every range-Doppler bin of a cube directory");
  add_common(lab, lab_c);
  std::string lab_in;
  lab->add_option("--cubes", lab_in, "directory written by simulate")->required();

  auto* tr = app.add_subcommand("train", "train one network per configured loss kind");
  add_common(tr, tr_c);
  std::string tr_data;
  bool resume = false;
  std::optional<int> epochs;
  tr->add_option("--data", tr_data, "records.bin or the directory written by label")->required();
  tr->add_flag("--resume", resume, "continue from checkpoints in --out");
  tr->add_option("--epochs", epochs, "override train.epochs");

  auto* inf = app.add_subcommand("infer", "range-azimuth maps for every cube");
  add_common(inf, inf_c);
  std::string inf_cubes;
  srspec::InferOptions iopt;
  std::vector<std::string> models;
  inf->add_option("--cubes", inf_cubes, "directory written by simulate")->required();
  inf->add_option("--model", models, "model file (repeatable)");
  inf->add_flag("--with-dbf", iopt.with_dbf, "also write DBF maps");
  inf->add_flag("--with-iaa", iopt.with_iaa, "also write IAA maps");
  inf->add_option("--pgm-bits", iopt.pgm_bits, "8 or 16")->check(CLI::IsMember({8, 16}))->default_val(8);

  auto* ev = app.add_subcommand("evaluate", "NMSE / SSIM / PSNR of predicted maps against reference maps");
  add_common(ev, ev_c);
  std::string truth, pred;
  bool db = false;
  ev->add_option("--truth", truth, "reference map directory")->required();
  ev->add_option("--pred", pred, "predicted map directory")->required();
  ev->add_flag("--db", db, "compare dB-scaled maps instead of linear ones");

  auto* b = app.add_subcommand("bench", "per-beam-vector latency of DBF, IAA and the network");
  add_common(b, b_c);
  std::string bench_model;
  b->add_option("--model", bench_model, "model file (default: untrained network of the configured shape)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*sim) {
      srspec::cmd_simulate(context(sim_c), sim_c.out, split, frames);
    } else if (*lab) {
      const auto rep = srspec::cmd_label(context(lab_c), lab_in, lab_c.out);
      if (!rep.failures.empty()) return 3;
    } else if (*tr) {
      srspec::cmd_train(context(tr_c), tr_data, tr_c.out, resume, epochs);
    } else if (*inf) {
      for (const auto& m : models) iopt.models.emplace_back(m);
      srspec::cmd_infer(context(inf_c), inf_cubes, inf_c.out, iopt);
    } else if (*ev) {
      auto ctx = context(ev_c);
      if (db) ctx.cfg.metrics_db = true;
      srspec::cmd_evaluate(ctx, truth, pred, ev_c.out, std::cout);
    } else if (*b) {
      std::optional<std::filesystem::path> mp;
      if (!bench_model.empty()) mp = bench_model;
      srspec::cmd_bench(context(b_c), mp, b_c.out);
    }
  } catch (const srspec::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
