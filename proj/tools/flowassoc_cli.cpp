#include <CLI11.hpp>
#include <cstdio>
#include <iostream>
#include <optional>

#include "flowassoc/config.hpp"
#include "flowassoc/errors.hpp"
#include "flowassoc/experiment.hpp"
#include "flowassoc/mot_io.hpp"

using namespace flowassoc;

namespace {

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool negate = false;
  bool two_stage = false;
  bool no_scene = false;
};

config::ExperimentConfig load(const Common& c) {
  config::ExperimentConfig e =
      c.config_path.empty() ? config::default_experiment() : config::experiment_from(config::load_config(c.config_path));
  if (c.seed) e.seed = *c.seed;
  if (c.negate) e.tracker.assoc.negate = true;
  if (c.two_stage) e.tracker.two_stage = true;
  if (c.no_scene) e.flow.scene_conditioning = false;
  return e;
}

std::string one_line(std::string s) {
  for (auto& ch : s)
    if (ch == '\n') ch = ' ';
  return s;
}

void emit(const std::string& path, const std::string& text) {
  if (path.empty()) {
    std::cout << text;
  } else {
    io::write_atomic(path, text);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tracking-by-detection with likelihood-based association costs"};
  app.require_subcommand(1);
  Common c;
  auto common = [&c](CLI::App* sub, bool out_required) {
    sub->add_option("--config", c.config_path, "experiment config file")->check(CLI::ExistingFile);
    sub->add_option("--seed", c.seed, "global seed (overrides the config)");
    auto* o = sub->add_option("--out", c.out, "output path");
    if (out_required) o->required();
  };

  auto* sim_cmd = app.add_subcommand("simulate", "write train/ and test/ scenario suites");
  common(sim_cmd, true);

  std::string data, checkpoint, provider = "iou", kind = "flow";
  auto* train_cmd = app.add_subcommand("train-flow", "train a flow on the inliers of a simulated dataset");
  common(train_cmd, true);
  train_cmd->add_option("--data", data, "dataset directory")->required();
  train_cmd->add_option("--provider", kind, "flow or factorized")->check(CLI::IsMember({"flow", "factorized"}));
  train_cmd->add_flag("--no-scene-conditioning", c.no_scene, "ignore the scene cluster");

  auto* track_cmd = app.add_subcommand("track", "run the tracker over every sequence of a dataset");
  common(track_cmd, true);
  track_cmd->add_option("--data", data, "dataset directory")->required();
  track_cmd->add_option("--provider", provider, "iou, euclidean, flow or factorized");
  track_cmd->add_option("--checkpoint", checkpoint, "trained model (flow and factorized providers)");
  track_cmd->add_flag("--negate-before-softmax", c.negate, "normalize exp(-cost/sigma)");
  track_cmd->add_flag("--two-stage", c.two_stage, "second pass over low-confidence detections");

  std::string gt_dir, pred_dir;
  auto* eval_cmd = app.add_subcommand("evaluate", "score tracker output against ground truth");
  common(eval_cmd, true);
  eval_cmd->add_option("--gt", gt_dir, "dataset directory")->required();
  eval_cmd->add_option("--pred", pred_dir, "tracker output directory")->required();

  auto* cmp_cmd = app.add_subcommand("compare", "provider grid over seeds");
  common(cmp_cmd, false);
  cmp_cmd->add_flag("--negate-before-softmax", c.negate, "normalize exp(-cost/sigma)");
  cmp_cmd->add_flag("--two-stage", c.two_stage, "second pass over low-confidence detections");

  auto* abl_cmd = app.add_subcommand("ablate", "temperature, normalization and conditioning sweep");
  common(abl_cmd, false);
  abl_cmd->add_flag("--two-stage", c.two_stage, "second pass over low-confidence detections");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::fprintf(stderr, "error[usage]: %s\n", one_line(e.what()).c_str());
    return 64;
  }

  try {
    const config::ExperimentConfig cfg = load(c);
    if (*sim_cmd) {
      experiment::write_dataset(c.out + "/train", experiment::simulate_all(cfg.suite(cfg.seed, true)), cfg.seed);
      experiment::write_dataset(c.out + "/test", experiment::simulate_all(cfg.suite(cfg.seed, false)), cfg.seed);
      std::printf("wrote %s/train and %s/test\n", c.out.c_str(), c.out.c_str());
    } else if (*train_cmd) {
      flow::FlowConfig fc = cfg.flow;
      fc.seed = cfg.seed;
      const auto seqs = experiment::read_dataset(data);
      const auto m = experiment::train_model(
          seqs, fc, cfg.tracker, kind == "flow" ? experiment::ModelKind::joint : experiment::ModelKind::factorized);
      if (m.joint) flow::save_checkpoint(c.out, *m.joint);
      if (m.factorized) flow::save_checkpoint(c.out, *m.factorized);
      io::write_atomic(c.out + ".trace.csv", experiment::format_trace(m));
      std::printf("samples %zu  val NLL %.6f -> %.6f\n", m.samples, m.init_val_nll, m.best_val_nll);
    } else if (*track_cmd) {
      const auto k = assoc::parse_provider(provider);
      assoc::CostProvider p = assoc::CostProvider::iou();
      if (k == assoc::ProviderKind::euclidean) p = assoc::CostProvider::euclidean();
      if (k == assoc::ProviderKind::flow || k == assoc::ProviderKind::factorized) {
        if (checkpoint.empty()) throw InvalidArgument("provider '" + provider + "' requires --checkpoint");
        if (k == assoc::ProviderKind::flow) {
          p = assoc::CostProvider::flow(std::make_shared<flow::FlowModel>(flow::load_flow_checkpoint(checkpoint)));
        } else {
          p = assoc::CostProvider::factorized(
              std::make_shared<flow::FactorizedModel>(flow::load_factorized_checkpoint(checkpoint)));
        }
      }
      const auto seqs = experiment::read_dataset(data);
      const auto r = experiment::run_tracker(seqs, p, cfg.tracker, cfg.bins);
      experiment::write_tracks(c.out, seqs, r);
      std::printf("tracked %zu sequences, IDF1 %s\n", seqs.size(),
                  r.total.counts.idf1() ? std::to_string(*r.total.counts.idf1()).c_str() : "undefined");
    } else if (*eval_cmd) {
      const auto reports = experiment::evaluate_dirs(gt_dir, pred_dir, cfg.bins, c.out);
      const auto& total = reports.back();
      std::printf("IDF1 %s  IDSW %ld  MOTA %s\n",
                  total.counts.idf1() ? std::to_string(*total.counts.idf1()).c_str() : "undefined", total.counts.idsw,
                  total.counts.mota() ? std::to_string(*total.counts.mota()).c_str() : "undefined");
    } else if (*cmp_cmd) {
      emit(c.out, experiment::compare(cfg));
    } else if (*abl_cmd) {
      emit(c.out, experiment::ablate(cfg));
    }
  } catch (const Error& e) {
    std::fprintf(stderr, "error[%s]: %s\n", e.code().c_str(), one_line(e.what()).c_str());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error[internal]: %s\n", one_line(e.what()).c_str());
    return 3;
  }
  return 0;
}
