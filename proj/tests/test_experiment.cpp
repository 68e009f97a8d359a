#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <map>
#include <sstream>

#include "flowassoc/errors.hpp"
#include "flowassoc/experiment.hpp"
#include "flowassoc/mot_io.hpp"

using namespace flowassoc;
using namespace flowassoc::experiment;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("flowassoc_exp_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::vector<sim::ScenarioConfig> small_suite(std::uint64_t seed) {
  sim::ScenarioConfig base = sim::preset("moderate");
  base.frames = 40;
  return sim::make_suite(base, 2, seed);
}

std::string slurp_tree(const fs::path& root) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) files.push_back(fs::relative(e.path(), root));
  std::sort(files.begin(), files.end());
  std::string out;
  for (const auto& f : files) out += f.string() + "\n" + io::read_file((root / f).string());
  return out;
}

}  // namespace

TEST_SUITE("experiment") {
  TEST_CASE("dataset round trip and byte-identical re-simulation") {
    const auto a = scratch("a"), b = scratch("b");
    const auto seqs = simulate_all(small_suite(5));
    write_dataset(a.string(), seqs, 5);
    write_dataset(b.string(), simulate_all(small_suite(5)), 5);
    CHECK(slurp_tree(a) == slurp_tree(b));

    const auto back = read_dataset(a.string());
    REQUIRE(back.size() == seqs.size());
    for (std::size_t k = 0; k < seqs.size(); ++k) {
      CHECK(back[k].name == seqs[k].name);
      CHECK(back[k].data.ground_truth.size() == seqs[k].data.ground_truth.size());
      CHECK(back[k].data.frames.size() == seqs[k].data.frames.size());
      CHECK(back[k].data.descriptor.size() == seqs[k].data.descriptor.size());
    }
    // Writing what was read reproduces the files.
    const auto c = scratch("c");
    write_dataset(c.string(), back, 5);
    CHECK(slurp_tree(a) == slurp_tree(c));
    CHECK(slurp_tree(a) != [&] {
      const auto d = scratch("d");
      write_dataset(d.string(), simulate_all(small_suite(6)), 6);
      return slurp_tree(d);
    }());
  }

  TEST_CASE("evaluate_dirs") {
    const auto gt = scratch("gt"), pred = scratch("pred"), out = scratch("out");
    const auto seqs = simulate_all(small_suite(8));
    write_dataset(gt.string(), seqs, 8);
    const auto r = run_tracker(seqs, assoc::CostProvider::iou(), tracker::TrackerParams{}, metrics::default_bins());
    write_tracks(pred.string(), seqs, r);

    const auto reports = evaluate_dirs(gt.string(), pred.string(), metrics::default_bins(), out.string());
    REQUIRE(reports.size() == seqs.size() + 1);
    for (std::size_t k = 0; k < seqs.size(); ++k) {
      CHECK(reports[k].counts.idtp == r.per_sequence[k].counts.idtp);
      CHECK(reports[k].counts.idsw == r.per_sequence[k].counts.idsw);
    }
    CHECK(reports.back().counts.idf1() == r.total.counts.idf1());
    CHECK(fs::exists(out / "aggregate.json"));

    fs::remove(pred / (seqs[1].name + ".txt"));
    CHECK_THROWS_AS(evaluate_dirs(gt.string(), pred.string(), metrics::default_bins(), out.string()), IoError);
    io::write_atomic((pred / (seqs[1].name + ".txt")).string(), "");
    io::write_atomic((pred / "stray.txt").string(), "");
    CHECK_THROWS_AS(evaluate_dirs(gt.string(), pred.string(), metrics::default_bins(), out.string()), IoError);
  }

  TEST_CASE("ground-truth distances remove sensor error") {
    sim::ScenarioConfig c = sim::preset("noisy");
    c.frames = 40;
    const auto seq = simulate_sequence(c);
    CHECK(sensor_rmse(seq) > 0.1);
    CHECK(sensor_rmse(with_gt_distances(seq)) == 0.0);
  }

  TEST_CASE("training trace and model kinds") {
    const auto seqs = simulate_all(small_suite(3));
    flow::FlowConfig fc;
    fc.blocks = 2;
    fc.hidden = 8;
    fc.epochs = 3;
    fc.seed = 4;
    const auto joint = train_model(seqs, fc, tracker::TrackerParams{}, ModelKind::joint);
    CHECK(joint.samples > 100);
    std::istringstream trace(format_trace(joint));
    int lines = 0;
    for (std::string l; std::getline(trace, l);) ++lines;
    CHECK(lines == fc.epochs);
    CHECK(joint.best_val_nll <= joint.init_val_nll);
    const auto fac = train_model(seqs, fc, tracker::TrackerParams{}, ModelKind::factorized);
    CHECK(fac.provider().factorized_model() != nullptr);
    CHECK(fac.trace.size() == static_cast<std::size_t>(fc.epochs));
    CHECK_THROWS_AS(train_model({}, fc, tracker::TrackerParams{}, ModelKind::joint), InvalidArgument);
  }

  TEST_CASE("compare table") {
    auto cfg = config::experiment_from(config::parse_config(
        "seed = 2\npresets = easy\nseeds = 2\nsequences_per_preset = 1\ntrain_sequences_per_preset = 2\n"
        "providers = iou, euclidean, flow\n[scenario]\nframes = 40\n[flow]\nblocks = 2\nhidden = 8\nepochs = 2\n",
        "t"));
    const std::string t = compare(cfg);
    CHECK(t == compare(cfg));
    std::istringstream in(t);
    std::vector<std::string> lines;
    for (std::string l; std::getline(in, l);) lines.push_back(l);
    // header, column names, 2 seeds x (iou, euclidean, flow on, flow off), blank, summary header, 4 cells
    CHECK(lines.size() == 2 + 8 + 1 + 1 + 4);
    int flow_rows = 0;
    for (const auto& l : lines)
      if (l.rfind("flow\ton\t", 0) == 0 || l.rfind("flow\toff\t", 0) == 0) ++flow_rows;
    CHECK(flow_rows == 4 + 2);

    // win_vs_iou recomputed from the per-seed rows.
    std::map<std::string, std::vector<double>> idf1;
    for (std::size_t k = 2; k < 10; ++k) {
      std::istringstream ls(lines[k]);
      std::string p, c, s, v;
      std::getline(ls, p, '\t');
      std::getline(ls, c, '\t');
      std::getline(ls, s, '\t');
      std::getline(ls, v, '\t');
      idf1[p + "/" + c].push_back(std::stod(v));
    }
    for (std::size_t k = 12; k < lines.size(); ++k) {
      std::istringstream ls(lines[k]);
      std::vector<std::string> f;
      for (std::string x; std::getline(ls, x, '\t');) f.push_back(x);
      REQUIRE(f.size() == 9);
      if (f[0] == "iou") continue;
      const auto& mine = idf1[f[0] + "/" + f[1]];
      const auto& base = idf1["iou/-"];
      int wins = 0;
      for (std::size_t s = 0; s < mine.size(); ++s) wins += mine[s] > base[s];
      CHECK(std::stod(f[7]) == doctest::Approx(wins / 2.0));
    }
  }
}
