#include "flowassoc/experiment.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <set>

#include "flowassoc/errors.hpp"
#include "flowassoc/mot_io.hpp"

namespace flowassoc::experiment {

namespace fs = std::filesystem;

namespace {

std::string fmt(double v) {
  if (!std::isfinite(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : "nan"; }

std::vector<tracker::LabeledSequence> labeled(const std::vector<Sequence>& seqs) {
  std::vector<tracker::LabeledSequence> out;
  for (const auto& s : seqs) out.push_back(s.data);
  return out;
}

std::vector<Sequence> with_gt_distances(const std::vector<Sequence>& seqs) {
  std::vector<Sequence> out;
  for (const auto& s : seqs) out.push_back(with_gt_distances(s));
  return out;
}

std::string join(const std::vector<std::string>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + v[i];
  return s;
}

}  // namespace

Sequence simulate_sequence(const sim::ScenarioConfig& config) {
  Sequence s;
  s.name = config.name;
  s.config = config;
  const sim::Scenario scenario = sim::generate_scenario(config);
  sim::RenderedSequence r = sim::render_detections(scenario);
  sim::apply_eval_filters(r.ground_truth);
  s.data.frames = std::move(r.frames);
  s.data.ground_truth = std::move(r.ground_truth);
  s.data.descriptor = scenario.descriptor.values;
  return s;
}

std::vector<Sequence> simulate_all(const std::vector<sim::ScenarioConfig>& configs) {
  std::vector<Sequence> out;
  for (const auto& c : configs) out.push_back(simulate_sequence(c));
  return out;
}

Sequence with_gt_distances(const Sequence& seq) {
  Sequence out = seq;
  out.data.frames = sim::with_ground_truth_distances(seq.data.frames, seq.data.ground_truth);
  return out;
}

void write_sequence(const std::string& dir, const Sequence& seq) {
  io::write_atomic(dir + "/scenario.txt", config::format_scenario(seq.config));
  io::export_mot(dir + "/det.txt", io::rows_from_frames(seq.data.frames));
  io::export_gt(dir + "/gt.txt", seq.data.ground_truth);
  sim::SceneDescriptor d;
  d.values = seq.data.descriptor;
  io::export_scene(dir + "/scene.txt", seq.name, d);
}

Sequence read_sequence(const std::string& dir) {
  Sequence s;
  s.config = config::parse_scenario(io::read_file(dir + "/scenario.txt"), dir + "/scenario.txt");
  auto [name, desc] = io::import_scene(dir + "/scene.txt");
  s.name = name;
  s.data.descriptor = desc.values;
  s.data.frames = io::frames_from_rows(io::import_mot(dir + "/det.txt"), name, s.config.frames);
  s.data.ground_truth = io::import_gt(dir + "/gt.txt");
  return s;
}

void write_dataset(const std::string& dir, const std::vector<Sequence>& seqs, std::uint64_t seed) {
  std::set<std::string> names;
  std::string list = "# seed = " + std::to_string(seed) + "\n";
  for (const auto& s : seqs) {
    if (!names.insert(s.name).second) throw InvalidArgument("duplicate sequence name '" + s.name + "'");
    write_sequence(dir + "/" + s.name, s);
    list += s.name + "\n";
  }
  io::write_atomic(dir + "/sequences.txt", list);
}

std::vector<Sequence> read_dataset(const std::string& dir) {
  const std::string list = io::read_file(dir + "/sequences.txt");
  std::vector<Sequence> out;
  std::size_t pos = 0;
  while (pos < list.size()) {
    auto nl = list.find('\n', pos);
    if (nl == std::string::npos) nl = list.size();
    const std::string line = list.substr(pos, nl - pos);
    pos = nl + 1;
    if (line.empty() || line[0] == '#') continue;
    out.push_back(read_sequence(dir + "/" + line));
  }
  return out;
}

assoc::CostProvider TrainedModel::provider() const {
  return kind == ModelKind::joint ? assoc::CostProvider::flow(joint) : assoc::CostProvider::factorized(factorized);
}

TrainedModel train_model(const std::vector<Sequence>& seqs, const flow::FlowConfig& config,
                         const tracker::TrackerParams& params, ModelKind kind) {
  if (seqs.empty()) throw InvalidArgument("train_model: no training sequences");
  std::vector<std::vector<double>> desc;
  for (const auto& s : seqs) desc.push_back(s.data.descriptor);
  const std::set<std::vector<double>> distinct(desc.begin(), desc.end());
  const int k = std::min<int>(config.scene_clusters, static_cast<int>(distinct.size()));
  const context::SceneClusterModel clusters = context::kmeans_fit(desc, k, derive_seed(config.seed, 0xc1));

  tracker::InlierOptions opt;
  opt.min_history = 1;
  const auto data = labeled(seqs);
  const flow::FlowBatch batch = tracker::build_inlier_dataset(data, params, opt, &clusters);

  TrainedModel m;
  m.kind = kind;
  m.samples = batch.size();
  if (kind == ModelKind::joint) {
    flow::TrainResult r = flow::train(batch, config, &clusters);
    m.joint = std::make_shared<flow::FlowModel>(std::move(r.model));
    m.trace = std::move(r.trace);
    m.init_val_nll = r.init_val_nll;
    m.best_val_nll = r.best_val_nll;
  } else {
    flow::FactorizedTrainResult r = flow::factorized_train(batch, config, &clusters);
    m.factorized = std::make_shared<flow::FactorizedModel>(std::move(r.model));
    m.best_val_nll = r.best_val_nll;
    m.trace = r.parts[0].trace;
    for (std::size_t g = 0; g < 3; ++g) {
      m.init_val_nll += r.parts[g].init_val_nll;
      if (g == 0) continue;
      for (std::size_t e = 0; e < m.trace.size(); ++e) {
        m.trace[e].train_nll += r.parts[g].trace[e].train_nll;
        m.trace[e].val_nll += r.parts[g].trace[e].val_nll;
      }
    }
  }
  return m;
}

std::string format_trace(const TrainedModel& m) {
  std::string out;
  for (const auto& e : m.trace) {
    out += std::to_string(e.epoch) + "," + io::format_double(e.train_nll) + "," + io::format_double(e.val_nll) + "\n";
  }
  return out;
}

double sensor_rmse(const Sequence& seq) {
  std::map<int, std::vector<const sim::GroundTruthRow*>> gt;
  for (const auto& g : seq.data.ground_truth) gt[g.frame].push_back(&g);
  double sq = 0.0;
  long n = 0;
  for (const auto& fo : seq.data.frames) {
    const auto it = gt.find(fo.frame);
    if (it == gt.end()) continue;
    std::vector<BBox> a, b;
    for (const auto& d : fo.detections) a.push_back(d.bbox);
    for (const auto* g : it->second) b.push_back(g->bbox);
    for (const auto& [j, i] : assoc::match_by_iou(a, b, 0.5)) {
      const double e = fo.detections[static_cast<std::size_t>(j)].dist_mean - it->second[static_cast<std::size_t>(i)]->distance;
      sq += e * e;
      ++n;
    }
  }
  return n ? std::sqrt(sq / static_cast<double>(n)) : 0.0;
}

RunResult run_tracker(const std::vector<Sequence>& seqs, const assoc::CostProvider& provider,
                      const tracker::TrackerParams& params, const metrics::Bins& bins) {
  RunResult r;
  for (const auto& s : seqs) {
    r.outputs.push_back(tracker::track_sequence(s.data.frames, provider, params, s.data.descriptor));
    r.per_sequence.push_back(metrics::evaluate(s.name, s.data.ground_truth, r.outputs.back().rows, bins));
  }
  r.total = metrics::aggregate("aggregate", r.per_sequence);
  return r;
}

void write_tracks(const std::string& out_dir, const std::vector<Sequence>& seqs, const RunResult& r) {
  for (std::size_t k = 0; k < seqs.size(); ++k) {
    std::vector<io::MotRow> rows;
    for (const auto& t : r.outputs[k].rows) rows.push_back({t.frame, t.id, t.bbox, 1.0, t.distance, t.distance_var});
    io::export_mot(out_dir + "/" + seqs[k].name + ".txt", rows);
    io::write_atomic(out_dir + "/" + seqs[k].name + ".log", tracker::format_match_log(r.outputs[k].log));
  }
}

std::vector<tracker::TrackRow> read_tracks(const std::string& path) {
  std::vector<tracker::TrackRow> out;
  for (const auto& r : io::import_mot(path, false)) {
    if (r.id < 0) throw ParseError(path, 0, "prediction rows need a track id");
    out.push_back({r.frame, r.id, r.bbox, r.dist_mean, r.dist_var});
  }
  return out;
}

std::vector<metrics::MetricsReport> evaluate_dirs(const std::string& gt_dir, const std::string& pred_dir,
                                                  const metrics::Bins& bins, const std::string& out_dir) {
  const auto seqs = read_dataset(gt_dir);
  std::set<std::string> expected;
  for (const auto& s : seqs) expected.insert(s.name + ".txt");
  if (!fs::is_directory(pred_dir)) throw IoError("prediction directory '" + pred_dir + "' does not exist");
  for (const auto& e : fs::directory_iterator(pred_dir)) {
    const std::string f = e.path().filename().string();
    if (f.size() > 4 && f.ends_with(".txt") && !f.ends_with(".dist.txt") && !expected.count(f)) {
      throw IoError("prediction '" + f + "' has no ground-truth sequence in '" + gt_dir + "'");
    }
  }
  std::vector<metrics::MetricsReport> reports;
  for (const auto& s : seqs) {
    const std::string path = pred_dir + "/" + s.name + ".txt";
    if (!fs::exists(path)) throw IoError("missing prediction for sequence '" + s.name + "' (" + path + ")");
    reports.push_back(metrics::evaluate(s.name, s.data.ground_truth, read_tracks(path), bins));
    io::write_atomic(out_dir + "/" + s.name + ".json", metrics::to_json(reports.back()));
  }
  const auto total = metrics::aggregate("aggregate", reports);
  io::write_atomic(out_dir + "/aggregate.json", metrics::to_json(total));
  reports.push_back(total);
  return reports;
}

namespace {

struct Cell {
  std::string provider;
  std::string conditioning;  // "on", "off" or "-"
  std::vector<double> idf1, mota, val_nll, sensor;
  std::vector<long> idsw;
};

std::string win_rate(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.empty() || a.size() != b.size()) return "-";
  int wins = 0;
  for (std::size_t k = 0; k < a.size(); ++k)
    if (a[k] > b[k]) ++wins;
  return fmt(static_cast<double>(wins) / static_cast<double>(a.size()));
}

double mean(const std::vector<double>& v) {
  if (v.empty()) return std::nan("");
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace

std::string compare(const config::ExperimentConfig& cfg) {
  std::vector<Cell> cells;
  auto cell = [&](const std::string& p, const std::string& c) -> Cell& {
    for (auto& x : cells)
      if (x.provider == p && x.conditioning == c) return x;
    cells.push_back({p, c, {}, {}, {}, {}, {}});
    return cells.back();
  };
  std::string rows = "provider\tconditioning\tseed\tidf1\tidsw\tmota\tval_nll\tsensor_rmse\n";

  for (int s = 0; s < cfg.seeds; ++s) {
    const std::uint64_t seed = derive_seed(cfg.seed, 100 + static_cast<std::uint64_t>(s));
    const auto train = simulate_all(cfg.suite(seed, true));
    const auto test = simulate_all(cfg.suite(seed, false));
    std::vector<Sequence> train_gt, test_gt;

    for (const auto& p : cfg.providers) {
      const bool learned = p == "flow" || p == "flow-gt" || p == "factorized";
      std::vector<bool> variants = {true};
      if (learned && cfg.both_conditioning) variants.push_back(false);
      for (bool cond : variants) {
        const bool gt = p == "flow-gt";
        if (gt && train_gt.empty()) {
          train_gt = with_gt_distances(train);
          test_gt = with_gt_distances(test);
        }
        const auto& eval = gt ? test_gt : test;
        assoc::CostProvider provider = assoc::CostProvider::iou();
        double val_nll = std::nan("");
        if (learned) {
          flow::FlowConfig fc = cfg.flow;
          fc.seed = derive_seed(seed, 0xf0);
          fc.scene_conditioning = cond;
          const TrainedModel m = train_model(gt ? train_gt : train, fc, cfg.tracker,
                                             p == "factorized" ? ModelKind::factorized : ModelKind::joint);
          provider = m.provider();
          val_nll = m.best_val_nll;
        } else if (p == "euclidean") {
          provider = assoc::CostProvider::euclidean();
        }
        const RunResult r = run_tracker(eval, provider, cfg.tracker, cfg.bins);
        double sensor = 0.0;
        for (const auto& e : eval) sensor += sensor_rmse(e) / static_cast<double>(eval.size());
        Cell& c = cell(p, learned ? (cond ? "on" : "off") : "-");
        const double idf1 = r.total.counts.idf1().value_or(std::nan(""));
        const double mota = r.total.counts.mota().value_or(std::nan(""));
        c.idf1.push_back(idf1);
        c.mota.push_back(mota);
        c.idsw.push_back(r.total.counts.idsw);
        c.val_nll.push_back(val_nll);
        c.sensor.push_back(sensor);
        rows += p + "\t" + c.conditioning + "\t" + std::to_string(s) + "\t" + fmt(idf1) + "\t" +
                std::to_string(r.total.counts.idsw) + "\t" + fmt(mota) + "\t" + fmt(val_nll) + "\t" + fmt(sensor) +
                "\n";
      }
    }
  }

  const Cell* iou = nullptr;
  for (const auto& c : cells)
    if (c.provider == "iou") iou = &c;
  std::string summary =
      "provider\tconditioning\tseeds\tmean_idf1\ttotal_idsw\tmean_mota\tmean_val_nll\twin_vs_iou\twin_vs_uncond\n";
  for (const auto& c : cells) {
    long idsw = 0;
    for (long v : c.idsw) idsw += v;
    std::string vs_uncond = "-";
    if (c.conditioning == "on") {
      for (const auto& o : cells)
        if (o.provider == c.provider && o.conditioning == "off") vs_uncond = win_rate(c.idf1, o.idf1);
    }
    summary += c.provider + "\t" + c.conditioning + "\t" + std::to_string(c.idf1.size()) + "\t" + fmt(mean(c.idf1)) +
               "\t" + std::to_string(idsw) + "\t" + fmt(mean(c.mota)) + "\t" + fmt(mean(c.val_nll)) + "\t" +
               (iou && &c != iou ? win_rate(c.idf1, iou->idf1) : std::string("-")) + "\t" + vs_uncond + "\n";
  }
  return "# compare seed=" + std::to_string(cfg.seed) + " seeds=" + std::to_string(cfg.seeds) +
         " presets=" + join(cfg.presets) + "\n" + rows + "\n" + summary;
}

std::string ablate(const config::ExperimentConfig& cfg) {
  std::string out = "# ablate seed=" + std::to_string(cfg.seed) + " seeds=" + std::to_string(cfg.seeds) +
                    " presets=" + join(cfg.presets) + "\n";
  out += "variant\tconditioning\tseed\tidf1\tidsw\tmota\tval_nll\n";
  for (int s = 0; s < cfg.seeds; ++s) {
    const std::uint64_t seed = derive_seed(cfg.seed, 100 + static_cast<std::uint64_t>(s));
    const auto train = simulate_all(cfg.suite(seed, true));
    const auto test = simulate_all(cfg.suite(seed, false));
    for (bool cond : {true, false}) {
      flow::FlowConfig fc = cfg.flow;
      fc.seed = derive_seed(seed, 0xf0);
      fc.scene_conditioning = cond;
      const TrainedModel m = train_model(train, fc, cfg.tracker, ModelKind::joint);
      auto run = [&](const std::string& variant, const tracker::TrackerParams& tp) {
        const RunResult r = run_tracker(test, m.provider(), tp, cfg.bins);
        out += variant + "\t" + (cond ? "on" : "off") + "\t" + std::to_string(s) + "\t" +
               fmt(r.total.counts.idf1()) + "\t" + std::to_string(r.total.counts.idsw) + "\t" +
               fmt(r.total.counts.mota()) + "\t" + fmt(m.best_val_nll) + "\n";
      };
      for (double sigma : cfg.sigmas) {
        for (bool negate : {false, true}) {
          tracker::TrackerParams tp = cfg.tracker;
          tp.assoc.normalize = 1;
          tp.assoc.sigma = sigma;
          tp.assoc.negate = negate;
          run(std::string("sigma=") + io::format_double(sigma, 6) + (negate ? " negated" : " plain"), tp);
        }
      }
      tracker::TrackerParams raw = cfg.tracker;
      raw.assoc.normalize = 0;
      run("unnormalized", raw);
    }
  }
  return out;
}

}  // namespace flowassoc::experiment
