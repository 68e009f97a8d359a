#include "flowassoc/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <json.hpp>
#include <set>

#include "flowassoc/assoc.hpp"
#include "flowassoc/errors.hpp"

namespace flowassoc::metrics {

namespace {

using Json = nlohmann::ordered_json;

std::optional<double> ratio(double num, double den) {
  if (den <= 0.0) return std::nullopt;
  return num / den;
}

Json opt(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

template <class Row>
std::map<int, std::vector<const Row*>> by_frame(const std::vector<Row>& rows) {
  std::map<int, std::vector<const Row*>> m;
  for (const auto& r : rows) m[r.frame].push_back(&r);
  return m;
}

/// Drops ignored ground truth and the predictions that cover it.
std::pair<std::vector<sim::GroundTruthRow>, std::vector<tracker::TrackRow>> filter_ignored(
    const std::vector<sim::GroundTruthRow>& gt, const std::vector<tracker::TrackRow>& pred) {
  std::vector<sim::GroundTruthRow> g_out;
  std::vector<tracker::TrackRow> p_out;
  const auto gf = by_frame(gt);
  const auto pf = by_frame(pred);
  std::set<int> frames;
  for (const auto& [f, _] : gf) frames.insert(f);
  for (const auto& [f, _] : pf) frames.insert(f);
  for (int f : frames) {
    const auto gi = gf.find(f);
    const auto pi = pf.find(f);
    const std::vector<const sim::GroundTruthRow*> g = gi == gf.end() ? std::vector<const sim::GroundTruthRow*>{} : gi->second;
    const std::vector<const tracker::TrackRow*> p = pi == pf.end() ? std::vector<const tracker::TrackRow*>{} : pi->second;
    std::vector<char> drop(p.size(), 0);
    if (std::any_of(g.begin(), g.end(), [](auto* r) { return !r->consider; })) {
      std::vector<BBox> gb, pb;
      for (auto* r : g) gb.push_back(r->bbox);
      for (auto* r : p) pb.push_back(r->bbox);
      for (const auto& [a, b] : assoc::match_by_iou(gb, pb, kMatchIou)) {
        if (!g[static_cast<std::size_t>(a)]->consider) drop[static_cast<std::size_t>(b)] = 1;
      }
    }
    for (auto* r : g)
      if (r->consider) g_out.push_back(*r);
    for (std::size_t k = 0; k < p.size(); ++k)
      if (!drop[k]) p_out.push_back(*p[k]);
  }
  return {g_out, p_out};
}

void check_unique_ids(const std::map<int, std::vector<const sim::GroundTruthRow*>>& gf,
                      const std::map<int, std::vector<const tracker::TrackRow*>>& pf) {
  for (const auto& [f, rows] : gf) {
    std::set<int> ids;
    for (auto* r : rows)
      if (!ids.insert(r->id).second) throw InvalidArgument("duplicate ground-truth id " + std::to_string(r->id) + " in frame " + std::to_string(f + 1));
  }
  for (const auto& [f, rows] : pf) {
    std::set<int> ids;
    for (auto* r : rows)
      if (!ids.insert(r->id).second) throw InvalidArgument("duplicate predicted id " + std::to_string(r->id) + " in frame " + std::to_string(f + 1));
  }
}

long identity_tp(const std::vector<sim::GroundTruthRow>& gt, const std::vector<tracker::TrackRow>& pred) {
  std::map<int, int> gidx, pidx;
  for (const auto& r : gt) gidx.emplace(r.id, static_cast<int>(gidx.size()));
  for (const auto& r : pred) pidx.emplace(r.id, static_cast<int>(pidx.size()));
  if (gidx.empty() || pidx.empty()) return 0;
  Eigen::MatrixXd overlap = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(gidx.size()), static_cast<Eigen::Index>(pidx.size()));
  const auto pf = by_frame(pred);
  for (const auto& [f, g] : by_frame(gt)) {
    const auto it = pf.find(f);
    if (it == pf.end()) continue;
    for (auto* a : g)
      for (auto* b : it->second)
        if (iou(a->bbox, b->bbox) >= kMatchIou) overlap(gidx[a->id], pidx[b->id]) += 1.0;
  }
  const auto a = assoc::hungarian(-overlap);
  double tp = 0.0;
  for (const auto& [j, i] : a.pairs) tp += overlap(j, i);
  return std::lround(tp);
}

}  // namespace

Bins default_bins() { return {{0.0, 0.25}, {0.25, 0.5}, {0.5, 0.75}, {0.75, 1.0}}; }

double gnll(double d, double var, double truth) {
  if (!(var > 0.0)) throw InvalidArgument("gnll: variance must be > 0");
  const double r = d - truth;
  return 0.5 * (std::log(var) + r * r / var);
}

void DistanceStats::add(const DistanceStats& o) {
  n += o.n;
  delta_hits += o.delta_hits;
  for (std::size_t k = 0; k < alp_hits.size(); ++k) alp_hits[k] += o.alp_hits[k];
  abs_rel += o.abs_rel;
  sq_rel += o.sq_rel;
  sq_err += o.sq_err;
  sq_log += o.sq_log;
  if (aloe_sum.size() < o.aloe_sum.size()) {
    aloe_sum.resize(o.aloe_sum.size(), 0.0);
    aloe_n.resize(o.aloe_n.size(), 0);
  }
  for (std::size_t k = 0; k < o.aloe_sum.size(); ++k) {
    aloe_sum[k] += o.aloe_sum[k];
    aloe_n[k] += o.aloe_n[k];
  }
  gnll_sum += o.gnll_sum;
  gnll_n += o.gnll_n;
}

DistanceStats accumulate(std::span<const DistancePair> pairs, const Bins& bins) {
  DistanceStats s;
  s.aloe_sum.assign(bins.size(), 0.0);
  s.aloe_n.assign(bins.size(), 0);
  for (const auto& p : pairs) {
    if (!(p.truth > 0.0)) throw InvalidArgument("distance metrics: ground-truth distance must be > 0");
    if (!(p.estimate > 0.0)) throw InvalidArgument("distance metrics: estimated distance must be > 0");
    const double err = p.estimate - p.truth;
    ++s.n;
    if (std::max(p.estimate / p.truth, p.truth / p.estimate) < kDeltaThreshold) ++s.delta_hits;
    for (std::size_t k = 0; k < kAlpThresholds.size(); ++k)
      if (std::abs(err) < kAlpThresholds[k]) ++s.alp_hits[k];
    s.abs_rel += std::abs(err) / p.truth;
    s.sq_rel += err * err / p.truth;
    s.sq_err += err * err;
    const double le = std::log(p.estimate) - std::log(p.truth);
    s.sq_log += le * le;
    for (std::size_t b = 0; b < bins.size(); ++b) {
      if (p.occlusion >= bins[b].first && p.occlusion <= bins[b].second) {
        s.aloe_sum[b] += std::abs(err);
        ++s.aloe_n[b];
      }
    }
    if (p.var > 0.0) {
      s.gnll_sum += gnll(p.estimate, p.var, p.truth);
      ++s.gnll_n;
    }
  }
  return s;
}

DistanceMetrics summarize(const DistanceStats& s) {
  DistanceMetrics m;
  m.count = s.n;
  const auto n = static_cast<double>(s.n);
  m.delta = ratio(static_cast<double>(s.delta_hits), n);
  for (std::size_t k = 0; k < m.alp.size(); ++k) m.alp[k] = ratio(static_cast<double>(s.alp_hits[k]), n);
  m.abs_rel = ratio(s.abs_rel, n);
  m.sq_rel = ratio(s.sq_rel, n);
  if (s.n > 0) {
    m.rmse = std::sqrt(s.sq_err / n);
    m.rmse_log = std::sqrt(s.sq_log / n);
  }
  for (std::size_t b = 0; b < s.aloe_sum.size(); ++b) m.aloe.push_back(ratio(s.aloe_sum[b], static_cast<double>(s.aloe_n[b])));
  m.gnll = ratio(s.gnll_sum, static_cast<double>(s.gnll_n));
  return m;
}

DistanceMetrics distance_metrics(std::span<const DistancePair> pairs, const Bins& bins) {
  return summarize(accumulate(pairs, bins));
}

std::vector<std::optional<double>> aloe(std::span<const DistancePair> pairs, const Bins& bins) {
  return summarize(accumulate(pairs, bins)).aloe;
}

void TrackingCounts::add(const TrackingCounts& o) {
  gt += o.gt;
  pred += o.pred;
  tp += o.tp;
  fp += o.fp;
  fn += o.fn;
  idsw += o.idsw;
  idtp += o.idtp;
  idfp += o.idfp;
  idfn += o.idfn;
}

std::optional<double> TrackingCounts::idf1() const {
  if (gt == 0) return std::nullopt;
  return 2.0 * static_cast<double>(idtp) / static_cast<double>(2 * idtp + idfp + idfn);
}

std::optional<double> TrackingCounts::mota() const {
  if (gt == 0) return std::nullopt;
  return 1.0 - static_cast<double>(fn + fp + idsw) / static_cast<double>(gt);
}

Evaluation evaluate_tracking(const std::vector<sim::GroundTruthRow>& gt_all,
                             const std::vector<tracker::TrackRow>& pred_all) {
  const auto [gt, pred] = filter_ignored(gt_all, pred_all);
  const auto gf = by_frame(gt);
  const auto pf = by_frame(pred);
  check_unique_ids(gf, pf);

  Evaluation ev;
  auto& c = ev.counts;
  c.gt = static_cast<long>(gt.size());
  c.pred = static_cast<long>(pred.size());

  std::set<int> frames;
  for (const auto& [f, _] : gf) frames.insert(f);
  for (const auto& [f, _] : pf) frames.insert(f);
  std::map<int, int> last;  // gt id -> last matched prediction id
  for (int f : frames) {
    const auto gi = gf.find(f);
    const auto pi = pf.find(f);
    const auto& g = gi == gf.end() ? std::vector<const sim::GroundTruthRow*>{} : gi->second;
    const auto& p = pi == pf.end() ? std::vector<const tracker::TrackRow*>{} : pi->second;
    std::vector<int> g_match(g.size(), -1);
    std::vector<char> p_used(p.size(), 0);

    // Correspondences from the previous frame persist while still valid.
    for (std::size_t a = 0; a < g.size(); ++a) {
      const auto it = last.find(g[a]->id);
      if (it == last.end()) continue;
      for (std::size_t b = 0; b < p.size(); ++b) {
        if (!p_used[b] && p[b]->id == it->second && iou(g[a]->bbox, p[b]->bbox) >= kMatchIou) {
          g_match[a] = static_cast<int>(b);
          p_used[b] = 1;
        }
      }
    }
    std::vector<int> ga, pb;
    for (std::size_t a = 0; a < g.size(); ++a)
      if (g_match[a] < 0) ga.push_back(static_cast<int>(a));
    for (std::size_t b = 0; b < p.size(); ++b)
      if (!p_used[b]) pb.push_back(static_cast<int>(b));
    std::vector<BBox> gb, pbb;
    for (int a : ga) gb.push_back(g[static_cast<std::size_t>(a)]->bbox);
    for (int b : pb) pbb.push_back(p[static_cast<std::size_t>(b)]->bbox);
    for (const auto& [x, y] : assoc::match_by_iou(gb, pbb, kMatchIou)) {
      const int a = ga[static_cast<std::size_t>(x)];
      const int b = pb[static_cast<std::size_t>(y)];
      g_match[static_cast<std::size_t>(a)] = b;
      p_used[static_cast<std::size_t>(b)] = 1;
      const auto it = last.find(g[static_cast<std::size_t>(a)]->id);
      if (it != last.end() && it->second != p[static_cast<std::size_t>(b)]->id) ++c.idsw;
    }
    for (std::size_t a = 0; a < g.size(); ++a) {
      if (g_match[a] < 0) {
        ++c.fn;
        continue;
      }
      const auto* pr = p[static_cast<std::size_t>(g_match[a])];
      ++c.tp;
      last[g[a]->id] = pr->id;
      ev.pairs.push_back({g[a]->distance, pr->distance, pr->distance_var, g[a]->occlusion});
    }
    for (std::size_t b = 0; b < p.size(); ++b)
      if (!p_used[b]) ++c.fp;
  }

  c.idtp = identity_tp(gt, pred);
  c.idfn = c.gt - c.idtp;
  c.idfp = c.pred - c.idtp;
  return ev;
}

std::optional<double> idf1(const std::vector<sim::GroundTruthRow>& gt, const std::vector<tracker::TrackRow>& pred) {
  return evaluate_tracking(gt, pred).counts.idf1();
}

MetricsReport evaluate(const std::string& name, const std::vector<sim::GroundTruthRow>& gt,
                       const std::vector<tracker::TrackRow>& pred, const Bins& bins) {
  const Evaluation ev = evaluate_tracking(gt, pred);
  return {name, bins, ev.counts, accumulate(ev.pairs, bins)};
}

MetricsReport aggregate(const std::string& name, std::span<const MetricsReport> reports) {
  MetricsReport out;
  out.name = name;
  out.bins = reports.empty() ? default_bins() : reports.front().bins;
  out.distance.aloe_sum.assign(out.bins.size(), 0.0);
  out.distance.aloe_n.assign(out.bins.size(), 0);
  for (const auto& r : reports) {
    if (r.bins != out.bins) throw InvalidArgument("aggregate: reports use different occlusion bins");
    out.counts.add(r.counts);
    out.distance.add(r.distance);
  }
  return out;
}

std::string to_json(const MetricsReport& r) {
  const DistanceMetrics d = summarize(r.distance);
  const auto& c = r.counts;
  Json j;
  j["name"] = r.name;
  j["idf1"] = opt(c.idf1());
  j["id_switches"] = c.idsw;
  j["mota"] = opt(c.mota());
  Json dist;
  dist["count"] = d.count;
  dist["delta_1.25"] = opt(d.delta);
  for (std::size_t k = 0; k < kAlpThresholds.size(); ++k) {
    char key[32];
    std::snprintf(key, sizeof key, "alp@%gm", kAlpThresholds[k]);
    dist[key] = opt(d.alp[k]);
  }
  dist["abs_rel"] = opt(d.abs_rel);
  dist["sq_rel"] = opt(d.sq_rel);
  dist["rmse"] = opt(d.rmse);
  dist["rmse_log"] = opt(d.rmse_log);
  Json al = Json::array();
  for (std::size_t b = 0; b < r.bins.size(); ++b) {
    al.push_back({{"min", r.bins[b].first}, {"max", r.bins[b].second}, {"error", opt(d.aloe[b])}});
  }
  dist["aloe"] = al;
  dist["gnll"] = opt(d.gnll);
  j["distance"] = dist;
  j["counts"] = {{"gt", c.gt},     {"pred", c.pred}, {"tp", c.tp},     {"fp", c.fp},    {"fn", c.fn},
                 {"idsw", c.idsw}, {"idtp", c.idtp}, {"idfp", c.idfp}, {"idfn", c.idfn}};
  const auto& s = r.distance;
  j["distance_stats"] = {{"n", s.n},
                         {"delta_hits", s.delta_hits},
                         {"alp_hits", s.alp_hits},
                         {"abs_rel_sum", s.abs_rel},
                         {"sq_rel_sum", s.sq_rel},
                         {"sq_err_sum", s.sq_err},
                         {"sq_log_sum", s.sq_log},
                         {"aloe_sum", s.aloe_sum},
                         {"aloe_n", s.aloe_n},
                         {"gnll_sum", s.gnll_sum},
                         {"gnll_n", s.gnll_n}};
  return j.dump(2) + "\n";
}

MetricsReport report_from_json(const std::string& text) {
  try {
    const Json j = Json::parse(text);
    MetricsReport r;
    r.name = j.at("name").get<std::string>();
    for (const auto& b : j.at("distance").at("aloe")) r.bins.emplace_back(b.at("min").get<double>(), b.at("max").get<double>());
    const auto& c = j.at("counts");
    r.counts = {c.at("gt"), c.at("pred"), c.at("tp"), c.at("fp"), c.at("fn"), c.at("idsw"), c.at("idtp"), c.at("idfp"), c.at("idfn")};
    const auto& s = j.at("distance_stats");
    auto& d = r.distance;
    d.n = s.at("n");
    d.delta_hits = s.at("delta_hits");
    d.alp_hits = s.at("alp_hits").get<std::array<long, 3>>();
    d.abs_rel = s.at("abs_rel_sum");
    d.sq_rel = s.at("sq_rel_sum");
    d.sq_err = s.at("sq_err_sum");
    d.sq_log = s.at("sq_log_sum");
    d.aloe_sum = s.at("aloe_sum").get<std::vector<double>>();
    d.aloe_n = s.at("aloe_n").get<std::vector<long>>();
    d.gnll_sum = s.at("gnll_sum");
    d.gnll_n = s.at("gnll_n");
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("metrics report", 0, e.what());
  }
}

}  // namespace flowassoc::metrics
