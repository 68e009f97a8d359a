#include "flowassoc/context.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "flowassoc/errors.hpp"
#include "flowassoc/rng.hpp"

namespace flowassoc::context {

namespace {

double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

int embed_column(int cluster, bool use_scene, int k) {
  return (use_scene && cluster >= 0 && cluster < k) ? cluster : -1;
}

}  // namespace

int TrackWindow::valid_count() const {
  return static_cast<int>(std::count(valid.begin(), valid.end(), true));
}

TrackWindow build_window(std::span<const Observation> history) {
  if (history.empty()) throw InvalidArgument("build_window: empty track history");
  TrackWindow w;
  const std::size_t n_obs = std::min<std::size_t>(history.size(), kWindowLength + 1);
  const std::size_t first = history.size() - n_obs;
  const int n_steps = static_cast<int>(n_obs) - 1;
  for (int s = 0; s < n_steps; ++s) {
    const auto& prev = history[first + static_cast<std::size_t>(s)];
    const auto& cur = history[first + static_cast<std::size_t>(s) + 1];
    const int slot = kWindowLength - n_steps + s;
    for (int c = 0; c < kStepDim; ++c) w.steps[slot][c] = cur[c] - prev[c];
    w.valid[slot] = true;
  }
  return w;
}

std::vector<double> SceneClusterModel::normalize(std::span<const double> descriptor) const {
  if (descriptor.size() != mean.size()) throw InvalidArgument("descriptor dimension mismatch");
  std::vector<double> out(descriptor.size());
  for (std::size_t i = 0; i < descriptor.size(); ++i) out[i] = (descriptor[i] - mean[i]) / stddev[i];
  return out;
}

std::vector<double> SceneClusterModel::centroid(int i) const {
  std::vector<double> out(static_cast<std::size_t>(dim()));
  for (int r = 0; r < dim(); ++r) out[r] = centroids(r, i) * stddev[r] + mean[r];
  return out;
}

SceneClusterModel kmeans_fit(const std::vector<std::vector<double>>& descriptors, int k, std::uint64_t seed) {
  if (k < 1) throw InvalidArgument("kmeans_fit: k must be >= 1");
  if (descriptors.empty()) throw InvalidArgument("kmeans_fit: no descriptors");
  const std::size_t dim = descriptors.front().size();
  for (const auto& d : descriptors) {
    if (d.size() != dim) throw InvalidArgument("kmeans_fit: inconsistent descriptor dimensions");
  }
  const std::set<std::vector<double>> distinct(descriptors.begin(), descriptors.end());
  if (distinct.size() < static_cast<std::size_t>(k)) {
    throw InvalidArgument("kmeans_fit: need at least " + std::to_string(k) + " distinct descriptors, got " +
                          std::to_string(distinct.size()));
  }

  SceneClusterModel model;
  const std::size_t n = descriptors.size();
  model.mean.assign(dim, 0.0);
  model.stddev.assign(dim, 0.0);
  for (const auto& d : descriptors)
    for (std::size_t j = 0; j < dim; ++j) model.mean[j] += d[j] / static_cast<double>(n);
  for (const auto& d : descriptors)
    for (std::size_t j = 0; j < dim; ++j) model.stddev[j] += (d[j] - model.mean[j]) * (d[j] - model.mean[j]);
  for (auto& s : model.stddev) {
    s = std::sqrt(s / static_cast<double>(n));
    if (!(s > 1e-12)) s = 1.0;
  }

  Eigen::MatrixXd pts(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const auto z = model.normalize(descriptors[i]);
    for (std::size_t j = 0; j < dim; ++j) pts(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = z[j];
  }

  // k-means++ seeding.
  Rng rng(derive_seed(seed, 0x4b));
  Eigen::MatrixXd cent(static_cast<Eigen::Index>(dim), k);
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  std::size_t first = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
  cent.col(0) = pts.col(static_cast<Eigen::Index>(first));
  for (int c = 1; c < k; ++c) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], (pts.col(static_cast<Eigen::Index>(i)) - cent.col(c - 1)).squaredNorm());
      total += d2[i];
    }
    std::size_t pick = 0;
    if (total > 0.0) {
      double u = uniform(rng, 0.0, total);
      for (pick = 0; pick + 1 < n; ++pick) {
        if (u < d2[pick]) break;
        u -= d2[pick];
      }
      while (d2[pick] == 0.0) pick = (pick + 1) % n;  // never re-pick an existing centroid
    }
    cent.col(c) = pts.col(static_cast<Eigen::Index>(pick));
  }

  std::vector<int> assign(n, 0);
  auto assign_all = [&]() {
    double sse = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      int best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (int c = 0; c < k; ++c) {
        const double dd = (pts.col(static_cast<Eigen::Index>(i)) - cent.col(c)).squaredNorm();
        if (dd < best_d) {
          best_d = dd;
          best = c;
        }
      }
      assign[i] = best;
      sse += best_d;
    }
    return sse;
  };

  assign_all();
  for (int iter = 0; iter < 100; ++iter) {
    Eigen::MatrixXd next = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(dim), k);
    std::vector<int> counts(static_cast<std::size_t>(k), 0);
    for (std::size_t i = 0; i < n; ++i) {
      next.col(assign[i]) += pts.col(static_cast<Eigen::Index>(i));
      ++counts[static_cast<std::size_t>(assign[i])];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) {
        next.col(c) /= counts[static_cast<std::size_t>(c)];
      } else {
        next.col(c) = cent.col(c);
      }
    }
    const double shift = (next - cent).colwise().norm().maxCoeff();
    cent = next;
    const double sse = assign_all();
    model.sse_history.push_back(sse);
    if (shift < 1e-6) break;
  }
  model.centroids = cent;
  return model;
}

int assign_cluster(std::span<const double> descriptor, const SceneClusterModel& model) {
  const auto z = model.normalize(descriptor);
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (int c = 0; c < model.k(); ++c) {
    double dd = 0.0;
    for (int r = 0; r < model.dim(); ++r) {
      const double diff = z[static_cast<std::size_t>(r)] - model.centroids(r, c);
      dd += diff * diff;
    }
    if (dd < best_d) {
      best_d = dd;
      best = c;
    }
  }
  return best;
}

EncoderLayout add_encoder_params(ParamStore& store, const EncoderDims& dims) {
  EncoderLayout l;
  l.dims = dims;
  const int g = dims.gru_hidden;
  l.w_input = store.add("ctx.w_input", 3 * g, dims.window_dim);
  l.w_hidden = store.add("ctx.w_hidden", 3 * g, g);
  l.b_input = store.add("ctx.b_input", 3 * g, 1);
  l.b_hidden = store.add("ctx.b_hidden", 3 * g, 1);
  l.embedding = store.add("ctx.embedding", dims.embed_dim, dims.clusters);
  l.no_scene = store.add("ctx.no_scene", dims.embed_dim, 1);
  l.w_proj = store.add("ctx.w_proj", dims.out_dim, g + dims.embed_dim);
  l.b_proj = store.add("ctx.b_proj", dims.out_dim, 1);
  return l;
}

Eigen::MatrixXd encode_batch(const ParamStore& store, const EncoderLayout& layout,
                             std::span<const TrackWindow> windows, std::span<const int> clusters, bool use_scene,
                             std::span<const double> window_scale, EncoderCache* cache) {
  const auto& d = layout.dims;
  const int g = d.gru_hidden;
  const auto n = static_cast<Eigen::Index>(windows.size());
  const auto wi = store.mat(layout.w_input);
  const auto wh = store.mat(layout.w_hidden);
  const auto bi = store.mat(layout.b_input);
  const auto bh = store.mat(layout.b_hidden);

  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(g, n);
  if (cache) cache->steps.assign(kWindowLength, {});
  for (int t = 0; t < kWindowLength; ++t) {
    std::vector<char> mask(static_cast<std::size_t>(n));
    bool any = false;
    Eigen::MatrixXd x = Eigen::MatrixXd::Zero(d.window_dim, n);
    for (Eigen::Index c = 0; c < n; ++c) {
      const auto& w = windows[static_cast<std::size_t>(c)];
      mask[static_cast<std::size_t>(c)] = w.valid[t];
      if (!w.valid[t]) continue;
      any = true;
      for (int k = 0; k < d.window_dim; ++k) x(k, c) = w.steps[t][k] / window_scale[k];
    }
    if (!any) continue;
    Eigen::MatrixXd gi = wi * x;
    gi.colwise() += bi.col(0);
    Eigen::MatrixXd gh = wh * h;
    gh.colwise() += bh.col(0);
    const Eigen::MatrixXd reset = (gi.topRows(g) + gh.topRows(g)).unaryExpr(&sigmoid);
    const Eigen::MatrixXd update = (gi.middleRows(g, g) + gh.middleRows(g, g)).unaryExpr(&sigmoid);
    const Eigen::MatrixXd hidden_cand = gh.bottomRows(g);
    const Eigen::MatrixXd cand = (gi.bottomRows(g) + reset.cwiseProduct(hidden_cand)).array().tanh().matrix();
    const Eigen::MatrixXd next = (1.0 - update.array()) * cand.array() + update.array() * h.array();
    Eigen::MatrixXd h_prev;
    if (cache) h_prev = h;
    for (Eigen::Index c = 0; c < n; ++c) {
      if (mask[static_cast<std::size_t>(c)]) h.col(c) = next.col(c);
    }
    if (cache) {
      auto& s = cache->steps[static_cast<std::size_t>(t)];
      s.any_valid = true;
      s.x = std::move(x);
      s.h_prev = std::move(h_prev);
      s.reset = reset;
      s.update = update;
      s.cand = cand;
      s.hidden_cand = hidden_cand;
      s.mask = std::move(mask);
    }
  }

  Eigen::MatrixXd features(g + d.embed_dim, n);
  features.topRows(g) = h;
  const auto emb = store.mat(layout.embedding);
  const auto none = store.mat(layout.no_scene);
  std::vector<int> cols(static_cast<std::size_t>(n));
  for (Eigen::Index c = 0; c < n; ++c) {
    const int cl = clusters.empty() ? -1 : clusters[static_cast<std::size_t>(c)];
    const int col = embed_column(cl, use_scene, d.clusters);
    cols[static_cast<std::size_t>(c)] = col;
    features.col(c).tail(d.embed_dim) = col >= 0 ? Eigen::VectorXd(emb.col(col)) : Eigen::VectorXd(none.col(0));
  }
  Eigen::MatrixXd out = store.mat(layout.w_proj) * features;
  out.colwise() += store.mat(layout.b_proj).col(0);
  out = out.array().tanh().matrix();
  if (cache) {
    cache->features = features;
    cache->out = out;
    cache->embed_col = std::move(cols);
  }
  return out;
}

void encode_backward(const ParamStore& store, const EncoderLayout& layout, const EncoderCache& cache,
                     const Eigen::MatrixXd& grad_out, std::span<const double> window_scale, std::vector<double>& grad,
                     std::vector<Eigen::MatrixXd>* grad_steps) {
  const auto& d = layout.dims;
  const int g = d.gru_hidden;
  const Eigen::Index n = grad_out.cols();

  const Eigen::MatrixXd g_pre = grad_out.cwiseProduct((1.0 - cache.out.array().square()).matrix());
  ParamStore::view(grad, store.groups()[static_cast<std::size_t>(layout.w_proj)]) +=
      g_pre * cache.features.transpose();
  ParamStore::view(grad, store.groups()[static_cast<std::size_t>(layout.b_proj)]) += g_pre.rowwise().sum();
  const Eigen::MatrixXd g_feat = store.mat(layout.w_proj).transpose() * g_pre;

  auto g_emb = ParamStore::view(grad, store.groups()[static_cast<std::size_t>(layout.embedding)]);
  auto g_none = ParamStore::view(grad, store.groups()[static_cast<std::size_t>(layout.no_scene)]);
  for (Eigen::Index c = 0; c < n; ++c) {
    const int col = cache.embed_col[static_cast<std::size_t>(c)];
    if (col >= 0) {
      g_emb.col(col) += g_feat.col(c).tail(d.embed_dim);
    } else {
      g_none.col(0) += g_feat.col(c).tail(d.embed_dim);
    }
  }

  auto g_wi = ParamStore::view(grad, store.groups()[static_cast<std::size_t>(layout.w_input)]);
  auto g_wh = ParamStore::view(grad, store.groups()[static_cast<std::size_t>(layout.w_hidden)]);
  auto g_bi = ParamStore::view(grad, store.groups()[static_cast<std::size_t>(layout.b_input)]);
  auto g_bh = ParamStore::view(grad, store.groups()[static_cast<std::size_t>(layout.b_hidden)]);
  const auto wi = store.mat(layout.w_input);
  const auto wh = store.mat(layout.w_hidden);

  if (grad_steps) grad_steps->assign(kWindowLength, Eigen::MatrixXd::Zero(d.window_dim, n));

  Eigen::MatrixXd g_h = g_feat.topRows(g);
  for (int t = kWindowLength - 1; t >= 0; --t) {
    const auto& s = cache.steps[static_cast<std::size_t>(t)];
    if (!s.any_valid) continue;
    Eigen::MatrixXd g_next = Eigen::MatrixXd::Zero(g, n);
    Eigen::MatrixXd g_keep = Eigen::MatrixXd::Zero(g, n);
    for (Eigen::Index c = 0; c < n; ++c) {
      if (s.mask[static_cast<std::size_t>(c)]) {
        g_next.col(c) = g_h.col(c);
      } else {
        g_keep.col(c) = g_h.col(c);
      }
    }
    const Eigen::ArrayXXd u = s.update.array();
    const Eigen::ArrayXXd gn = g_next.array() * (1.0 - u);
    const Eigen::ArrayXXd gz = g_next.array() * (s.h_prev.array() - s.cand.array());
    const Eigen::ArrayXXd gn_pre = gn * (1.0 - s.cand.array().square());
    const Eigen::ArrayXXd gr = gn_pre * s.hidden_cand.array();
    const Eigen::ArrayXXd g_hc = gn_pre * s.reset.array();
    const Eigen::ArrayXXd gz_pre = gz * u * (1.0 - u);
    const Eigen::ArrayXXd gr_pre = gr * s.reset.array() * (1.0 - s.reset.array());

    Eigen::MatrixXd g_gi(3 * g, n), g_gh(3 * g, n);
    g_gi << gr_pre.matrix(), gz_pre.matrix(), gn_pre.matrix();
    g_gh << gr_pre.matrix(), gz_pre.matrix(), g_hc.matrix();
    g_wi += g_gi * s.x.transpose();
    g_bi += g_gi.rowwise().sum();
    g_wh += g_gh * s.h_prev.transpose();
    g_bh += g_gh.rowwise().sum();
    if (grad_steps) {
      Eigen::MatrixXd gx = wi.transpose() * g_gi;
      for (int k = 0; k < d.window_dim; ++k) gx.row(k) /= window_scale[k];
      (*grad_steps)[static_cast<std::size_t>(t)] = gx;
    }
    g_h = (g_next.array() * u).matrix() + g_keep + wh.transpose() * g_gh;
  }
}

std::vector<double> encode_reference(const ParamStore& store, const EncoderLayout& layout, const TrackWindow& window,
                                     int cluster, bool use_scene, std::span<const double> window_scale) {
  const auto& d = layout.dims;
  const int g = d.gru_hidden;
  const auto& groups = store.groups();
  const double* wi = store.values().data() + groups[static_cast<std::size_t>(layout.w_input)].offset;
  const double* wh = store.values().data() + groups[static_cast<std::size_t>(layout.w_hidden)].offset;
  const double* bi = store.values().data() + groups[static_cast<std::size_t>(layout.b_input)].offset;
  const double* bh = store.values().data() + groups[static_cast<std::size_t>(layout.b_hidden)].offset;
  const int rows = 3 * g;

  std::vector<double> h(static_cast<std::size_t>(g), 0.0), gi(static_cast<std::size_t>(rows)),
      gh(static_cast<std::size_t>(rows)), next(static_cast<std::size_t>(g));
  for (int t = 0; t < kWindowLength; ++t) {
    if (!window.valid[t]) continue;
    for (int r = 0; r < rows; ++r) {
      double a = bi[r];
      for (int k = 0; k < d.window_dim; ++k) a += wi[r + k * rows] * (window.steps[t][k] / window_scale[k]);
      gi[static_cast<std::size_t>(r)] = a;
      double b = bh[r];
      for (int k = 0; k < g; ++k) b += wh[r + k * rows] * h[static_cast<std::size_t>(k)];
      gh[static_cast<std::size_t>(r)] = b;
    }
    for (int j = 0; j < g; ++j) {
      const auto uj = static_cast<std::size_t>(j);
      const double r = sigmoid(gi[uj] + gh[uj]);
      const double z = sigmoid(gi[uj + g] + gh[uj + g]);
      const double c = std::tanh(gi[uj + 2 * g] + r * gh[uj + 2 * g]);
      next[uj] = (1.0 - z) * c + z * h[uj];
    }
    h = next;
  }

  const int col = embed_column(cluster, use_scene, d.clusters);
  const double* emb = store.values().data() +
                      (col >= 0 ? groups[static_cast<std::size_t>(layout.embedding)].offset +
                                      static_cast<std::size_t>(col * d.embed_dim)
                                : groups[static_cast<std::size_t>(layout.no_scene)].offset);
  const double* wp = store.values().data() + groups[static_cast<std::size_t>(layout.w_proj)].offset;
  const double* bp = store.values().data() + groups[static_cast<std::size_t>(layout.b_proj)].offset;
  std::vector<double> out(static_cast<std::size_t>(d.out_dim));
  for (int r = 0; r < d.out_dim; ++r) {
    double a = bp[r];
    for (int k = 0; k < g; ++k) a += wp[r + k * d.out_dim] * h[static_cast<std::size_t>(k)];
    for (int k = 0; k < d.embed_dim; ++k) a += wp[r + (g + k) * d.out_dim] * emb[k];
    out[static_cast<std::size_t>(r)] = std::tanh(a);
  }
  return out;
}

}  // namespace flowassoc::context
