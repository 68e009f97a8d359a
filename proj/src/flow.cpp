#include "flowassoc/flow.hpp"

#include <cmath>
#include <numbers>

#include "flowassoc/errors.hpp"

namespace flowassoc::flow {

namespace {

constexpr Eigen::Index kChunk = 64;

double squash(double a) { return kAlphaBound * std::tanh(a / kAlphaBound); }

/// Masked weights, materialized once per batched call.
struct Effective {
  std::vector<Eigen::MatrixXd> w_in, w_hid, w_mu, w_alpha;
};

Effective effective_weights(const FlowModel& m) {
  Effective e;
  const auto& p = m.params();
  for (const auto& b : m.blocks()) {
    e.w_in.push_back(p.mat(b.w_in).cwiseProduct(m.mask_in()));
    e.w_hid.push_back(p.mat(b.w_hid).cwiseProduct(m.mask_hid()));
    e.w_mu.push_back(p.mat(b.w_mu).cwiseProduct(m.mask_out()));
    e.w_alpha.push_back(p.mat(b.w_alpha).cwiseProduct(m.mask_out()));
  }
  return e;
}

struct BlockCache {
  Eigen::MatrixXd u, h1, h2, alpha_raw, alpha, y, v;
};

struct ChunkCache {
  Eigen::MatrixXd ctx;
  context::EncoderCache enc;
  std::vector<BlockCache> blocks;
};

/// Density direction over a chunk. Returns z0 (D x n); log_det per column.
Eigen::MatrixXd forward_chunk(const FlowModel& m, const Effective& eff, const Eigen::MatrixXd& x,
                              const Eigen::MatrixXd& ctx, Eigen::VectorXd& log_det, ChunkCache* cache) {
  const auto& st = m.standardization();
  const auto& p = m.params();
  const int d = m.dim();
  const Eigen::Index n = x.cols();

  Eigen::MatrixXd cur(d, n);
  double const_logdet = 0.0;
  for (int i = 0; i < d; ++i) {
    cur.row(i) = (x.row(i).array() - st.mean[static_cast<std::size_t>(i)]) / st.stddev[static_cast<std::size_t>(i)];
    const_logdet -= std::log(st.stddev[static_cast<std::size_t>(i)]);
  }
  log_det = Eigen::VectorXd::Constant(n, const_logdet);
  if (cache) cache->blocks.assign(m.blocks().size(), {});

  for (std::size_t l = 0; l < m.blocks().size(); ++l) {
    const auto& b = m.blocks()[l];
    Eigen::MatrixXd pre1 = eff.w_in[l] * cur;
    pre1.colwise() += p.mat(b.b_in).col(0);
    if (m.has_context()) pre1.noalias() += p.mat(b.w_ctx) * ctx;
    const Eigen::MatrixXd h1 = pre1.array().tanh().matrix();
    Eigen::MatrixXd pre2 = eff.w_hid[l] * h1;
    pre2.colwise() += p.mat(b.b_hid).col(0);
    const Eigen::MatrixXd h2 = pre2.array().tanh().matrix();
    Eigen::MatrixXd mu = eff.w_mu[l] * h2;
    mu.colwise() += p.mat(b.b_mu).col(0);
    Eigen::MatrixXd alpha_raw = eff.w_alpha[l] * h2;
    alpha_raw.colwise() += p.mat(b.b_alpha).col(0);
    const Eigen::MatrixXd alpha = alpha_raw.unaryExpr(&squash);
    const Eigen::MatrixXd y = ((cur - mu).array() * (-alpha.array()).exp()).matrix();
    log_det -= alpha.colwise().sum().transpose();

    const auto ls = p.mat(b.log_scale);
    const auto bias = p.mat(b.bias);
    Eigen::MatrixXd v(d, n);
    for (int i = 0; i < d; ++i) v.row(i) = (y.row(i).array() - bias(i, 0)) * std::exp(-ls(i, 0));
    log_det.array() -= ls.sum();

    if (!v.allFinite()) throw NumericalError("flow block " + std::to_string(l), "non-finite activation");
    if (cache) {
      auto& c = cache->blocks[l];
      c.u = cur;
      c.h1 = h1;
      c.h2 = h2;
      c.alpha_raw = std::move(alpha_raw);
      c.alpha = alpha;
      c.y = y;
      c.v = v;
    }
    cur = v.colwise().reverse();
  }
  return cur;
}

/// Accumulates the summed (not mean) NLL gradient of a chunk into `grad`
/// and returns d(loss)/d(ctx).
Eigen::MatrixXd backward_chunk(const FlowModel& m, const Effective& eff, const ChunkCache& cache,
                               const Eigen::MatrixXd& z0, std::vector<double>& grad) {
  const auto& p = m.params();
  const auto& groups = p.groups();
  const int d = m.dim();
  const Eigen::Index n = z0.cols();
  auto gview = [&](int g) { return ParamStore::view(grad, groups[static_cast<std::size_t>(g)]); };

  Eigen::MatrixXd g = z0;  // d/dz0 of 0.5 |z0|^2
  Eigen::MatrixXd g_ctx;
  if (m.has_context()) g_ctx = Eigen::MatrixXd::Zero(m.config().context_dim, n);

  for (std::size_t li = m.blocks().size(); li-- > 0;) {
    const auto& b = m.blocks()[li];
    const auto& c = cache.blocks[li];
    const Eigen::MatrixXd g_v = g.colwise().reverse();

    const auto ls = p.mat(b.log_scale);
    Eigen::MatrixXd g_y(d, n);
    for (int i = 0; i < d; ++i) {
      const double e = std::exp(-ls(i, 0));
      g_y.row(i) = g_v.row(i) * e;
      gview(b.bias)(i, 0) += -g_v.row(i).sum() * e;
      // -(v * g_v) from the scaling; +1 per sample from the -log|det| term.
      gview(b.log_scale)(i, 0) += -(g_v.row(i).array() * c.v.row(i).array()).sum() + static_cast<double>(n);
    }

    const Eigen::ArrayXXd inv_scale = (-c.alpha.array()).exp();
    Eigen::MatrixXd g_u = (g_y.array() * inv_scale).matrix();
    const Eigen::MatrixXd g_mu = -g_u;
    const Eigen::ArrayXXd g_alpha = -(g_y.array() * c.y.array()) + 1.0;
    const Eigen::ArrayXXd t = (c.alpha_raw.array() / kAlphaBound).tanh();
    const Eigen::MatrixXd g_araw = (g_alpha * (1.0 - t.square())).matrix();

    gview(b.w_mu) += (g_mu * c.h2.transpose()).cwiseProduct(m.mask_out());
    gview(b.b_mu) += g_mu.rowwise().sum();
    gview(b.w_alpha) += (g_araw * c.h2.transpose()).cwiseProduct(m.mask_out());
    gview(b.b_alpha) += g_araw.rowwise().sum();

    const Eigen::MatrixXd g_h2 = eff.w_mu[li].transpose() * g_mu + eff.w_alpha[li].transpose() * g_araw;
    const Eigen::MatrixXd g_p2 = (g_h2.array() * (1.0 - c.h2.array().square())).matrix();
    gview(b.w_hid) += (g_p2 * c.h1.transpose()).cwiseProduct(m.mask_hid());
    gview(b.b_hid) += g_p2.rowwise().sum();
    const Eigen::MatrixXd g_h1 = eff.w_hid[li].transpose() * g_p2;
    const Eigen::MatrixXd g_p1 = (g_h1.array() * (1.0 - c.h1.array().square())).matrix();
    gview(b.w_in) += (g_p1 * c.u.transpose()).cwiseProduct(m.mask_in());
    gview(b.b_in) += g_p1.rowwise().sum();
    if (m.has_context()) {
      gview(b.w_ctx) += g_p1 * cache.ctx.transpose();
      g_ctx.noalias() += p.mat(b.w_ctx).transpose() * g_p1;
    }
    g_u.noalias() += eff.w_in[li].transpose() * g_p1;
    g = std::move(g_u);
  }
  return g_ctx;
}

double chunk_loss(const Eigen::MatrixXd& z0, const Eigen::VectorXd& log_det) {
  const double c = 0.5 * static_cast<double>(z0.rows()) * std::log(2.0 * std::numbers::pi);
  return (0.5 * z0.colwise().squaredNorm().transpose().array() + c - log_det.array()).sum();
}

Eigen::VectorXd log_prob_from(const Eigen::MatrixXd& z0, const Eigen::VectorXd& log_det) {
  const double c = 0.5 * static_cast<double>(z0.rows()) * std::log(2.0 * std::numbers::pi);
  return (-0.5 * z0.colwise().squaredNorm().transpose().array() - c + log_det.array()).matrix();
}

Eigen::Index chunk_count(Eigen::Index n) { return (n + kChunk - 1) / kChunk; }

}  // namespace

void FlowConfig::validate() const {
  if (input_dim < 1 || blocks < 1 || hidden < 1) throw InvalidArgument("flow dims and block count must be >= 1");
  if (context_dim < 0) throw InvalidArgument("context_dim must be >= 0");
  if (context_dim > 0 && (window_dim < 1 || gru_hidden < 1 || embed_dim < 1 || scene_clusters < 1)) {
    throw InvalidArgument("context encoder dims must be >= 1");
  }
  if (!(learning_rate > 0.0) || batch_size < 1 || epochs < 0) throw InvalidArgument("invalid training settings");
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0)) {
    throw InvalidArgument("validation_fraction must lie in (0,1)");
  }
}

FlowModel::FlowModel(const FlowConfig& config) : config_(config) {
  config_.validate();
  build_layout();
  Rng rng(derive_seed(config_.seed, 0xf1));
  const int d = config_.input_dim;
  const int h = config_.hidden;
  const int c = config_.context_dim;
  auto fill_uniform = [&](int group, double bound, const Eigen::MatrixXd* mask) {
    auto w = params_.mat(group);
    for (Eigen::Index j = 0; j < w.cols(); ++j)
      for (Eigen::Index i = 0; i < w.rows(); ++i) {
        const double v = uniform(rng, -bound, bound);
        w(i, j) = (mask && (*mask)(i, j) == 0.0) ? 0.0 : v;
      }
  };
  for (const auto& b : blocks_) {
    fill_uniform(b.w_in, 1.0 / std::sqrt(static_cast<double>(d + c)), &mask_in_);
    if (b.w_ctx >= 0) fill_uniform(b.w_ctx, 1.0 / std::sqrt(static_cast<double>(d + c)), nullptr);
    fill_uniform(b.w_hid, 1.0 / std::sqrt(static_cast<double>(h)), &mask_hid_);
  }
  if (has_context()) {
    const auto& e = encoder_;
    const double gb = 1.0 / std::sqrt(static_cast<double>(config_.gru_hidden));
    fill_uniform(e.w_input, gb, nullptr);
    fill_uniform(e.w_hidden, gb, nullptr);
    fill_uniform(e.b_input, gb, nullptr);
    fill_uniform(e.b_hidden, gb, nullptr);
    fill_uniform(e.embedding, 0.5, nullptr);
    fill_uniform(e.no_scene, 0.5, nullptr);
    fill_uniform(e.w_proj, 1.0 / std::sqrt(static_cast<double>(config_.gru_hidden + config_.embed_dim)), nullptr);
  }
  standard_.mean.assign(static_cast<std::size_t>(d), 0.0);
  standard_.stddev.assign(static_cast<std::size_t>(d), 1.0);
  standard_.window_scale.assign(static_cast<std::size_t>(config_.window_dim), 1.0);
}

void FlowModel::build_layout() {
  const int d = config_.input_dim;
  const int h = config_.hidden;
  const int c = config_.context_dim;
  for (int l = 0; l < config_.blocks; ++l) {
    const std::string pre = "block" + std::to_string(l) + ".";
    BlockLayout b;
    b.w_in = params_.add(pre + "w_in", h, d);
    if (c > 0) b.w_ctx = params_.add(pre + "w_ctx", h, c);
    b.b_in = params_.add(pre + "b_in", h, 1);
    b.w_hid = params_.add(pre + "w_hid", h, h);
    b.b_hid = params_.add(pre + "b_hid", h, 1);
    b.w_mu = params_.add(pre + "w_mu", d, h);
    b.b_mu = params_.add(pre + "b_mu", d, 1);
    b.w_alpha = params_.add(pre + "w_alpha", d, h);
    b.b_alpha = params_.add(pre + "b_alpha", d, 1);
    b.log_scale = params_.add(pre + "log_scale", d, 1);
    b.bias = params_.add(pre + "bias", d, 1);
    blocks_.push_back(b);
  }
  if (c > 0) {
    context::EncoderDims dims;
    dims.window_dim = config_.window_dim;
    dims.gru_hidden = config_.gru_hidden;
    dims.embed_dim = config_.embed_dim;
    dims.clusters = config_.scene_clusters;
    dims.out_dim = c;
    encoder_ = context::add_encoder_params(params_, dims);
  }

  // Autoregressive degrees: input i has degree i + 1, hidden units cycle
  // through 0..D-1 (degree 0 sees only the context).
  mask_in_.resize(h, d);
  mask_hid_.resize(h, h);
  mask_out_.resize(d, h);
  auto hdeg = [&](int k) { return k % d; };
  for (int k = 0; k < h; ++k)
    for (int i = 0; i < d; ++i) mask_in_(k, i) = hdeg(k) >= i + 1 ? 1.0 : 0.0;
  for (int k = 0; k < h; ++k)
    for (int j = 0; j < h; ++j) mask_hid_(k, j) = hdeg(k) >= hdeg(j) ? 1.0 : 0.0;
  for (int i = 0; i < d; ++i)
    for (int k = 0; k < h; ++k) mask_out_(i, k) = i + 1 > hdeg(k) ? 1.0 : 0.0;
}

void FlowModel::randomize(std::uint64_t seed, double scale) {
  Rng rng(derive_seed(seed, 0x7a));
  auto& vals = params_.values();
  for (auto& v : vals) v = uniform(rng, -scale, scale);
  for (const auto& b : blocks_) {
    params_.mat(b.w_in).array() *= mask_in_.array();
    params_.mat(b.w_hid).array() *= mask_hid_.array();
    params_.mat(b.w_mu).array() *= mask_out_.array();
    params_.mat(b.w_alpha).array() *= mask_out_.array();
  }
}

int FlowModel::cluster_for(std::span<const double> descriptor) const {
  if (scene_clusters.empty()) return -1;
  return context::assign_cluster(descriptor, scene_clusters);
}

FlowBatch FlowBatch::subset(std::span<const std::size_t> idx) const {
  FlowBatch out;
  out.x.resize(x.rows(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t k = 0; k < idx.size(); ++k) out.x.col(static_cast<Eigen::Index>(k)) = x.col(static_cast<Eigen::Index>(idx[k]));
  if (!windows.empty()) {
    out.windows.reserve(idx.size());
    for (auto i : idx) out.windows.push_back(windows[i]);
  }
  if (!clusters.empty()) {
    out.clusters.reserve(idx.size());
    for (auto i : idx) out.clusters.push_back(clusters[i]);
  }
  return out;
}

namespace {

context::TrackWindow empty_window() { return {}; }

Eigen::MatrixXd encode_range(const FlowModel& m, std::span<const context::TrackWindow> windows,
                             std::span<const int> clusters, Eigen::Index begin, Eigen::Index n,
                             context::EncoderCache* cache) {
  static const std::vector<context::TrackWindow> no_history(static_cast<std::size_t>(kChunk), empty_window());
  std::span<const context::TrackWindow> w =
      windows.empty() ? std::span<const context::TrackWindow>(no_history).first(static_cast<std::size_t>(n))
                      : windows.subspan(static_cast<std::size_t>(begin), static_cast<std::size_t>(n));
  std::span<const int> c =
      clusters.empty() ? std::span<const int>() : clusters.subspan(static_cast<std::size_t>(begin), static_cast<std::size_t>(n));
  return context::encode_batch(m.params(), m.encoder(), w, c, m.config().scene_conditioning,
                               m.standardization().window_scale, cache);
}

}  // namespace

Eigen::MatrixXd context_batch(const FlowModel& model, std::span<const context::TrackWindow> windows,
                              std::span<const int> clusters, Exec exec) {
  if (!model.has_context()) return {};
  const auto n = static_cast<Eigen::Index>(windows.size());
  Eigen::MatrixXd out(model.config().context_dim, n);
  const Eigen::Index chunks = chunk_count(n);
#pragma omp parallel for schedule(static) if (exec == Exec::parallel && chunks > 1)
  for (Eigen::Index k = 0; k < chunks; ++k) {
    const Eigen::Index b = k * kChunk;
    const Eigen::Index len = std::min(kChunk, n - b);
    out.middleCols(b, len) = encode_range(model, windows, clusters, b, len, nullptr);
  }
  return out;
}

Eigen::VectorXd log_prob_with_context(const FlowModel& model, const Eigen::MatrixXd& x, const Eigen::MatrixXd& ctx,
                                      Exec exec) {
  if (x.rows() != model.dim()) throw InvalidArgument("log_prob: input dimension mismatch");
  const Eigen::Index n = x.cols();
  const Effective eff = effective_weights(model);
  Eigen::VectorXd out(n);
  const Eigen::Index chunks = chunk_count(n);
  std::vector<std::string> errors(static_cast<std::size_t>(chunks));
#pragma omp parallel for schedule(static) if (exec == Exec::parallel && chunks > 1)
  for (Eigen::Index k = 0; k < chunks; ++k) {
    const Eigen::Index b = k * kChunk;
    const Eigen::Index len = std::min(kChunk, n - b);
    try {
      Eigen::VectorXd ld;
      const Eigen::MatrixXd c = model.has_context() ? Eigen::MatrixXd(ctx.middleCols(b, len)) : Eigen::MatrixXd();
      const Eigen::MatrixXd z0 = forward_chunk(model, eff, x.middleCols(b, len), c, ld, nullptr);
      out.segment(b, len) = log_prob_from(z0, ld);
    } catch (const NumericalError& e) {
      errors[static_cast<std::size_t>(k)] = e.where();
    }
  }
  for (const auto& e : errors) {
    if (!e.empty()) throw NumericalError(e, "non-finite activation");
  }
  return out;
}

Eigen::VectorXd log_prob_batch(const FlowModel& model, const FlowBatch& batch, Exec exec) {
  Eigen::MatrixXd ctx;
  if (model.has_context()) {
    if (batch.windows.empty()) {
      const std::vector<context::TrackWindow> none(batch.size());
      ctx = context_batch(model, none, batch.clusters, exec);
    } else {
      ctx = context_batch(model, batch.windows, batch.clusters, exec);
    }
  }
  return log_prob_with_context(model, batch.x, ctx, exec);
}

double mean_nll(const FlowModel& model, const FlowBatch& batch, Exec exec) {
  if (batch.size() == 0) throw InvalidArgument("mean_nll: empty batch");
  return -log_prob_batch(model, batch, exec).mean();
}

Gradient grad_nll(const FlowModel& model, const FlowBatch& batch, Exec exec) {
  const Eigen::Index n = batch.x.cols();
  if (n == 0) throw InvalidArgument("grad_nll: empty batch");
  if (batch.x.rows() != model.dim()) throw InvalidArgument("grad_nll: input dimension mismatch");
  const Effective eff = effective_weights(model);
  const Eigen::Index chunks = chunk_count(n);
  const std::size_t np = model.params().size();
  std::vector<std::vector<double>> grads(static_cast<std::size_t>(chunks));
  std::vector<double> losses(static_cast<std::size_t>(chunks), 0.0);
  std::vector<std::string> errors(static_cast<std::size_t>(chunks));

#pragma omp parallel for schedule(static) if (exec == Exec::parallel && chunks > 1)
  for (Eigen::Index k = 0; k < chunks; ++k) {
    const Eigen::Index b = k * kChunk;
    const Eigen::Index len = std::min(kChunk, n - b);
    auto& g = grads[static_cast<std::size_t>(k)];
    g.assign(np, 0.0);
    try {
      ChunkCache cache;
      if (model.has_context()) cache.ctx = encode_range(model, batch.windows, batch.clusters, b, len, &cache.enc);
      Eigen::VectorXd ld;
      const Eigen::MatrixXd z0 = forward_chunk(model, eff, batch.x.middleCols(b, len), cache.ctx, ld, &cache);
      losses[static_cast<std::size_t>(k)] = chunk_loss(z0, ld);
      const Eigen::MatrixXd g_ctx = backward_chunk(model, eff, cache, z0, g);
      if (model.has_context()) {
        context::encode_backward(model.params(), model.encoder(), cache.enc, g_ctx,
                                 model.standardization().window_scale, g);
      }
    } catch (const NumericalError& e) {
      errors[static_cast<std::size_t>(k)] = e.where();
    }
  }
  for (const auto& e : errors) {
    if (!e.empty()) throw NumericalError(e, "non-finite activation");
  }

  Gradient out;
  out.grad.assign(np, 0.0);
  for (Eigen::Index k = 0; k < chunks; ++k) {
    const auto& g = grads[static_cast<std::size_t>(k)];
    for (std::size_t i = 0; i < np; ++i) out.grad[i] += g[i];
    out.loss += losses[static_cast<std::size_t>(k)];
  }
  const double inv = 1.0 / static_cast<double>(n);
  for (auto& v : out.grad) v *= inv;
  out.loss *= inv;
  for (const auto& grp : model.params().groups()) {
    for (std::size_t i = grp.offset; i < grp.offset + grp.size(); ++i) {
      if (!std::isfinite(out.grad[i])) throw NumericalError(grp.name, "non-finite gradient");
    }
  }
  return out;
}

void init_actnorm(FlowModel& model, const FlowBatch& batch) {
  if (batch.size() == 0) throw InvalidArgument("init_actnorm: empty batch");
  const int d = model.dim();
  auto& p = model.params();
  Eigen::MatrixXd ctx;
  if (model.has_context()) {
    const std::vector<context::TrackWindow> none(batch.windows.empty() ? batch.size() : 0);
    ctx = context_batch(model, batch.windows.empty() ? std::span<const context::TrackWindow>(none) : batch.windows,
                        batch.clusters);
  }
  const auto& st = model.standardization();
  Eigen::MatrixXd cur(d, batch.x.cols());
  for (int i = 0; i < d; ++i) cur.row(i) = (batch.x.row(i).array() - st.mean[i]) / st.stddev[i];
  for (std::size_t l = 0; l < model.blocks().size(); ++l) {
    const Effective eff = effective_weights(model);
    const auto& b = model.blocks()[l];
    Eigen::MatrixXd pre1 = eff.w_in[l] * cur;
    pre1.colwise() += p.mat(b.b_in).col(0);
    if (model.has_context()) pre1.noalias() += p.mat(b.w_ctx) * ctx;
    Eigen::MatrixXd pre2 = eff.w_hid[l] * pre1.array().tanh().matrix();
    pre2.colwise() += p.mat(b.b_hid).col(0);
    const Eigen::MatrixXd h2 = pre2.array().tanh().matrix();
    Eigen::MatrixXd mu = eff.w_mu[l] * h2;
    mu.colwise() += p.mat(b.b_mu).col(0);
    Eigen::MatrixXd a = eff.w_alpha[l] * h2;
    a.colwise() += p.mat(b.b_alpha).col(0);
    const Eigen::MatrixXd y = ((cur - mu).array() * (-a.unaryExpr(&squash).array()).exp()).matrix();
    Eigen::MatrixXd v(d, y.cols());
    for (int i = 0; i < d; ++i) {
      const double mean = y.row(i).mean();
      const double var = (y.row(i).array() - mean).square().mean();
      const double sd = var > 1e-12 ? std::sqrt(var) : 1.0;
      p.mat(b.bias)(i, 0) = mean;
      p.mat(b.log_scale)(i, 0) = std::log(sd);
      v.row(i) = (y.row(i).array() - mean) / sd;
    }
    cur = v.colwise().reverse();
  }
}

std::vector<Eigen::MatrixXd> grad_window_inputs(const FlowModel& model, const FlowBatch& batch) {
  if (!model.has_context()) throw InvalidArgument("grad_window_inputs: model has no context encoder");
  const Effective eff = effective_weights(model);
  const Eigen::Index n = batch.x.cols();
  ChunkCache cache;
  const std::vector<context::TrackWindow> none(batch.windows.empty() ? batch.size() : 0);
  const std::span<const context::TrackWindow> windows =
      batch.windows.empty() ? std::span<const context::TrackWindow>(none) : std::span(batch.windows);
  cache.ctx = context::encode_batch(model.params(), model.encoder(), windows, batch.clusters,
                                    model.config().scene_conditioning, model.standardization().window_scale,
                                    &cache.enc);
  Eigen::VectorXd ld;
  const Eigen::MatrixXd z0 = forward_chunk(model, eff, batch.x, cache.ctx, ld, &cache);
  std::vector<double> g(model.params().size(), 0.0);
  const Eigen::MatrixXd g_ctx = backward_chunk(model, eff, cache, z0, g);
  std::vector<Eigen::MatrixXd> steps;
  context::encode_backward(model.params(), model.encoder(), cache.enc, g_ctx / static_cast<double>(n),
                           model.standardization().window_scale, g, &steps);
  return steps;
}

}  // namespace flowassoc::flow
