#include <algorithm>
#include <cmath>
#include <numeric>

#include "flowassoc/errors.hpp"
#include "flowassoc/flow.hpp"

namespace flowassoc::flow {

namespace {

constexpr double kAcceptQuantile = 0.995;

double quantile(std::vector<double> v, double q) {
  if (v.empty()) return std::numeric_limits<double>::infinity();
  const auto k = static_cast<std::size_t>(std::clamp(std::ceil(q * static_cast<double>(v.size())) - 1.0, 0.0,
                                                     static_cast<double>(v.size() - 1)));
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(k), v.end());
  return v[k];
}

double guarded_std(double var) { return var > 1e-18 ? std::sqrt(var) : 1.0; }

struct Adam {
  std::vector<double> m, v;
  long t = 0;
  double lr;
  explicit Adam(std::size_t n, double learning_rate) : m(n, 0.0), v(n, 0.0), lr(learning_rate) {}

  void step(std::vector<double>& params, const std::vector<double>& grad) {
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    ++t;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t));
    for (std::size_t i = 0; i < params.size(); ++i) {
      m[i] = b1 * m[i] + (1.0 - b1) * grad[i];
      v[i] = b2 * v[i] + (1.0 - b2) * grad[i] * grad[i];
      params[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
    }
  }
};

FlowBatch select_rows(const FlowBatch& data, int first, int count) {
  FlowBatch out;
  out.x = data.x.middleRows(first, count);
  out.windows = data.windows;
  out.clusters = data.clusters;
  return out;
}

}  // namespace

void fit_standardization(FlowModel& model, const FlowBatch& data) {
  if (data.size() == 0) throw InvalidArgument("fit_standardization: empty dataset");
  auto& st = model.standardization();
  const int d = model.dim();
  st.mean.assign(static_cast<std::size_t>(d), 0.0);
  st.stddev.assign(static_cast<std::size_t>(d), 1.0);
  for (int i = 0; i < d; ++i) {
    const double mean = data.x.row(i).mean();
    st.mean[i] = mean;
    // Constant dimensions keep unit scale so they cannot blow up the density.
    st.stddev[i] = guarded_std((data.x.row(i).array() - mean).square().mean());
  }
  const int w = model.config().window_dim;
  st.window_scale.assign(static_cast<std::size_t>(w), 1.0);
  if (!model.has_context() || data.windows.empty()) return;
  std::vector<double> sum(static_cast<std::size_t>(w), 0.0), sq(static_cast<std::size_t>(w), 0.0);
  std::size_t count = 0;
  for (const auto& win : data.windows) {
    for (int s = 0; s < context::kWindowLength; ++s) {
      if (!win.valid[s]) continue;
      ++count;
      for (int c = 0; c < w; ++c) {
        sum[c] += win.steps[s][c];
        sq[c] += win.steps[s][c] * win.steps[s][c];
      }
    }
  }
  if (count < 2) return;
  for (int c = 0; c < w; ++c) {
    const double mean = sum[c] / static_cast<double>(count);
    st.window_scale[c] = guarded_std(sq[c] / static_cast<double>(count) - mean * mean);
  }
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(std::size_t n, double val_fraction,
                                                                            std::uint64_t seed) {
  if (n < 2) throw InvalidArgument("split_indices: need at least two samples");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(derive_seed(seed, 0x51));
  std::shuffle(idx.begin(), idx.end(), rng);
  const auto n_val = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(n))), 1, n - 1);
  std::vector<std::size_t> val(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::size_t> tr(idx.begin() + static_cast<std::ptrdiff_t>(n_val), idx.end());
  return {tr, val};
}

TrainResult train(const FlowBatch& data, const FlowConfig& config, const context::SceneClusterModel* clusters) {
  config.validate();
  if (data.size() == 0) throw InvalidArgument("train: empty dataset");
  if (data.size() < static_cast<std::size_t>(config.batch_size)) {
    throw InvalidArgument("train: dataset (" + std::to_string(data.size()) + ") smaller than batch size (" +
                          std::to_string(config.batch_size) + ")");
  }
  if (data.x.rows() != config.input_dim) throw InvalidArgument("train: input dimension mismatch");
  if (!data.x.allFinite()) throw InvalidArgument("train: non-finite sample");

  const auto [tr_idx, val_idx] = split_indices(data.size(), config.validation_fraction, config.seed);
  const FlowBatch train_set = data.subset(tr_idx);
  const FlowBatch val_set = data.subset(val_idx);

  TrainResult res{FlowModel(config), {}, 0.0, 0.0, 0};
  FlowModel& model = res.model;
  if (clusters) model.scene_clusters = *clusters;
  fit_standardization(model, train_set);

  const std::size_t bs = static_cast<std::size_t>(config.batch_size);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  init_actnorm(model, train_set.subset(std::span(order).first(std::min(bs, order.size()))));

  res.init_val_nll = mean_nll(model, val_set);
  res.best_val_nll = res.init_val_nll;
  std::vector<double> best = model.params().values();

  Adam adam(model.params().size(), config.learning_rate);
  Rng rng(derive_seed(config.seed, 0xe9));
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    for (std::size_t b = 0; b < order.size(); b += bs) {
      const auto idx = std::span(order).subspan(b, std::min(bs, order.size() - b));
      const Gradient g = grad_nll(model, train_set.subset(idx));
      loss_sum += g.loss * static_cast<double>(idx.size());
      adam.step(model.params().values(), g.grad);
    }
    EpochStats stats{epoch, loss_sum / static_cast<double>(order.size()), mean_nll(model, val_set)};
    if (!std::isfinite(stats.train_nll) || !std::isfinite(stats.val_nll)) {
      throw NumericalError("train", "non-finite NLL at epoch " + std::to_string(epoch));
    }
    res.trace.push_back(stats);
    if (stats.val_nll < res.best_val_nll) {
      res.best_val_nll = stats.val_nll;
      res.best_epoch = epoch;
      best = model.params().values();
    }
  }
  model.params().values() = best;

  const Eigen::VectorXd lp = log_prob_batch(model, val_set);
  std::vector<double> nll(lp.size());
  for (Eigen::Index i = 0; i < lp.size(); ++i) nll[i] = -lp[i];
  model.accept_nll = quantile(std::move(nll), kAcceptQuantile);
  return res;
}

FactorizedModel factorized_identity(const FlowConfig& base) {
  FactorizedModel m;
  for (std::size_t g = 0; g < 3; ++g) {
    FlowConfig c = base;
    c.input_dim = FactorizedModel::kGroups[g][1];
    m.parts[g] = FlowModel(c);
  }
  return m;
}

FactorizedTrainResult factorized_train(const FlowBatch& data, const FlowConfig& config,
                                       const context::SceneClusterModel* clusters) {
  if (data.x.rows() != 5) throw InvalidArgument("factorized_train: expects 5-dimensional deltas");
  FactorizedTrainResult out;
  for (std::size_t g = 0; g < 3; ++g) {
    FlowConfig c = config;
    c.input_dim = FactorizedModel::kGroups[g][1];
    out.parts[g] = train(select_rows(data, FactorizedModel::kGroups[g][0], c.input_dim), c, clusters);
    out.model.parts[g] = out.parts[g].model;
    out.best_val_nll += out.parts[g].best_val_nll;
  }
  // Same seed, same split: the parts share their validation set.
  const auto val_idx = split_indices(data.size(), config.validation_fraction, config.seed).second;
  const Eigen::VectorXd lp = factorized_log_prob_batch(out.model, data.subset(val_idx));
  std::vector<double> nll(lp.size());
  for (Eigen::Index i = 0; i < lp.size(); ++i) nll[i] = -lp[i];
  out.model.accept_nll = quantile(std::move(nll), kAcceptQuantile);
  return out;
}

double factorized_log_prob(const FactorizedModel& model, std::span<const double> x, const Conditioning& cond) {
  if (x.size() != 5) throw InvalidArgument("factorized_log_prob: expects 5-dimensional deltas");
  double total = 0.0;
  for (std::size_t g = 0; g < 3; ++g) {
    const auto [first, size] = FactorizedModel::kGroups[g];
    total += log_prob(model.parts[g], x.subspan(static_cast<std::size_t>(first), static_cast<std::size_t>(size)), cond);
  }
  return total;
}

Eigen::VectorXd factorized_log_prob_batch(const FactorizedModel& model, const FlowBatch& batch, Exec exec) {
  Eigen::VectorXd total = Eigen::VectorXd::Zero(batch.x.cols());
  for (std::size_t g = 0; g < 3; ++g) {
    const auto [first, size] = FactorizedModel::kGroups[g];
    total += log_prob_batch(model.parts[g], select_rows(batch, first, size), exec);
  }
  return total;
}

}  // namespace flowassoc::flow
