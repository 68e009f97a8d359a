// Scalar, loop-based evaluation of a single sample. Kept deliberately plain:
// the batched kernels are tested against it.
#include <cmath>
#include <numbers>

#include "flowassoc/errors.hpp"
#include "flowassoc/flow.hpp"

namespace flowassoc::flow {

namespace {

struct MadeOut {
  std::vector<double> mu, alpha;
};

MadeOut made_eval(const FlowModel& m, const BlockLayout& b, const std::vector<double>& u,
                  const std::vector<double>& ctx) {
  const auto& p = m.params();
  const int d = m.dim();
  const int h = m.config().hidden;
  const auto w_in = p.mat(b.w_in);
  const auto b_in = p.mat(b.b_in);
  const auto w_hid = p.mat(b.w_hid);
  const auto b_hid = p.mat(b.b_hid);
  const auto w_mu = p.mat(b.w_mu);
  const auto b_mu = p.mat(b.b_mu);
  const auto w_alpha = p.mat(b.w_alpha);
  const auto b_alpha = p.mat(b.b_alpha);

  std::vector<double> h1(static_cast<std::size_t>(h)), h2(static_cast<std::size_t>(h));
  for (int k = 0; k < h; ++k) {
    double s = b_in(k, 0);
    for (int i = 0; i < d; ++i) s += w_in(k, i) * m.mask_in()(k, i) * u[i];
    if (m.has_context()) {
      const auto w_ctx = p.mat(b.w_ctx);
      for (std::size_t c = 0; c < ctx.size(); ++c) s += w_ctx(k, static_cast<Eigen::Index>(c)) * ctx[c];
    }
    h1[k] = std::tanh(s);
  }
  for (int k = 0; k < h; ++k) {
    double s = b_hid(k, 0);
    for (int j = 0; j < h; ++j) s += w_hid(k, j) * m.mask_hid()(k, j) * h1[j];
    h2[k] = std::tanh(s);
  }
  MadeOut out{std::vector<double>(static_cast<std::size_t>(d)), std::vector<double>(static_cast<std::size_t>(d))};
  for (int i = 0; i < d; ++i) {
    double mu = b_mu(i, 0);
    double a = b_alpha(i, 0);
    for (int k = 0; k < h; ++k) {
      mu += w_mu(i, k) * m.mask_out()(i, k) * h2[k];
      a += w_alpha(i, k) * m.mask_out()(i, k) * h2[k];
    }
    out.mu[i] = mu;
    out.alpha[i] = kAlphaBound * std::tanh(a / kAlphaBound);
  }
  return out;
}

bool all_finite(const std::vector<double>& v) {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

}  // namespace

std::vector<double> context_vector(const FlowModel& model, const Conditioning& cond) {
  if (!model.has_context()) return {};
  const context::TrackWindow none{};
  return context::encode_reference(model.params(), model.encoder(), cond.window ? *cond.window : none, cond.cluster,
                                   model.config().scene_conditioning, model.standardization().window_scale);
}

DensityResult density_pass(const FlowModel& model, std::span<const double> x, const Conditioning& cond) {
  const int d = model.dim();
  if (static_cast<int>(x.size()) != d) throw InvalidArgument("density_pass: input dimension mismatch");
  const auto& st = model.standardization();
  const auto& p = model.params();
  const std::vector<double> ctx = context_vector(model, cond);

  DensityResult r;
  std::vector<double> cur(static_cast<std::size_t>(d));
  for (int i = 0; i < d; ++i) {
    cur[i] = (x[i] - st.mean[i]) / st.stddev[i];
    r.log_det -= std::log(st.stddev[i]);
  }
  for (std::size_t l = 0; l < model.blocks().size(); ++l) {
    const auto& b = model.blocks()[l];
    const MadeOut made = made_eval(model, b, cur, ctx);
    std::vector<double> v(static_cast<std::size_t>(d));
    for (int i = 0; i < d; ++i) {
      const double y = (cur[i] - made.mu[i]) * std::exp(-made.alpha[i]);
      r.log_det -= made.alpha[i];
      const double ls = p.mat(b.log_scale)(i, 0);
      v[i] = (y - p.mat(b.bias)(i, 0)) * std::exp(-ls);
      r.log_det -= ls;
    }
    if (!all_finite(v)) throw NumericalError("flow block " + std::to_string(l), "non-finite activation");
    for (int i = 0; i < d; ++i) cur[i] = v[d - 1 - i];
  }
  r.z0 = std::move(cur);
  return r;
}

double log_prob(const FlowModel& model, std::span<const double> x, const Conditioning& cond) {
  const DensityResult r = density_pass(model, x, cond);
  double q = 0.0;
  for (double z : r.z0) q += z * z;
  return -0.5 * q - 0.5 * static_cast<double>(r.z0.size()) * std::log(2.0 * std::numbers::pi) + r.log_det;
}

std::vector<double> sample_pass(const FlowModel& model, std::span<const double> z0, const Conditioning& cond) {
  const int d = model.dim();
  if (static_cast<int>(z0.size()) != d) throw InvalidArgument("sample_pass: input dimension mismatch");
  const auto& st = model.standardization();
  const auto& p = model.params();
  const std::vector<double> ctx = context_vector(model, cond);

  std::vector<double> cur(z0.begin(), z0.end());
  for (std::size_t l = model.blocks().size(); l-- > 0;) {
    const auto& b = model.blocks()[l];
    std::vector<double> y(static_cast<std::size_t>(d));
    for (int i = 0; i < d; ++i) {
      const double v = cur[d - 1 - i];
      y[i] = v * std::exp(p.mat(b.log_scale)(i, 0)) + p.mat(b.bias)(i, 0);
    }
    std::vector<double> u(static_cast<std::size_t>(d), 0.0);
    for (int i = 0; i < d; ++i) {
      // Output i only depends on u[0..i-1], which are final by now.
      const MadeOut made = made_eval(model, b, u, ctx);
      u[i] = y[i] * std::exp(made.alpha[i]) + made.mu[i];
    }
    if (!all_finite(u)) throw NumericalError("flow block " + std::to_string(l), "non-finite sample");
    cur = std::move(u);
  }
  for (int i = 0; i < d; ++i) cur[i] = cur[i] * st.stddev[i] + st.mean[i];
  return cur;
}

std::vector<double> sample(const FlowModel& model, Rng& rng, const Conditioning& cond) {
  std::vector<double> z(static_cast<std::size_t>(model.dim()));
  for (auto& v : z) v = normal(rng);
  return sample_pass(model, z, cond);
}

}  // namespace flowassoc::flow
