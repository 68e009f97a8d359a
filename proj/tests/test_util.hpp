#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "flowassoc/context.hpp"
#include "flowassoc/flow.hpp"
#include "flowassoc/rng.hpp"

namespace testutil {

using namespace flowassoc;

inline context::TrackWindow random_window(Rng& rng, double scale = 3.0) {
  context::TrackWindow w;
  const int valid = static_cast<int>(uniform(rng, 0.0, context::kWindowLength + 0.999));
  for (int s = context::kWindowLength - valid; s < context::kWindowLength; ++s) {
    w.valid[s] = true;
    for (auto& v : w.steps[s]) v = normal(rng, 0.0, scale);
  }
  return w;
}

inline flow::FlowConfig small_config(int dim = 5, int context_dim = 4) {
  flow::FlowConfig c;
  c.input_dim = dim;
  c.blocks = 2;
  c.hidden = 8;
  c.context_dim = context_dim;
  c.gru_hidden = 6;
  c.embed_dim = 3;
  c.scene_clusters = 4;
  c.seed = 11;
  return c;
}

inline flow::FlowBatch random_batch(Rng& rng, int dim, int n, bool context, int clusters = 4) {
  flow::FlowBatch b;
  b.x.resize(dim, n);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < dim; ++i) b.x(i, j) = normal(rng);
  if (context) {
    for (int j = 0; j < n; ++j) {
      b.windows.push_back(random_window(rng));
      b.clusters.push_back(static_cast<int>(uniform(rng, -1.0, clusters - 0.001)));
    }
  }
  return b;
}

/// Two-sided Kolmogorov-Smirnov p-value against N(0,1).
inline double ks_normal_pvalue(std::vector<double> xs) {
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  double d = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double cdf = 0.5 * std::erfc(-xs[i] / std::sqrt(2.0));
    d = std::max({d, cdf - static_cast<double>(i) / n, static_cast<double>(i + 1) / n - cdf});
  }
  const double t = (std::sqrt(n) + 0.12 + 0.11 / std::sqrt(n)) * d;
  double p = 0.0;
  for (int k = 1; k <= 100; ++k) p += 2.0 * ((k % 2) ? 1.0 : -1.0) * std::exp(-2.0 * k * k * t * t);
  return std::clamp(p, 0.0, 1.0);
}

}  // namespace testutil
