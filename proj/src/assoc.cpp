#include "flowassoc/assoc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "flowassoc/errors.hpp"
#include "flowassoc/mot_io.hpp"

namespace flowassoc::assoc {

namespace {

constexpr double kIouAccept = 0.7;  // 1 - IoU, i.e. IoU >= 0.3

using Mask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

struct Cell {
  int j, i;
};

/// log p(deltas[dims] | track context) for every listed cell. Context is
/// encoded once per track. Failing cells come back as NaN.
Eigen::VectorXd flow_cells(const flow::FlowModel& model, std::span<const TrackInput> tracks,
                           const std::vector<Cell>& cells, const Eigen::MatrixXd& deltas, int first, int size,
                           flow::Exec exec) {
  Eigen::MatrixXd track_ctx;
  if (model.has_context()) {
    std::vector<context::TrackWindow> windows;
    std::vector<int> clusters;
    for (const auto& t : tracks) {
      windows.push_back(t.window);
      clusters.push_back(t.cluster);
    }
    track_ctx = flow::context_batch(model, windows, clusters, exec);
  }
  const auto n = static_cast<Eigen::Index>(cells.size());
  Eigen::MatrixXd x = deltas.middleRows(first, size);
  Eigen::MatrixXd ctx;
  if (model.has_context()) {
    ctx.resize(track_ctx.rows(), n);
    for (Eigen::Index k = 0; k < n; ++k) ctx.col(k) = track_ctx.col(cells[static_cast<std::size_t>(k)].i);
  }
  try {
    return flow::log_prob_with_context(model, x, ctx, exec);
  } catch (const NumericalError&) {
    // Isolate the failing cells; the rest of the matrix stays usable.
    Eigen::VectorXd out(n);
    for (Eigen::Index k = 0; k < n; ++k) {
      try {
        const Eigen::MatrixXd c = model.has_context() ? Eigen::MatrixXd(ctx.col(k)) : Eigen::MatrixXd();
        out[k] = flow::log_prob_with_context(model, x.col(k), c, flow::Exec::serial)[0];
      } catch (const NumericalError&) {
        out[k] = std::numeric_limits<double>::quiet_NaN();
      }
    }
    return out;
  }
}

}  // namespace

CostMatrix::CostMatrix(int rows, int cols)
    : cost(Eigen::MatrixXd::Zero(rows, cols)), masked(Mask::Constant(rows, cols, false)) {}

std::string to_string(ProviderKind kind) {
  switch (kind) {
    case ProviderKind::iou: return "iou";
    case ProviderKind::euclidean: return "euclidean";
    case ProviderKind::flow: return "flow";
    case ProviderKind::factorized: return "factorized";
  }
  return "?";
}

ProviderKind parse_provider(const std::string& name) {
  if (name == "iou") return ProviderKind::iou;
  if (name == "euclidean") return ProviderKind::euclidean;
  if (name == "flow") return ProviderKind::flow;
  if (name == "factorized") return ProviderKind::factorized;
  throw InvalidArgument("unknown provider '" + name + "' (expected iou, euclidean, flow or factorized)");
}

CostProvider CostProvider::iou() { return {}; }

CostProvider CostProvider::euclidean() {
  CostProvider p;
  p.kind_ = ProviderKind::euclidean;
  return p;
}

CostProvider CostProvider::flow(std::shared_ptr<const flow::FlowModel> model) {
  if (!model) throw InvalidArgument("flow provider requires a checkpoint");
  if (model->dim() != DeltaFeatures::kDim) throw InvalidArgument("flow provider needs a 5-dimensional model");
  CostProvider p;
  p.kind_ = ProviderKind::flow;
  p.flow_ = std::move(model);
  return p;
}

CostProvider CostProvider::factorized(std::shared_ptr<const flow::FactorizedModel> model) {
  if (!model) throw InvalidArgument("factorized provider requires a checkpoint");
  CostProvider p;
  p.kind_ = ProviderKind::factorized;
  p.factorized_ = std::move(model);
  return p;
}

double CostProvider::accept_threshold() const {
  switch (kind_) {
    case ProviderKind::iou: return kIouAccept;
    case ProviderKind::euclidean: return std::numeric_limits<double>::infinity();
    case ProviderKind::flow: return flow_->accept_nll;
    case ProviderKind::factorized: return factorized_->accept_nll;
  }
  return 0.0;
}

DeltaFeatures compute_deltas(const kalman::Measurement& predicted, const Detection& det) {
  const kalman::Measurement z = kalman::to_measurement(det);
  return {predicted(0) - z(0), predicted(1) - z(1), predicted(2) - z(2), predicted(3) - z(3), predicted(4) - z(4)};
}

CostMatrix build_cost_matrix(std::span<const TrackInput> tracks, std::span<const Detection> dets,
                             const CostProvider& provider, const GateParams& gate, CostDiagnostics* diag,
                             flow::Exec exec) {
  const int nd = static_cast<int>(dets.size());
  const int nt = static_cast<int>(tracks.size());
  CostMatrix m(nd, nt);
  for (int j = 0; j < nd; ++j) m.det_ids.push_back(j);
  for (const auto& t : tracks) m.track_ids.push_back(t.id);

  Eigen::MatrixXd deltas(DeltaFeatures::kDim, static_cast<Eigen::Index>(nd) * nt);
  std::vector<Cell> cells;
  CostDiagnostics d;
  for (int j = 0; j < nd; ++j) {
    for (int i = 0; i < nt; ++i) {
      const DeltaFeatures df = compute_deltas(tracks[i].predicted, dets[j]);
      const bool far = std::hypot(df.dx, df.dy) > gate.center_px;
      const bool depth = provider.uses_distance() && std::abs(df.dd) > gate.distance_m;
      if (far || depth || !df.finite()) {
        m.masked(j, i) = true;
        ++d.gated;
        continue;
      }
      const auto a = df.as_array();
      deltas.col(static_cast<Eigen::Index>(cells.size())) = Eigen::Map<const Eigen::VectorXd>(a.data(), a.size());
      cells.push_back({j, i});
    }
  }
  deltas.conservativeResize(Eigen::NoChange, static_cast<Eigen::Index>(cells.size()));
  const auto nc = static_cast<Eigen::Index>(cells.size());

  Eigen::VectorXd cost(nc);
  switch (provider.kind()) {
    case ProviderKind::iou:
#pragma omp parallel for schedule(static) if (exec == flow::Exec::parallel && nc > 256)
      for (Eigen::Index k = 0; k < nc; ++k) {
        const auto& c = cells[static_cast<std::size_t>(k)];
        const auto& p = tracks[c.i].predicted;
        cost[k] = 1.0 - flowassoc::iou(BBox{p(0), p(1), p(2), p(3)}, dets[c.j].bbox);
      }
      break;
    case ProviderKind::euclidean:
      for (Eigen::Index k = 0; k < nc; ++k) cost[k] = std::hypot(deltas(0, k), deltas(1, k));
      break;
    case ProviderKind::flow:
      cost = -flow_cells(*provider.flow_model(), tracks, cells, deltas, 0, DeltaFeatures::kDim, exec);
      break;
    case ProviderKind::factorized: {
      cost.setZero();
      const auto& fm = *provider.factorized_model();
      for (std::size_t g = 0; g < 3; ++g) {
        const auto [first, size] = flow::FactorizedModel::kGroups[g];
        cost -= flow_cells(fm.parts[g], tracks, cells, deltas, first, size, exec);
      }
      break;
    }
  }
  for (Eigen::Index k = 0; k < nc; ++k) {
    const auto& c = cells[static_cast<std::size_t>(k)];
    if (std::isfinite(cost[k])) {
      m.cost(c.j, c.i) = cost[k];
    } else {
      m.masked(c.j, c.i) = true;
      ++d.numerical_failures;
    }
  }
  if (diag) *diag = d;
  return m;
}

CostMatrix normalize_cost(const CostMatrix& phi, double sigma, bool negate) {
  if (!(sigma > 0.0)) throw InvalidArgument("normalize_cost: temperature must be > 0");
  const int r = phi.rows();
  const int c = phi.cols();
  const double sign = negate ? -1.0 : 1.0;
  Eigen::MatrixXd row_p = Eigen::MatrixXd::Zero(r, c);
  Eigen::MatrixXd col_p = Eigen::MatrixXd::Zero(r, c);

  // Softmax over the unmasked cells of a line, max-shifted for stability.
  auto softmax = [&](auto&& cell, int n, auto&& out) {
    double mx = -std::numeric_limits<double>::infinity();
    for (int k = 0; k < n; ++k) {
      if (const double* v = cell(k)) mx = std::max(mx, sign * *v / sigma);
    }
    if (!std::isfinite(mx)) return;
    double sum = 0.0;
    for (int k = 0; k < n; ++k) {
      if (const double* v = cell(k)) sum += std::exp(sign * *v / sigma - mx);
    }
    for (int k = 0; k < n; ++k) {
      if (const double* v = cell(k)) out(k) = std::exp(sign * *v / sigma - mx) / sum;
    }
  };
  for (int j = 0; j < r; ++j) {
    softmax([&](int i) { return phi.masked(j, i) ? nullptr : &phi.cost(j, i); }, c,
            [&](int i) -> double& { return row_p(j, i); });
  }
  for (int i = 0; i < c; ++i) {
    softmax([&](int j) { return phi.masked(j, i) ? nullptr : &phi.cost(j, i); }, r,
            [&](int j) -> double& { return col_p(j, i); });
  }

  CostMatrix out = phi;
  for (int j = 0; j < r; ++j) {
    for (int i = 0; i < c; ++i) {
      if (phi.masked(j, i)) {
        out.cost(j, i) = 0.0;
        continue;
      }
      const double v = std::min(row_p(j, i), col_p(j, i));
      out.cost(j, i) = negate ? 1.0 - v : v;
    }
  }
  return out;
}

Assignment hungarian(const Eigen::MatrixXd& cost, const Mask& masked) {
  if (masked.rows() != cost.rows() || masked.cols() != cost.cols()) {
    throw InvalidArgument("hungarian: mask shape mismatch");
  }
  const int rows = static_cast<int>(cost.rows());
  const int cols = static_cast<int>(cost.cols());
  Assignment out;
  auto usable = [&](int j, int i) { return !masked(j, i) && std::isfinite(cost(j, i)); };

  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (int j = 0; j < rows; ++j)
    for (int i = 0; i < cols; ++i)
      if (usable(j, i)) {
        lo = std::min(lo, cost(j, i));
        hi = std::max(hi, cost(j, i));
      }

  if (std::isfinite(lo)) {
    // Forbidden cells get a cost larger than any full assignment of allowed
    // cells, so the solver first maximizes the number of allowed pairs.
    const bool transpose = rows > cols;
    const int n = transpose ? cols : rows;
    const int m = transpose ? rows : cols;
    const double big = (hi - lo + 1.0) * (n + 1);
    auto a = [&](int r, int c) {
      const int j = transpose ? c : r;
      const int i = transpose ? r : c;
      return usable(j, i) ? cost(j, i) - lo : big;
    };

    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
    std::vector<int> p(m + 1, 0), way(m + 1, 0);
    for (int r = 1; r <= n; ++r) {
      p[0] = r;
      int j0 = 0;
      std::vector<double> minv(m + 1, inf);
      std::vector<char> used(m + 1, 0);
      do {
        used[j0] = 1;
        const int i0 = p[j0];
        double delta = inf;
        int j1 = 0;
        for (int j = 1; j <= m; ++j) {
          if (used[j]) continue;
          const double cur = a(i0 - 1, j - 1) - u[i0] - v[j];
          if (cur < minv[j]) {
            minv[j] = cur;
            way[j] = j0;
          }
          if (minv[j] < delta) {
            delta = minv[j];
            j1 = j;
          }
        }
        for (int j = 0; j <= m; ++j) {
          if (used[j]) {
            u[p[j]] += delta;
            v[j] -= delta;
          } else {
            minv[j] -= delta;
          }
        }
        j0 = j1;
      } while (p[j0] != 0);
      do {
        const int j1 = way[j0];
        p[j0] = p[j1];
        j0 = j1;
      } while (j0 != 0);
    }
    for (int c = 1; c <= m; ++c) {
      if (p[c] == 0) continue;
      const int j = transpose ? c - 1 : p[c] - 1;
      const int i = transpose ? p[c] - 1 : c - 1;
      if (usable(j, i)) out.pairs.emplace_back(j, i);
    }
  }
  std::sort(out.pairs.begin(), out.pairs.end());
  std::vector<char> row_used(static_cast<std::size_t>(rows), 0), col_used(static_cast<std::size_t>(cols), 0);
  for (const auto& [j, i] : out.pairs) {
    row_used[j] = 1;
    col_used[i] = 1;
    out.total_cost += cost(j, i);
  }
  for (int j = 0; j < rows; ++j)
    if (!row_used[j]) out.unmatched_rows.push_back(j);
  for (int i = 0; i < cols; ++i)
    if (!col_used[i]) out.unmatched_cols.push_back(i);
  return out;
}

Assignment hungarian(const Eigen::MatrixXd& cost) {
  return hungarian(cost, Mask::Constant(cost.rows(), cost.cols(), false));
}

Assignment hungarian(const CostMatrix& m) { return hungarian(m.cost, m.masked); }

std::vector<std::pair<int, int>> match_by_iou(std::span<const BBox> a, std::span<const BBox> b, double min_iou) {
  const auto na = static_cast<Eigen::Index>(a.size());
  const auto nb = static_cast<Eigen::Index>(b.size());
  Eigen::MatrixXd cost(na, nb);
  Mask masked(na, nb);
  for (Eigen::Index j = 0; j < na; ++j) {
    for (Eigen::Index i = 0; i < nb; ++i) {
      const double v = iou(a[static_cast<std::size_t>(j)], b[static_cast<std::size_t>(i)]);
      cost(j, i) = 1.0 - v;
      masked(j, i) = v < min_iou;
    }
  }
  return hungarian(cost, masked).pairs;
}

AssocResult associate(std::span<const TrackInput> tracks, std::span<const Detection> dets,
                      const CostProvider& provider, const AssocParams& params, flow::Exec exec) {
  AssocResult r;
  r.raw = build_cost_matrix(tracks, dets, provider, params.gate, &r.diag, exec);
  const bool norm = params.normalize < 0 ? provider.uses_distance() : params.normalize != 0;
  if (norm) r.normalized = normalize_cost(r.raw, params.sigma, params.negate);
  const Assignment a = hungarian(norm ? r.normalized : r.raw);
  const double accept = std::isfinite(params.accept_cost) ? params.accept_cost : provider.accept_threshold();

  std::vector<char> det_used(dets.size(), 0), track_used(tracks.size(), 0);
  for (const auto& [j, i] : a.pairs) {
    if (r.raw.cost(j, i) > accept) continue;
    if (norm && r.normalized.cost(j, i) > params.max_normalized) continue;
    r.matches.emplace_back(j, i);
    det_used[static_cast<std::size_t>(j)] = 1;
    track_used[static_cast<std::size_t>(i)] = 1;
  }
  for (std::size_t j = 0; j < dets.size(); ++j)
    if (!det_used[j]) r.unmatched_dets.push_back(static_cast<int>(j));
  for (std::size_t i = 0; i < tracks.size(); ++i)
    if (!track_used[i]) r.unmatched_tracks.push_back(static_cast<int>(i));
  return r;
}

std::string format_cost_dump(int frame, const AssocResult& r) {
  std::string out;
  const bool norm = r.normalized.rows() == r.raw.rows() && r.normalized.cols() == r.raw.cols() && r.raw.cols() > 0 &&
                    r.normalized.cost.size() > 0;
  for (int j = 0; j < r.raw.rows(); ++j) {
    for (int i = 0; i < r.raw.cols(); ++i) {
      const bool masked = r.raw.masked(j, i);
      out += std::to_string(frame + 1) + "," + std::to_string(j) + "," + std::to_string(r.raw.track_ids[i]) + "," +
             (masked ? std::string("nan") : io::format_double(r.raw.cost(j, i), 9)) + "," +
             (masked || !norm ? std::string("nan") : io::format_double(r.normalized.cost(j, i), 9)) + "," +
             (masked ? "1" : "0") + "\n";
    }
  }
  return out;
}

}  // namespace flowassoc::assoc
