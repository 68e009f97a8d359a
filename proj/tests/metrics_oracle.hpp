#pragma once

#include <algorithm>
#include <vector>

#include "flowassoc/sim.hpp"
#include "flowassoc/tracker.hpp"

namespace testutil {

/// Best identity matching by enumerating every injection of gt ids into
/// predicted ids (plus "unmatched").
inline double brute_idf1(const std::vector<flowassoc::sim::GroundTruthRow>& gt,
                         const std::vector<flowassoc::tracker::TrackRow>& pred) {
  std::vector<int> gids, pids;
  for (const auto& g : gt)
    if (std::find(gids.begin(), gids.end(), g.id) == gids.end()) gids.push_back(g.id);
  for (const auto& p : pred)
    if (std::find(pids.begin(), pids.end(), p.id) == pids.end()) pids.push_back(p.id);
  auto overlap = [&](int gid, int pid) {
    long n = 0;
    for (const auto& g : gt)
      for (const auto& p : pred)
        if (g.id == gid && p.id == pid && g.frame == p.frame && flowassoc::iou(g.bbox, p.bbox) >= 0.5) ++n;
    return n;
  };
  long best = 0;
  std::vector<char> used(pids.size(), 0);
  auto rec = [&](auto&& self, std::size_t k, long tp) -> void {
    if (k == gids.size()) {
      best = std::max(best, tp);
      return;
    }
    self(self, k + 1, tp);
    for (std::size_t j = 0; j < pids.size(); ++j) {
      if (used[j]) continue;
      used[j] = 1;
      self(self, k + 1, tp + overlap(gids[k], pids[j]));
      used[j] = 0;
    }
  };
  rec(rec, 0, 0);
  return 2.0 * best / static_cast<double>(gt.size() + pred.size());
}

}  // namespace testutil
