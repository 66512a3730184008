#pragma once

// Exhaustive references for batch-hard mining and retrieval metrics.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <vector>

namespace oracle {

struct HardTriplet {
  std::size_t positive, negative;
  double hinge;
};

struct TripletReference {
  double loss;
  std::vector<HardTriplet> anchors;
};

inline double squared_distance(const std::vector<double>& e, std::size_t dim, std::size_t a, std::size_t b) {
  double acc = 0.0;
  for (std::size_t k = 0; k < dim; ++k) {
    const double d = e[a * dim + k] - e[b * dim + k];
    acc += d * d;
  }
  return acc;
}

/// For every anchor, walks all (positive, negative) pairs and keeps the one
/// with the largest d(a,p) - d(a,n); the first pair wins ties.
inline TripletReference batch_hard(const std::vector<double>& e, std::size_t dim, const std::vector<std::uint32_t>& labels,
                                   double margin, bool squared = true) {
  const std::size_t n = labels.size();
  auto dist = [&](std::size_t a, std::size_t b) {
    const double d2 = squared_distance(e, dim, a, b);
    return squared ? d2 : std::sqrt(d2);
  };
  TripletReference out{0.0, {}};
  for (std::size_t a = 0; a < n; ++a) {
    bool found = false;
    HardTriplet best{0, 0, 0.0};
    double best_gap = 0.0;
    for (std::size_t p = 0; p < n; ++p) {
      if (p == a || labels[p] != labels[a]) continue;
      for (std::size_t q = 0; q < n; ++q) {
        if (labels[q] == labels[a]) continue;
        const double gap = dist(a, p) - dist(a, q);
        if (!found || gap > best_gap) {
          found = true;
          best_gap = gap;
          best = {p, q, 0.0};
        }
      }
    }
    best.hinge = std::max(0.0, margin + best_gap);
    out.anchors.push_back(best);
    out.loss += best.hinge;
  }
  out.loss /= static_cast<double>(n);
  return out;
}

struct Meta {
  std::uint32_t person;
  std::uint16_t camera;
};

struct RetrievalReference {
  std::vector<double> cmc;
  double map;
  std::size_t kept;
};

/// Ranks every gallery row by counting the valid rows placed ahead of it
/// (smaller distance, or equal distance and lower index).
inline RetrievalReference retrieval(const std::vector<float>& dist, const std::vector<Meta>& queries,
                                    const std::vector<Meta>& gallery, const std::vector<std::size_t>& ranks) {
  const std::size_t ng = gallery.size();
  RetrievalReference out{std::vector<double>(ranks.size(), 0.0), 0.0, 0};
  std::vector<std::size_t> hits(ranks.size(), 0);
  double total_ap = 0.0;
  for (std::size_t qi = 0; qi < queries.size(); ++qi) {
    auto junk = [&](std::size_t g) {
      return gallery[g].person == queries[qi].person && gallery[g].camera == queries[qi].camera;
    };
    std::vector<std::size_t> match_positions;  // 1-based
    for (std::size_t g = 0; g < ng; ++g) {
      if (junk(g) || gallery[g].person != queries[qi].person) continue;
      std::size_t ahead = 0;
      for (std::size_t o = 0; o < ng; ++o) {
        if (o == g || junk(o)) continue;
        const float dg = dist[qi * ng + g], dv = dist[qi * ng + o];
        if (dv < dg || (dv == dg && o < g)) ++ahead;
      }
      match_positions.push_back(ahead + 1);
    }
    if (match_positions.empty()) continue;
    ++out.kept;
    std::sort(match_positions.begin(), match_positions.end());
    for (std::size_t k = 0; k < ranks.size(); ++k) hits[k] += match_positions.front() <= ranks[k];
    double ap = 0.0;
    for (std::size_t m = 0; m < match_positions.size(); ++m) ap += double(m + 1) / double(match_positions[m]);
    total_ap += ap / double(match_positions.size());
  }
  if (out.kept == 0) return out;
  for (std::size_t k = 0; k < ranks.size(); ++k) out.cmc[k] = double(hits[k]) / double(out.kept);
  out.map = total_ap / double(out.kept);
  return out;
}

}  // namespace oracle
