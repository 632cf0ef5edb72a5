#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "castelo/error.hpp"
#include "castelo/geometry.hpp"
#include "castelo/types.hpp"

namespace castelo {

struct ClusterLabels {
  std::vector<int> labels;  // per frame; -1 is noise
  int cluster_count = 0;
};

struct HdbscanConfig {
  int min_cluster_size = 50;
  int min_samples = 0;  // 0 -> use min_cluster_size
};

struct RefClusterConfig {
  double rmsd_cutoff = 2.0;  // Angstrom
  int max_clusters = 5;
};

namespace detail {

template <typename Real>
struct PointSet {
  const Real* pts;
  int T, d;
  double dist(int i, int j) const {
    const Real* a = pts + static_cast<std::size_t>(i) * d;
    const Real* b = pts + static_cast<std::size_t>(j) * d;
    double acc = 0.0;
    for (int k = 0; k < d; ++k) {
      double diff = static_cast<double>(a[k]) - static_cast<double>(b[k]);
      acc += diff * diff;
    }
    return std::sqrt(acc);
  }
};

// Density-based clustering on mutual-reachability distances: core distances,
// MST, single-linkage dendrogram, condensed tree, excess-of-mass selection.
template <typename Real>
ClusterLabels hdbscan_impl(const Real* pts, int T, int d, const HdbscanConfig& cfg) {
  if (cfg.min_cluster_size < 2) fail(Errc::ConfigError, "min_cluster_size must be at least 2");
  ClusterLabels out;
  out.labels.assign(static_cast<std::size_t>(T), -1);
  if (T < cfg.min_cluster_size) return out;

  PointSet<Real> ps{pts, T, d};
  int min_samples = cfg.min_samples > 0 ? cfg.min_samples : cfg.min_cluster_size;
  if (min_samples > T) min_samples = T;

  // core distance: distance to the min_samples-th nearest neighbor, the point
  // itself counting as the first
  std::vector<double> core(T);
  {
    std::vector<double> row(T);
    for (int i = 0; i < T; ++i) {
      for (int j = 0; j < T; ++j) row[j] = ps.dist(i, j);
      std::nth_element(row.begin(), row.begin() + (min_samples - 1), row.end());
      core[i] = row[min_samples - 1];
    }
  }
  auto mreach = [&](int i, int j) { return std::max({core[i], core[j], ps.dist(i, j)}); };

  // Prim MST over the complete mutual-reachability graph
  struct Edge {
    int a, b;
    double w;
  };
  std::vector<Edge> edges;
  edges.reserve(static_cast<std::size_t>(T) - 1);
  {
    constexpr double kInf = std::numeric_limits<double>::infinity();
    std::vector<char> in_tree(T, 0);
    std::vector<double> best(T, kInf);
    std::vector<int> from(T, -1);
    in_tree[0] = 1;
    for (int j = 1; j < T; ++j) {
      best[j] = mreach(0, j);
      from[j] = 0;
    }
    for (int step = 1; step < T; ++step) {
      int v = -1;
      double bw = kInf;
      for (int j = 0; j < T; ++j)
        if (!in_tree[j] && best[j] < bw) {
          bw = best[j];
          v = j;
        }
      in_tree[v] = 1;
      edges.push_back({from[v], v, best[v]});
      for (int j = 0; j < T; ++j)
        if (!in_tree[j]) {
          double w = mreach(v, j);
          if (w < best[j]) {
            best[j] = w;
            from[j] = v;
          }
        }
    }
  }
  std::sort(edges.begin(), edges.end(), [](const Edge& x, const Edge& y) {
    if (x.w != y.w) return x.w < y.w;
    int xa = std::min(x.a, x.b), xb = std::max(x.a, x.b);
    int ya = std::min(y.a, y.b), yb = std::max(y.a, y.b);
    return std::tie(xa, xb) < std::tie(ya, yb);
  });

  // single-linkage dendrogram: leaves 0..T-1, internal T..2T-2
  int n_nodes = 2 * T - 1;
  std::vector<int> left(n_nodes, -1), right(n_nodes, -1), size(n_nodes, 1);
  std::vector<double> ndist(n_nodes, 0.0);
  {
    std::vector<int> parent_uf(T), comp_node(T);
    for (int i = 0; i < T; ++i) {
      parent_uf[i] = i;
      comp_node[i] = i;
    }
    auto find = [&](int x) {
      while (parent_uf[x] != x) {
        parent_uf[x] = parent_uf[parent_uf[x]];
        x = parent_uf[x];
      }
      return x;
    };
    int next = T;
    for (const auto& e : edges) {
      int ra = find(e.a), rb = find(e.b);
      int na = comp_node[ra], nb = comp_node[rb];
      left[next] = na;
      right[next] = nb;
      ndist[next] = e.w;
      size[next] = size[na] + size[nb];
      parent_uf[rb] = ra;
      comp_node[ra] = next;
      ++next;
    }
  }
  int root = n_nodes - 1;

  constexpr double kInfL = std::numeric_limits<double>::infinity();
  auto lambda_of = [&](double dist) { return dist > 0.0 ? 1.0 / dist : kInfL; };

  auto collect_leaves = [&](int node, std::vector<int>& acc) {
    std::vector<int> stack{node};
    while (!stack.empty()) {
      int n = stack.back();
      stack.pop_back();
      if (n < T) {
        acc.push_back(n);
      } else {
        stack.push_back(left[n]);
        stack.push_back(right[n]);
      }
    }
  };

  // condensed cluster tree
  struct Cluster {
    int parent = -1;
    double birth = 0.0;
    double death = kInfL;
    int n_passed = 0;                            // points handed to children at the split
    std::vector<std::pair<int, double>> pts;     // (point, lambda at which it leaves)
    std::vector<int> children;
  };
  std::vector<Cluster> clusters;
  clusters.push_back({});  // root cluster, born at lambda 0
  int m = cfg.min_cluster_size;

  {
    std::vector<std::pair<int, int>> stack{{root, 0}};  // (dendrogram node, cluster)
    std::vector<int> buf;
    while (!stack.empty()) {
      auto [n, c] = stack.back();
      stack.pop_back();
      if (n < T) {
        // a point merged at distance zero never leaves its cluster
        clusters[c].pts.push_back({n, kInfL});
        continue;
      }
      double delta = ndist[n];
      double lam = lambda_of(delta);
      int L = left[n], R = right[n];
      if (delta == 0.0) {
        // density-identical blob: keep descending inside the same cluster
        stack.push_back({L, c});
        stack.push_back({R, c});
      } else if (size[L] >= m && size[R] >= m) {
        clusters[c].death = lam;
        clusters[c].n_passed = size[L] + size[R];
        int cl = static_cast<int>(clusters.size());
        clusters.push_back({c, lam, kInfL, 0, {}, {}});
        int cr = static_cast<int>(clusters.size());
        clusters.push_back({c, lam, kInfL, 0, {}, {}});
        clusters[c].children = {cl, cr};
        stack.push_back({L, cl});
        stack.push_back({R, cr});
      } else if (size[L] >= m) {
        buf.clear();
        collect_leaves(R, buf);
        for (int p : buf) clusters[c].pts.push_back({p, lam});
        stack.push_back({L, c});
      } else if (size[R] >= m) {
        buf.clear();
        collect_leaves(L, buf);
        for (int p : buf) clusters[c].pts.push_back({p, lam});
        stack.push_back({R, c});
      } else {
        // both sides fall below min size: the cluster dissolves here
        buf.clear();
        collect_leaves(n, buf);
        for (int p : buf) clusters[c].pts.push_back({p, lam});
      }
    }
  }

  int nc = static_cast<int>(clusters.size());
  std::vector<double> stability(nc, 0.0);
  for (int c = 0; c < nc; ++c) {
    double s = 0.0;
    for (const auto& [p, lam] : clusters[c].pts) s += lam - clusters[c].birth;
    if (!clusters[c].children.empty()) s += clusters[c].n_passed * (clusters[c].death - clusters[c].birth);
    stability[c] = s;
  }

  // excess of mass, root excluded; clusters were created parents-first so a
  // reverse scan is bottom-up
  std::vector<char> selected(nc, 0);
  std::vector<double> subtree_stab(nc, 0.0);
  for (int c = nc - 1; c >= 1; --c) {
    if (clusters[c].children.empty()) {
      selected[c] = 1;
      subtree_stab[c] = stability[c];
    } else {
      double child_sum = 0.0;
      for (int ch : clusters[c].children) child_sum += subtree_stab[ch];
      if (stability[c] >= child_sum) {
        selected[c] = 1;
        std::vector<int> stk(clusters[c].children);
        while (!stk.empty()) {
          int x = stk.back();
          stk.pop_back();
          selected[x] = 0;
          for (int ch : clusters[x].children) stk.push_back(ch);
        }
        subtree_stab[c] = stability[c];
      } else {
        subtree_stab[c] = child_sum;
      }
    }
  }

  std::vector<int> chosen;
  for (int c = 1; c < nc; ++c)
    if (selected[c]) chosen.push_back(c);

  if (chosen.empty()) {
    // the hierarchy never produced a true split (e.g. all points identical);
    // the whole series is one cluster
    if (clusters[0].children.empty() && T >= m) {
      std::fill(out.labels.begin(), out.labels.end(), 0);
      out.cluster_count = 1;
    }
    return out;
  }

  // membership: every point listed in a selected cluster or any of its
  // descendants belongs to it
  std::vector<std::vector<int>> members(chosen.size());
  for (std::size_t k = 0; k < chosen.size(); ++k) {
    std::vector<int> stk{chosen[k]};
    while (!stk.empty()) {
      int c = stk.back();
      stk.pop_back();
      for (const auto& [p, lam] : clusters[c].pts) members[k].push_back(p);
      for (int ch : clusters[c].children) stk.push_back(ch);
    }
    std::sort(members[k].begin(), members[k].end());
  }
  // final ids ordered by earliest member frame
  std::vector<std::size_t> order(chosen.size());
  for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return members[a][0] < members[b][0]; });
  for (std::size_t id = 0; id < order.size(); ++id)
    for (int p : members[order[id]]) out.labels[p] = static_cast<int>(id);
  out.cluster_count = static_cast<int>(chosen.size());
  return out;
}

}  // namespace detail

inline ClusterLabels hdbscan(const float* pts, int T, int d, const HdbscanConfig& cfg) {
  return detail::hdbscan_impl(pts, T, d, cfg);
}

inline ClusterLabels hdbscan(const std::vector<double>& pts, int T, int d, const HdbscanConfig& cfg) {
  if (static_cast<int>(pts.size()) != T * d) fail(Errc::ShapeMismatch, "point buffer does not match T*d");
  return detail::hdbscan_impl(pts.data(), T, d, cfg);
}

// Greedy quality-threshold clustering on a condensed pairwise RMSD matrix:
// repeatedly seed a cluster at the unassigned frame with the most unassigned
// neighbors within the cutoff (ties -> lowest frame index), absorb those
// neighbors, stop after max_clusters rounds; the rest is noise.
inline ClusterLabels rmsd_qt_from_matrix(const std::vector<float>& condensed, int T, const RefClusterConfig& cfg) {
  if (cfg.max_clusters < 1) fail(Errc::ConfigError, "max_clusters must be at least 1");
  if (condensed.size() != static_cast<std::size_t>(T) * (T - 1) / 2)
    fail(Errc::ShapeMismatch, "condensed matrix does not match frame count");
  ClusterLabels out;
  out.labels.assign(static_cast<std::size_t>(T), -1);
  auto within = [&](int i, int j) {
    return static_cast<double>(condensed[condensed_index(i, j, T)]) <= cfg.rmsd_cutoff;
  };
  int assigned = 0;
  for (int k = 0; k < cfg.max_clusters && assigned < T; ++k) {
    int best = -1, best_count = -1;
    for (int i = 0; i < T; ++i) {
      if (out.labels[i] != -1) continue;
      int count = 0;
      for (int j = 0; j < T; ++j)
        if (j != i && out.labels[j] == -1 && within(i, j)) ++count;
      if (count > best_count) {
        best_count = count;
        best = i;
      }
    }
    out.labels[best] = k;
    ++assigned;
    for (int j = 0; j < T; ++j)
      if (j != best && out.labels[j] == -1 && within(best, j)) {
        out.labels[j] = k;
        ++assigned;
      }
    out.cluster_count = k + 1;
  }
  return out;
}

inline ClusterLabels rmsd_qt_cluster(const TrajectoryFrameSeries& traj, const std::vector<int>& align_atoms,
                                     const std::vector<int>& ligand_atoms, const RefClusterConfig& cfg) {
  std::vector<float> condensed = rmsd_matrix(traj, align_atoms, ligand_atoms);
  return rmsd_qt_from_matrix(condensed, traj.frame_count, cfg);
}

// Per-frame series of "size of the cluster this frame belongs to"; noise
// frames count as singletons.
inline std::vector<std::int64_t> size_series(const ClusterLabels& cl) {
  std::vector<std::int64_t> counts(static_cast<std::size_t>(std::max(cl.cluster_count, 0)), 0);
  for (int l : cl.labels)
    if (l >= 0) {
      if (l >= static_cast<int>(counts.size())) counts.resize(static_cast<std::size_t>(l) + 1, 0);
      ++counts[l];
    }
  std::vector<std::int64_t> out(cl.labels.size());
  for (std::size_t t = 0; t < cl.labels.size(); ++t) out[t] = cl.labels[t] >= 0 ? counts[cl.labels[t]] : 1;
  return out;
}

inline std::vector<double> average_size_series(const std::vector<std::vector<std::int64_t>>& series) {
  if (series.empty()) fail(Errc::EmptyEnsemble, "no size series to average");
  std::size_t T = series[0].size();
  for (const auto& s : series)
    if (s.size() != T) fail(Errc::LengthMismatch, "size series lengths differ");
  std::vector<double> out(T, 0.0);
  for (const auto& s : series)
    for (std::size_t t = 0; t < T; ++t) out[t] += static_cast<double>(s[t]);
  for (auto& v : out) v /= static_cast<double>(series.size());
  return out;
}

}  // namespace castelo
