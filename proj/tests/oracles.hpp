#pragma once

// Independent reference implementations used to check the library. Everything
// here favors clarity over speed: plain loops, long double accumulators, and
// a quaternion-based superposition that shares no code with the Kabsch path.

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "castelo/contacts.hpp"
#include "castelo/types.hpp"

namespace oracles {

inline castelo::BitMatrix naive_contacts(const double* frame, const castelo::Topology& topo,
                                         const std::vector<int>& ligand_atoms, const castelo::ProteinSelection& sel,
                                         const castelo::ContactConfig& cfg) {
  castelo::BitMatrix m(static_cast<int>(ligand_atoms.size()), sel.size());
  double c2 = cfg.cutoff * cfg.cutoff;
  for (std::size_t i = 0; i < ligand_atoms.size(); ++i) {
    const auto& atom = topo.atoms[ligand_atoms[i]];
    if (cfg.heavy_atoms_only && castelo::is_hydrogen(atom)) continue;
    const double* a = frame + 3 * ligand_atoms[i];
    for (int j = 0; j < sel.size(); ++j) {
      const double* b = frame + 3 * sel.indices[j];
      double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
      if (dx * dx + dy * dy + dz * dz <= c2) m.set(static_cast<int>(i), j, true);
    }
  }
  return m;
}

inline double cossim_naive(const std::vector<std::int64_t>& a, const std::vector<std::int64_t>& s) {
  long double dot = 0, na = 0, ns = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += static_cast<long double>(a[i]) * s[i];
    na += static_cast<long double>(a[i]) * a[i];
    ns += static_cast<long double>(s[i]) * s[i];
  }
  return static_cast<double>(dot / (std::sqrt(na) * std::sqrt(ns)));
}

inline double avgdiff_naive(const std::vector<std::int64_t>& a, const std::vector<std::int64_t>& s) {
  long double sum = 0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += static_cast<long double>(a[i]) - s[i];
  return static_cast<double>(sum / a.size());
}

// Horn's closed-form quaternion solution for the optimal superposition RMSD.
inline double quaternion_rmsd(const std::vector<double>& a, const std::vector<double>& b) {
  int n = static_cast<int>(a.size() / 3);
  Eigen::Vector3d ca = Eigen::Vector3d::Zero(), cb = Eigen::Vector3d::Zero();
  for (int i = 0; i < n; ++i) {
    ca += Eigen::Vector3d(a[3 * i], a[3 * i + 1], a[3 * i + 2]);
    cb += Eigen::Vector3d(b[3 * i], b[3 * i + 1], b[3 * i + 2]);
  }
  ca /= n;
  cb /= n;
  Eigen::Matrix3d s = Eigen::Matrix3d::Zero();
  double ga = 0, gb = 0;
  for (int i = 0; i < n; ++i) {
    Eigen::Vector3d pa = Eigen::Vector3d(a[3 * i], a[3 * i + 1], a[3 * i + 2]) - ca;
    Eigen::Vector3d pb = Eigen::Vector3d(b[3 * i], b[3 * i + 1], b[3 * i + 2]) - cb;
    s += pa * pb.transpose();
    ga += pa.squaredNorm();
    gb += pb.squaredNorm();
  }
  Eigen::Matrix4d k;
  k << s(0, 0) + s(1, 1) + s(2, 2), s(1, 2) - s(2, 1), s(2, 0) - s(0, 2), s(0, 1) - s(1, 0),
      s(1, 2) - s(2, 1), s(0, 0) - s(1, 1) - s(2, 2), s(0, 1) + s(1, 0), s(2, 0) + s(0, 2),
      s(2, 0) - s(0, 2), s(0, 1) + s(1, 0), s(1, 1) - s(0, 0) - s(2, 2), s(1, 2) + s(2, 1),
      s(0, 1) - s(1, 0), s(2, 0) + s(0, 2), s(1, 2) + s(2, 1), s(2, 2) - s(0, 0) - s(1, 1);
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> eig(k);
  double lmax = eig.eigenvalues().maxCoeff();
  double msd = std::max(0.0, (ga + gb - 2.0 * lmax) / n);
  return std::sqrt(msd);
}

// least-squares R^2 of y against x, the direct formula
inline double r2_naive(const std::vector<double>& x, const std::vector<double>& y) {
  int n = static_cast<int>(x.size());
  long double sx = 0, sy = 0;
  for (int i = 0; i < n; ++i) sx += x[i], sy += y[i];
  long double mx = sx / n, my = sy / n;
  long double sxx = 0, sxy = 0, syy = 0;
  for (int i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (syy == 0 || sxx == 0) return 0.0;
  return static_cast<double>((sxy * sxy) / (sxx * syy));
}

// total weight of the minimum spanning tree by Kruskal on an explicit edge
// list; used to cross-check the clustering's internal Prim pass
inline double kruskal_mst_weight(int n, const std::function<double(int, int)>& dist) {
  struct Edge {
    double w;
    int a, b;
  };
  std::vector<Edge> edges;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) edges.push_back({dist(i, j), i, j});
  std::sort(edges.begin(), edges.end(), [](const Edge& x, const Edge& y) { return x.w < y.w; });
  std::vector<int> parent(n);
  for (int i = 0; i < n; ++i) parent[i] = i;
  std::function<int(int)> find = [&](int v) { return parent[v] == v ? v : parent[v] = find(parent[v]); };
  double total = 0;
  int used = 0;
  for (const auto& e : edges) {
    int ra = find(e.a), rb = find(e.b);
    if (ra == rb) continue;
    parent[ra] = rb;
    total += e.w;
    if (++used == n - 1) break;
  }
  return total;
}

// mutual reachability distance with core distance defined over k nearest
// neighbors including the point itself
inline double mutual_reachability(const std::vector<double>& pts, int dim, int i, int j, int k) {
  int n = static_cast<int>(pts.size()) / dim;
  auto dist = [&](int a, int b) {
    double s = 0;
    for (int c = 0; c < dim; ++c) {
      double d = pts[a * dim + c] - pts[b * dim + c];
      s += d * d;
    }
    return std::sqrt(s);
  };
  auto core = [&](int a) {
    std::vector<double> ds;
    for (int b = 0; b < n; ++b) ds.push_back(dist(a, b));
    std::sort(ds.begin(), ds.end());
    return ds[std::min(k - 1, n - 1)];
  };
  return std::max({core(i), core(j), dist(i, j)});
}

}  // namespace oracles
