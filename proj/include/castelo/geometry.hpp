#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "castelo/error.hpp"
#include "castelo/subtypes.hpp"
#include "castelo/types.hpp"

namespace castelo {

// Rigid transform x -> R*x + t mapping a moving point set onto a target.
struct Superposition {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();
  double rmsd_after = 0.0;

  void apply(const double* in, double* out) const {
    Eigen::Vector3d p = rotation * Eigen::Map<const Eigen::Vector3d>(in) + translation;
    out[0] = p[0];
    out[1] = p[1];
    out[2] = p[2];
  }
};

// Least-squares rigid superposition (Kabsch). `moving` and `target` are K
// xyz triples; the result maps moving onto target with a proper rotation.
inline Superposition kabsch(const double* moving, const double* target, int K) {
  if (K < 3) fail(Errc::DegenerateGeometry, "superposition needs at least 3 points, got " + std::to_string(K));
  Eigen::Map<const Eigen::Matrix<double, 3, Eigen::Dynamic>> A(moving, 3, K);
  Eigen::Map<const Eigen::Matrix<double, 3, Eigen::Dynamic>> B(target, 3, K);
  Eigen::Vector3d ca = A.rowwise().mean();
  Eigen::Vector3d cb = B.rowwise().mean();
  Eigen::Matrix3d H = (A.colwise() - ca) * (B.colwise() - cb).transpose();

  Eigen::JacobiSVD<Eigen::Matrix3d> svd(H, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Vector3d s = svd.singularValues();
  // rank < 2 leaves a rotation axis unconstrained
  if (s[1] <= s[0] * 1e-12)
    fail(Errc::DegenerateGeometry, "point set is collinear or coincident, rotation underdetermined");
  Eigen::Matrix3d U = svd.matrixU();
  Eigen::Matrix3d V = svd.matrixV();
  double d = (V * U.transpose()).determinant();
  Eigen::Matrix3d D = Eigen::Matrix3d::Identity();
  D(2, 2) = d < 0 ? -1.0 : 1.0;

  Superposition sp;
  sp.rotation = V * D * U.transpose();
  sp.translation = cb - sp.rotation * ca;

  double acc = 0.0;
  for (int k = 0; k < K; ++k) {
    Eigen::Vector3d diff = sp.rotation * A.col(k) + sp.translation - B.col(k);
    acc += diff.squaredNorm();
  }
  sp.rmsd_after = std::sqrt(acc / K);
  return sp;
}

namespace detail {

inline void gather_coords(const double* frame, const std::vector<int>& atoms, std::vector<double>& out) {
  out.resize(atoms.size() * 3);
  for (std::size_t i = 0; i < atoms.size(); ++i) {
    const double* p = frame + static_cast<std::size_t>(atoms[i]) * 3;
    out[i * 3 + 0] = p[0];
    out[i * 3 + 1] = p[1];
    out[i * 3 + 2] = p[2];
  }
}

}  // namespace detail

// RMSD between the ligand conformations of two frames after aligning frame b
// onto frame a using `align_atoms` (typically the pocket selection).
inline double ligand_rmsd(const double* frame_a, const double* frame_b, const std::vector<int>& align_atoms,
                          const std::vector<int>& ligand_atoms) {
  if (ligand_atoms.empty()) fail(Errc::EmptyLigand, "ligand atom list is empty");
  std::vector<double> pa, pb, la, lb;
  detail::gather_coords(frame_a, align_atoms, pa);
  detail::gather_coords(frame_b, align_atoms, pb);
  Superposition sp = kabsch(pb.data(), pa.data(), static_cast<int>(align_atoms.size()));
  detail::gather_coords(frame_a, ligand_atoms, la);
  detail::gather_coords(frame_b, ligand_atoms, lb);
  double acc = 0.0;
  for (std::size_t i = 0; i < ligand_atoms.size(); ++i) {
    double q[3];
    sp.apply(lb.data() + i * 3, q);
    double dx = q[0] - la[i * 3], dy = q[1] - la[i * 3 + 1], dz = q[2] - la[i * 3 + 2];
    acc += dx * dx + dy * dy + dz * dz;
  }
  return std::sqrt(acc / static_cast<double>(ligand_atoms.size()));
}

// Condensed upper-triangle pairwise ligand RMSD over all frames,
// entry (i, j), i < j at index i*T - i*(i+1)/2 + (j - i - 1).
inline std::vector<float> rmsd_matrix(const TrajectoryFrameSeries& traj, const std::vector<int>& align_atoms,
                                      const std::vector<int>& ligand_atoms) {
  int T = traj.frame_count;
  std::vector<float> out(static_cast<std::size_t>(T) * (T - 1) / 2);
  std::size_t k = 0;
  for (int i = 0; i < T; ++i)
    for (int j = i + 1; j < T; ++j, ++k)
      out[k] = static_cast<float>(ligand_rmsd(traj.frame(i), traj.frame(j), align_atoms, ligand_atoms));
  return out;
}

inline std::size_t condensed_index(int i, int j, int T) {
  if (i > j) std::swap(i, j);
  return static_cast<std::size_t>(i) * T - static_cast<std::size_t>(i) * (i + 1) / 2 + (j - i - 1);
}

// Root-mean-square fluctuation per ligand atom after aligning every frame to
// frame 0 on `align_atoms`, averaged (unweighted) over each subtype's
// members.
inline std::map<int, double> subtype_rmsf(const TrajectoryFrameSeries& traj, const SubtypeMap& map,
                                          const std::vector<int>& align_atoms) {
  if (traj.frame_count < 2) fail(Errc::InvalidSpec, "RMSF needs at least 2 frames");
  std::vector<int> members;  // all subtyped atoms, flat
  for (const auto& v : map.subtype_members) members.insert(members.end(), v.begin(), v.end());

  std::vector<double> ref_align, cur_align;
  detail::gather_coords(traj.frame(0), align_atoms, ref_align);

  // Two passes with explicit deviations from the mean position; the one-pass
  // mean-of-squares form loses all precision when fluctuations are tiny.
  double invT = 1.0 / traj.frame_count;
  std::vector<double> mean(members.size() * 3, 0.0);
  for (int t = 0; t < traj.frame_count; ++t) {
    detail::gather_coords(traj.frame(t), align_atoms, cur_align);
    Superposition sp = kabsch(cur_align.data(), ref_align.data(), static_cast<int>(align_atoms.size()));
    for (std::size_t i = 0; i < members.size(); ++i) {
      double q[3];
      sp.apply(traj.frame(t) + static_cast<std::size_t>(members[i]) * 3, q);
      mean[i * 3 + 0] += q[0] * invT;
      mean[i * 3 + 1] += q[1] * invT;
      mean[i * 3 + 2] += q[2] * invT;
    }
  }
  std::vector<double> var(members.size(), 0.0);
  for (int t = 0; t < traj.frame_count; ++t) {
    detail::gather_coords(traj.frame(t), align_atoms, cur_align);
    Superposition sp = kabsch(cur_align.data(), ref_align.data(), static_cast<int>(align_atoms.size()));
    for (std::size_t i = 0; i < members.size(); ++i) {
      double q[3];
      sp.apply(traj.frame(t) + static_cast<std::size_t>(members[i]) * 3, q);
      double dx = q[0] - mean[i * 3], dy = q[1] - mean[i * 3 + 1], dz = q[2] - mean[i * 3 + 2];
      var[i] += (dx * dx + dy * dy + dz * dz) * invT;
    }
  }
  std::vector<double> atom_rmsf(members.size());
  for (std::size_t i = 0; i < members.size(); ++i) atom_rmsf[i] = std::sqrt(var[i]);

  std::map<int, double> out;
  std::size_t cursor = 0;
  for (int s = 0; s < map.subtype_count(); ++s) {
    double acc = 0.0;
    for (std::size_t k = 0; k < map.subtype_members[s].size(); ++k) acc += atom_rmsf[cursor++];
    out[s] = acc / static_cast<double>(map.subtype_members[s].size());
  }
  return out;
}

}  // namespace castelo
