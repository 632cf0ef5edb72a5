#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "castelo/error.hpp"
#include "castelo/io.hpp"
#include "castelo/rng.hpp"
#include "castelo/types.hpp"

namespace castelo {

// Plan for one generated subtype: how many ligand atoms it owns and the
// per-frame probability that one of its atoms toggles between the in-contact
// and out-of-contact pose.
struct SubtypePlanEntry {
  int atom_count = 0;
  double flip_rate = 0.0;
};

struct SynthSpec {
  int ligand_atoms = 16;
  int protein_atoms = 112;
  std::vector<SubtypePlanEntry> subtype_plan;
  int frames = 2000;
  double frame_stride_ps = 20.0;
  std::vector<int> binding_mode_switches;  // frame indices where the whole ligand jumps
  std::uint64_t seed = 0;
};

struct SynthResult {
  Topology topology;
  TrajectoryFrameSeries trajectory;
  std::map<int, double> ground_truth;  // planned subtype id -> flip rate
};

inline void validate_synth_spec(const SynthSpec& spec) {
  if (spec.ligand_atoms < 1) fail(Errc::InvalidSpec, "ligand_atoms must be positive");
  if (spec.frames < 1) fail(Errc::InvalidSpec, "frames must be positive");
  if (!(spec.frame_stride_ps > 0.0)) fail(Errc::InvalidSpec, "frame_stride_ps must be positive");
  if (spec.subtype_plan.empty()) fail(Errc::InvalidSpec, "subtype_plan is empty");
  int total = 0;
  for (std::size_t k = 0; k < spec.subtype_plan.size(); ++k) {
    const auto& e = spec.subtype_plan[k];
    if (e.atom_count < 1) fail(Errc::InvalidSpec, "subtype " + std::to_string(k) + ": atom_count must be positive");
    if (e.flip_rate < 0.0 || e.flip_rate > 1.0)
      fail(Errc::InvalidSpec, "subtype " + std::to_string(k) + ": flip_rate must lie in [0,1]");
    total += e.atom_count;
  }
  if (total != spec.ligand_atoms)
    fail(Errc::InvalidSpec, "subtype_plan covers " + std::to_string(total) + " atoms, ligand has " +
                                std::to_string(spec.ligand_atoms));
  if (spec.protein_atoms < spec.ligand_atoms)
    fail(Errc::InvalidSpec, "protein_atoms must be at least ligand_atoms (one contact partner per ligand atom)");
  for (int s : spec.binding_mode_switches)
    if (s < 1 || s >= spec.frames)
      fail(Errc::InvalidSpec, "binding_mode_switch " + std::to_string(s) + " outside (0, frames)");
}

namespace detail {

// Whole-ligand displacements applied at binding mode switches; consecutive
// modes differ by more than 2 A.
inline void mode_offset(int mode, double& ox, double& oy) {
  static const double offsets[][2] = {{0.0, 0.0}, {2.2, 0.0}, {-2.2, 0.0}, {0.0, 2.2}, {0.0, -2.2}};
  int m = mode % 5;
  ox = offsets[m][0];
  oy = offsets[m][1];
}

}  // namespace detail

// Builds a topology and trajectory with known per-subtype contact behavior.
// Geometry: ligand atoms sit on a line along x; each has a protein partner
// 3.2 A above it (z), inside the 4.5 A contact cutoff while the atom is "in"
// and outside it (z separation 8.0) while "out". Filler protein atoms form a
// shell 5-8 A away: inside the pocket radius but never in contact. With all
// flip rates zero the trajectory is static apart from planned whole-ligand
// mode switches.
inline SynthResult generate(const SynthSpec& spec) {
  validate_synth_spec(spec);
  Rng rng(spec.seed);
  SynthResult res;

  const int L = spec.ligand_atoms;
  const double spacing = 1.5;

  // ligand atoms with per-subtype Lennard-Jones baselines; baselines grow
  // strictly with the planned index so subtype ids assigned downstream by
  // ascending (sigma, epsilon) match the plan order
  std::vector<int> planned_subtype(L);
  {
    int atom = 0;
    for (std::size_t k = 0; k < spec.subtype_plan.size(); ++k)
      for (int j = 0; j < spec.subtype_plan[k].atom_count; ++j) planned_subtype[atom++] = static_cast<int>(k);
  }
  std::vector<int> within_subtype(L, 0);
  {
    std::map<int, int> seen;
    for (int i = 0; i < L; ++i) within_subtype[i] = seen[planned_subtype[i]]++;
  }
  for (int i = 0; i < L; ++i) {
    int k = planned_subtype[i];
    int count = spec.subtype_plan[k].atom_count;
    double base_sigma = 2.0 * std::pow(1.35, k);
    double base_eps = 0.05 * std::pow(1.4, k);
    // spread members of one subtype within +/-2%, well inside the 10% rule
    double f = 1.0 + 0.04 * (within_subtype[i] + 1) / (count + 1) - 0.02;
    AtomRecord a;
    a.index = i;
    a.name = "L" + std::to_string(i);
    a.element = "C";
    a.atom_type = "T" + std::to_string(k) + "A" + std::to_string(within_subtype[i]);
    a.sigma = base_sigma * f;
    a.epsilon = base_eps * f;
    a.role = Role::Ligand;
    a.residue_id = 1;
    a.residue_name = "LIG";
    res.topology.atoms.push_back(std::move(a));
  }

  // one protein partner directly above each ligand atom
  std::vector<std::array<double, 3>> protein_pos;
  for (int i = 0; i < L; ++i) {
    double jx = rng.uniform(-0.1, 0.1), jy = rng.uniform(-0.1, 0.1), jz = rng.uniform(-0.1, 0.1);
    protein_pos.push_back({spacing * i + jx, jy, 3.2 + jz});
  }

  // filler shell: lattice points 5-8 A above the ligand line, within the
  // pocket but never within the contact cutoff
  {
    int needed = spec.protein_atoms - L;
    double zs[] = {5.0, 6.5, 8.0};
    double ys[] = {-4.5, -3.0, 3.0, 4.5};
    int placed = 0;
    for (int zi = 0; zi < 3 && placed < needed; ++zi)
      for (int yi = 0; yi < 4 && placed < needed; ++yi)
        for (double x = -3.0; x <= spacing * (L - 1) + 3.0 + 1e-9 && placed < needed; x += spacing) {
          double jx = rng.uniform(-0.1, 0.1), jy = rng.uniform(-0.1, 0.1), jz = rng.uniform(-0.1, 0.1);
          std::array<double, 3> p{x + jx, ys[yi] + jy, zs[zi] + jz};
          // keep the shell inside a 9.5 A pocket radius of some ligand atom
          bool in_pocket = false;
          for (int i = 0; i < L && !in_pocket; ++i) {
            double dx = p[0] - spacing * i, dy = p[1], dz = p[2];
            if (dx * dx + dy * dy + dz * dz <= 9.5 * 9.5) in_pocket = true;
          }
          if (!in_pocket) continue;
          protein_pos.push_back(p);
          ++placed;
        }
    if (placed < needed)
      fail(Errc::InvalidSpec, "protein_atoms " + std::to_string(spec.protein_atoms) +
                                  " exceeds the filler shell capacity for " + std::to_string(L) + " ligand atoms");
  }

  for (std::size_t j = 0; j < protein_pos.size(); ++j) {
    AtomRecord a;
    a.index = L + static_cast<int>(j);
    a.name = "P" + std::to_string(j);
    a.element = "C";
    a.atom_type = j < static_cast<std::size_t>(L) ? "PPAR" : "PFIL";
    a.sigma = 3.5;
    a.epsilon = 0.1;
    a.role = Role::Protein;
    a.residue_id = 1000 + static_cast<int>(j);
    a.residue_name = "PRO";
    res.topology.atoms.push_back(std::move(a));
  }

  // trajectory: protein fixed, ligand x/y follows the binding mode, ligand z
  // toggles per atom between in-contact (0) and out-of-contact (-4.8)
  const int T = spec.frames;
  res.trajectory.natoms = res.topology.natoms();
  res.trajectory.frame_count = T;
  res.trajectory.coords.resize(static_cast<std::size_t>(T) * res.trajectory.natoms * 3);
  res.trajectory.time_ps.resize(T);

  std::vector<char> out_state(L, 0);
  int mode = 0;
  std::size_t next_switch = 0;
  std::vector<int> switches = spec.binding_mode_switches;
  std::sort(switches.begin(), switches.end());

  for (int t = 0; t < T; ++t) {
    if (t > 0)
      for (int i = 0; i < L; ++i) {
        double p = spec.subtype_plan[planned_subtype[i]].flip_rate;
        if (p > 0.0 && rng.uniform01() < p) out_state[i] ^= 1;
      }
    while (next_switch < switches.size() && switches[next_switch] == t) {
      ++mode;
      ++next_switch;
    }
    double ox, oy;
    detail::mode_offset(mode, ox, oy);
    double* dst = res.trajectory.frame(t);
    for (int i = 0; i < L; ++i) {
      dst[i * 3 + 0] = spacing * i + ox;
      dst[i * 3 + 1] = oy;
      dst[i * 3 + 2] = out_state[i] ? -4.8 : 0.0;
    }
    for (std::size_t j = 0; j < protein_pos.size(); ++j) {
      dst[(L + j) * 3 + 0] = protein_pos[j][0];
      dst[(L + j) * 3 + 1] = protein_pos[j][1];
      dst[(L + j) * 3 + 2] = protein_pos[j][2];
    }
    res.trajectory.time_ps[t] = spec.frame_stride_ps * t;
  }

  for (std::size_t k = 0; k < spec.subtype_plan.size(); ++k)
    res.ground_truth[static_cast<int>(k)] = spec.subtype_plan[k].flip_rate;
  return res;
}

inline SynthSpec synth_spec_from_json(const json& j) {
  SynthSpec spec;
  spec.ligand_atoms = j.value("ligand_atoms", spec.ligand_atoms);
  spec.protein_atoms = j.value("protein_atoms", spec.protein_atoms);
  spec.frames = j.value("frames", spec.frames);
  spec.frame_stride_ps = j.value("frame_stride_ps", spec.frame_stride_ps);
  spec.seed = j.value("seed", spec.seed);
  if (j.contains("binding_mode_switches"))
    spec.binding_mode_switches = j["binding_mode_switches"].get<std::vector<int>>();
  if (j.contains("subtype_plan")) {
    spec.subtype_plan.clear();
    for (const auto& e : j["subtype_plan"]) {
      SubtypePlanEntry entry;
      entry.atom_count = e.at("atom_count").get<int>();
      entry.flip_rate = e.value("flip_rate", 0.0);
      spec.subtype_plan.push_back(entry);
    }
  }
  return spec;
}

inline ordered_json synth_spec_to_json(const SynthSpec& spec) {
  ordered_json j;
  j["ligand_atoms"] = spec.ligand_atoms;
  j["protein_atoms"] = spec.protein_atoms;
  ordered_json plan = ordered_json::array();
  for (const auto& e : spec.subtype_plan)
    plan.push_back({{"atom_count", e.atom_count}, {"flip_rate", e.flip_rate}});
  j["subtype_plan"] = std::move(plan);
  j["frames"] = spec.frames;
  j["frame_stride_ps"] = spec.frame_stride_ps;
  j["binding_mode_switches"] = spec.binding_mode_switches;
  j["seed"] = spec.seed;
  return j;
}

inline void write_ground_truth(const std::map<int, double>& gt, const std::string& path) {
  ordered_json j;
  j["version"] = 1;
  ordered_json m = ordered_json::object();
  for (const auto& [k, v] : gt) m[std::to_string(k)] = v;
  j["flip_rates"] = std::move(m);
  save_json(path, j);
}

}  // namespace castelo
