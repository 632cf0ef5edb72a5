#pragma once

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <nlohmann/json.hpp>

#include "castelo/error.hpp"
#include "castelo/types.hpp"

namespace castelo {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// formatting / parsing primitives

// Shortest representation that round-trips the exact double.
inline std::string fmt_shortest(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline std::string fmt_fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return std::string(buf);
}

inline bool parse_double(std::string_view s, double& out) {
  auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

inline bool parse_long(std::string_view s, long& out) {
  auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

inline std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

// ---------------------------------------------------------------------------
// file primitives

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::IoError, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void ensure_parent_dir(const std::string& path) {
  auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
}

// Write-to-temp + rename so readers never observe a half-written artifact.
inline void write_file_atomic(const std::string& path, std::string_view content) {
  ensure_parent_dir(path);
  std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(Errc::IoError, "cannot open " + tmp + " for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) fail(Errc::IoError, "short write to " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) fail(Errc::IoError, "rename " + tmp + " -> " + path + ": " + ec.message());
}

inline std::uint64_t fnv1a64(const void* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::string hash_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

inline std::string hash_file(const std::string& path) {
  std::string s = read_file(path);
  return hash_hex(fnv1a64(s.data(), s.size()));
}

inline json load_json(const std::string& path, Errc parse_errc = Errc::IoError) {
  std::string text = read_file(path);
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) fail(parse_errc, "invalid JSON in " + path);
  return j;
}

inline void save_json(const std::string& path, const ordered_json& j) {
  write_file_atomic(path, j.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// topology

inline Role parse_role(const std::string& s, int atom_index) {
  if (s == "ligand") return Role::Ligand;
  if (s == "protein") return Role::Protein;
  if (s == "other") return Role::Other;
  fail(Errc::MissingField, "atom " + std::to_string(atom_index) + ": unknown role '" + s + "'", atom_index);
}

inline std::string derive_element(const std::string& name) {
  for (char c : name)
    if (std::isalpha(static_cast<unsigned char>(c)))
      return std::string(1, static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
  return "X";
}

inline Topology topology_from_json(const json& j) {
  if (!j.is_object() || !j.contains("atoms") || !j["atoms"].is_array())
    fail(Errc::MissingField, "topology: missing 'atoms' array");
  Topology topo;
  const auto& atoms = j["atoms"];
  topo.atoms.reserve(atoms.size());
  int pos = 0;
  for (const auto& a : atoms) {
    auto need = [&](const char* key) -> const json& {
      if (!a.contains(key))
        fail(Errc::MissingField, "atom " + std::to_string(pos) + ": missing '" + key + "'", pos);
      return a[key];
    };
    AtomRecord r;
    r.index = need("index").get<int>();
    r.name = need("name").get<std::string>();
    r.atom_type = need("type").get<std::string>();
    r.sigma = need("sigma").get<double>();
    r.epsilon = need("epsilon").get<double>();
    r.role = parse_role(need("role").get<std::string>(), r.index);
    r.residue_id = need("residue_id").get<int>();
    r.residue_name = need("residue_name").get<std::string>();
    r.element = a.contains("element") ? a["element"].get<std::string>() : derive_element(r.name);
    if (r.index != pos)
      fail(Errc::DuplicateIndex,
           "atom at position " + std::to_string(pos) + " has index " + std::to_string(r.index) +
               " (indices must be unique and contiguous from 0)",
           pos);
    if (!(r.sigma > 0.0))
      fail(Errc::NonPositiveSigma, "atom " + std::to_string(r.index) + ": sigma " + fmt_shortest(r.sigma), r.index);
    if (r.epsilon < 0.0)
      fail(Errc::NonPositiveSigma, "atom " + std::to_string(r.index) + ": negative epsilon " + fmt_shortest(r.epsilon),
           r.index);
    topo.atoms.push_back(std::move(r));
    ++pos;
  }
  if (topo.atoms.empty()) fail(Errc::MissingField, "topology: empty 'atoms' array");
  bool has_ligand = false, has_protein = false;
  for (const auto& r : topo.atoms) {
    has_ligand |= r.role == Role::Ligand;
    has_protein |= r.role == Role::Protein;
  }
  if (!has_ligand) fail(Errc::NoLigandAtoms, "topology contains no ligand atoms");
  if (!has_protein) fail(Errc::NoProteinAtoms, "topology contains no protein atoms");
  return topo;
}

inline Topology parse_topology(const std::string& path) {
  return topology_from_json(load_json(path));
}

inline ordered_json topology_to_json(const Topology& topo) {
  ordered_json atoms = ordered_json::array();
  for (const auto& a : topo.atoms) {
    ordered_json o;
    o["index"] = a.index;
    o["name"] = a.name;
    o["type"] = a.atom_type;
    o["sigma"] = a.sigma;
    o["epsilon"] = a.epsilon;
    o["role"] = role_name(a.role);
    o["residue_id"] = a.residue_id;
    o["residue_name"] = a.residue_name;
    o["element"] = a.element;
    atoms.push_back(std::move(o));
  }
  ordered_json j;
  j["atoms"] = std::move(atoms);
  return j;
}

inline void write_topology(const Topology& topo, const std::string& path) {
  save_json(path, topology_to_json(topo));
}

// ---------------------------------------------------------------------------
// trajectory (extended XYZ: count line, "frame=<i> time_ps=<t>" comment line,
// then one "name x y z" line per atom)

inline TrajectoryFrameSeries parse_trajectory(const std::string& path, const Topology& topo) {
  std::string text = read_file(path);
  TrajectoryFrameSeries traj;
  traj.natoms = topo.natoms();

  std::size_t cursor = 0;
  long line_no = 0;
  auto next_line = [&](std::string_view& out) -> bool {
    if (cursor >= text.size()) return false;
    std::size_t end = text.find('\n', cursor);
    if (end == std::string::npos) end = text.size();
    out = std::string_view(text).substr(cursor, end - cursor);
    if (!out.empty() && out.back() == '\r') out.remove_suffix(1);
    cursor = end + 1;
    ++line_no;
    return true;
  };

  int frame = 0;
  std::string_view line;
  while (true) {
    if (!next_line(line)) break;
    if (split_ws(line).empty()) continue;  // tolerate blank separator lines
    long count = 0;
    if (!parse_long(line, count))
      fail(Errc::MalformedFrameHeader, "line " + std::to_string(line_no) + ": expected atom count, got '" +
                                           std::string(line) + "'",
           line_no);
    if (count != traj.natoms)
      fail(Errc::AtomCountMismatch,
           "frame " + std::to_string(frame) + ": declares " + std::to_string(count) + " atoms, topology has " +
               std::to_string(traj.natoms),
           frame);
    if (!next_line(line))
      fail(Errc::MalformedFrameHeader, "line " + std::to_string(line_no + 1) + ": missing frame comment line",
           line_no + 1);
    auto toks = split_ws(line);
    long fidx = -1;
    double tps = 0.0;
    bool have_f = false, have_t = false;
    for (auto t : toks) {
      if (t.substr(0, 6) == "frame=") have_f = parse_long(t.substr(6), fidx);
      else if (t.substr(0, 8) == "time_ps=") have_t = parse_double(t.substr(8), tps);
    }
    if (!have_f || !have_t || fidx != frame)
      fail(Errc::MalformedFrameHeader,
           "line " + std::to_string(line_no) + ": expected 'frame=" + std::to_string(frame) + " time_ps=<t>', got '" +
               std::string(line) + "'",
           line_no);
    traj.time_ps.push_back(tps);
    traj.coords.resize(traj.coords.size() + static_cast<std::size_t>(traj.natoms) * 3);
    double* dst = traj.coords.data() + static_cast<std::size_t>(frame) * traj.natoms * 3;
    for (int i = 0; i < traj.natoms; ++i) {
      if (!next_line(line))
        fail(Errc::AtomCountMismatch,
             "frame " + std::to_string(frame) + ": file ends after " + std::to_string(i) + " of " +
                 std::to_string(traj.natoms) + " atoms",
             frame);
      auto atoks = split_ws(line);
      if (atoks.size() != 4)
        fail(Errc::AtomCountMismatch,
             "frame " + std::to_string(frame) + " atom " + std::to_string(i) + ": expected 'name x y z'", frame);
      for (int k = 0; k < 3; ++k) {
        double v;
        if (!parse_double(atoks[k + 1], v))
          fail(Errc::NonFiniteCoordinate,
               "frame " + std::to_string(frame) + " atom " + std::to_string(i) + ": bad coordinate '" +
                   std::string(atoks[k + 1]) + "'",
               frame);
        if (!std::isfinite(v))
          fail(Errc::NonFiniteCoordinate,
               "frame " + std::to_string(frame) + " atom " + std::to_string(i) + ": non-finite coordinate", frame);
        dst[i * 3 + k] = v;
      }
    }
    ++frame;
  }
  if (frame == 0) fail(Errc::IoError, "trajectory " + path + " contains no frames");
  traj.frame_count = frame;
  return traj;
}

inline std::string trajectory_to_string(const TrajectoryFrameSeries& traj, const Topology& topo) {
  std::string out;
  out.reserve(static_cast<std::size_t>(traj.frame_count) * traj.natoms * 40);
  for (int t = 0; t < traj.frame_count; ++t) {
    out += std::to_string(traj.natoms);
    out += "\nframe=";
    out += std::to_string(t);
    out += " time_ps=";
    out += fmt_shortest(traj.time_ps[t]);
    out += '\n';
    const double* src = traj.frame(t);
    for (int i = 0; i < traj.natoms; ++i) {
      out += topo.atoms[i].name;
      for (int k = 0; k < 3; ++k) {
        out += ' ';
        out += fmt_fixed(src[i * 3 + k], 6);
      }
      out += '\n';
    }
  }
  return out;
}

inline void write_trajectory(const TrajectoryFrameSeries& traj, const Topology& topo, const std::string& path) {
  write_file_atomic(path, trajectory_to_string(traj, topo));
}

// ---------------------------------------------------------------------------
// float32 tensor artifacts: <base>.f32 raw little-endian data plus
// <base>.json sidecar carrying dims/dtype/version.

inline constexpr int kTensorFormatVersion = 1;

inline void write_tensor(const TensorF& t, const std::string& base) {
  static_assert(sizeof(float) == 4);
  std::string raw(reinterpret_cast<const char*>(t.data.data()), t.data.size() * sizeof(float));
  write_file_atomic(base + ".f32", raw);
  ordered_json side;
  side["dims"] = t.dims;
  side["dtype"] = "float32";
  side["version"] = kTensorFormatVersion;
  save_json(base + ".json", side);
}

inline TensorF read_tensor(const std::string& base) {
  json side = load_json(base + ".json", Errc::IoError);
  if (!side.contains("dims") || !side.contains("dtype"))
    fail(Errc::MissingField, base + ".json: missing dims/dtype");
  if (side["dtype"].get<std::string>() != "float32")
    fail(Errc::IoError, base + ".json: unsupported dtype " + side["dtype"].get<std::string>());
  TensorF t;
  t.dims = side["dims"].get<std::vector<std::int64_t>>();
  std::string raw = read_file(base + ".f32");
  if (raw.size() != static_cast<std::size_t>(t.numel()) * sizeof(float))
    fail(Errc::ShapeMismatch, base + ".f32: size " + std::to_string(raw.size()) + " does not match dims");
  t.data.resize(static_cast<std::size_t>(t.numel()));
  std::memcpy(t.data.data(), raw.data(), raw.size());
  return t;
}

// ---------------------------------------------------------------------------
// CSV artifacts

inline std::string size_series_to_csv(const std::vector<std::int64_t>& sizes) {
  std::string out = "frame,size\n";
  for (std::size_t t = 0; t < sizes.size(); ++t)
    out += std::to_string(t) + "," + std::to_string(sizes[t]) + "\n";
  return out;
}

inline void write_size_series(const std::vector<std::int64_t>& sizes, const std::string& path) {
  write_file_atomic(path, size_series_to_csv(sizes));
}

inline std::vector<std::int64_t> read_size_series(const std::string& path) {
  std::string text = read_file(path);
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || (line != "frame,size" && line != "frame,size\r"))
    fail(Errc::IoError, path + ": expected 'frame,size' header");
  std::vector<std::int64_t> out;
  long expect = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto comma = line.find(',');
    long f = 0, s = 0;
    if (comma == std::string::npos || !parse_long(std::string_view(line).substr(0, comma), f) ||
        !parse_long(std::string_view(line).substr(comma + 1), s) || f != expect)
      fail(Errc::IoError, path + ": malformed row '" + line + "'");
    out.push_back(s);
    ++expect;
  }
  return out;
}

inline void write_labels_csv(const std::vector<int>& labels, const std::string& path) {
  std::string out = "frame,label\n";
  for (std::size_t t = 0; t < labels.size(); ++t)
    out += std::to_string(t) + "," + std::to_string(labels[t]) + "\n";
  write_file_atomic(path, out);
}

inline std::vector<int> read_labels_csv(const std::string& path) {
  std::string text = read_file(path);
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || (line != "frame,label" && line != "frame,label\r"))
    fail(Errc::IoError, path + ": expected 'frame,label' header");
  std::vector<int> out;
  long expect = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto comma = line.find(',');
    long f = 0, l = 0;
    if (comma == std::string::npos || !parse_long(std::string_view(line).substr(0, comma), f) ||
        !parse_long(std::string_view(line).substr(comma + 1), l) || f != expect)
      fail(Errc::IoError, path + ": malformed row '" + line + "'");
    out.push_back(static_cast<int>(l));
    ++expect;
  }
  return out;
}

inline void write_rmsf_csv(const std::map<int, double>& rmsf, const std::string& path) {
  std::string out = "subtype_id,rmsf_angstrom\n";
  for (const auto& [id, v] : rmsf) out += std::to_string(id) + "," + fmt_shortest(v) + "\n";
  write_file_atomic(path, out);
}

inline std::map<int, double> read_rmsf_csv(const std::string& path) {
  std::string text = read_file(path);
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || (line != "subtype_id,rmsf_angstrom" && line != "subtype_id,rmsf_angstrom\r"))
    fail(Errc::IoError, path + ": expected 'subtype_id,rmsf_angstrom' header");
  std::map<int, double> out;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto comma = line.find(',');
    long id = 0;
    double v = 0.0;
    if (comma == std::string::npos || !parse_long(std::string_view(line).substr(0, comma), id) ||
        !parse_double(std::string_view(line).substr(comma + 1), v))
      fail(Errc::IoError, path + ": malformed row '" + line + "'");
    out[static_cast<int>(id)] = v;
  }
  return out;
}

// One-column CSV of energy differences; an optional non-numeric header line
// is skipped.
inline std::vector<double> read_samples_csv(const std::string& path) {
  std::string text = read_file(path);
  std::istringstream in(text);
  std::string line;
  std::vector<double> out;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    double v;
    if (!parse_double(line, v)) {
      if (first) {
        first = false;
        continue;
      }
      fail(Errc::IoError, path + ": malformed sample '" + line + "'");
    }
    first = false;
    out.push_back(v);
  }
  return out;
}

}  // namespace castelo
