#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "castelo/error.hpp"
#include "castelo/io.hpp"

namespace castelo {

// Cosine similarity between two per-frame cluster-size series.
inline double cossim(const std::vector<std::int64_t>& a, const std::vector<std::int64_t>& b) {
  if (a.size() != b.size()) fail(Errc::LengthMismatch, "series lengths differ");
  if (a.empty()) fail(Errc::LengthMismatch, "empty series");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t t = 0; t < a.size(); ++t) {
    double x = static_cast<double>(a[t]), y = static_cast<double>(b[t]);
    dot += x * y;
    na += x * x;
    nb += y * y;
  }
  if (na == 0.0 || nb == 0.0) fail(Errc::LengthMismatch, "zero-norm series");
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

// Mean elementwise difference (a - b).
inline double avgdiff(const std::vector<std::int64_t>& a, const std::vector<std::int64_t>& b) {
  if (a.size() != b.size()) fail(Errc::LengthMismatch, "series lengths differ");
  if (a.empty()) fail(Errc::LengthMismatch, "empty series");
  double acc = 0.0;
  for (std::size_t t = 0; t < a.size(); ++t) acc += static_cast<double>(a[t]) - static_cast<double>(b[t]);
  return acc / static_cast<double>(a.size());
}

struct ArchMetrics {
  int filters = 0;
  int latent_dim = 0;
  double cossim = 0.0;
  double avgdiff = 0.0;
};

struct SubtypeMetrics {
  int subtype_id = 0;
  double cossim_mean = 0.0;
  double cossim_std = 0.0;
  double avgdiff_mean = 0.0;
  double avgdiff_std = 0.0;
  std::vector<ArchMetrics> per_arch;
};

struct RankingOptions {
  bool mean_centered = false;
  std::string reference_method = "rmsd";
  double stability_threshold_ps = 50000.0;
};

struct RankingReport {
  std::vector<SubtypeMetrics> metrics;  // ascending subtype_id
  std::vector<int> rank_order;          // subtype ids, most suspicious first
  std::string reference_method;
  bool mean_centered = false;
  bool reference_stable = false;  // largest reference cluster persists past the threshold
};

// One entry per (subtype, architecture) with the size series produced by that
// architecture's latent clustering.
struct SubtypeSeries {
  int subtype_id = 0;
  int filters = 0;
  int latent_dim = 0;
  std::vector<std::int64_t> sizes;
};

namespace detail {

inline std::pair<double, double> mean_std(const std::vector<double>& v) {
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  var /= static_cast<double>(v.size());
  return {mean, std::sqrt(var)};
}

}  // namespace detail

// Aggregates per-architecture metrics against the reference series and ranks
// subtypes; low cosine similarity to the reference means the subtype's
// contact dynamics disagree with the conformational reference, so ascending
// cossim_mean puts the most suspicious subtype first.
inline RankingReport rank_subtypes(const std::vector<SubtypeSeries>& series,
                                   const std::vector<std::int64_t>& reference, const RankingOptions& opts,
                                   bool reference_stable = false) {
  std::map<int, std::vector<const SubtypeSeries*>> by_subtype;
  for (const auto& s : series) by_subtype[s.subtype_id].push_back(&s);
  if (by_subtype.empty()) fail(Errc::EmptyEnsemble, "no subtype series to rank");

  RankingReport report;
  report.reference_method = opts.reference_method;
  report.mean_centered = opts.mean_centered;
  report.reference_stable = reference_stable;
  for (const auto& [id, list] : by_subtype) {
    if (list.empty()) fail(Errc::EmptyEnsemble, "subtype " + std::to_string(id) + " has no series");
    SubtypeMetrics m;
    m.subtype_id = id;
    std::vector<double> cs, ad;
    for (const SubtypeSeries* s : list) {
      ArchMetrics am;
      am.filters = s->filters;
      am.latent_dim = s->latent_dim;
      am.cossim = cossim(s->sizes, reference);
      am.avgdiff = avgdiff(s->sizes, reference);
      cs.push_back(am.cossim);
      ad.push_back(am.avgdiff);
      m.per_arch.push_back(am);
    }
    auto [cm, cstd] = detail::mean_std(cs);
    auto [am, astd] = detail::mean_std(ad);
    m.cossim_mean = cm;
    m.cossim_std = cstd;
    m.avgdiff_mean = am;
    m.avgdiff_std = astd;
    report.metrics.push_back(std::move(m));
  }

  if (opts.mean_centered) {
    double cbar = 0.0, abar = 0.0;
    for (const auto& m : report.metrics) {
      cbar += m.cossim_mean;
      abar += m.avgdiff_mean;
    }
    cbar /= static_cast<double>(report.metrics.size());
    abar /= static_cast<double>(report.metrics.size());
    for (auto& m : report.metrics) {
      m.cossim_mean -= cbar;
      m.avgdiff_mean -= abar;
    }
  }

  report.rank_order.resize(report.metrics.size());
  std::vector<std::size_t> idx(report.metrics.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    const auto& x = report.metrics[a];
    const auto& y = report.metrics[b];
    if (x.cossim_mean != y.cossim_mean) return x.cossim_mean < y.cossim_mean;
    if (x.avgdiff_mean != y.avgdiff_mean) return x.avgdiff_mean < y.avgdiff_mean;
    return x.subtype_id < y.subtype_id;
  });
  for (std::size_t i = 0; i < idx.size(); ++i) report.rank_order[i] = report.metrics[idx[i]].subtype_id;
  return report;
}

inline ordered_json report_to_json(const RankingReport& r) {
  ordered_json j;
  j["version"] = 1;
  j["reference_method"] = r.reference_method;
  j["mean_centered"] = r.mean_centered;
  j["reference_stable"] = r.reference_stable;
  ordered_json metrics = ordered_json::array();
  for (const auto& m : r.metrics) {
    ordered_json o;
    o["subtype_id"] = m.subtype_id;
    o["cossim_mean"] = m.cossim_mean;
    o["cossim_std"] = m.cossim_std;
    o["avgdiff_mean"] = m.avgdiff_mean;
    o["avgdiff_std"] = m.avgdiff_std;
    ordered_json pa = ordered_json::array();
    for (const auto& a : m.per_arch) {
      ordered_json ao;
      ao["filters"] = a.filters;
      ao["latent_dim"] = a.latent_dim;
      ao["cossim"] = a.cossim;
      ao["avgdiff"] = a.avgdiff;
      pa.push_back(std::move(ao));
    }
    o["per_arch"] = std::move(pa);
    metrics.push_back(std::move(o));
  }
  j["metrics"] = std::move(metrics);
  j["rank_order"] = r.rank_order;
  return j;
}

inline RankingReport report_from_json(const json& j) {
  RankingReport r;
  r.reference_method = j.value("reference_method", std::string("rmsd"));
  r.mean_centered = j.value("mean_centered", false);
  r.reference_stable = j.value("reference_stable", false);
  if (!j.contains("metrics") || !j.contains("rank_order")) fail(Errc::MissingField, "report: missing metrics/rank_order");
  for (const auto& o : j["metrics"]) {
    SubtypeMetrics m;
    m.subtype_id = o.at("subtype_id").get<int>();
    m.cossim_mean = o.at("cossim_mean").get<double>();
    m.cossim_std = o.at("cossim_std").get<double>();
    m.avgdiff_mean = o.at("avgdiff_mean").get<double>();
    m.avgdiff_std = o.at("avgdiff_std").get<double>();
    if (o.contains("per_arch"))
      for (const auto& ao : o["per_arch"])
        m.per_arch.push_back({ao.at("filters").get<int>(), ao.at("latent_dim").get<int>(),
                              ao.at("cossim").get<double>(), ao.at("avgdiff").get<double>()});
    r.metrics.push_back(std::move(m));
  }
  r.rank_order = j["rank_order"].get<std::vector<int>>();
  return r;
}

// report.csv: one row per subtype in rank order.
inline std::string report_to_csv(const RankingReport& r) {
  std::string out = "subtype_id,cossim_mean,cossim_std,avgdiff_mean,avgdiff_std,rank\n";
  std::map<int, const SubtypeMetrics*> by_id;
  for (const auto& m : r.metrics) by_id[m.subtype_id] = &m;
  for (std::size_t rank = 0; rank < r.rank_order.size(); ++rank) {
    const SubtypeMetrics* m = by_id[r.rank_order[rank]];
    out += std::to_string(m->subtype_id) + "," + fmt_shortest(m->cossim_mean) + "," + fmt_shortest(m->cossim_std) +
           "," + fmt_shortest(m->avgdiff_mean) + "," + fmt_shortest(m->avgdiff_std) + "," + std::to_string(rank) +
           "\n";
  }
  return out;
}

// Metric-vs-RMSF table plus coefficient of determination of the least-squares
// line metric ~ rmsf for each metric.
struct ScatterTable {
  struct Row {
    int subtype_id;
    double cossim_mean;
    double avgdiff_mean;
    double rmsf;
  };
  std::vector<Row> rows;
  double r2_cossim = 0.0;
  double r2_avgdiff = 0.0;
};

inline ScatterTable metric_rmsf_scatter(const RankingReport& report, const std::map<int, double>& rmsf) {
  ScatterTable table;
  for (const auto& m : report.metrics) {
    auto it = rmsf.find(m.subtype_id);
    if (it == rmsf.end())
      fail(Errc::KeyMismatch, "subtype " + std::to_string(m.subtype_id) + " missing from RMSF table", m.subtype_id);
    table.rows.push_back({m.subtype_id, m.cossim_mean, m.avgdiff_mean, it->second});
  }
  if (rmsf.size() != report.metrics.size())
    fail(Errc::KeyMismatch, "RMSF table has subtypes absent from the report");

  auto r2 = [&](auto get_metric) {
    double n = static_cast<double>(table.rows.size());
    double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
    for (const auto& row : table.rows) {
      double x = row.rmsf, y = get_metric(row);
      sx += x;
      sy += y;
      sxx += x * x;
      syy += y * y;
      sxy += x * y;
    }
    double vx = sxx - sx * sx / n, vy = syy - sy * sy / n, cxy = sxy - sx * sy / n;
    if (vx <= 0.0 || vy <= 0.0) return 0.0;
    return (cxy * cxy) / (vx * vy);
  };
  table.r2_cossim = r2([](const ScatterTable::Row& r) { return r.cossim_mean; });
  table.r2_avgdiff = r2([](const ScatterTable::Row& r) { return r.avgdiff_mean; });
  return table;
}

// Projection of a latent series onto its top two principal components, for
// plotting. Components are sign-fixed so the largest-magnitude loading is
// positive.
struct PcaResult {
  std::vector<double> projection;  // T x 2 row-major
  double eigenvalue_1 = 0.0;
  double eigenvalue_2 = 0.0;
};

inline PcaResult pca_project(const float* pts, int T, int d) {
  if (T < 2) fail(Errc::ShapeMismatch, "PCA needs at least 2 points");
  if (d < 1) fail(Errc::ShapeMismatch, "PCA needs at least 1 dimension");
  Eigen::MatrixXd X(T, d);
  for (int i = 0; i < T; ++i)
    for (int j = 0; j < d; ++j) X(i, j) = static_cast<double>(pts[static_cast<std::size_t>(i) * d + j]);
  Eigen::RowVectorXd mean = X.colwise().mean();
  X.rowwise() -= mean;
  Eigen::MatrixXd cov = (X.transpose() * X) / static_cast<double>(T - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  if (eig.info() != Eigen::Success) fail(Errc::Internal, "eigendecomposition failed");

  PcaResult res;
  res.projection.assign(static_cast<std::size_t>(T) * 2, 0.0);
  // eigenvalues come back ascending; take the last one or two
  for (int comp = 0; comp < 2; ++comp) {
    int col = d - 1 - comp;
    if (col < 0) break;
    Eigen::VectorXd v = eig.eigenvectors().col(col);
    int arg = 0;
    for (int j = 1; j < d; ++j)
      if (std::abs(v[j]) > std::abs(v[arg])) arg = j;
    if (v[arg] < 0) v = -v;
    Eigen::VectorXd proj = X * v;
    for (int i = 0; i < T; ++i) res.projection[static_cast<std::size_t>(i) * 2 + comp] = proj[i];
    double lam = eig.eigenvalues()[col];
    (comp == 0 ? res.eigenvalue_1 : res.eigenvalue_2) = lam;
  }
  return res;
}

}  // namespace castelo
