#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "castelo/ranking.hpp"
#include "castelo/rng.hpp"
#include "oracles.hpp"

using namespace castelo;

TEST_CASE("cossim hand values") {
  REQUIRE(cossim({3, 1}, {1, 3}) == Catch::Approx(0.6).margin(1e-12));
  REQUIRE(cossim({1, 2, 3}, {1, 2, 3}) == Catch::Approx(1.0).margin(1e-15));
  REQUIRE(cossim({1, 1}, {7, 7}) == Catch::Approx(1.0).margin(1e-15));
}

TEST_CASE("avgdiff hand values") {
  REQUIRE(avgdiff({1, 2, 3}, {3, 3, 3}) == -1.0);
  REQUIRE(avgdiff({5, 5}, {5, 5}) == 0.0);
  REQUIRE(avgdiff({3, 3, 3}, {1, 2, 3}) == 1.0);
}

TEST_CASE("metric errors") {
  try {
    cossim({1, 2}, {1, 2, 3});
    FAIL("expected throw");
  } catch (const Error& e) {
    REQUIRE(e.code() == Errc::LengthMismatch);
  }
  try {
    avgdiff({}, {});
    FAIL("expected throw");
  } catch (const Error& e) {
    REQUIRE(e.code() == Errc::LengthMismatch);
  }
  try {
    cossim({0, 0}, {1, 2});
    FAIL("expected throw");
  } catch (const Error& e) {
    REQUIRE(e.code() == Errc::LengthMismatch);
  }
}

TEST_CASE("metric properties over random positive series") {
  Rng rng(17);
  for (int trial = 0; trial < 10000; ++trial) {
    int n = 2 + static_cast<int>(rng.bounded(8));
    std::vector<std::int64_t> a(n), b(n);
    for (int i = 0; i < n; ++i) {
      a[i] = 1 + static_cast<std::int64_t>(rng.bounded(500));
      b[i] = 1 + static_cast<std::int64_t>(rng.bounded(500));
    }
    double c = cossim(a, b);
    REQUIRE(c > 0.0);
    REQUIRE(c <= 1.0 + 1e-12);
    REQUIRE(c == Catch::Approx(oracles::cossim_naive(a, b)).margin(1e-12));
    REQUIRE(avgdiff(a, b) == Catch::Approx(oracles::avgdiff_naive(a, b)).margin(1e-12));
    REQUIRE(avgdiff(a, b) + avgdiff(b, a) == Catch::Approx(0.0).margin(1e-12));

    // scale invariance of the cosine
    std::vector<std::int64_t> a3(a);
    for (auto& x : a3) x *= 3;
    REQUIRE(cossim(a3, b) == Catch::Approx(c).margin(1e-12));
    REQUIRE(cossim(a, a) == Catch::Approx(1.0).margin(1e-12));
  }
}

namespace {

SubtypeSeries mk(int id, int f, int d, std::vector<std::int64_t> sizes) {
  SubtypeSeries s;
  s.subtype_id = id;
  s.filters = f;
  s.latent_dim = d;
  s.sizes = std::move(sizes);
  return s;
}

}  // namespace

TEST_CASE("single subtype matching the reference exactly") {
  std::vector<std::int64_t> ref{4, 4, 2, 2};
  RankingOptions opts;
  RankingReport r = rank_subtypes({mk(0, 32, 3, ref)}, ref, opts);
  REQUIRE(r.metrics.size() == 1);
  REQUIRE(r.metrics[0].cossim_mean == Catch::Approx(1.0).margin(1e-15));
  REQUIRE(r.metrics[0].avgdiff_mean == 0.0);
  REQUIRE(r.metrics[0].cossim_std == 0.0);
  REQUIRE(r.rank_order == std::vector<int>{0});
}

TEST_CASE("ensemble mean and std aggregate per subtype") {
  std::vector<std::int64_t> ref{2, 2, 2, 2};
  std::vector<SubtypeSeries> series{
      mk(0, 32, 3, {2, 2, 2, 2}),
      mk(0, 64, 5, {4, 4, 4, 4}),  // cossim 1 too, avgdiff 2
      mk(1, 32, 3, {2, 2, 2, 2}),
      mk(1, 64, 5, {2, 2, 2, 2}),
  };
  RankingOptions opts;
  RankingReport r = rank_subtypes(series, ref, opts);
  const auto& m0 = r.metrics[0];
  REQUIRE(m0.subtype_id == 0);
  REQUIRE(m0.cossim_mean == Catch::Approx(1.0).margin(1e-14));
  REQUIRE(m0.avgdiff_mean == Catch::Approx(1.0).margin(1e-14));   // (0 + 2) / 2
  REQUIRE(m0.avgdiff_std == Catch::Approx(1.0).margin(1e-14));    // population std of {0, 2}
  REQUIRE(m0.per_arch.size() == 2);
  const auto& m1 = r.metrics[1];
  REQUIRE(m1.avgdiff_std == 0.0);
}

TEST_CASE("rank order ascends by cossim then avgdiff then id") {
  std::vector<std::int64_t> ref{10, 10, 1, 1};
  std::vector<SubtypeSeries> series{
      mk(0, 32, 3, {10, 10, 1, 1}),  // cossim 1
      mk(1, 32, 3, {1, 1, 10, 10}),  // low cossim
      mk(2, 32, 3, {10, 10, 1, 1}),  // cossim 1, same avgdiff as 0 -> id break
  };
  RankingOptions opts;
  RankingReport r = rank_subtypes(series, ref, opts);
  REQUIRE(r.rank_order == std::vector<int>{1, 0, 2});
  REQUIRE(r.metrics[0].subtype_id == 0);  // metrics stay in id order
}

TEST_CASE("scaling every series preserves the rank order") {
  Rng rng(8);
  std::vector<std::int64_t> ref(12);
  for (auto& x : ref) x = 1 + static_cast<std::int64_t>(rng.bounded(30));
  std::vector<SubtypeSeries> series;
  for (int id = 0; id < 4; ++id) {
    std::vector<std::int64_t> s(12);
    for (auto& x : s) x = 1 + static_cast<std::int64_t>(rng.bounded(30));
    series.push_back(mk(id, 32, 3, s));
  }
  RankingOptions opts;
  RankingReport base = rank_subtypes(series, ref, opts);

  std::vector<SubtypeSeries> scaled = series;
  std::vector<std::int64_t> ref_scaled = ref;
  for (auto& s : scaled)
    for (auto& x : s.sizes) x *= 7;
  for (auto& x : ref_scaled) x *= 7;
  RankingReport r2 = rank_subtypes(scaled, ref_scaled, opts);
  REQUIRE(r2.rank_order == base.rank_order);
}

TEST_CASE("mean centering shifts metrics by their across-subtype mean") {
  std::vector<std::int64_t> ref{4, 2, 4, 2};
  std::vector<SubtypeSeries> series{
      mk(0, 32, 3, {4, 2, 4, 2}),
      mk(1, 32, 3, {2, 4, 2, 4}),
  };
  RankingOptions opts;
  RankingReport raw = rank_subtypes(series, ref, opts);
  opts.mean_centered = true;
  RankingReport centered = rank_subtypes(series, ref, opts);
  double cbar = (raw.metrics[0].cossim_mean + raw.metrics[1].cossim_mean) / 2.0;
  REQUIRE(centered.metrics[0].cossim_mean == Catch::Approx(raw.metrics[0].cossim_mean - cbar).margin(1e-14));
  REQUIRE(centered.metrics[1].cossim_mean < 0.0);  // the disagreeing subtype goes negative
  REQUIRE(centered.metrics[0].cossim_mean > 0.0);
  REQUIRE(centered.rank_order == raw.rank_order);
  REQUIRE(centered.mean_centered);
}

TEST_CASE("empty ensemble is an error") {
  try {
    rank_subtypes({}, {1, 2}, RankingOptions{});
    FAIL("expected throw");
  } catch (const Error& e) {
    REQUIRE(e.code() == Errc::EmptyEnsemble);
  }
}

TEST_CASE("report json and csv round trip") {
  std::vector<std::int64_t> ref{5, 5, 3, 3};
  std::vector<SubtypeSeries> series{
      mk(0, 32, 3, {5, 5, 3, 3}),
      mk(0, 64, 10, {5, 4, 3, 3}),
      mk(1, 32, 3, {3, 3, 5, 5}),
  };
  RankingOptions opts;
  RankingReport r = rank_subtypes(series, ref, opts, true);
  REQUIRE(r.reference_stable);

  RankingReport r2 = report_from_json(json::parse(report_to_json(r).dump()));
  REQUIRE(r2.rank_order == r.rank_order);
  REQUIRE(r2.reference_stable == r.reference_stable);
  REQUIRE(r2.metrics.size() == r.metrics.size());
  for (std::size_t i = 0; i < r.metrics.size(); ++i) {
    REQUIRE(r2.metrics[i].subtype_id == r.metrics[i].subtype_id);
    REQUIRE(r2.metrics[i].cossim_mean == r.metrics[i].cossim_mean);
    REQUIRE(r2.metrics[i].avgdiff_std == r.metrics[i].avgdiff_std);
    REQUIRE(r2.metrics[i].per_arch.size() == r.metrics[i].per_arch.size());
  }

  std::string csv = report_to_csv(r);
  REQUIRE(csv.rfind("subtype_id,", 0) == 0);
  // one line per subtype plus header
  REQUIRE(std::count(csv.begin(), csv.end(), '\n') == 3);

  // byte determinism
  REQUIRE(report_to_json(r).dump() == report_to_json(r).dump());
  REQUIRE(report_to_csv(r) == csv);
}

TEST_CASE("scatter table computes least-squares r2") {
  RankingReport r;
  for (int i = 0; i < 5; ++i) {
    SubtypeMetrics m;
    m.subtype_id = i;
    m.cossim_mean = 0.1 * i + 0.3;  // perfectly linear in rmsf below
    m.avgdiff_mean = (i == 2) ? 1.0 : 0.0;
    r.metrics.push_back(m);
    r.rank_order.push_back(i);
  }
  std::map<int, double> rmsf;
  for (int i = 0; i < 5; ++i) rmsf[i] = 2.0 * i + 1.0;
  ScatterTable t = metric_rmsf_scatter(r, rmsf);
  REQUIRE(t.rows.size() == 5);
  REQUIRE(t.r2_cossim == Catch::Approx(1.0).margin(1e-12));

  std::vector<double> x, y;
  for (int i = 0; i < 5; ++i) {
    x.push_back(rmsf[i]);
    y.push_back(r.metrics[i].avgdiff_mean);
  }
  REQUIRE(t.r2_avgdiff == Catch::Approx(oracles::r2_naive(x, y)).margin(1e-12));

  rmsf.erase(3);
  try {
    metric_rmsf_scatter(r, rmsf);
    FAIL("expected throw");
  } catch (const Error& e) {
    REQUIRE(e.code() == Errc::KeyMismatch);
  }
}

TEST_CASE("constant metric has zero r2") {
  RankingReport r;
  for (int i = 0; i < 4; ++i) {
    SubtypeMetrics m;
    m.subtype_id = i;
    m.cossim_mean = 0.75;
    m.avgdiff_mean = 0.0;
    r.metrics.push_back(m);
  }
  std::map<int, double> rmsf{{0, 1.0}, {1, 2.0}, {2, 3.0}, {3, 4.0}};
  ScatterTable t = metric_rmsf_scatter(r, rmsf);
  REQUIRE(t.r2_cossim == 0.0);
  REQUIRE(t.r2_avgdiff == 0.0);
}

TEST_CASE("pca projects onto the top components") {
  Rng rng(22);
  // 1D line embedded in 4 dims: second component should vanish
  int T = 60, d = 4;
  std::vector<float> pts(static_cast<std::size_t>(T) * d);
  for (int t = 0; t < T; ++t) {
    double s = rng.normal();
    pts[t * d + 0] = static_cast<float>(3.0 * s);
    pts[t * d + 1] = static_cast<float>(-2.0 * s);
    pts[t * d + 2] = static_cast<float>(0.5 * s);
    pts[t * d + 3] = static_cast<float>(1.0 * s);
  }
  PcaResult p = pca_project(pts.data(), T, d);
  REQUIRE(p.projection.size() == static_cast<std::size_t>(T) * 2);
  for (int t = 0; t < T; ++t) REQUIRE(std::abs(p.projection[t * 2 + 1]) < 1e-4);
  REQUIRE(p.eigenvalue_1 >= p.eigenvalue_2);
  REQUIRE(p.eigenvalue_2 >= -1e-9);

  // projection variance onto component 1 equals the top eigenvalue
  double mean = 0.0;
  for (int t = 0; t < T; ++t) mean += p.projection[t * 2];
  mean /= T;
  double var = 0.0;
  for (int t = 0; t < T; ++t) var += (p.projection[t * 2] - mean) * (p.projection[t * 2] - mean);
  var /= (T - 1);
  REQUIRE(var == Catch::Approx(p.eigenvalue_1).epsilon(1e-4));
}

TEST_CASE("pca is deterministic and sign-fixed") {
  Rng rng(23);
  int T = 40, d = 3;
  std::vector<float> pts(static_cast<std::size_t>(T) * d);
  for (auto& x : pts) x = static_cast<float>(rng.normal());
  PcaResult a = pca_project(pts.data(), T, d);
  PcaResult b = pca_project(pts.data(), T, d);
  REQUIRE(a.projection == b.projection);
}
