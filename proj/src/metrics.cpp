#include "miro/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "miro/hungarian.hpp"
#include "miro/polygon.hpp"

namespace miro {

namespace {

struct Contingency {
  std::vector<double> rows, cols;  // marginal sizes
  std::map<std::pair<std::size_t, std::size_t>, double> cells;
  double n = 0.0;
};

Contingency contingency(std::span<const int> a, std::span<const int> b) {
  if (a.size() != b.size()) throw Error("partition metrics: partitions differ in length");
  std::map<int, std::size_t> ia, ib;
  for (int l : a) ia.try_emplace(l, ia.size());
  for (int l : b) ib.try_emplace(l, ib.size());
  Contingency c;
  c.rows.assign(ia.size(), 0.0);
  c.cols.assign(ib.size(), 0.0);
  for (std::size_t k = 0; k < a.size(); ++k) {
    const auto r = ia[a[k]], q = ib[b[k]];
    c.rows[r] += 1.0;
    c.cols[q] += 1.0;
    c.cells[{r, q}] += 1.0;
  }
  c.n = static_cast<double>(a.size());
  return c;
}

double comb2(double x) { return 0.5 * x * (x - 1.0); }

double entropy(const std::vector<double>& sizes, double n) {
  double h = 0.0;
  for (double s : sizes)
    if (s > 0.0) h -= s / n * std::log(s / n);
  return h;
}

double expected_mutual_information(const Contingency& c) {
  const double n = c.n;
  const double lgn = std::lgamma(n + 1.0);
  double emi = 0.0;
  for (double ai : c.rows)
    for (double bj : c.cols) {
      const double lo = std::max(1.0, ai + bj - n), hi = std::min(ai, bj);
      const double fixed = std::lgamma(ai + 1.0) + std::lgamma(bj + 1.0) + std::lgamma(n - ai + 1.0) +
                           std::lgamma(n - bj + 1.0) - lgn;
      for (double nij = lo; nij <= hi; nij += 1.0) {
        const double log_p = fixed - std::lgamma(nij + 1.0) - std::lgamma(ai - nij + 1.0) -
                             std::lgamma(bj - nij + 1.0) - std::lgamma(n - ai - bj + nij + 1.0);
        emi += nij / n * std::log(n * nij / (ai * bj)) * std::exp(log_p);
      }
    }
  return emi;
}

// Unweighted mean over clusters of `a` (size >= 2) of the adjusted Wallace
// index against partition `b`.
std::optional<double> mean_adjusted_wallace(const Contingency& c, bool rows_side) {
  const auto& own = rows_side ? c.rows : c.cols;
  const auto& other = rows_side ? c.cols : c.rows;
  const double n = c.n;
  double e = 0.0;
  for (double m : other) e += m * (m - 1.0);
  e /= n * (n - 1.0);
  std::vector<double> pair_sum(own.size(), 0.0);
  for (const auto& [key, v] : c.cells) pair_sum[rows_side ? key.first : key.second] += v * (v - 1.0);
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < own.size(); ++i) {
    if (own[i] < 2.0) continue;
    const double ci = pair_sum[i] / (own[i] * (own[i] - 1.0));
    sum += (1.0 - e) > 0.0 ? (ci - e) / (1.0 - e) : (ci >= 1.0 ? 1.0 : 0.0);
    ++count;
  }
  if (count == 0) return std::nullopt;
  return sum / static_cast<double>(count);
}

std::vector<std::vector<std::size_t>> members_of(const Partition& p, const std::vector<int>& ids) {
  std::map<int, std::size_t> index;
  for (std::size_t k = 0; k < ids.size(); ++k) index[ids[k]] = k;
  std::vector<std::vector<std::size_t>> m(ids.size());
  for (std::size_t i = 0; i < p.size(); ++i)
    if (p[i] != Partition::NOISE) m[index[p[i]]].push_back(i);
  return m;
}

}  // namespace

void MetricConfig::validate() const {
  if (!(xi > 0.0)) throw Error("metrics: xi must be > 0");
}

PairingResult pair_clusters(const Partition& gt, const Partition& pred, std::span<const Vec2> points,
                            const MetricConfig& cfg) {
  cfg.validate();
  if (gt.size() != points.size() || pred.size() != points.size())
    throw Error("pair_clusters: partitions must annotate the same points");
  const auto gid = gt.cluster_ids(), pid = pred.cluster_ids();
  const auto gm = members_of(gt, gid), pm = members_of(pred, pid);
  std::vector<Vec2> gc, pc;
  for (const auto& m : gm) gc.push_back(centroid(gather(points, m)));
  for (const auto& m : pm) pc.push_back(centroid(gather(points, m)));

  PairingResult r;
  std::vector<char> g_used(gid.size(), 0), p_used(pid.size(), 0);
  if (!gid.empty() && !pid.empty()) {
    const double n = static_cast<double>(std::max(gid.size(), pid.size()));
    const double forbidden = std::isfinite(cfg.xi) ? (n + 1.0) * cfg.xi + 1.0 : 0.0;
    Matrix cost(gid.size(), pid.size());
    for (std::size_t i = 0; i < gid.size(); ++i)
      for (std::size_t j = 0; j < pid.size(); ++j) {
        const double d = distance(gc[i], pc[j]);
        cost(i, j) = d > cfg.xi ? forbidden : d;
      }
    for (auto [i, j] : hungarian(cost).pairs) {
      const double d = distance(gc[i], pc[j]);
      if (d > cfg.xi) continue;
      r.matches.push_back({gid[i], pid[j], d});
      g_used[i] = p_used[j] = 1;
    }
  }
  for (std::size_t j = 0; j < pid.size(); ++j)
    if (!p_used[j]) r.fp.push_back(pid[j]);
  for (std::size_t i = 0; i < gid.size(); ++i)
    if (!g_used[i]) r.fn.push_back(gid[i]);
  return r;
}

DetectionMetrics detection_metrics(const PairingResult& pairing, const Partition& gt, const Partition& pred,
                                   std::span<const Vec2> points) {
  if (gt.size() != points.size() || pred.size() != points.size())
    throw Error("detection_metrics: partitions must annotate the same points");
  DetectionMetrics m;
  m.tp = pairing.matches.size();
  m.fp = pairing.fp.size();
  m.fn = pairing.fn.size();
  const std::size_t denom = m.tp + m.fp + m.fn;
  m.ji_c = denom == 0 ? 1.0 : static_cast<double>(m.tp) / static_cast<double>(denom);
  if (m.tp == 0) return m;

  std::map<int, double> gsize, psize;
  for (int l : gt.labels())
    if (l != Partition::NOISE) gsize[l] += 1.0;
  for (int l : pred.labels())
    if (l != Partition::NOISE) psize[l] += 1.0;
  double se_n = 0.0, se_xy = 0.0;
  for (const auto& mt : pairing.matches) {
    const double rel = (psize[mt.pred] - gsize[mt.gt]) / gsize[mt.gt];
    se_n += rel * rel;
    se_xy += mt.distance * mt.distance;
  }
  const double tp = static_cast<double>(m.tp);
  m.rmsre_n = std::sqrt(se_n / tp);
  m.rmse_xy = std::sqrt(se_xy / tp);
  return m;
}

double adjusted_rand_index(std::span<const int> a, std::span<const int> b) {
  const Contingency c = contingency(a, b);
  if (c.n < 2.0) return 1.0;
  double index = 0.0, sa = 0.0, sb = 0.0;
  for (const auto& [k, v] : c.cells) index += comb2(v);
  for (double v : c.rows) sa += comb2(v);
  for (double v : c.cols) sb += comb2(v);
  const double expected = sa * sb / comb2(c.n);
  const double max_index = 0.5 * (sa + sb);
  if (max_index == expected) return 1.0;
  return (index - expected) / (max_index - expected);
}

double adjusted_mutual_information(std::span<const int> a, std::span<const int> b) {
  const Contingency c = contingency(a, b);
  if (c.n == 0.0) return 1.0;
  if (c.rows.size() == 1 && c.cols.size() == 1) return 1.0;
  double mi = 0.0;
  for (const auto& [k, v] : c.cells) mi += v / c.n * std::log(c.n * v / (c.rows[k.first] * c.cols[k.second]));
  const double ha = entropy(c.rows, c.n), hb = entropy(c.cols, c.n);
  const double emi = expected_mutual_information(c);
  const double denom = 0.5 * (ha + hb) - emi;
  if (std::abs(denom) < 1e-15) return 1.0;
  return (mi - emi) / denom;
}

double ari_dagger(std::span<const int> a, std::span<const int> b) {
  const Contingency c = contingency(a, b);
  if (c.n < 2.0) return 1.0;
  if (c.rows.size() == 1 && c.cols.size() == 1) return 1.0;
  const auto wa = mean_adjusted_wallace(c, true), wb = mean_adjusted_wallace(c, false);
  if (!wa || !wb) return 0.0;
  const double s = *wa + *wb;
  return s == 0.0 ? 0.0 : 2.0 * *wa * *wb / s;
}

PartitionMetrics partition_metrics(const Partition& gt, const Partition& pred) {
  if (gt.size() != pred.size()) throw Error("partition_metrics: partitions differ in length");
  PartitionMetrics m;
  m.ari = adjusted_rand_index(gt.labels(), pred.labels());
  m.ari_dagger = ari_dagger(gt.labels(), pred.labels());
  m.ami = adjusted_mutual_information(gt.labels(), pred.labels());
  std::vector<int> ga, pa;
  for (std::size_t i = 0; i < gt.size(); ++i)
    if (gt[i] != Partition::NOISE) {
      ga.push_back(gt[i]);
      pa.push_back(pred[i]);
    }
  m.ari_c = adjusted_rand_index(ga, pa);
  return m;
}

double iou_hulls(const PairingResult& pairing, const Partition& gt, const Partition& pred,
                 std::span<const Vec2> points) {
  const std::size_t denom = pairing.matches.size() + pairing.fp.size() + pairing.fn.size();
  if (denom == 0) return 1.0;
  std::map<int, std::vector<Vec2>> gp, pp;
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (gt[i] != Partition::NOISE) gp[gt[i]].push_back(points[i]);
    if (pred[i] != Partition::NOISE) pp[pred[i]].push_back(points[i]);
  }
  double sum = 0.0;
  for (const auto& m : pairing.matches) sum += geom::hull_iou(gp[m.gt], pp[m.pred]);
  return sum / static_cast<double>(denom);
}

ClassificationReport classification_report(std::span<const int> truth, std::span<const int> pred) {
  if (truth.size() != pred.size()) throw Error("classification_report: length mismatch");
  ClassificationReport r;
  r.classes.assign(truth.begin(), truth.end());
  r.classes.insert(r.classes.end(), pred.begin(), pred.end());
  std::sort(r.classes.begin(), r.classes.end());
  r.classes.erase(std::unique(r.classes.begin(), r.classes.end()), r.classes.end());
  const std::size_t k = r.classes.size();
  auto idx = [&](int c) {
    return static_cast<std::size_t>(std::lower_bound(r.classes.begin(), r.classes.end(), c) - r.classes.begin());
  };
  r.counts.assign(k, std::vector<std::size_t>(k, 0));
  for (std::size_t i = 0; i < truth.size(); ++i) ++r.counts[idx(truth[i])][idx(pred[i])];
  r.confusion.resize(k, k);
  r.f1.assign(k, 0.0);
  for (std::size_t t = 0; t < k; ++t) {
    const double row = static_cast<double>(std::accumulate(r.counts[t].begin(), r.counts[t].end(), std::size_t{0}));
    for (std::size_t p = 0; p < k; ++p) r.confusion(t, p) = row > 0 ? static_cast<double>(r.counts[t][p]) / row : 0.0;
    double col = 0.0;
    for (std::size_t q = 0; q < k; ++q) col += static_cast<double>(r.counts[q][t]);
    const double tp = static_cast<double>(r.counts[t][t]);
    const double precision = col > 0 ? tp / col : 0.0, recall = row > 0 ? tp / row : 0.0;
    r.f1[t] = precision + recall > 0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
  }
  return r;
}

std::optional<double> cohens_d(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw Error("cohens_d: samples must be non-empty");
  auto mean = [](std::span<const double> s) { return std::accumulate(s.begin(), s.end(), 0.0) / double(s.size()); };
  const double ma = mean(a), mb = mean(b);
  double ssa = 0.0, ssb = 0.0;
  for (double v : a) ssa += (v - ma) * (v - ma);
  for (double v : b) ssb += (v - mb) * (v - mb);
  const double dof = static_cast<double>(a.size() + b.size()) - 2.0;
  if (dof <= 0.0) return std::nullopt;
  const double pooled = std::sqrt((ssa + ssb) / dof);
  if (pooled == 0.0) return std::nullopt;
  return (ma - mb) / pooled;
}

double exp_mean_fit(std::span<const double> sample, double offset) {
  if (sample.empty()) throw Error("exp_mean_fit: empty sample");
  return std::accumulate(sample.begin(), sample.end(), 0.0) / static_cast<double>(sample.size()) - offset;
}

EvalReport evaluate(const Partition& gt, const Partition& pred, std::span<const Vec2> points, const MetricConfig& cfg) {
  const PairingResult pairing = pair_clusters(gt, pred, points, cfg);
  const DetectionMetrics det = detection_metrics(pairing, gt, pred, points);
  const PartitionMetrics pm = partition_metrics(gt, pred);
  EvalReport r;
  r.ji_c = det.ji_c;
  r.rmsre_n = det.rmsre_n;
  r.rmse_xy = det.rmse_xy;
  r.iou = iou_hulls(pairing, gt, pred, points);
  r.ari = pm.ari;
  r.ari_dagger = pm.ari_dagger;
  r.ami = pm.ami;
  r.ari_c = pm.ari_c;
  r.n_clusters_gt = gt.n_clusters();
  r.n_clusters_pred = pred.n_clusters();
  return r;
}

std::vector<std::string> report_columns() {
  return {"ari_dagger", "iou", "ji_c", "rmsre_n", "rmse_xy", "ami", "ari_c", "ari", "n_clusters_gt", "n_clusters_pred"};
}

std::vector<std::optional<double>> report_values(const EvalReport& r) {
  return {r.ari_dagger, r.iou, r.ji_c, r.rmsre_n, r.rmse_xy, r.ami, r.ari_c, r.ari,
          static_cast<double>(r.n_clusters_gt), static_cast<double>(r.n_clusters_pred)};
}

}  // namespace miro
