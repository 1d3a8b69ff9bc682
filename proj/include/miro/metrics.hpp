#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "miro/core.hpp"
#include "miro/tensor.hpp"

namespace miro {

struct MetricConfig {
  /// Centroid pairing threshold in nm.
  double xi = 50.0;
  void validate() const;
};

struct ClusterMatch {
  int gt = 0;
  int pred = 0;
  double distance = 0.0;
};

struct PairingResult {
  std::vector<ClusterMatch> matches;
  std::vector<int> fp;  // unmatched predicted ids
  std::vector<int> fn;  // unmatched ground-truth ids
};

/// Hungarian pairing of cluster centroids; pairs farther apart than xi are
/// never matched. NOISE is excluded on both sides.
PairingResult pair_clusters(const Partition& gt, const Partition& pred, std::span<const Vec2> points,
                            const MetricConfig& cfg);

struct DetectionMetrics {
  double ji_c = 0.0;
  /// Absent when there is no true positive.
  std::optional<double> rmsre_n;
  std::optional<double> rmse_xy;
  std::size_t tp = 0, fp = 0, fn = 0;
};

DetectionMetrics detection_metrics(const PairingResult& pairing, const Partition& gt, const Partition& pred,
                                   std::span<const Vec2> points);

/// ARI with NOISE as one more cluster on each side.
double adjusted_rand_index(std::span<const int> a, std::span<const int> b);
/// AMI with arithmetic-mean normalization, NOISE as one more cluster.
double adjusted_mutual_information(std::span<const int> a, std::span<const int> b);
/// Harmonic mean of the unweighted means of per-cluster adjusted Wallace
/// indices of both partitions, NOISE as one more cluster.
double ari_dagger(std::span<const int> a, std::span<const int> b);

struct PartitionMetrics {
  double ari = 0.0;
  double ari_dagger = 0.0;
  double ami = 0.0;
  /// ARI over points clustered in the ground truth.
  double ari_c = 0.0;
};

PartitionMetrics partition_metrics(const Partition& gt, const Partition& pred);

/// Sum of matched convex-hull IoUs over the number of gt and pred clusters
/// (unmatched clusters count as 0).
double iou_hulls(const PairingResult& pairing, const Partition& gt, const Partition& pred,
                 std::span<const Vec2> points);

struct ClassificationReport {
  std::vector<int> classes;                       // sorted union of observed classes
  std::vector<std::vector<std::size_t>> counts;   // [true][pred]
  Matrix confusion;                               // row-normalized counts
  std::vector<double> f1;
};

ClassificationReport classification_report(std::span<const int> truth, std::span<const int> pred);

/// (mean(a) - mean(b)) / pooled SD; absent when the pooled variance is 0.
std::optional<double> cohens_d(std::span<const double> a, std::span<const double> b);

/// Maximum-likelihood mean of an exponential law for the sample shifted by
/// `offset` (sample mean minus offset).
double exp_mean_fit(std::span<const double> sample, double offset = 0.0);

struct EvalReport {
  double ji_c = 0.0;
  std::optional<double> rmsre_n;
  std::optional<double> rmse_xy;
  double iou = 0.0;
  double ari = 0.0;
  double ari_dagger = 0.0;
  double ami = 0.0;
  double ari_c = 0.0;
  std::size_t n_clusters_gt = 0;
  std::size_t n_clusters_pred = 0;
};

EvalReport evaluate(const Partition& gt, const Partition& pred, std::span<const Vec2> points, const MetricConfig& cfg);

/// Column names of EvalReport rows, in the order of report_values.
std::vector<std::string> report_columns();
/// Report values; undefined metrics are absent.
std::vector<std::optional<double>> report_values(const EvalReport& r);

}  // namespace miro
