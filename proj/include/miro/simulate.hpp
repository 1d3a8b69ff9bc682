#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "miro/core.hpp"
#include "miro/rng.hpp"

namespace miro::sim {

/// Integer-valued distribution used for cluster counts and molecule counts.
struct IntDist {
  enum class Kind { fixed, uniform, geometric };
  Kind kind = Kind::fixed;
  int lo = 1;          // fixed value, or uniform lower bound
  int hi = 1;          // uniform upper bound (inclusive)
  double mean = 1.0;   // geometric: 1 + Geometric with this mean

  static IntDist fixed(int n) { return {Kind::fixed, n, n, double(n)}; }
  static IntDist uniform(int lo, int hi) { return {Kind::uniform, lo, hi, 0.5 * (lo + hi)}; }
  static IntDist geometric(double mean) { return {Kind::geometric, 1, 1, mean}; }

  int sample(Rng& rng) const;
  void validate(const char* what) const;
};

struct GaussianShape {
  double sigma_lo = 25.0;  // per-cluster width drawn uniformly from [lo, hi]
  double sigma_hi = 25.0;
};

/// Anisotropic Gaussian with uniformly random orientation.
struct EllipseShape {
  double sigma_major = 60.0;
  double aspect = 3.0;
};

/// Points on a circular arc with radial normal noise.
struct ArcShape {
  double radius = 250.0;
  double radial_sigma = 50.0;
  double arc_span = 6.283185307179586;
};

/// Eightfold ring of corner clusters. Each corner is an isosceles triangle with
/// its apex at the ring center and height 2 * corner_radius; its base subtends
/// 2*pi/corners at the center. Molecule counts are per corner.
struct NpcShape {
  double corner_radius = 50.0;
  int corners = 8;
  double spread_divisor = 1.8;
};

using Shape = std::variant<GaussianShape, EllipseShape, ArcShape, NpcShape>;

struct ClusterGroup {
  IntDist count = IntDist::fixed(1);
  IntDist molecules = IntDist::fixed(1);
  Shape shape = GaussianShape{};
  int class_id = 1;
};

/// Background size, either as a fraction of the total or an absolute count.
struct Background {
  std::optional<double> fraction_of_total;
  std::optional<int> count;

  std::size_t resolve(std::size_t clustered) const;
  void validate() const;
};

struct ScenarioSpec {
  Rect extent{0.0, 0.0, 2000.0, 2000.0};
  std::vector<ClusterGroup> groups;
  Background background{0.5, std::nullopt};
  double min_cluster_separation = 0.0;
  int max_placement_attempts = 10000;
  std::uint64_t seed = 0;

  void validate() const;
};

struct BlinkSpec {
  double mean_blinks = 4.5;
  double localization_precision = 10.0;
  bool blink_background = true;

  void validate() const;
};

/// A scenario plus optional blinking.
struct Preset {
  std::string name;
  ScenarioSpec scenario;
  std::optional<BlinkSpec> blink;
};

/// Generates one cloud: clustered molecules first (cluster ids 0.., in placement
/// order), then uniform background labeled NOISE. NPC groups set coarse_truth to
/// whole rings and truth to corners.
LabeledCloud generate(const ScenarioSpec& spec, std::uint64_t seed);
inline LabeledCloud generate(const ScenarioSpec& spec) { return generate(spec, spec.seed); }

/// Replaces each molecule by 1 + Geometric localizations around it.
LabeledCloud apply_blinking(const LabeledCloud& cloud, const BlinkSpec& spec, std::uint64_t seed);

/// generate + optional blinking with a derived seed.
LabeledCloud simulate(const Preset& preset, std::uint64_t seed);

std::vector<std::string> preset_names();
/// Throws with the list of available presets when the name is unknown.
Preset preset(const std::string& name);

struct PairTestSpec {
  double sigma = 25.0;
  double separation = 50.0;
  double mean_count = 90.0;
  double field = 1000.0;  // side of the square field, pair centered in it
};

/// Two Gaussian clusters (labels 0 and 1) at the given center distance along a
/// random axis; sizes are 1 + Geometric with the given mean.
LabeledCloud gen_pair_test(const PairTestSpec& spec, std::uint64_t seed);

struct SeedCluster {
  std::vector<Vec2> points;
  int class_id = 1;
  /// Optional sub-cluster labels (>= 0, or -1 for points without one). When any
  /// seed has them, placed copies become coarse clusters and sub-labels fine ones.
  std::optional<std::vector<int>> sublabels;
};

struct AugmentSpec {
  enum class BackgroundMode { uniform, resampled };

  bool rotations = true;
  bool reflections = true;
  double dropout_prob = 0.0;
  double addition_prob = 0.0;
  double jitter_sigma = 0.0;
  int placements_lo = 1;
  int placements_hi = 1;
  BackgroundMode background_mode = BackgroundMode::uniform;
  Background background{0.0, std::nullopt};
  /// Source positions for resampled background.
  std::vector<Vec2> background_source;

  void validate() const;
};

/// Places randomly augmented seed copies in `extent`. Cloud c uses a seed
/// derived from (seed, c), so clouds are independent of n_clouds.
std::vector<LabeledCloud> augment_dataset(const std::vector<SeedCluster>& seeds, const AugmentSpec& spec,
                                          std::size_t n_clouds, const Rect& extent, std::uint64_t seed);

/// Extracts every truth cluster of a labeled cloud as a seed cluster (classes
/// from shape_class, sub-labels from truth when coarse_truth is present).
std::vector<SeedCluster> seeds_from(const LabeledCloud& cloud);

}  // namespace miro::sim
