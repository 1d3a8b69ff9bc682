#include "miro/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>

namespace miro::sim {

namespace {

constexpr double kPi = std::numbers::pi;

Vec2 rotate(Vec2 p, double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  return {c * p.x - s * p.y, s * p.x + c * p.y};
}

double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }

// Distance from `from` along unit direction `dir` to the boundary of triangle (a, b, c).
double ray_to_triangle(Vec2 from, Vec2 dir, Vec2 a, Vec2 b, Vec2 c) {
  double best = std::numeric_limits<double>::infinity();
  const Vec2 verts[3] = {a, b, c};
  for (int e = 0; e < 3; ++e) {
    const Vec2 p = verts[e], q = verts[(e + 1) % 3];
    const Vec2 seg = q - p;
    const double denom = cross(dir, seg);
    if (std::abs(denom) < 1e-15) continue;
    const Vec2 w = p - from;
    const double t = cross(w, seg) / denom;
    const double u = cross(w, dir) / denom;
    if (t > 0.0 && u >= 0.0 && u <= 1.0) best = std::min(best, t);
  }
  return std::isfinite(best) ? best : 0.0;
}

struct Builder {
  std::vector<Localization> pts;
  std::vector<int> fine;
  std::vector<int> klass;
  std::vector<int> coarse;
  void add(Vec2 p, int fine_id, int class_id, int coarse_id) {
    pts.push_back({p.x, p.y, std::nullopt});
    fine.push_back(fine_id);
    klass.push_back(class_id);
    coarse.push_back(coarse_id);
  }
};

// Returns the number of fine cluster ids consumed.
int place_shape(Builder& out, const ClusterGroup& g, Vec2 center, int next_fine, int coarse_id, Rng& rng) {
  return std::visit(
      [&](const auto& shape) -> int {
        using T = std::decay_t<decltype(shape)>;
        if constexpr (std::is_same_v<T, GaussianShape>) {
          const int n = g.molecules.sample(rng);
          const double sigma = shape.sigma_hi > shape.sigma_lo ? uniform(rng, shape.sigma_lo, shape.sigma_hi)
                                                               : shape.sigma_lo;
          for (int m = 0; m < n; ++m) out.add({center.x + normal(rng, sigma), center.y + normal(rng, sigma)},
                                              next_fine, g.class_id, coarse_id);
          return n > 0 ? 1 : 0;
        } else if constexpr (std::is_same_v<T, EllipseShape>) {
          const int n = g.molecules.sample(rng);
          const double theta = uniform(rng, 0.0, kPi);
          const double minor = shape.sigma_major / shape.aspect;
          for (int m = 0; m < n; ++m) {
            Vec2 local{normal(rng, shape.sigma_major), normal(rng, minor)};
            out.add(center + rotate(local, theta), next_fine, g.class_id, coarse_id);
          }
          return n > 0 ? 1 : 0;
        } else if constexpr (std::is_same_v<T, ArcShape>) {
          const int n = g.molecules.sample(rng);
          const double start = uniform(rng, 0.0, 2.0 * kPi);
          for (int m = 0; m < n; ++m) {
            const double a = start + uniform(rng, 0.0, shape.arc_span);
            const double r = shape.radius + normal(rng, shape.radial_sigma);
            out.add({center.x + r * std::cos(a), center.y + r * std::sin(a)}, next_fine, g.class_id, coarse_id);
          }
          return n > 0 ? 1 : 0;
        } else {
          const double rot = uniform(rng, 0.0, 2.0 * kPi);
          const double h = 2.0 * shape.corner_radius;
          const double half = kPi / shape.corners;
          int used = 0;
          for (int k = 0; k < shape.corners; ++k) {
            const int n = g.molecules.sample(rng);
            if (n == 0) continue;
            const double axis = rot + 2.0 * kPi * k / shape.corners;
            const Vec2 apex = center;
            const Vec2 b1 = center + (h / std::cos(half)) * Vec2{std::cos(axis - half), std::sin(axis - half)};
            const Vec2 b2 = center + (h / std::cos(half)) * Vec2{std::cos(axis + half), std::sin(axis + half)};
            const Vec2 c = center + shape.corner_radius * Vec2{std::cos(axis), std::sin(axis)};
            for (int m = 0; m < n; ++m) {
              const double theta = uniform(rng, 0.0, 2.0 * kPi);
              const Vec2 dir{std::cos(theta), std::sin(theta)};
              const double spread = ray_to_triangle(c, dir, apex, b1, b2) / shape.spread_divisor;
              // half-normal along theta: the spread belongs to that direction only
              const double r = std::abs(normal(rng, 1.0)) * spread;
              out.add(c + r * dir, next_fine + used, g.class_id, coarse_id);
            }
            ++used;
          }
          return used;
        }
      },
      g.shape);
}

void validate_shape(const Shape& s) {
  std::visit(
      [](const auto& shape) {
        using T = std::decay_t<decltype(shape)>;
        if constexpr (std::is_same_v<T, GaussianShape>) {
          if (!(shape.sigma_lo > 0.0) || shape.sigma_hi < shape.sigma_lo) throw Error("gaussian sigma must be > 0");
        } else if constexpr (std::is_same_v<T, EllipseShape>) {
          if (!(shape.sigma_major > 0.0) || !(shape.aspect > 0.0)) throw Error("ellipse parameters must be > 0");
        } else if constexpr (std::is_same_v<T, ArcShape>) {
          if (!(shape.radius > 0.0) || !(shape.radial_sigma > 0.0) || !(shape.arc_span > 0.0))
            throw Error("arc parameters must be > 0");
        } else {
          if (!(shape.corner_radius > 0.0) || shape.corners < 1 || !(shape.spread_divisor > 0.0))
            throw Error("npc parameters must be > 0");
        }
      },
      s);
}

}  // namespace

int IntDist::sample(Rng& rng) const {
  switch (kind) {
    case Kind::fixed: return lo;
    case Kind::uniform: return uniform_int(rng, lo, hi);
    case Kind::geometric: return shifted_geometric(rng, mean);
  }
  return lo;
}

void IntDist::validate(const char* what) const {
  const bool ok = (kind == Kind::fixed && lo >= 0) || (kind == Kind::uniform && lo >= 0 && hi >= lo) ||
                  (kind == Kind::geometric && mean >= 1.0);
  if (!ok) throw Error(std::string("invalid distribution for ") + what);
}

std::size_t Background::resolve(std::size_t clustered) const {
  if (count) return static_cast<std::size_t>(*count);
  const double f = fraction_of_total.value_or(0.0);
  if (f <= 0.0) return 0;
  if (f >= 1.0) {
    if (clustered == 0) return 0;
    throw Error("background fraction 1 leaves no room for clustered points");
  }
  return static_cast<std::size_t>(std::llround(f * static_cast<double>(clustered) / (1.0 - f)));
}

void Background::validate() const {
  if (fraction_of_total && count) throw Error("background: give either fraction_of_total or count");
  if (fraction_of_total && (*fraction_of_total < 0.0 || *fraction_of_total > 1.0))
    throw Error("background fraction must be in [0, 1]");
  if (count && *count < 0) throw Error("background count must be >= 0");
}

void ScenarioSpec::validate() const {
  if (!(extent.width() > 0.0) || !(extent.height() > 0.0)) throw Error("extent must have positive size");
  for (const auto& g : groups) {
    g.count.validate("cluster count");
    g.molecules.validate("molecules per cluster");
    validate_shape(g.shape);
    if (g.class_id < 0) throw Error("class_id must be non-negative");
  }
  background.validate();
  if (min_cluster_separation < 0.0) throw Error("min_cluster_separation must be >= 0");
  if (max_placement_attempts < 1) throw Error("max_placement_attempts must be >= 1");
}

void BlinkSpec::validate() const {
  if (!(mean_blinks >= 1.0)) throw Error("mean_blinks must be >= 1");
  if (!(localization_precision >= 0.0)) throw Error("localization_precision must be >= 0");
}

LabeledCloud generate(const ScenarioSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng(seed);
  Builder b;
  std::vector<Vec2> centers;
  int next_fine = 0;
  int next_coarse = 0;
  bool any_npc = false;
  const double sep2 = spec.min_cluster_separation * spec.min_cluster_separation;

  for (const auto& g : spec.groups) {
    const bool npc = std::holds_alternative<NpcShape>(g.shape);
    any_npc = any_npc || npc;
    const int n_clusters = g.count.sample(rng);
    for (int c = 0; c < n_clusters; ++c) {
      Vec2 center;
      int attempt = 0;
      while (true) {
        center = {uniform(rng, spec.extent.x0, spec.extent.x1), uniform(rng, spec.extent.y0, spec.extent.y1)};
        bool ok = true;
        if (sep2 > 0.0) {
          for (const auto& o : centers) {
            const Vec2 d = center - o;
            if (d.x * d.x + d.y * d.y < sep2) {
              ok = false;
              break;
            }
          }
        }
        if (ok) break;
        if (++attempt >= spec.max_placement_attempts) throw Error("cannot place clusters at requested separation");
      }
      centers.push_back(center);
      const int used = place_shape(b, g, center, next_fine, next_coarse, rng);
      next_fine += used;
      if (used > 0) ++next_coarse;
    }
  }

  const std::size_t n_bg = spec.background.resolve(b.pts.size());
  for (std::size_t i = 0; i < n_bg; ++i)
    b.add({uniform(rng, spec.extent.x0, spec.extent.x1), uniform(rng, spec.extent.y0, spec.extent.y1)},
          Partition::NOISE, 0, Partition::NOISE);

  std::optional<Partition> coarse;
  if (any_npc) coarse = Partition(std::move(b.coarse));
  return LabeledCloud(PointCloud(std::move(b.pts), spec.extent), Partition(std::move(b.fine)), std::move(b.klass),
                      std::move(coarse));
}

LabeledCloud apply_blinking(const LabeledCloud& cloud, const BlinkSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng(seed);
  std::vector<Localization> pts;
  std::vector<int> fine, klass, coarse;
  const auto& src = cloud.cloud().points();
  for (std::size_t i = 0; i < src.size(); ++i) {
    const bool is_bg = cloud.truth()[i] == Partition::NOISE;
    const int m = (is_bg && !spec.blink_background) ? 1 : shifted_geometric(rng, spec.mean_blinks);
    for (int k = 0; k < m; ++k) {
      Localization l = src[i];
      l.x += normal(rng, spec.localization_precision);
      l.y += normal(rng, spec.localization_precision);
      pts.push_back(l);
      fine.push_back(cloud.truth()[i]);
      if (cloud.shape_class()) klass.push_back((*cloud.shape_class())[i]);
      if (cloud.coarse_truth()) coarse.push_back((*cloud.coarse_truth())[i]);
    }
  }
  std::optional<std::vector<int>> k;
  if (cloud.shape_class()) k = std::move(klass);
  std::optional<Partition> c;
  if (cloud.coarse_truth()) c = Partition(std::move(coarse));
  return LabeledCloud(PointCloud(std::move(pts), cloud.cloud().extent()), Partition(std::move(fine)), std::move(k),
                      std::move(c));
}

LabeledCloud simulate(const Preset& p, std::uint64_t seed) {
  auto cloud = generate(p.scenario, derive_seed(seed, 1));
  if (p.blink) cloud = apply_blinking(cloud, *p.blink, derive_seed(seed, 2));
  return cloud;
}

namespace {

ScenarioSpec square(double side, std::vector<ClusterGroup> groups, double bg_fraction) {
  ScenarioSpec s;
  s.extent = {0.0, 0.0, side, side};
  s.groups = std::move(groups);
  s.background = Background{bg_fraction, std::nullopt};
  return s;
}

ClusterGroup spots(IntDist count, IntDist mol, double sigma, int class_id = 1) {
  return {count, mol, GaussianShape{sigma, sigma}, class_id};
}

const BlinkSpec kBlink{4.5, 10.0, true};

std::map<std::string, Preset> make_presets() {
  std::map<std::string, Preset> m;
  auto add = [&](const std::string& name, ScenarioSpec s, bool with_blinking_variant) {
    m[name] = Preset{name, s, std::nullopt};
    if (with_blinking_variant) m[name + "_blinking"] = Preset{name + "_blinking", s, kBlink};
  };
  add("scenario5", square(2000.0, {spots(IntDist::fixed(100), IntDist::fixed(15), 25.0)}, 0.5), true);
  add("scenario6",
      square(2000.0, {{IntDist::fixed(20), IntDist::fixed(50), EllipseShape{60.0, 3.0}, 1}}, 0.5), true);
  add("scenario8",
      square(2000.0, {spots(IntDist::fixed(10), IntDist::fixed(5), 25.0),
                      spots(IntDist::fixed(10), IntDist::fixed(15), 25.0)}, 0.5),
      true);
  add("scenario9",
      square(2000.0, {spots(IntDist::fixed(10), IntDist::fixed(15), 25.0),
                      spots(IntDist::fixed(10), IntDist::fixed(135), 75.0)}, 0.5),
      true);
  add("c_shape",
      square(6400.0, {{IntDist::uniform(30, 60), IntDist::uniform(30, 60), ArcShape{250.0, 50.0, kPi}, 1}}, 0.06),
      false);
  add("ring",
      square(6400.0, {{IntDist::uniform(60, 70), IntDist::uniform(60, 80), ArcShape{250.0, 50.0, 2 * kPi}, 1}}, 0.07),
      false);
  {
    auto s = square(1250.0, {{IntDist::uniform(5, 9), IntDist::uniform(0, 80), NpcShape{}, 1}}, 0.03);
    s.min_cluster_separation = 250.0;
    add("npc", s, false);
  }
  {
    ClusterGroup g{IntDist::fixed(200), IntDist::geometric(25.0), GaussianShape{25.0, 40.0}, 1};
    add("nanocluster", square(10000.0, {g}, 0.04), false);
  }
  add("mix_spots_ellipses",
      square(2000.0, {spots(IntDist::fixed(10), IntDist::fixed(50), 25.0, 1),
                      {IntDist::fixed(10), IntDist::fixed(50), EllipseShape{60.0, 3.0}, 2}}, 0.3),
      false);
  add("mix_spots_rings",
      square(4000.0, {spots(IntDist::fixed(15), IntDist::fixed(50), 25.0, 1),
                      {IntDist::fixed(15), IntDist::uniform(60, 80), ArcShape{250.0, 50.0, 2 * kPi}, 2}}, 0.07),
      false);
  add("mix_c_rings",
      square(6400.0, {{IntDist::fixed(20), IntDist::uniform(30, 60), ArcShape{250.0, 50.0, kPi}, 1},
                      {IntDist::fixed(20), IntDist::uniform(60, 80), ArcShape{250.0, 50.0, 2 * kPi}, 2}}, 0.07),
      false);
  return m;
}

const std::map<std::string, Preset>& presets() {
  static const auto m = make_presets();
  return m;
}

}  // namespace

std::vector<std::string> preset_names() {
  std::vector<std::string> names;
  for (const auto& [k, v] : presets()) names.push_back(k);
  return names;
}

Preset preset(const std::string& name) {
  auto it = presets().find(name);
  if (it == presets().end()) {
    std::string msg = "unknown preset '" + name + "'; available:";
    for (const auto& n : preset_names()) msg += " " + n;
    throw Error(msg);
  }
  return it->second;
}

LabeledCloud gen_pair_test(const PairTestSpec& spec, std::uint64_t seed) {
  if (!(spec.sigma > 0.0)) throw Error("pair test sigma must be > 0");
  if (!(spec.separation >= 0.0)) throw Error("pair test separation must be >= 0");
  if (!(spec.mean_count >= 1.0)) throw Error("pair test mean count must be >= 1");
  Rng rng(seed);
  const double axis = uniform(rng, 0.0, kPi);
  const Vec2 mid{0.5 * spec.field, 0.5 * spec.field};
  const Vec2 half = (0.5 * spec.separation) * Vec2{std::cos(axis), std::sin(axis)};
  const Vec2 centers[2] = {mid - half, mid + half};
  Builder b;
  for (int c = 0; c < 2; ++c) {
    const int n = shifted_geometric(rng, spec.mean_count);
    for (int m = 0; m < n; ++m)
      b.add({centers[c].x + normal(rng, spec.sigma), centers[c].y + normal(rng, spec.sigma)}, c, 1, c);
  }
  return LabeledCloud(PointCloud(std::move(b.pts), Rect{0.0, 0.0, spec.field, spec.field}),
                      Partition(std::move(b.fine)), std::move(b.klass));
}

void AugmentSpec::validate() const {
  if (dropout_prob < 0.0 || dropout_prob >= 1.0) throw Error("dropout_prob must be in [0, 1)");
  if (addition_prob < 0.0 || addition_prob >= 1.0) throw Error("addition_prob must be in [0, 1)");
  if (jitter_sigma < 0.0) throw Error("jitter_sigma must be >= 0");
  if (placements_lo < 0 || placements_hi < placements_lo) throw Error("invalid placements range");
  background.validate();
  if (background_mode == BackgroundMode::resampled && background_source.empty())
    throw Error("resampled background needs source points");
}

std::vector<LabeledCloud> augment_dataset(const std::vector<SeedCluster>& seeds, const AugmentSpec& spec,
                                          std::size_t n_clouds, const Rect& extent, std::uint64_t seed) {
  if (seeds.empty()) throw Error("augmentation needs at least one seed cluster");
  spec.validate();
  bool hierarchical = false;
  std::vector<Vec2> seed_centers;
  for (const auto& s : seeds) {
    if (s.points.empty()) throw Error("seed cluster has no points");
    if (s.sublabels) {
      hierarchical = true;
      if (s.sublabels->size() != s.points.size()) throw Error("seed sublabels length mismatch");
    }
    seed_centers.push_back(centroid(s.points));
  }
  Vec2 bg_center{};
  if (!spec.background_source.empty()) bg_center = centroid(spec.background_source);

  std::vector<LabeledCloud> out(n_clouds);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t c = 0; c < static_cast<std::ptrdiff_t>(n_clouds); ++c) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(c)));
    Builder b;
    const int placements = uniform_int(rng, spec.placements_lo, spec.placements_hi);
    int next_fine = 0, next_coarse = 0;
    for (int p = 0; p < placements; ++p) {
      const std::size_t si = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(seeds.size()) - 1));
      const auto& s = seeds[si];
      const double angle = spec.rotations ? uniform(rng, 0.0, 2.0 * kPi) : 0.0;
      const bool reflect = spec.reflections && bernoulli(rng, 0.5);
      const Vec2 at{uniform(rng, extent.x0, extent.x1), uniform(rng, extent.y0, extent.y1)};
      std::map<int, int> sub_ids;
      const std::size_t before = b.pts.size();
      auto emit = [&](Vec2 local, std::size_t k) {
        Vec2 q = local;
        if (reflect) q.y = -q.y;
        q = rotate(q, angle);
        q = q + Vec2{normal(rng, spec.jitter_sigma), normal(rng, spec.jitter_sigma)};
        int fine = next_fine;
        if (hierarchical) {
          const int sl = s.sublabels ? (*s.sublabels)[k] : 0;
          if (sl < 0) {
            fine = Partition::NOISE;
          } else {
            auto [it, ins] = sub_ids.try_emplace(sl, next_fine + static_cast<int>(sub_ids.size()));
            fine = it->second;
          }
        }
        b.add(at + q, fine, fine == Partition::NOISE ? 0 : s.class_id, next_coarse);
      };
      for (std::size_t k = 0; k < s.points.size(); ++k) {
        if (bernoulli(rng, spec.dropout_prob)) continue;
        const Vec2 local = s.points[k] - seed_centers[si];
        emit(local, k);
        if (bernoulli(rng, spec.addition_prob)) emit(local, k);
      }
      if (b.pts.size() == before) continue;
      next_fine += hierarchical ? static_cast<int>(sub_ids.size()) : 1;
      ++next_coarse;
    }
    if (hierarchical)
      for (std::size_t i = 0; i < b.fine.size(); ++i)
        if (b.fine[i] == Partition::NOISE) b.klass[i] = 0;

    const std::size_t n_bg = spec.background.resolve(b.pts.size());
    if (spec.background_mode == AugmentSpec::BackgroundMode::uniform) {
      for (std::size_t i = 0; i < n_bg; ++i)
        b.add({uniform(rng, extent.x0, extent.x1), uniform(rng, extent.y0, extent.y1)}, Partition::NOISE, 0,
              Partition::NOISE);
    } else {
      const double angle = spec.rotations ? uniform(rng, 0.0, 2.0 * kPi) : 0.0;
      const bool reflect = spec.reflections && bernoulli(rng, 0.5);
      const Vec2 mid{0.5 * (extent.x0 + extent.x1), 0.5 * (extent.y0 + extent.y1)};
      const int last = static_cast<int>(spec.background_source.size()) - 1;
      for (std::size_t i = 0; i < n_bg; ++i) {
        Vec2 q = spec.background_source[static_cast<std::size_t>(uniform_int(rng, 0, last))] - bg_center;
        if (reflect) q.y = -q.y;
        q = rotate(q, angle) + mid + Vec2{normal(rng, spec.jitter_sigma), normal(rng, spec.jitter_sigma)};
        // wrap into the field
        q.x = extent.x0 + std::fmod(std::fmod(q.x - extent.x0, extent.width()) + extent.width(), extent.width());
        q.y = extent.y0 + std::fmod(std::fmod(q.y - extent.y0, extent.height()) + extent.height(), extent.height());
        b.add(q, Partition::NOISE, 0, Partition::NOISE);
      }
    }
    std::optional<Partition> coarse;
    if (hierarchical) coarse = Partition(std::move(b.coarse));
    out[static_cast<std::size_t>(c)] = LabeledCloud(PointCloud(std::move(b.pts), extent), Partition(std::move(b.fine)),
                                                    std::move(b.klass), std::move(coarse));
  }
  return out;
}

std::vector<SeedCluster> seeds_from(const LabeledCloud& cloud) {
  const auto pos = cloud.cloud().positions();
  std::vector<SeedCluster> seeds;
  const bool hier = cloud.coarse_truth().has_value();
  const Partition& outer = hier ? *cloud.coarse_truth() : cloud.truth();
  for (const auto& members : outer.members()) {
    SeedCluster s;
    s.points = gather(pos, members);
    s.class_id = cloud.shape_class() ? (*cloud.shape_class())[members.front()] : 1;
    if (hier) {
      std::vector<int> sub;
      for (auto i : members) sub.push_back(cloud.truth()[i]);
      s.sublabels = std::move(sub);
    }
    seeds.push_back(std::move(s));
  }
  return seeds;
}

}  // namespace miro::sim
