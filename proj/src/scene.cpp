#include "hoi/scene.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <random>

#include "hoi/errors.hpp"
#include "hoi/rng.hpp"

namespace hoi {

namespace {

constexpr int kPlacementBudget = 200;
constexpr double kSiblingMinIou = 0.3;
constexpr double kStrangerMaxIou = 0.05;
constexpr std::uint64_t kWorldSeed = 0x5eed;

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

Box clamp_box(double cx, double cy, double w, double h) {
  cx = std::clamp(cx, w / 2, 1 - w / 2);
  cy = std::clamp(cy, h / 2, 1 - h / 2);
  return {cx, cy, w, h};
}

Box random_human(std::mt19937_64& rng, double cx, double cy, double spread) {
  const double w = uniform(rng, 0.15, 0.3), h = uniform(rng, 0.25, 0.45);
  return clamp_box(cx + uniform(rng, -spread, spread), cy + uniform(rng, -spread, spread), w, h);
}

Box object_near(std::mt19937_64& rng, const Box& human) {
  const double w = uniform(rng, 0.15, 0.35), h = uniform(rng, 0.15, 0.35);
  return clamp_box(human.cx + uniform(rng, -0.2, 0.2), human.cy + uniform(rng, -0.2, 0.2), w, h);
}

std::optional<std::size_t> pick_weighted(std::mt19937_64& rng, const std::vector<std::size_t>& items,
                                         const std::vector<double>& weight_of) {
  if (items.empty()) return std::nullopt;
  std::vector<double> w;
  w.reserve(items.size());
  for (auto c : items) w.push_back(weight_of[c]);
  std::discrete_distribution<std::size_t> d(w.begin(), w.end());
  return items[d(rng)];
}

double coverage(const Box& b, double x0, double y0, double x1, double y1) {
  if (b.degenerate()) return 0.0;
  const double iw = std::min(b.x1(), x1) - std::max(b.x0(), x0);
  const double ih = std::min(b.y1(), y1) - std::max(b.y0(), y0);
  if (iw <= 0 || ih <= 0) return 0.0;
  return iw * ih / ((x1 - x0) * (y1 - y0));
}

}  // namespace

Box union_box(const HoiTriplet& t) {
  if (t.object.degenerate()) return t.human;
  return enclosing_box(t.human, t.object);
}

std::vector<double> zipf_weights(std::size_t n, double exponent) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) w[i] = 1.0 / std::pow(static_cast<double>(i + 1), exponent);
  return w;
}

std::vector<std::pair<std::size_t, std::size_t>> find_input_siblings(const std::vector<HoiTriplet>& ts) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t i = 0; i < ts.size(); ++i)
    for (std::size_t j = i + 1; j < ts.size(); ++j) {
      const bool same_o = ts[i].object_class == ts[j].object_class;
      const bool same_v = ts[i].verb_class == ts[j].verb_class;
      if (same_o != same_v) out.emplace_back(i, j);
    }
  return out;
}

SceneGenerator::SceneGenerator(const Taxonomy& tax, std::size_t dim)
    : tax_(&tax),
      world_(EmbeddingTable::pseudo(tax, {.dim = dim, .seed = kWorldSeed})),
      person_(hash_embedding("A photo of a person.", dim, kWorldSeed)) {}

SceneAnnotation SceneGenerator::generate(const SceneConfig& cfg) const {
  if (cfg.n_triplets == 0) throw ConfigError("n_triplets must be at least 1");
  if (!(cfg.sibling_rate >= 0 && cfg.sibling_rate <= 1)) throw ConfigError("sibling_rate must lie in [0, 1]");
  if (cfg.grid.dim != world_.dim()) throw ConfigError("grid dim does not match the generator");
  const Taxonomy& tax = *tax_;
  auto rng = substream(cfg.seed, "scene", cfg.scene_id);
  const auto weights = zipf_weights(tax.num_categories(), cfg.zipf_exponent);

  SceneAnnotation scene;
  scene.scene_id = cfg.scene_id;
  auto& ts = scene.triplets;
  std::vector<std::size_t> all(tax.num_categories());
  std::iota(all.begin(), all.end(), 0);

  auto make = [&](std::size_t c, Box human, Box object) {
    const auto& p = tax.pair(c);
    if (tax.verb(p.verb).objectless) object = kEmptyBox;
    return HoiTriplet{human, object, p.object, p.verb};
  };

  auto place_stranger = [&](std::size_t c) {
    HoiTriplet best{};
    double best_overlap = 2.0;
    for (int a = 0; a < kPlacementBudget; ++a) {
      const Box h = random_human(rng, 0.5, 0.5, 0.5);
      const HoiTriplet t = make(c, h, object_near(rng, h));
      double overlap = 0.0;
      for (const auto& e : ts) overlap = std::max(overlap, iou(union_box(t), union_box(e)));
      if (overlap < best_overlap) {
        best = t;
        best_overlap = overlap;
      }
      if (overlap < kStrangerMaxIou) return t;
    }
    ++scene.meta.placement_shortfall;
    return best;
  };

  auto place_sibling = [&](std::size_t c, const HoiTriplet& partner) -> std::optional<HoiTriplet> {
    const auto& p = tax.pair(c);
    const bool shares_object = p.object == partner.object_class && !partner.object.degenerate();
    const Box pu = union_box(partner);
    for (int a = 0; a < kPlacementBudget; ++a) {
      HoiTriplet t;
      if (shares_object && uniform(rng, 0, 1) < 0.5) {
        t = make(c, random_human(rng, partner.object.cx, partner.object.cy, 0.2), partner.object);
      } else {
        const Box h = random_human(rng, pu.cx, pu.cy, 0.15);
        t = make(c, h, object_near(rng, h));
      }
      if (iou(union_box(t), pu) >= kSiblingMinIou) return t;
    }
    return std::nullopt;
  };

  // Categories sharing neither verb nor object with anything placed so far.
  auto strangers = [&] {
    std::vector<std::size_t> out;
    for (auto c : all) {
      const auto& p = tax.pair(c);
      bool clash = false;
      for (const auto& e : ts) clash |= p.verb == e.verb_class || p.object == e.object_class;
      if (!clash) out.push_back(c);
    }
    return out;
  };

  ts.push_back(place_stranger(*pick_weighted(rng, all, weights)));
  std::bernoulli_distribution want_sibling(cfg.sibling_rate);
  for (std::size_t k = 1; k < cfg.n_triplets; ++k) {
    std::optional<HoiTriplet> placed;
    if (want_sibling(rng)) {
      ++scene.meta.sibling_requests;
      std::vector<std::size_t> order(ts.size());
      std::iota(order.begin(), order.end(), 0);
      std::shuffle(order.begin(), order.end(), rng);
      for (auto e : order) {
        std::vector<std::size_t> cands;
        for (auto c : all) {
          const auto& p = tax.pair(c);
          if ((p.verb == ts[e].verb_class) != (p.object == ts[e].object_class)) cands.push_back(c);
        }
        if (auto c = pick_weighted(rng, cands, weights)) {
          placed = place_sibling(*c, ts[e]);
          if (placed) break;
        }
      }
      if (!placed) ++scene.meta.sibling_shortfall;
    }
    if (!placed) {
      auto cands = strangers();
      // Taxonomy exhausted: repeat an existing category, which is a positive,
      // never a sibling.
      if (cands.empty()) {
        ++scene.meta.sibling_shortfall;
        for (const auto& e : ts) cands.push_back(*tax.category(e.verb_class, e.object_class));
      }
      placed = place_stranger(*pick_weighted(rng, cands, weights));
    }
    ts.push_back(*placed);
  }
  scene.feature_grid = render(ts, cfg.grid, cfg.seed, cfg.scene_id);
  return scene;
}

Tensor SceneGenerator::render(const std::vector<HoiTriplet>& ts, const GridConfig& g, std::uint64_t seed,
                              std::uint64_t scene_id) const {
  const std::size_t H = g.height, W = g.width, D = g.dim;
  if (H == 0 || W == 0 || D != world_.dim()) throw ConfigError("invalid grid configuration");
  std::vector<double> grid(H * W * D, 0.0);
  const auto& hoi = world_.hoi_features();
  const auto& obj = world_.object_features();
  for (std::size_t r = 0; r < H; ++r)
    for (std::size_t c = 0; c < W; ++c) {
      const double x0 = double(c) / W, x1 = double(c + 1) / W;
      const double y0 = double(r) / H, y1 = double(r + 1) / H;
      double* cell = grid.data() + (r * W + c) * D;
      double norm = 0.0;
      for (const auto& t : ts) {
        const double u = coverage(union_box(t), x0, y0, x1, y1);
        const double h = coverage(t.human, x0, y0, x1, y1);
        const double o = coverage(t.object, x0, y0, x1, y1);
        norm += u;
        const std::size_t cat = *tax_->category(t.verb_class, t.object_class);
        for (std::size_t d = 0; d < D; ++d)
          cell[d] += u * hoi[cat * D + d] + h * person_[d] + o * obj[t.object_class * D + d];
      }
      norm = std::max(1.0, norm);
      for (std::size_t d = 0; d < D; ++d) cell[d] /= norm;
    }
  auto rng = substream(seed, "grid-noise", scene_id);
  std::normal_distribution<double> noise(0.0, g.noise_sigma);
  if (g.noise_sigma > 0)
    for (auto& v : grid) v += noise(rng);
  return Tensor({H, W, D}, std::move(grid));
}

SceneAnnotation generate_scene(const Taxonomy& tax, const SceneConfig& cfg) {
  return SceneGenerator(tax, cfg.grid.dim).generate(cfg);
}

Dataset generate_dataset(const Taxonomy& tax, const DatasetConfig& cfg) {
  if (cfg.min_triplets == 0 || cfg.min_triplets > cfg.max_triplets)
    throw ConfigError("triplet count range must satisfy 1 <= min <= max");
  SceneGenerator gen(tax, cfg.grid.dim);
  Dataset ds;
  ds.config = cfg;
  for (std::size_t i = 0; i < cfg.n_train + cfg.n_test; ++i) {
    auto size_rng = substream(cfg.seed, "scene-size", i);
    std::uniform_int_distribution<std::size_t> n(cfg.min_triplets, cfg.max_triplets);
    SceneConfig sc{n(size_rng), cfg.sibling_rate, cfg.seed, i, cfg.zipf_exponent, cfg.grid};
    (i < cfg.n_train ? ds.train : ds.test).push_back(gen.generate(sc));
  }
  return ds;
}

std::vector<std::size_t> category_counts(const Taxonomy& tax, const std::vector<SceneAnnotation>& scenes) {
  std::vector<std::size_t> counts(tax.num_categories(), 0);
  for (const auto& s : scenes)
    for (const auto& t : s.triplets) ++counts.at(*tax.category(t.verb_class, t.object_class));
  return counts;
}

}  // namespace hoi
