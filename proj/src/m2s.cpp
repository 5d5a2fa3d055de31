#include "hoi/m2s.hpp"

#include <algorithm>

#include "hoi/detector.hpp"
#include "hoi/errors.hpp"
#include "hoi/kmeans.hpp"
#include "hoi/ops.hpp"

namespace hoi {

SuperclassMap build_superclasses(const Taxonomy& tax, const EmbeddingTable& emb, std::size_t m1, std::size_t m2,
                                 std::uint64_t seed) {
  if (m1 == 0 || m1 > tax.num_verbs()) throw ConfigError("M1 must lie in [1, number of verbs]");
  if (m2 == 0 || m2 > tax.num_objects()) throw ConfigError("M2 must lie in [1, number of objects]");
  SuperclassMap s;
  s.m1 = m1;
  s.m2 = m2;
  const auto v = kmeans(emb.verb_features().to_vector(), tax.num_verbs(), emb.dim(), m1, seed ^ 0x7665);
  const auto o = kmeans(emb.object_features().to_vector(), tax.num_objects(), emb.dim(), m2, seed ^ 0x6f62);
  s.verb_cluster = v.assignment;
  s.object_cluster = o.assignment;
  s.verb_centroids = v.centroids;
  s.object_centroids = o.centroids;
  for (const auto& p : tax.pairs()) s.hoi_super.push_back(s.verb_cluster[p.verb] * m2 + s.object_cluster[p.object]);
  return s;
}

nlohmann::json superclasses_to_json(const Taxonomy& tax, const SuperclassMap& map) {
  nlohmann::json cats = nlohmann::json::array();
  for (std::size_t c = 0; c < tax.num_categories(); ++c) {
    const auto& p = tax.pair(c);
    cats.push_back({{"category", c},
                    {"verb", tax.verb(p.verb).name},
                    {"object", tax.object(p.object)},
                    {"superclass", map.hoi_super[c]}});
  }
  nlohmann::json verbs = nlohmann::json::object(), objects = nlohmann::json::object();
  for (std::size_t v = 0; v < tax.num_verbs(); ++v) verbs[tax.verb(v).name] = map.verb_cluster[v];
  for (std::size_t o = 0; o < tax.num_objects(); ++o) objects[tax.object(o)] = map.object_cluster[o];
  return {{"m1", map.m1}, {"m2", map.m2}, {"superclasses", map.size()},
          {"verb_clusters", verbs}, {"object_clusters", objects}, {"categories", cats}};
}

Tensor merge_loss(const Tensor& logits, const std::vector<std::size_t>& labels) {
  if (labels.empty()) return Tensor::scalar(0.0);
  if (logits.rank() != 2 || logits.dim(0) != labels.size()) throw DimensionError("one superclass label per row expected");
  for (auto l : labels)
    if (l >= logits.dim(1)) throw DimensionError("superclass label out of range");
  return ops::scale(ops::sum(ops::pick(ops::log_softmax(logits, 1), labels)), -1.0 / double(labels.size()));
}

SplitContext split_context(const std::vector<std::size_t>& selected, const Tensor& text,
                           const std::vector<std::size_t>& matched_categories) {
  SplitContext ctx;
  ctx.selected = selected;
  if (!selected.empty()) ctx.features = ops::gather_rows(text, selected);
  for (std::size_t i = 0; i < matched_categories.size(); ++i) {
    const auto it = std::find(selected.begin(), selected.end(), matched_categories[i]);
    if (it == selected.end()) continue;
    ctx.eligible.push_back(i);
    ctx.targets.push_back(static_cast<std::size_t>(it - selected.begin()));
  }
  return ctx;
}

SplitContext select_topk_categories(const Tensor& queries, const Tensor& text, std::size_t k1, std::size_t k2,
                                    const std::vector<std::size_t>& matched_categories) {
  const auto selected = most_frequent_categories(topk_similar(queries, text, k1), k2, text.dim(0));
  return split_context(selected, text, matched_categories);
}

Tensor split_loss(const Tensor& queries, const Tensor& context, const std::vector<std::size_t>& targets, double tau) {
  if (!(tau > 0)) throw ConfigError("temperature must be positive");
  if (targets.empty()) return Tensor::scalar(0.0);
  if (queries.rank() != 2 || queries.dim(0) != targets.size()) throw DimensionError("one split target per row expected");
  const Tensor s = ops::scale(ops::matmul(ops::l2_normalize(queries), ops::transpose(ops::l2_normalize(context))), 1.0 / tau);
  return ops::scale(ops::sum(ops::pick(ops::log_softmax(s, 1), targets)), -1.0 / double(targets.size()));
}

}  // namespace hoi
