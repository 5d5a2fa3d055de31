#include "hoi/taxonomy.hpp"

#include <algorithm>
#include <random>

#include "hoi/errors.hpp"

namespace hoi {

Taxonomy::Taxonomy(std::vector<std::string> objects, std::vector<Verb> verbs,
                   std::vector<HoiPair> pairs)
    : objects_(std::move(objects)), verbs_(std::move(verbs)), pairs_(std::move(pairs)) {
  if (objects_.empty() || verbs_.empty() || pairs_.empty())
    throw DataError("taxonomy needs objects, verbs and categories");
  lookup_.assign(objects_.size() * verbs_.size(), std::nullopt);
  for (std::size_t c = 0; c < pairs_.size(); ++c) {
    const auto& p = pairs_[c];
    if (p.verb >= verbs_.size() || p.object >= objects_.size())
      throw DataError("category " + std::to_string(c) + " references an unknown verb or object");
    auto& slot = lookup_[p.verb * objects_.size() + p.object];
    if (slot) throw DataError("duplicate category (" + verbs_[p.verb].name + ", " + objects_[p.object] + ")");
    slot = c;
  }
}

std::optional<std::size_t> Taxonomy::category(std::size_t verb, std::size_t object) const {
  if (verb >= verbs_.size() || object >= objects_.size()) return std::nullopt;
  return lookup_[verb * objects_.size() + object];
}

std::optional<std::size_t> Taxonomy::object_index(const std::string& name) const {
  auto it = std::find(objects_.begin(), objects_.end(), name);
  if (it == objects_.end()) return std::nullopt;
  return static_cast<std::size_t>(it - objects_.begin());
}

std::optional<std::size_t> Taxonomy::verb_index(const std::string& name) const {
  for (std::size_t i = 0; i < verbs_.size(); ++i)
    if (verbs_[i].name == name) return i;
  return std::nullopt;
}

std::optional<std::size_t> Taxonomy::verb_index_ing(const std::string& ing) const {
  for (std::size_t i = 0; i < verbs_.size(); ++i)
    if (verbs_[i].ing == ing) return i;
  return std::nullopt;
}

Taxonomy Taxonomy::default_taxonomy() {
  std::vector<std::string> objects{"bench", "bicycle", "bird",       "book",        "cup",   "horse",
                                   "kite",  "laptop",  "skateboard", "sports ball", "train", "umbrella"};
  std::vector<Verb> verbs{
      {"sit on", "sitting on"}, {"stand on", "standing on"}, {"ride", "riding"},
      {"hold", "holding"},      {"carry", "carrying"},       {"watch", "watching"},
      {"feed", "feeding"},      {"fly", "flying"},           {"read", "reading"},
      {"drink with", "drinking with"}, {"type on", "typing on"}, {"kick", "kicking"},
      {"throw", "throwing"},    {"repair", "repairing"},     {"board", "boarding"},
  };
  const std::vector<std::pair<const char*, std::vector<const char*>>> table{
      {"sit on", {"bench", "bicycle", "horse", "skateboard", "train"}},
      {"stand on", {"bench", "skateboard", "train", "horse", "bicycle"}},
      {"ride", {"bicycle", "horse", "skateboard", "train"}},
      {"hold", {"bird", "book", "cup", "kite", "laptop", "sports ball", "umbrella", "bicycle", "horse"}},
      {"carry", {"bench", "bicycle", "book", "cup", "kite", "laptop", "skateboard", "umbrella", "sports ball"}},
      {"watch", {"bird", "horse", "kite", "train", "sports ball", "skateboard", "bicycle"}},
      {"feed", {"bird", "horse"}},
      {"fly", {"kite", "bird"}},
      {"read", {"book", "laptop"}},
      {"drink with", {"cup"}},
      {"type on", {"laptop"}},
      {"kick", {"sports ball", "bench"}},
      {"throw", {"sports ball", "book", "cup", "kite"}},
      {"repair", {"bicycle", "bench", "laptop", "umbrella", "train", "skateboard"}},
      {"board", {"train"}},
  };
  std::vector<HoiPair> pairs;
  for (std::size_t v = 0; v < table.size(); ++v)
    for (const char* o : table[v].second) {
      const auto oi = std::find(objects.begin(), objects.end(), o) - objects.begin();
      pairs.push_back({v, static_cast<std::size_t>(oi)});
    }
  // Fixed shuffle so frequency rank is unrelated to verb/object structure.
  std::mt19937_64 rng(20240611);
  std::shuffle(pairs.begin(), pairs.end(), rng);
  return Taxonomy(std::move(objects), std::move(verbs), std::move(pairs));
}

bool valid_triplet(const Taxonomy& tax, const HoiTriplet& t) {
  if (!tax.category(t.verb_class, t.object_class)) return false;
  if (!inside_unit_square(t.human)) return false;
  if (tax.verb(t.verb_class).objectless && t.object == kEmptyBox) return true;
  return inside_unit_square(t.object);
}

}  // namespace hoi
