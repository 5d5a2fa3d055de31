#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "hoi/boxes.hpp"

namespace hoi {

struct Verb {
  std::string name;  // base form, "sit on"
  std::string ing;   // progressive form, "sitting on"
  bool objectless = false;
};

struct HoiPair {
  std::size_t verb = 0;
  std::size_t object = 0;
  bool operator==(const HoiPair&) const = default;
};

/// Object and verb vocabularies plus the valid (verb, object) categories.
/// Category order doubles as the long-tail frequency rank: category 0 is the
/// most frequent when scenes are sampled.
class Taxonomy {
 public:
  Taxonomy(std::vector<std::string> objects, std::vector<Verb> verbs, std::vector<HoiPair> pairs);

  /// 12 objects, 15 verbs, 60 categories.
  static Taxonomy default_taxonomy();

  std::size_t num_objects() const { return objects_.size(); }
  std::size_t num_verbs() const { return verbs_.size(); }
  std::size_t num_categories() const { return pairs_.size(); }

  const std::string& object(std::size_t i) const { return objects_.at(i); }
  const Verb& verb(std::size_t i) const { return verbs_.at(i); }
  const HoiPair& pair(std::size_t c) const { return pairs_.at(c); }
  const std::vector<std::string>& objects() const { return objects_; }
  const std::vector<Verb>& verbs() const { return verbs_; }
  const std::vector<HoiPair>& pairs() const { return pairs_; }

  std::optional<std::size_t> category(std::size_t verb, std::size_t object) const;
  std::optional<std::size_t> object_index(const std::string& name) const;
  std::optional<std::size_t> verb_index(const std::string& name) const;
  /// Looks a verb up by its progressive form.
  std::optional<std::size_t> verb_index_ing(const std::string& ing) const;

 private:
  std::vector<std::string> objects_;
  std::vector<Verb> verbs_;
  std::vector<HoiPair> pairs_;
  std::vector<std::optional<std::size_t>> lookup_;  // verb * objects + object
};

struct HoiTriplet {
  Box human;
  Box object;
  std::size_t object_class = 0;
  std::size_t verb_class = 0;
  bool operator==(const HoiTriplet&) const = default;
};

/// Boxes inside the unit square with positive extent (objectless verbs carry
/// kEmptyBox) and a category the taxonomy knows.
bool valid_triplet(const Taxonomy& tax, const HoiTriplet& t);

}  // namespace hoi
