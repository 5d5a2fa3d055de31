#include "hoi/dataset_io.hpp"

#include <fstream>

#include "hoi/errors.hpp"

namespace hoi {

using nlohmann::json;

namespace {

json box_json(const Box& b) { return json::array({b.cx, b.cy, b.w, b.h}); }

Box box_from(const json& j) {
  if (!j.is_array() || j.size() != 4) throw DataError("box must be an array of 4 numbers");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}

json scenes_json(const std::vector<SceneAnnotation>& scenes) {
  json out = json::array();
  for (const auto& s : scenes) {
    json ts = json::array();
    for (const auto& t : s.triplets)
      ts.push_back({{"hbox", box_json(t.human)}, {"obox", box_json(t.object)},
                    {"object", t.object_class}, {"verb", t.verb_class}});
    out.push_back({{"scene_id", s.scene_id}, {"triplets", std::move(ts)}});
  }
  return out;
}

std::vector<SceneAnnotation> scenes_from(const json& j, const Taxonomy& tax, const SceneGenerator& gen,
                                         const DatasetConfig& cfg) {
  std::vector<SceneAnnotation> out;
  for (const auto& rec : j) {
    SceneAnnotation s;
    s.scene_id = rec.at("scene_id").get<std::uint64_t>();
    for (const auto& t : rec.at("triplets")) {
      HoiTriplet ht{box_from(t.at("hbox")), box_from(t.at("obox")), t.at("object").get<std::size_t>(),
                    t.at("verb").get<std::size_t>()};
      if (!valid_triplet(tax, ht))
        throw DataError("scene " + std::to_string(s.scene_id) + " holds an invalid triplet");
      s.triplets.push_back(ht);
    }
    s.feature_grid = gen.render(s.triplets, cfg.grid, cfg.seed, s.scene_id);
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace

json taxonomy_to_json(const Taxonomy& tax) {
  json verbs = json::array(), pairs = json::array();
  for (const auto& v : tax.verbs()) verbs.push_back({{"name", v.name}, {"ing", v.ing}, {"objectless", v.objectless}});
  for (const auto& p : tax.pairs()) pairs.push_back({p.verb, p.object});
  return {{"objects", tax.objects()}, {"verbs", std::move(verbs)}, {"pairs", std::move(pairs)}};
}

Taxonomy taxonomy_from_json(const json& j) {
  std::vector<Verb> verbs;
  for (const auto& v : j.at("verbs"))
    verbs.push_back({v.at("name").get<std::string>(), v.at("ing").get<std::string>(), v.value("objectless", false)});
  std::vector<HoiPair> pairs;
  for (const auto& p : j.at("pairs")) pairs.push_back({p.at(0).get<std::size_t>(), p.at(1).get<std::size_t>()});
  return Taxonomy(j.at("objects").get<std::vector<std::string>>(), std::move(verbs), std::move(pairs));
}

void save_dataset(const std::filesystem::path& path, const Taxonomy& tax, const Dataset& ds) {
  const auto& c = ds.config;
  json doc{{"format", "hoi-scenes/1"},
           {"taxonomy", taxonomy_to_json(tax)},
           {"generator",
            {{"seed", c.seed},
             {"n_train", c.n_train},
             {"n_test", c.n_test},
             {"min_triplets", c.min_triplets},
             {"max_triplets", c.max_triplets},
             {"sibling_rate", c.sibling_rate},
             {"zipf_exponent", c.zipf_exponent},
             {"grid_height", c.grid.height},
             {"grid_width", c.grid.width},
             {"feature_dim", c.grid.dim},
             {"noise_sigma", c.grid.noise_sigma}}},
           {"train", scenes_json(ds.train)},
           {"test", scenes_json(ds.test)}};
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << doc.dump(1) << '\n';
}

LoadedDataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  if (doc.value("format", "") != "hoi-scenes/1") throw DataError(path.string() + " is not a scene dataset");
  LoadedDataset out;
  try {
    out.taxonomy = std::make_unique<Taxonomy>(taxonomy_from_json(doc.at("taxonomy")));
    const auto& g = doc.at("generator");
    auto& c = out.dataset.config;
    c.seed = g.at("seed").get<std::uint64_t>();
    c.n_train = g.at("n_train").get<std::size_t>();
    c.n_test = g.at("n_test").get<std::size_t>();
    c.min_triplets = g.at("min_triplets").get<std::size_t>();
    c.max_triplets = g.at("max_triplets").get<std::size_t>();
    c.sibling_rate = g.at("sibling_rate").get<double>();
    c.zipf_exponent = g.at("zipf_exponent").get<double>();
    c.grid.height = g.at("grid_height").get<std::size_t>();
    c.grid.width = g.at("grid_width").get<std::size_t>();
    c.grid.dim = g.at("feature_dim").get<std::size_t>();
    c.grid.noise_sigma = g.at("noise_sigma").get<double>();
    SceneGenerator gen(*out.taxonomy, c.grid.dim);
    out.dataset.train = scenes_from(doc.at("train"), *out.taxonomy, gen, c);
    out.dataset.test = scenes_from(doc.at("test"), *out.taxonomy, gen, c);
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  return out;
}

}  // namespace hoi
