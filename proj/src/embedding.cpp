#include "hoi/embedding.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

#include "hoi/errors.hpp"
#include "hoi/rng.hpp"

namespace hoi {

namespace {

constexpr char kMagic[8] = {'H', 'O', 'I', 'E', 'M', 'B', '0', '1'};

void normalize(std::span<double> v) {
  double ss = 0.0;
  for (double x : v) ss += x * x;
  const double n = std::sqrt(ss);
  if (!(n > 0)) throw DataError("cannot normalise a zero embedding row");
  for (double& x : v) x /= n;
}

Tensor row_of(const Tensor& m, std::size_t i) {
  const std::size_t d = m.dim(1);
  if (i >= m.dim(0)) throw DataError("embedding row " + std::to_string(i) + " out of range");
  return Tensor({d}, {m.data().begin() + static_cast<std::ptrdiff_t>(i * d),
                      m.data().begin() + static_cast<std::ptrdiff_t>((i + 1) * d)});
}

}  // namespace

std::string build_prompt(PromptKind kind, const std::vector<std::string>& labels) {
  switch (kind) {
    case PromptKind::Object:
      if (labels.size() != 1) throw DataError("object prompt takes one label");
      return "A photo of a/an " + labels[0] + ".";
    case PromptKind::Verb:
      if (labels.size() != 1) throw DataError("verb prompt takes one label");
      return "A photo of a person " + labels[0] + " something.";
    case PromptKind::Hoi:
      if (labels.size() != 2) throw DataError("hoi prompt takes a verb (-ing form) and an object");
      return "A photo of a person " + labels[0] + " a/an " + labels[1] + ".";
  }
  throw DataError("unknown prompt kind");
}

std::string build_prompt(const Taxonomy& tax, PromptKind kind, const std::vector<std::string>& labels) {
  auto need = [](bool ok, const std::string& what) {
    if (!ok) throw DataError("unknown label '" + what + "'");
  };
  switch (kind) {
    case PromptKind::Object:
      need(!labels.empty() && tax.object_index(labels[0]).has_value(), labels.empty() ? "" : labels[0]);
      break;
    case PromptKind::Verb:
      need(!labels.empty() && tax.verb_index(labels[0]).has_value(), labels.empty() ? "" : labels[0]);
      break;
    case PromptKind::Hoi: {
      if (labels.size() != 2) throw DataError("hoi prompt takes a verb (-ing form) and an object");
      const auto v = tax.verb_index_ing(labels[0]);
      const auto o = tax.object_index(labels[1]);
      need(v.has_value(), labels[0]);
      need(o.has_value(), labels[1]);
      need(tax.category(*v, *o).has_value(), labels[0] + " " + labels[1]);
      break;
    }
  }
  return build_prompt(kind, labels);
}

std::vector<double> hash_embedding(const std::string& prompt, std::size_t dim, std::uint64_t seed) {
  std::mt19937_64 rng(splitmix64(fnv1a(prompt) ^ splitmix64(seed)));
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> v(dim);
  for (auto& x : v) x = n(rng);
  normalize(v);
  return v;
}

EmbeddingTable::EmbeddingTable(const Taxonomy& tax, std::size_t dim, Source src, Tensor objects,
                               Tensor verbs, Tensor hoi)
    : tax_(&tax), dim_(dim), source_(src), objects_(std::move(objects)), verbs_(std::move(verbs)),
      hoi_(std::move(hoi)) {}

EmbeddingTable EmbeddingTable::pseudo(const Taxonomy& tax, const PseudoEmbeddingConfig& cfg) {
  if (cfg.dim == 0) throw ConfigError("embedding dim must be positive");
  const std::size_t d = cfg.dim;
  std::vector<double> obj, verb, hoi;
  for (const auto& o : tax.objects()) {
    auto v = hash_embedding(build_prompt(PromptKind::Object, {o}), d, cfg.seed);
    obj.insert(obj.end(), v.begin(), v.end());
  }
  for (const auto& vb : tax.verbs()) {
    auto v = hash_embedding(build_prompt(PromptKind::Verb, {vb.name}), d, cfg.seed);
    verb.insert(verb.end(), v.begin(), v.end());
  }
  for (const auto& p : tax.pairs()) {
    const auto own = hash_embedding(
        build_prompt(PromptKind::Hoi, {tax.verb(p.verb).ing, tax.object(p.object)}), d, cfg.seed);
    std::vector<double> row(d);
    for (std::size_t j = 0; j < d; ++j)
      row[j] = cfg.alpha * verb[p.verb * d + j] + cfg.beta * obj[p.object * d + j] + cfg.gamma * own[j];
    normalize(row);
    hoi.insert(hoi.end(), row.begin(), row.end());
  }
  return EmbeddingTable(tax, d, Source::Pseudo, Tensor({tax.num_objects(), d}, std::move(obj)),
                        Tensor({tax.num_verbs(), d}, std::move(verb)),
                        Tensor({tax.num_categories(), d}, std::move(hoi)));
}

void EmbeddingTable::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(kMagic, sizeof kMagic);
  const std::uint32_t header[4] = {static_cast<std::uint32_t>(dim_), static_cast<std::uint32_t>(objects_.dim(0)),
                                   static_cast<std::uint32_t>(verbs_.dim(0)), static_cast<std::uint32_t>(hoi_.dim(0))};
  out.write(reinterpret_cast<const char*>(header), sizeof header);
  for (const Tensor* t : {&objects_, &verbs_, &hoi_})
    out.write(reinterpret_cast<const char*>(t->data().data()),
              static_cast<std::streamsize>(t->numel() * sizeof(double)));
}

EmbeddingTable EmbeddingTable::load(const std::filesystem::path& path, const Taxonomy& tax) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open embedding file " + path.string());
  char magic[8];
  std::uint32_t header[4];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof magic) != 0)
    throw DataError(path.string() + " is not an embedding file");
  if (!in.read(reinterpret_cast<char*>(header), sizeof header)) throw DataError("truncated embedding header");
  const std::size_t d = header[0];
  const std::size_t counts[3] = {header[1], header[2], header[3]};
  const std::size_t wanted[3] = {tax.num_objects(), tax.num_verbs(), tax.num_categories()};
  const char* names[3] = {"object", "verb", "hoi"};
  if (d == 0) throw DataError("embedding file has zero dimension");
  std::vector<Tensor> blocks;
  for (int b = 0; b < 3; ++b) {
    if (counts[b] < wanted[b])
      throw DataError("embedding file has " + std::to_string(counts[b]) + " " + names[b] +
                      " rows, taxonomy needs " + std::to_string(wanted[b]));
    std::vector<double> rows(counts[b] * d);
    if (!in.read(reinterpret_cast<char*>(rows.data()), static_cast<std::streamsize>(rows.size() * sizeof(double))))
      throw DataError(std::string("missing ") + names[b] + " rows in " + path.string());
    rows.resize(wanted[b] * d);
    for (std::size_t r = 0; r < wanted[b]; ++r) normalize(std::span<double>(rows).subspan(r * d, d));
    blocks.emplace_back(Shape{wanted[b], d}, std::move(rows));
  }
  return EmbeddingTable(tax, d, Source::File, blocks[0], blocks[1], blocks[2]);
}

Tensor EmbeddingTable::object_row(std::size_t i) const { return row_of(objects_, i); }
Tensor EmbeddingTable::verb_row(std::size_t i) const { return row_of(verbs_, i); }
Tensor EmbeddingTable::hoi_row(std::size_t c) const { return row_of(hoi_, c); }

Tensor EmbeddingTable::embed(PromptKind kind, const std::vector<std::string>& labels) const {
  build_prompt(*tax_, kind, labels);  // validates labels
  switch (kind) {
    case PromptKind::Object:
      return object_row(*tax_->object_index(labels[0]));
    case PromptKind::Verb:
      return verb_row(*tax_->verb_index(labels[0]));
    case PromptKind::Hoi:
      return hoi_row(*tax_->category(*tax_->verb_index_ing(labels[0]), *tax_->object_index(labels[1])));
  }
  throw DataError("unknown prompt kind");
}

}  // namespace hoi
