#pragma once

// Label-to-text-feature transformation. The "pseudo" backend turns each
// prompt into a deterministic unit vector; the "file" backend loads rows
// produced by a real text encoder.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "hoi/taxonomy.hpp"
#include "hoi/tensor.hpp"

namespace hoi {

enum class PromptKind { Object, Verb, Hoi };

/// Text prompt for a label. Object and verb take one label; Hoi takes the
/// progressive verb form followed by the object name.
std::string build_prompt(PromptKind kind, const std::vector<std::string>& labels);

/// Prompt validated against a taxonomy; unknown labels throw DataError.
std::string build_prompt(const Taxonomy& tax, PromptKind kind, const std::vector<std::string>& labels);

struct PseudoEmbeddingConfig {
  std::size_t dim = 64;
  double alpha = 1.0;  // verb weight in category rows
  double beta = 1.0;   // object weight in category rows
  double gamma = 0.5;  // weight of the category prompt's own hash vector
  std::uint64_t seed = 0;
};

/// Unit vector derived from a hash of the prompt text.
std::vector<double> hash_embedding(const std::string& prompt, std::size_t dim, std::uint64_t seed = 0);

class EmbeddingTable {
 public:
  enum class Source { Pseudo, File };

  static EmbeddingTable pseudo(const Taxonomy& tax, const PseudoEmbeddingConfig& cfg = {});
  /// Reads the binary format written by save(). Rows are L2-normalised on
  /// load; missing rows or a zero row throw DataError.
  static EmbeddingTable load(const std::filesystem::path& path, const Taxonomy& tax);
  void save(const std::filesystem::path& path) const;

  std::size_t dim() const { return dim_; }
  Source source() const { return source_; }

  const Tensor& object_features() const { return objects_; }  // N2 x dim
  const Tensor& verb_features() const { return verbs_; }      // N1 x dim
  const Tensor& hoi_features() const { return hoi_; }         // |C| x dim

  Tensor object_row(std::size_t i) const;
  Tensor verb_row(std::size_t i) const;
  Tensor hoi_row(std::size_t c) const;

  /// Lookup by label text, as in build_prompt.
  Tensor embed(PromptKind kind, const std::vector<std::string>& labels) const;

 private:
  EmbeddingTable(const Taxonomy& tax, std::size_t dim, Source src, Tensor objects, Tensor verbs, Tensor hoi);
  const Taxonomy* tax_ = nullptr;
  std::size_t dim_ = 0;
  Source source_ = Source::Pseudo;
  Tensor objects_, verbs_, hoi_;
};

}  // namespace hoi
