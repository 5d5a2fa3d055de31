#pragma once

// Two-branch set-prediction detector over a feature grid.
//
// The instance decoder refines paired human/object queries and regresses
// their boxes; the interaction decoder starts from the pooled pair and
// classifies verbs and HOI categories with cosine classifiers whose rows start
// at the text embeddings. Optional inputs to the interaction decoder:
// per-query union-region masks, appended category tokens, and calibration
// queries that the original queries cannot see.

#include <cstdint>
#include <optional>
#include <vector>

#include "hoi/boxes.hpp"
#include "hoi/embedding.hpp"
#include "hoi/taxonomy.hpp"
#include "hoi/tensor.hpp"

namespace hoi {

struct DetectorConfig {
  std::size_t dim = 64;  // C; must equal the embedding width
  std::size_t layers = 2;
  std::size_t heads = 2;
  std::size_t ffn_dim = 128;
  std::size_t num_queries = 8;
  std::size_t spatial_dim = 16;  // per box
  std::size_t grid_h = 8;
  std::size_t grid_w = 8;
  std::size_t num_superclasses = 25;
  double logit_scale = 10.0;   // initial cosine-classifier scale
  double prior_prob = 0.01;    // initial sigmoid probability of the action heads
};

struct QueryBatch {
  Tensor human;                  // N x C
  Tensor object;                 // N x C
  Tensor interaction;            // N x C, filled by init_interaction_queries
  std::optional<Tensor> additional;  // Nadd x (C + 2 Ds)
};

struct InstanceOutput {
  Tensor human_boxes;    // N x 4, sigmoid (cx, cy, w, h)
  Tensor object_boxes;   // N x 4
  Tensor object_logits;  // N x (objects + 1), last column is background
  Tensor human_feats;    // updated human queries
  Tensor object_feats;   // updated object queries
};

struct InteractionInputs {
  Tensor queries;                       // N x C
  std::vector<double> masks;            // N x HW additive (0 or kMasked); empty = none
  std::optional<Tensor> category_feats; // k2 x C tokens appended to keys/values
  std::optional<Tensor> additional;     // Nadd x (C + 2 Ds)
  std::vector<double> additional_masks; // Nadd x HW; empty = none
};

struct InteractionOutput {
  Tensor verb_logits;        // N x verbs
  Tensor hoi_logits;         // N x categories
  Tensor superclass_logits;  // N x M
  Tensor feats;              // updated interaction queries, N x C
  Tensor semantic;           // HOI projection of feats, N x C
  std::optional<Tensor> corrected;  // Nadd x (C + 2 Ds)
};

struct DetectorOutput {
  Tensor memory;  // projected grid, HW x C
  InstanceOutput instance;
  Tensor initial_queries;  // pooled pre-decoder interaction queries
  InteractionOutput interaction;
  std::vector<double> masks;                 // HOR masks used, empty when off
  std::vector<std::size_t> category_tokens;  // appended categories, empty when off
};

struct ForwardOptions {
  bool hor_mask = false;
  bool category_tokens = false;
  std::size_t k1 = 2;
  std::size_t k2 = 10;
  /// Overrides for the data-dependent discrete choices; used to hold them
  /// fixed while probing gradients.
  std::optional<std::vector<double>> fixed_masks;
  std::optional<std::vector<std::size_t>> fixed_categories;
};

/// Additive mask over an H x W grid: 0 where the cell centre lies inside the
/// union box of the pair, kMasked elsewhere. If no centre is covered, the
/// single cell nearest the union centre is opened.
std::vector<double> hor_mask(const Box& human, const Box& object, std::size_t h, std::size_t w);

/// q_a = (q_h + q_o) / 2 row by row.
Tensor init_interaction_queries(const Tensor& human, const Tensor& object);

/// Per query, the k1 categories whose text rows are most similar to the
/// query; ties go to the lower category index.
std::vector<std::vector<std::size_t>> topk_similar(const Tensor& queries, const Tensor& text, std::size_t k1);

/// The k2 categories occurring most often across top-k lists (ties to the
/// lower index). Fewer are returned when fewer distinct categories occur.
std::vector<std::size_t> most_frequent_categories(const std::vector<std::vector<std::size_t>>& topk, std::size_t k2,
                                                  std::size_t n_categories);

class Detector {
 public:
  Detector(const Taxonomy& tax, const EmbeddingTable& emb, DetectorConfig cfg, std::uint64_t seed);
  Detector(const Detector&) = delete;
  Detector& operator=(const Detector&) = delete;
  Detector(Detector&&) = default;

  const DetectorConfig& config() const { return cfg_; }
  std::vector<Parameter>& parameters() { return params_; }
  const std::vector<Parameter>& parameters() const { return params_; }
  std::vector<Parameter*> parameter_ptrs();
  Parameter& parameter(const std::string& name);

  /// Tensors for every parameter, watched on `tape` when given.
  void bind(Tape* tape);
  /// Drops the tensors from the last bind (they reference a tape).
  void unbind();

  QueryBatch learned_queries() const;
  /// Grid (H x W x C) -> projected memory (HW x C).
  Tensor memory(const Tensor& grid) const;

  InstanceOutput instance_decode(const QueryBatch& q, const Tensor& memory) const;
  InteractionOutput interaction_decode(const InteractionInputs& in, const Tensor& memory) const;

  /// Learned spatial embedding of boxes (rows of cx, cy, w, h).
  Tensor spatial_human(const Tensor& boxes) const;
  Tensor spatial_object(const Tensor& boxes) const;

  /// Full pass without calibration queries.
  DetectorOutput forward(const Tensor& grid, const ForwardOptions& opt) const;

  /// Text rows used for category selection and token features.
  const Tensor& text_features() const { return text_; }
  /// Rows of the HOI classifier (current values).
  Tensor hoi_classifier() const;

 private:
  struct AttnIdx { std::size_t wq, bq, wk, bk, wv, bv, wo, bo; };
  struct LayerIdx { AttnIdx self, cross; std::size_t ln1g, ln1b, ln2g, ln2b, ln3g, ln3b, w1, b1, w2, b2; };

  std::size_t add(const std::string& name, Shape shape, std::vector<double> values);
  std::size_t add_xavier(const std::string& name, std::size_t in, std::size_t out, std::uint64_t seed);
  std::size_t add_const(const std::string& name, Shape shape, double value);
  AttnIdx add_attention(const std::string& prefix, std::uint64_t seed);
  LayerIdx add_layer(const std::string& prefix, std::uint64_t seed);

  const Tensor& w(std::size_t i) const;
  Tensor mha(const AttnIdx& a, const Tensor& q_in, const Tensor& k_in, const Tensor& v_in, const Tensor& mask) const;
  Tensor layer(const LayerIdx& l, const Tensor& x, const Tensor& mem_k, const Tensor& mem_v, const Tensor& self_mask,
               const Tensor& cross_mask) const;
  Tensor mlp_box(std::size_t w1, std::size_t b1, std::size_t w2, std::size_t b2, const Tensor& x) const;
  Tensor cosine_logits(const Tensor& feats, std::size_t rows, std::size_t scale, std::size_t bias) const;

  DetectorConfig cfg_;
  std::size_t n_objects_, n_verbs_, n_categories_;
  Tensor text_;  // categories x C, constant
  Tensor pos_;   // HW x C sine encoding, constant
  std::vector<Parameter> params_;
  std::vector<Tensor> bound_;

  std::size_t in_w_, in_b_, hq_, oq_;
  std::vector<LayerIdx> inst_, act_;
  std::size_t hbox_w1_, hbox_b1_, hbox_w2_, hbox_b2_, obox_w1_, obox_b1_, obox_w2_, obox_b2_;
  std::size_t ocls_w_, ocls_b_;
  std::size_t hoi_proj_w_, hoi_proj_b_, hoi_rows_, hoi_scale_, hoi_bias_;
  std::size_t verb_proj_w_, verb_proj_b_, verb_rows_, verb_scale_, verb_bias_;
  std::size_t super_w_, super_b_;
  std::size_t sp_h_w_, sp_h_b_, sp_o_w_, sp_o_b_;
  std::size_t cal_in_w_, cal_in_b_, cal_sp_w_, cal_sp_b_;
};

}  // namespace hoi
