#include "hoi/detector.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "hoi/errors.hpp"
#include "hoi/kernels.hpp"
#include "hoi/ops.hpp"
#include "hoi/rng.hpp"

namespace hoi {

namespace {

std::vector<std::size_t> iota_from(std::size_t start, std::size_t n) {
  std::vector<std::size_t> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = start + i;
  return v;
}

Tensor sine_positions(std::size_t h, std::size_t w, std::size_t dim) {
  if (dim % 4 != 0) throw ConfigError("model width must be a multiple of 4");
  const std::size_t half = dim / 2;
  std::vector<double> pos(h * w * dim);
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < w; ++c) {
      const double y = (r + 0.5) / double(h) * 2 * std::numbers::pi;
      const double x = (c + 0.5) / double(w) * 2 * std::numbers::pi;
      double* out = pos.data() + (r * w + c) * dim;
      for (std::size_t i = 0; i < half; ++i) {
        const double t = std::pow(10000.0, double(2 * (i / 2)) / double(half));
        out[i] = i % 2 == 0 ? std::sin(y / t) : std::cos(y / t);
        out[half + i] = i % 2 == 0 ? std::sin(x / t) : std::cos(x / t);
      }
    }
  return Tensor({h * w, dim}, std::move(pos));
}

}  // namespace

std::vector<double> hor_mask(const Box& human, const Box& object, std::size_t h, std::size_t w) {
  const Box u = object.degenerate() ? human : enclosing_box(human, object);
  std::vector<double> m(h * w, kernels::kMasked);
  bool any = false;
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < w; ++c) {
      const double x = (c + 0.5) / double(w), y = (r + 0.5) / double(h);
      if (x >= u.x0() && x <= u.x1() && y >= u.y0() && y <= u.y1()) {
        m[r * w + c] = 0.0;
        any = true;
      }
    }
  if (!any) {
    const auto c = std::min<std::size_t>(w - 1, std::size_t(std::clamp(u.cx, 0.0, 1.0) * double(w)));
    const auto r = std::min<std::size_t>(h - 1, std::size_t(std::clamp(u.cy, 0.0, 1.0) * double(h)));
    m[r * w + c] = 0.0;
  }
  return m;
}

Tensor init_interaction_queries(const Tensor& human, const Tensor& object) {
  if (human.shape() != object.shape()) throw DimensionError("human and object queries differ in shape");
  return ops::scale(ops::add(human, object), 0.5);
}

std::vector<std::vector<std::size_t>> topk_similar(const Tensor& queries, const Tensor& text, std::size_t k1) {
  if (k1 == 0) throw ConfigError("k1 must be at least 1");
  const Tensor sim = ops::matmul(ops::l2_normalize(queries.detach()), ops::transpose(ops::l2_normalize(text)));
  const std::size_t n = sim.dim(0), m = sim.dim(1);
  std::vector<std::vector<std::size_t>> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::size_t> idx = iota_from(0, m);
    const std::size_t k = std::min(k1, m);
    std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                      [&](std::size_t a, std::size_t b) {
                        const double sa = sim.at(i, a), sb = sim.at(i, b);
                        return sa != sb ? sa > sb : a < b;
                      });
    out[i].assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k));
  }
  return out;
}

Detector::Detector(const Taxonomy& tax, const EmbeddingTable& emb, DetectorConfig cfg, std::uint64_t seed)
    : cfg_(cfg),
      n_objects_(tax.num_objects()),
      n_verbs_(tax.num_verbs()),
      n_categories_(tax.num_categories()),
      text_(emb.hoi_features()) {
  const std::size_t C = cfg_.dim;
  if (emb.dim() != C) throw ConfigError("embedding width must equal the model width");
  if (cfg_.heads == 0 || C % cfg_.heads != 0) throw ConfigError("model width must divide into heads");
  if (cfg_.num_queries == 0 || cfg_.layers == 0) throw ConfigError("need at least one query and one layer");
  pos_ = sine_positions(cfg_.grid_h, cfg_.grid_w, C);

  in_w_ = add_xavier("input.w", C, C, seed);
  in_b_ = add_const("input.b", {C}, 0.0);
  {
    auto rng = substream(seed, "init:queries");
    std::normal_distribution<double> n(0.0, 1.0);
    std::vector<double> h(cfg_.num_queries * C), o(cfg_.num_queries * C);
    for (auto& x : h) x = n(rng);
    for (auto& x : o) x = n(rng);
    hq_ = add("query.human", {cfg_.num_queries, C}, std::move(h));
    oq_ = add("query.object", {cfg_.num_queries, C}, std::move(o));
  }
  for (std::size_t l = 0; l < cfg_.layers; ++l) inst_.push_back(add_layer("inst." + std::to_string(l), seed));
  for (std::size_t l = 0; l < cfg_.layers; ++l) act_.push_back(add_layer("act." + std::to_string(l), seed));

  hbox_w1_ = add_xavier("hbox.w1", C, C, seed);
  hbox_b1_ = add_const("hbox.b1", {C}, 0.0);
  hbox_w2_ = add_xavier("hbox.w2", C, 4, seed);
  hbox_b2_ = add_const("hbox.b2", {4}, 0.0);
  obox_w1_ = add_xavier("obox.w1", C, C, seed);
  obox_b1_ = add_const("obox.b1", {C}, 0.0);
  obox_w2_ = add_xavier("obox.w2", C, 4, seed);
  obox_b2_ = add_const("obox.b2", {4}, 0.0);
  ocls_w_ = add_xavier("ocls.w", C, n_objects_ + 1, seed);
  ocls_b_ = add_const("ocls.b", {n_objects_ + 1}, 0.0);

  const double prior_bias = -std::log((1 - cfg_.prior_prob) / cfg_.prior_prob);
  hoi_proj_w_ = add_xavier("hoi.proj.w", C, C, seed);
  hoi_proj_b_ = add_const("hoi.proj.b", {C}, 0.0);
  hoi_rows_ = add("hoi.rows", {n_categories_, C}, emb.hoi_features().to_vector());
  hoi_scale_ = add_const("hoi.scale", {1}, cfg_.logit_scale);
  hoi_bias_ = add_const("hoi.bias", {1}, prior_bias);
  verb_proj_w_ = add_xavier("verb.proj.w", C, C, seed);
  verb_proj_b_ = add_const("verb.proj.b", {C}, 0.0);
  verb_rows_ = add("verb.rows", {n_verbs_, C}, emb.verb_features().to_vector());
  verb_scale_ = add_const("verb.scale", {1}, cfg_.logit_scale);
  verb_bias_ = add_const("verb.bias", {1}, prior_bias);

  super_w_ = add_xavier("super.w", C, cfg_.num_superclasses, seed);
  super_b_ = add_const("super.b", {cfg_.num_superclasses}, 0.0);

  const std::size_t Ds = cfg_.spatial_dim;
  sp_h_w_ = add_xavier("spatial.human.w", 4, Ds, seed);
  sp_h_b_ = add_const("spatial.human.b", {Ds}, 0.0);
  sp_o_w_ = add_xavier("spatial.object.w", 4, Ds, seed);
  sp_o_b_ = add_const("spatial.object.b", {Ds}, 0.0);
  cal_in_w_ = add_xavier("cal.in.w", C + 2 * Ds, C, seed);
  cal_in_b_ = add_const("cal.in.b", {C}, 0.0);
  cal_sp_w_ = add_xavier("cal.spatial.w", C, 2 * Ds, seed);
  cal_sp_b_ = add_const("cal.spatial.b", {2 * Ds}, 0.0);
}

std::size_t Detector::add(const std::string& name, Shape shape, std::vector<double> values) {
  for (const auto& p : params_)
    if (p.name == name) throw ContractError("duplicate parameter " + name);
  params_.emplace_back(name, std::move(shape), std::move(values));
  return params_.size() - 1;
}

std::size_t Detector::add_xavier(const std::string& name, std::size_t in, std::size_t out, std::uint64_t seed) {
  auto rng = substream(seed, "init:" + name);
  const double a = std::sqrt(6.0 / double(in + out));
  std::uniform_real_distribution<double> u(-a, a);
  std::vector<double> v(in * out);
  for (auto& x : v) x = u(rng);
  return add(name, {in, out}, std::move(v));
}

std::size_t Detector::add_const(const std::string& name, Shape shape, double value) {
  std::vector<double> v(numel(shape), value);
  return add(name, std::move(shape), std::move(v));
}

Detector::AttnIdx Detector::add_attention(const std::string& p, std::uint64_t seed) {
  const std::size_t C = cfg_.dim;
  AttnIdx a{};
  a.wq = add_xavier(p + ".wq", C, C, seed);
  a.bq = add_const(p + ".bq", {C}, 0.0);
  a.wk = add_xavier(p + ".wk", C, C, seed);
  a.bk = add_const(p + ".bk", {C}, 0.0);
  a.wv = add_xavier(p + ".wv", C, C, seed);
  a.bv = add_const(p + ".bv", {C}, 0.0);
  a.wo = add_xavier(p + ".wo", C, C, seed);
  a.bo = add_const(p + ".bo", {C}, 0.0);
  return a;
}

Detector::LayerIdx Detector::add_layer(const std::string& p, std::uint64_t seed) {
  const std::size_t C = cfg_.dim;
  LayerIdx l{};
  l.self = add_attention(p + ".self", seed);
  l.cross = add_attention(p + ".cross", seed);
  l.ln1g = add_const(p + ".ln1.g", {C}, 1.0);
  l.ln1b = add_const(p + ".ln1.b", {C}, 0.0);
  l.ln2g = add_const(p + ".ln2.g", {C}, 1.0);
  l.ln2b = add_const(p + ".ln2.b", {C}, 0.0);
  l.ln3g = add_const(p + ".ln3.g", {C}, 1.0);
  l.ln3b = add_const(p + ".ln3.b", {C}, 0.0);
  l.w1 = add_xavier(p + ".ffn.w1", C, cfg_.ffn_dim, seed);
  l.b1 = add_const(p + ".ffn.b1", {cfg_.ffn_dim}, 0.0);
  l.w2 = add_xavier(p + ".ffn.w2", cfg_.ffn_dim, C, seed);
  l.b2 = add_const(p + ".ffn.b2", {C}, 0.0);
  return l;
}

std::vector<Parameter*> Detector::parameter_ptrs() {
  std::vector<Parameter*> out;
  for (auto& p : params_) out.push_back(&p);
  return out;
}

Parameter& Detector::parameter(const std::string& name) {
  for (auto& p : params_)
    if (p.name == name) return p;
  throw ContractError("no parameter named " + name);
}

void Detector::bind(Tape* tape) {
  bound_.clear();
  bound_.reserve(params_.size());
  for (auto& p : params_) bound_.push_back(tape ? tape->watch(p) : p.value());
}

void Detector::unbind() { bound_.clear(); }

const Tensor& Detector::w(std::size_t i) const {
  if (bound_.size() != params_.size()) throw ContractError("detector used before bind()");
  return bound_[i];
}

QueryBatch Detector::learned_queries() const { return {w(hq_), w(oq_), Tensor(), std::nullopt}; }

Tensor Detector::memory(const Tensor& grid) const {
  const std::size_t H = cfg_.grid_h, W = cfg_.grid_w, C = cfg_.dim;
  if (grid.shape() != Shape{H, W, C})
    throw DimensionError("feature grid " + to_string(grid.shape()) + " does not match the configured " +
                         to_string({H, W, C}));
  return ops::linear(ops::reshape(grid, {H * W, C}), w(in_w_), w(in_b_));
}

Tensor Detector::mha(const AttnIdx& a, const Tensor& q_in, const Tensor& k_in, const Tensor& v_in,
                     const Tensor& mask) const {
  const Tensor q = ops::linear(q_in, w(a.wq), w(a.bq));
  const Tensor k = ops::linear(k_in, w(a.wk), w(a.bk));
  const Tensor v = ops::linear(v_in, w(a.wv), w(a.bv));
  const std::size_t dh = cfg_.dim / cfg_.heads;
  const double scale = 1.0 / std::sqrt(double(dh));
  std::vector<Tensor> heads;
  for (std::size_t h = 0; h < cfg_.heads; ++h)
    heads.push_back(ops::attention(ops::slice_cols(q, h * dh, dh), ops::slice_cols(k, h * dh, dh),
                                   ops::slice_cols(v, h * dh, dh), mask, scale));
  const Tensor cat = cfg_.heads == 1 ? heads[0] : ops::concat_last(heads);
  return ops::linear(cat, w(a.wo), w(a.bo));
}

Tensor Detector::layer(const LayerIdx& l, const Tensor& x0, const Tensor& mem_k, const Tensor& mem_v,
                       const Tensor& self_mask, const Tensor& cross_mask) const {
  Tensor x = ops::layer_norm(ops::add(x0, mha(l.self, x0, x0, x0, self_mask)), w(l.ln1g), w(l.ln1b));
  x = ops::layer_norm(ops::add(x, mha(l.cross, x, mem_k, mem_v, cross_mask)), w(l.ln2g), w(l.ln2b));
  const Tensor f = ops::linear(ops::relu(ops::linear(x, w(l.w1), w(l.b1))), w(l.w2), w(l.b2));
  return ops::layer_norm(ops::add(x, f), w(l.ln3g), w(l.ln3b));
}

Tensor Detector::mlp_box(std::size_t w1, std::size_t b1, std::size_t w2, std::size_t b2, const Tensor& x) const {
  return ops::sigmoid(ops::linear(ops::relu(ops::linear(x, w(w1), w(b1))), w(w2), w(b2)));
}

Tensor Detector::cosine_logits(const Tensor& feats, std::size_t rows, std::size_t scale, std::size_t bias) const {
  const Tensor cos = ops::matmul(ops::l2_normalize(feats), ops::transpose(ops::l2_normalize(w(rows))));
  return ops::add(ops::mul(cos, w(scale)), w(bias));
}

InstanceOutput Detector::instance_decode(const QueryBatch& q, const Tensor& mem) const {
  if (q.human.shape() != q.object.shape() || q.human.rank() != 2 || q.human.dim(1) != cfg_.dim)
    throw DimensionError("human and object queries must both be N x " + std::to_string(cfg_.dim));
  const std::size_t n = q.human.dim(0);
  const Tensor mem_k = ops::add(mem, pos_);
  const Tensor both[] = {q.human, q.object};
  Tensor x = ops::concat_rows(both);
  for (const auto& l : inst_) x = layer(l, x, mem_k, mem_k, Tensor(), Tensor());
  const auto hi = iota_from(0, n), oi = iota_from(n, n);
  InstanceOutput out;
  out.human_feats = ops::gather_rows(x, hi);
  out.object_feats = ops::gather_rows(x, oi);
  out.human_boxes = mlp_box(hbox_w1_, hbox_b1_, hbox_w2_, hbox_b2_, out.human_feats);
  out.object_boxes = mlp_box(obox_w1_, obox_b1_, obox_w2_, obox_b2_, out.object_feats);
  out.object_logits = ops::linear(out.object_feats, w(ocls_w_), w(ocls_b_));
  return out;
}

InteractionOutput Detector::interaction_decode(const InteractionInputs& in, const Tensor& mem) const {
  const std::size_t C = cfg_.dim, Ds = cfg_.spatial_dim, HW = cfg_.grid_h * cfg_.grid_w;
  if (in.queries.rank() != 2 || in.queries.dim(1) != C) throw DimensionError("interaction queries must be N x C");
  const std::size_t n = in.queries.dim(0);
  const std::size_t n_add = in.additional ? in.additional->dim(0) : 0;
  const std::size_t nq = n + n_add;
  if (in.additional && (in.additional->rank() != 2 || in.additional->dim(1) != C + 2 * Ds))
    throw DimensionError("additional queries must be Nadd x (C + 2 Ds)");
  if (!in.masks.empty() && in.masks.size() != n * HW) throw DimensionError("one HOR mask row per query expected");
  if (!in.additional_masks.empty() && in.additional_masks.size() != n_add * HW)
    throw DimensionError("one HOR mask row per additional query expected");

  Tensor x = in.queries;
  if (n_add) {
    const Tensor parts[] = {in.queries, ops::linear(*in.additional, w(cal_in_w_), w(cal_in_b_))};
    x = ops::concat_rows(parts);
  }
  Tensor mem_k = ops::add(mem, pos_), mem_v = mem;
  std::size_t n_tok = 0;
  if (in.category_feats) {
    if (in.category_feats->rank() != 2 || in.category_feats->dim(1) != C)
      throw DimensionError("category tokens must be k2 x C");
    n_tok = in.category_feats->dim(0);
    const Tensor k_parts[] = {mem_k, *in.category_feats};
    const Tensor v_parts[] = {mem_v, *in.category_feats};
    mem_k = ops::concat_rows(k_parts);
    mem_v = ops::concat_rows(v_parts);
  }
  const std::size_t nk = HW + n_tok;

  Tensor cross_mask;
  if (!in.masks.empty() || !in.additional_masks.empty()) {
    std::vector<double> m(nq * nk, 0.0);
    for (std::size_t i = 0; i < nq; ++i) {
      const std::vector<double>& src = i < n ? in.masks : in.additional_masks;
      const std::size_t row = i < n ? i : i - n;
      if (!src.empty()) std::copy_n(src.begin() + row * HW, HW, m.begin() + i * nk);
    }
    cross_mask = Tensor({nq, nk}, std::move(m));
  }
  Tensor self_mask;
  if (n_add) {
    std::vector<double> m(nq * nq, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = n; j < nq; ++j) m[i * nq + j] = kernels::kMasked;
    self_mask = Tensor({nq, nq}, std::move(m));
  }
  for (const auto& l : act_) x = layer(l, x, mem_k, mem_v, self_mask, cross_mask);

  const Tensor sem_all = ops::linear(x, w(hoi_proj_w_), w(hoi_proj_b_));
  InteractionOutput out;
  const auto orig = iota_from(0, n);
  out.feats = n_add ? ops::gather_rows(x, orig) : x;
  out.semantic = n_add ? ops::gather_rows(sem_all, orig) : sem_all;
  out.hoi_logits = cosine_logits(out.semantic, hoi_rows_, hoi_scale_, hoi_bias_);
  out.verb_logits =
      cosine_logits(ops::linear(out.feats, w(verb_proj_w_), w(verb_proj_b_)), verb_rows_, verb_scale_, verb_bias_);
  out.superclass_logits = ops::linear(out.feats, w(super_w_), w(super_b_));
  if (n_add) {
    const auto add = iota_from(n, n_add);
    const Tensor parts[] = {ops::gather_rows(sem_all, add),
                            ops::linear(ops::gather_rows(x, add), w(cal_sp_w_), w(cal_sp_b_))};
    out.corrected = ops::concat_last(parts);
  }
  return out;
}

Tensor Detector::spatial_human(const Tensor& boxes) const { return ops::linear(boxes, w(sp_h_w_), w(sp_h_b_)); }
Tensor Detector::spatial_object(const Tensor& boxes) const { return ops::linear(boxes, w(sp_o_w_), w(sp_o_b_)); }

Tensor Detector::hoi_classifier() const { return params_[hoi_rows_].value(); }

DetectorOutput Detector::forward(const Tensor& grid, const ForwardOptions& opt) const {
  const std::size_t H = cfg_.grid_h, W = cfg_.grid_w;
  DetectorOutput out;
  const Tensor mem = memory(grid);
  out.memory = mem;
  out.instance = instance_decode(learned_queries(), mem);
  out.initial_queries = init_interaction_queries(out.instance.human_feats, out.instance.object_feats);
  const std::size_t n = cfg_.num_queries;

  if (opt.fixed_masks) {
    out.masks = *opt.fixed_masks;
  } else if (opt.hor_mask) {
    const auto hb = out.instance.human_boxes.data(), ob = out.instance.object_boxes.data();
    for (std::size_t i = 0; i < n; ++i) {
      const Box h{hb[4 * i], hb[4 * i + 1], hb[4 * i + 2], hb[4 * i + 3]};
      const Box o{ob[4 * i], ob[4 * i + 1], ob[4 * i + 2], ob[4 * i + 3]};
      const auto m = hor_mask(h, o, H, W);
      out.masks.insert(out.masks.end(), m.begin(), m.end());
    }
  }

  InteractionInputs in;
  in.queries = out.initial_queries;
  in.masks = out.masks;
  if (opt.fixed_categories) {
    out.category_tokens = *opt.fixed_categories;
  } else if (opt.category_tokens) {
    const Tensor sem0 = ops::linear(out.initial_queries.detach(), w(hoi_proj_w_).detach(), w(hoi_proj_b_).detach());
    out.category_tokens = most_frequent_categories(topk_similar(sem0, text_, opt.k1), opt.k2, n_categories_);
  }
  if (!out.category_tokens.empty()) in.category_feats = ops::gather_rows(text_, out.category_tokens);
  out.interaction = interaction_decode(in, mem);
  return out;
}

std::vector<std::size_t> most_frequent_categories(const std::vector<std::vector<std::size_t>>& topk, std::size_t k2,
                                                  std::size_t n_categories) {
  if (k2 == 0) throw ConfigError("k2 must be at least 1");
  std::vector<std::size_t> count(n_categories, 0);
  for (const auto& row : topk)
    for (auto c : row) ++count.at(c);
  std::vector<std::size_t> seen;
  for (std::size_t c = 0; c < n_categories; ++c)
    if (count[c] > 0) seen.push_back(c);
  std::stable_sort(seen.begin(), seen.end(), [&](std::size_t a, std::size_t b) { return count[a] > count[b]; });
  if (seen.size() > k2) seen.resize(k2);
  return seen;
}

}  // namespace hoi
