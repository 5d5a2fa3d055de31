#include "hoi/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hoi/errors.hpp"

namespace hoi {

using nlohmann::json;

InputBiasReport diagnose_input_bias(const Taxonomy& tax, std::span<const PredictionRecord> preds,
                                    std::span<const SceneAnnotation> gts, double thr) {
  const auto hit = ground_truth_hits(tax, preds, gts, thr);
  const std::size_t nc = tax.num_categories();
  // [partition][category] -> (errors, total)
  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> tally(2, std::vector<std::pair<std::size_t, std::size_t>>(nc));
  InputBiasReport r;
  for (std::size_t s = 0; s < gts.size(); ++s) {
    const auto& ts = gts[s].triplets;
    std::vector<bool> has(ts.size(), false);
    for (auto [i, j] : find_input_siblings(ts)) has[i] = has[j] = true;
    for (std::size_t t = 0; t < ts.size(); ++t) {
      const std::size_t c = *tax.category(ts[t].verb_class, ts[t].object_class);
      auto& cell = tally[has[t] ? 0 : 1][c];
      cell.first += !hit[s][t];
      ++cell.second;
      ++(has[t] ? r.n_with : r.n_without);
    }
  }
  auto rate = [&](std::size_t part) -> std::optional<double> {
    double sum = 0;
    std::size_t n = 0;
    for (const auto& [err, total] : tally[part])
      if (total) {
        sum += double(err) / double(total);
        ++n;
      }
    if (!n) return std::nullopt;
    return sum / double(n);
  };
  r.with_siblings = rate(0);
  r.without_siblings = rate(1);
  if (r.with_siblings && r.without_siblings) r.delta = *r.with_siblings - *r.without_siblings;
  return r;
}

OutputBiasReport diagnose_output_bias(const Tensor& rows, const std::vector<std::optional<double>>& final_ap,
                                      const std::vector<std::size_t>& train_counts, double head_fraction) {
  if (rows.rank() != 2) throw DimensionError("classifier rows must be a matrix");
  const std::size_t n = rows.dim(0), d = rows.dim(1);
  if (final_ap.size() != n || train_counts.size() != n) throw DimensionError("one AP and one count per category expected");
  if (n < 2) throw DataError("need at least two categories");
  std::vector<double> norm(n);
  for (std::size_t i = 0; i < n; ++i) {
    double ss = 0;
    for (std::size_t k = 0; k < d; ++k) ss += rows.at(i, k) * rows.at(i, k);
    norm[i] = std::sqrt(ss);
    if (!(norm[i] > 0)) throw DataError("zero classifier row");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return train_counts[a] > train_counts[b]; });
  const auto n_head = static_cast<std::size_t>(std::ceil(head_fraction * double(n)));
  OutputBiasReport r;
  r.head.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(std::min(n_head, n)));
  std::vector<bool> is_head(n, false);
  for (auto c : r.head) is_head[c] = true;

  for (std::size_t i = 0; i < n; ++i) {
    if (is_head[i] || !final_ap[i]) continue;
    double s = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      double dot = 0;
      for (std::size_t k = 0; k < d; ++k) dot += rows.at(i, k) * rows.at(j, k);
      s += dot / (norm[i] * norm[j]);
    }
    r.rows.push_back({i, s / double(n - 1), *final_ap[i]});
  }
  if (r.rows.size() >= 3) {
    double mx = 0, my = 0;
    for (const auto& row : r.rows) {
      mx += row.mean_similarity;
      my += row.ap;
    }
    mx /= double(r.rows.size());
    my /= double(r.rows.size());
    double sxy = 0, sxx = 0;
    for (const auto& row : r.rows) {
      sxy += (row.mean_similarity - mx) * (row.ap - my);
      sxx += (row.mean_similarity - mx) * (row.mean_similarity - mx);
    }
    if (sxx > 0) r.slope = sxy / sxx;
  }
  return r;
}

json to_json(const InputBiasReport& r) {
  auto opt = [](const std::optional<double>& x) { return x ? json(*x) : json(nullptr); };
  return {{"error_rate_with_siblings", opt(r.with_siblings)},
          {"error_rate_without_siblings", opt(r.without_siblings)},
          {"delta", opt(r.delta)},
          {"instances_with_siblings", r.n_with},
          {"instances_without_siblings", r.n_without}};
}

json to_json(const OutputBiasReport& r) {
  json rows = json::array();
  for (const auto& row : r.rows)
    rows.push_back({{"category", row.category}, {"mean_similarity", row.mean_similarity}, {"ap", row.ap}});
  return {{"rows", rows}, {"slope", r.slope ? json(*r.slope) : json(nullptr)}, {"head", r.head}};
}

}  // namespace hoi
