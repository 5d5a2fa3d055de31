#include "hoi/kernels.hpp"

#include <atomic>
#include <cmath>
#include <vector>

#include <omp.h>

namespace hoi::kernels {

namespace {

std::atomic<Backend> g_backend{Backend::OpenMP};

// Below this many multiply-adds the thread fork costs more than it saves.
constexpr std::size_t kParallelWork = 1u << 15;

inline double a_at(const GemmShape& s, std::span<const double> a, std::size_t i,
                   std::size_t p) {
  return s.trans_a ? a[p * s.m + i] : a[i * s.k + p];
}

inline double b_at(const GemmShape& s, std::span<const double> b, std::size_t p,
                   std::size_t j) {
  return s.trans_b ? b[j * s.k + p] : b[p * s.n + j];
}

}  // namespace

void set_backend(Backend b) { g_backend.store(b); }
Backend backend() { return g_backend.load(); }

// ---------------------------------------------------------------- serial

namespace serial {

void gemm(const GemmShape& s, std::span<const double> a, std::span<const double> b,
          std::span<double> c, bool accumulate) {
  for (std::size_t i = 0; i < s.m; ++i) {
    for (std::size_t j = 0; j < s.n; ++j) {
      double sum = 0.0;
      for (std::size_t p = 0; p < s.k; ++p) sum += a_at(s, a, i, p) * b_at(s, b, p, j);
      c[i * s.n + j] = accumulate ? c[i * s.n + j] + sum : sum;
    }
  }
}

void attention_forward(const AttentionShape& s, std::span<const double> q,
                       std::span<const double> k, std::span<const double> v,
                       std::span<const double> mask, double scale,
                       std::span<double> probs, std::span<double> out) {
  const std::size_t nk = s.keys;
  for (std::size_t i = 0; i < s.queries; ++i) {
    double mx = kMasked;
    for (std::size_t j = 0; j < nk; ++j) {
      double dotv = 0.0;
      for (std::size_t d = 0; d < s.key_dim; ++d) dotv += q[i * s.key_dim + d] * k[j * s.key_dim + d];
      double score = dotv * scale;
      if (!mask.empty()) {
        if (is_masked(mask[i * nk + j])) {
          probs[i * nk + j] = kMasked;
          continue;
        }
        score += mask[i * nk + j];
      }
      probs[i * nk + j] = score;
      if (score > mx) mx = score;
    }
    double denom = 0.0;
    for (std::size_t j = 0; j < nk; ++j) {
      double& p = probs[i * nk + j];
      if (is_masked(p)) {
        p = 0.0;
        continue;
      }
      p = std::exp(p - mx);
      denom += p;
    }
    for (std::size_t j = 0; j < nk; ++j) probs[i * nk + j] /= denom;
    for (std::size_t d = 0; d < s.value_dim; ++d) {
      double acc = 0.0;
      for (std::size_t j = 0; j < nk; ++j) {
        if (!mask.empty() && is_masked(mask[i * nk + j])) continue;
        acc += probs[i * nk + j] * v[j * s.value_dim + d];
      }
      out[i * s.value_dim + d] = acc;
    }
  }
}

void attention_backward(const AttentionShape& s, std::span<const double> q,
                        std::span<const double> k, std::span<const double> v,
                        std::span<const double> probs, std::span<const double> dout,
                        double scale, std::span<double> dq, std::span<double> dk,
                        std::span<double> dv) {
  const std::size_t nq = s.queries, nk = s.keys;
  std::vector<double> ds(nq * nk);
  for (std::size_t i = 0; i < nq; ++i) {
    double t = 0.0;
    for (std::size_t j = 0; j < nk; ++j) {
      double dp = 0.0;
      for (std::size_t d = 0; d < s.value_dim; ++d) dp += dout[i * s.value_dim + d] * v[j * s.value_dim + d];
      ds[i * nk + j] = dp;
      t += probs[i * nk + j] * dp;
    }
    for (std::size_t j = 0; j < nk; ++j) ds[i * nk + j] = probs[i * nk + j] * (ds[i * nk + j] - t);
  }
  if (!dq.empty()) {
    for (std::size_t i = 0; i < nq; ++i)
      for (std::size_t d = 0; d < s.key_dim; ++d) {
        double acc = 0.0;
        for (std::size_t j = 0; j < nk; ++j) acc += ds[i * nk + j] * k[j * s.key_dim + d];
        dq[i * s.key_dim + d] += scale * acc;
      }
  }
  if (!dk.empty()) {
    for (std::size_t j = 0; j < nk; ++j)
      for (std::size_t d = 0; d < s.key_dim; ++d) {
        double acc = 0.0;
        for (std::size_t i = 0; i < nq; ++i) acc += ds[i * nk + j] * q[i * s.key_dim + d];
        dk[j * s.key_dim + d] += scale * acc;
      }
  }
  if (!dv.empty()) {
    for (std::size_t j = 0; j < nk; ++j)
      for (std::size_t d = 0; d < s.value_dim; ++d) {
        double acc = 0.0;
        for (std::size_t i = 0; i < nq; ++i) acc += probs[i * nk + j] * dout[i * s.value_dim + d];
        dv[j * s.value_dim + d] += acc;
      }
  }
}

}  // namespace serial

// -------------------------------------------------------------- parallel

namespace parallel {

void gemm(const GemmShape& s, std::span<const double> a, std::span<const double> b,
          std::span<double> c, bool accumulate) {
  const std::ptrdiff_t m = static_cast<std::ptrdiff_t>(s.m);
  const bool par = s.m * s.n * s.k >= kParallelWork;
#pragma omp parallel if (par)
  {
    std::vector<double> row(s.n);
#pragma omp for schedule(static)
    for (std::ptrdiff_t ii = 0; ii < m; ++ii) {
      const auto i = static_cast<std::size_t>(ii);
      if (s.trans_b && !s.trans_a) {
        // rows of A and B are both contiguous
        const double* arow = a.data() + i * s.k;
        for (std::size_t j = 0; j < s.n; ++j) {
          const double* brow = b.data() + j * s.k;
          double sum = 0.0;
          for (std::size_t p = 0; p < s.k; ++p) sum += arow[p] * brow[p];
          row[j] = sum;
        }
      } else {
        std::fill(row.begin(), row.end(), 0.0);
        for (std::size_t p = 0; p < s.k; ++p) {
          const double aip = a_at(s, a, i, p);
          if (s.trans_b) {
            for (std::size_t j = 0; j < s.n; ++j) row[j] += aip * b[j * s.k + p];
          } else {
            const double* brow = b.data() + p * s.n;
            for (std::size_t j = 0; j < s.n; ++j) row[j] += aip * brow[j];
          }
        }
      }
      double* crow = c.data() + i * s.n;
      if (accumulate) {
        for (std::size_t j = 0; j < s.n; ++j) crow[j] = crow[j] + row[j];
      } else {
        for (std::size_t j = 0; j < s.n; ++j) crow[j] = row[j];
      }
    }
  }
}

void attention_forward(const AttentionShape& s, std::span<const double> q,
                       std::span<const double> k, std::span<const double> v,
                       std::span<const double> mask, double scale,
                       std::span<double> probs, std::span<double> out) {
  const std::size_t nk = s.keys;
  const bool par = s.queries * nk * (s.key_dim + s.value_dim) >= kParallelWork;
  const auto nq = static_cast<std::ptrdiff_t>(s.queries);
#pragma omp parallel for schedule(static) if (par)
  for (std::ptrdiff_t ii = 0; ii < nq; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    double* prow = probs.data() + i * nk;
    const double* qrow = q.data() + i * s.key_dim;
    const double* mrow = mask.empty() ? nullptr : mask.data() + i * nk;
    double mx = kMasked;
    for (std::size_t j = 0; j < nk; ++j) {
      if (mrow && is_masked(mrow[j])) {
        prow[j] = kMasked;
        continue;
      }
      const double* krow = k.data() + j * s.key_dim;
      double dotv = 0.0;
      for (std::size_t d = 0; d < s.key_dim; ++d) dotv += qrow[d] * krow[d];
      double score = dotv * scale;
      if (mrow) score += mrow[j];
      prow[j] = score;
      if (score > mx) mx = score;
    }
    double denom = 0.0;
    for (std::size_t j = 0; j < nk; ++j) {
      if (is_masked(prow[j])) {
        prow[j] = 0.0;
        continue;
      }
      prow[j] = std::exp(prow[j] - mx);
      denom += prow[j];
    }
    for (std::size_t j = 0; j < nk; ++j) prow[j] /= denom;
    double* orow = out.data() + i * s.value_dim;
    for (std::size_t d = 0; d < s.value_dim; ++d) orow[d] = 0.0;
    for (std::size_t j = 0; j < nk; ++j) {
      if (mrow && is_masked(mrow[j])) continue;
      const double pj = prow[j];
      const double* vrow = v.data() + j * s.value_dim;
      for (std::size_t d = 0; d < s.value_dim; ++d) orow[d] += pj * vrow[d];
    }
  }
}

void attention_backward(const AttentionShape& s, std::span<const double> q,
                        std::span<const double> k, std::span<const double> v,
                        std::span<const double> probs, std::span<const double> dout,
                        double scale, std::span<double> dq, std::span<double> dk,
                        std::span<double> dv) {
  const std::size_t nk = s.keys;
  const auto nq = static_cast<std::ptrdiff_t>(s.queries);
  const auto nkeys = static_cast<std::ptrdiff_t>(nk);
  const bool par = s.queries * nk * (s.key_dim + s.value_dim) >= kParallelWork;
  std::vector<double> ds(s.queries * nk);

#pragma omp parallel if (par)
  {
    std::vector<double> acc(std::max(s.key_dim, s.value_dim));
    std::vector<double> acc2(s.value_dim);
#pragma omp for schedule(static)
    for (std::ptrdiff_t ii = 0; ii < nq; ++ii) {
      const auto i = static_cast<std::size_t>(ii);
      const double* prow = probs.data() + i * nk;
      const double* grow = dout.data() + i * s.value_dim;
      double* srow = ds.data() + i * nk;
      double t = 0.0;
      for (std::size_t j = 0; j < nk; ++j) {
        const double* vrow = v.data() + j * s.value_dim;
        double dp = 0.0;
        for (std::size_t d = 0; d < s.value_dim; ++d) dp += grow[d] * vrow[d];
        srow[j] = dp;
        t += prow[j] * dp;
      }
      for (std::size_t j = 0; j < nk; ++j) srow[j] = prow[j] * (srow[j] - t);
      if (!dq.empty()) {
        std::fill(acc.begin(), acc.begin() + s.key_dim, 0.0);
        for (std::size_t j = 0; j < nk; ++j) {
          const double* krow = k.data() + j * s.key_dim;
          for (std::size_t d = 0; d < s.key_dim; ++d) acc[d] += srow[j] * krow[d];
        }
        double* qg = dq.data() + i * s.key_dim;
        for (std::size_t d = 0; d < s.key_dim; ++d) qg[d] += scale * acc[d];
      }
    }
    // implicit barrier: ds complete before key/value gradients
#pragma omp for schedule(static)
    for (std::ptrdiff_t jj = 0; jj < nkeys; ++jj) {
      const auto j = static_cast<std::size_t>(jj);
      if (!dk.empty()) {
        std::fill(acc.begin(), acc.begin() + s.key_dim, 0.0);
        for (std::size_t i = 0; i < s.queries; ++i) {
          const double sij = ds[i * nk + j];
          const double* qrow = q.data() + i * s.key_dim;
          for (std::size_t d = 0; d < s.key_dim; ++d) acc[d] += sij * qrow[d];
        }
        double* kg = dk.data() + j * s.key_dim;
        for (std::size_t d = 0; d < s.key_dim; ++d) kg[d] += scale * acc[d];
      }
      if (!dv.empty()) {
        std::fill(acc2.begin(), acc2.end(), 0.0);
        for (std::size_t i = 0; i < s.queries; ++i) {
          const double pij = probs[i * nk + j];
          const double* grow = dout.data() + i * s.value_dim;
          for (std::size_t d = 0; d < s.value_dim; ++d) acc2[d] += pij * grow[d];
        }
        double* vg = dv.data() + j * s.value_dim;
        for (std::size_t d = 0; d < s.value_dim; ++d) vg[d] += acc2[d];
      }
    }
  }
}

}  // namespace parallel

// -------------------------------------------------------------- dispatch

void gemm(const GemmShape& s, std::span<const double> a, std::span<const double> b,
          std::span<double> c, bool accumulate) {
  if (backend() == Backend::Serial) return serial::gemm(s, a, b, c, accumulate);
  parallel::gemm(s, a, b, c, accumulate);
}

void attention_forward(const AttentionShape& s, std::span<const double> q,
                       std::span<const double> k, std::span<const double> v,
                       std::span<const double> mask, double scale,
                       std::span<double> probs, std::span<double> out) {
  if (backend() == Backend::Serial)
    return serial::attention_forward(s, q, k, v, mask, scale, probs, out);
  parallel::attention_forward(s, q, k, v, mask, scale, probs, out);
}

void attention_backward(const AttentionShape& s, std::span<const double> q,
                        std::span<const double> k, std::span<const double> v,
                        std::span<const double> probs, std::span<const double> dout,
                        double scale, std::span<double> dq, std::span<double> dk,
                        std::span<double> dv) {
  if (backend() == Backend::Serial)
    return serial::attention_backward(s, q, k, v, probs, dout, scale, dq, dk, dv);
  parallel::attention_backward(s, q, k, v, probs, dout, scale, dq, dk, dv);
}

}  // namespace hoi::kernels
