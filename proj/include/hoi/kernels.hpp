#pragma once

// Dense numeric kernels behind the tensor ops. Every kernel has a plain serial
// reference and an OpenMP version that splits work over independent output
// rows; both sum in the same order, so they agree bit for bit.

#include <cstddef>
#include <limits>
#include <span>

namespace hoi::kernels {

/// Value used for a masked (minus infinity) attention or softmax entry.
inline constexpr double kMasked = std::numeric_limits<double>::lowest();

/// Entries at or below this are treated as masked.
inline constexpr double kMaskThreshold = kMasked / 2;

inline bool is_masked(double x) { return x <= kMaskThreshold; }

enum class Backend { Serial, OpenMP };

void set_backend(Backend b);
Backend backend();

struct GemmShape {
  std::size_t m = 0;  // rows of op(A) and C
  std::size_t n = 0;  // cols of op(B) and C
  std::size_t k = 0;  // shared inner dimension
  bool trans_a = false;
  bool trans_b = false;
};

struct AttentionShape {
  std::size_t queries = 0;
  std::size_t keys = 0;
  std::size_t key_dim = 0;
  std::size_t value_dim = 0;
};

namespace serial {
void gemm(const GemmShape& s, std::span<const double> a, std::span<const double> b,
          std::span<double> c, bool accumulate);
void attention_forward(const AttentionShape& s, std::span<const double> q,
                       std::span<const double> k, std::span<const double> v,
                       std::span<const double> mask, double scale,
                       std::span<double> probs, std::span<double> out);
void attention_backward(const AttentionShape& s, std::span<const double> q,
                        std::span<const double> k, std::span<const double> v,
                        std::span<const double> probs, std::span<const double> dout,
                        double scale, std::span<double> dq, std::span<double> dk,
                        std::span<double> dv);
}  // namespace serial

namespace parallel {
void gemm(const GemmShape& s, std::span<const double> a, std::span<const double> b,
          std::span<double> c, bool accumulate);
void attention_forward(const AttentionShape& s, std::span<const double> q,
                       std::span<const double> k, std::span<const double> v,
                       std::span<const double> mask, double scale,
                       std::span<double> probs, std::span<double> out);
void attention_backward(const AttentionShape& s, std::span<const double> q,
                        std::span<const double> k, std::span<const double> v,
                        std::span<const double> probs, std::span<const double> dout,
                        double scale, std::span<double> dq, std::span<double> dk,
                        std::span<double> dv);
}  // namespace parallel

// Dispatch to the active backend.
//
// attention_forward: probs (queries x keys) receives the masked softmax of
// scale * q k^T + mask, out (queries x value_dim) receives probs * v. An empty
// mask means no masking. Rows with every key masked must be rejected by the
// caller beforehand.
//
// attention_backward: dq, dk, dv are accumulated into; any may be empty to skip.
void gemm(const GemmShape& s, std::span<const double> a, std::span<const double> b,
          std::span<double> c, bool accumulate);
void attention_forward(const AttentionShape& s, std::span<const double> q,
                       std::span<const double> k, std::span<const double> v,
                       std::span<const double> mask, double scale,
                       std::span<double> probs, std::span<double> out);
void attention_backward(const AttentionShape& s, std::span<const double> q,
                        std::span<const double> k, std::span<const double> v,
                        std::span<const double> probs, std::span<const double> dout,
                        double scale, std::span<double> dq, std::span<double> dk,
                        std::span<double> dv);

}  // namespace hoi::kernels
