#pragma once

#include <cstddef>

#include <Eigen/Core>

namespace specsense::nn::detail {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// C[m x n] (+)= op(A) * op(B) on row-major buffers. op(A) is m x k, op(B) is k x n.
template <typename T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c,
          bool accumulate) {
  using Map = Eigen::Map<const RowMatrix<T>>;
  const auto mi = static_cast<Eigen::Index>(m);
  const auto ni = static_cast<Eigen::Index>(n);
  const auto ki = static_cast<Eigen::Index>(k);
  Eigen::Map<RowMatrix<T>> out(c, mi, ni);
  if (!accumulate) out.setZero();
  if (m == 0 || n == 0 || k == 0) return;
  const Map am(a, trans_a ? ki : mi, trans_a ? mi : ki);
  const Map bm(b, trans_b ? ni : ki, trans_b ? ki : ni);
  if (!trans_a && !trans_b)
    out.noalias() += am * bm;
  else if (trans_a && !trans_b)
    out.noalias() += am.transpose() * bm;
  else if (!trans_a && trans_b)
    out.noalias() += am * bm.transpose();
  else
    out.noalias() += am.transpose() * bm.transpose();
}

}  // namespace specsense::nn::detail
