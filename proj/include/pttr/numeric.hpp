#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace pttr {

/// Row-major dense matrix. Rows are points/tokens, columns are channels.
template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using MatrixF = Matrix<float>;
using MatrixD = Matrix<double>;

template <typename To, typename From>
Matrix<To> cast_matrix(const Matrix<From>& m) {
  return m.template cast<To>();
}

/// Throws std::invalid_argument naming `what` when the shapes differ.
void check_shape(const char* what, Eigen::Index rows, Eigen::Index cols, Eigen::Index want_rows,
                 Eigen::Index want_cols);

template <typename T>
bool all_finite(const Matrix<T>& m) {
  return m.allFinite();
}

// Elementwise ReLU; the subgradient at exactly 0 is 0.
template <typename T>
Matrix<T> relu(const Matrix<T>& x);
template <typename T>
Matrix<T> relu_backward(const Matrix<T>& x, const Matrix<T>& dy);

// Row softmax with per-row max subtraction.
template <typename T>
Matrix<T> softmax_rows(const Matrix<T>& x);
/// Takes the forward output `y`, not the input.
template <typename T>
Matrix<T> softmax_rows_backward(const Matrix<T>& y, const Matrix<T>& dy);

// y_row = x_row / max(||x_row||, eps).
template <typename T>
Matrix<T> l2_normalize_rows(const Matrix<T>& x, T eps);
template <typename T>
Matrix<T> l2_normalize_rows_backward(const Matrix<T>& x, const Matrix<T>& dy, T eps);

/// Mean binary cross-entropy on raw logits, in the stable
/// max(z,0) - z*t + log(1 + exp(-|z|)) form. `grad` (optional) receives dL/dz.
template <typename T>
T bce_with_logits(const Matrix<T>& logits, const Matrix<T>& targets, Matrix<T>* grad = nullptr);

/// Mean squared error over all elements.
template <typename T>
T mse_loss(const Matrix<T>& pred, const Matrix<T>& target, Matrix<T>* grad = nullptr);

/// Mean squared error restricted to rows with row_mask set; 0 (and zero gradient)
/// when no row is selected.
template <typename T>
T masked_mse_loss(const Matrix<T>& pred, const Matrix<T>& target,
                  const std::vector<bool>& row_mask, Matrix<T>* grad = nullptr);

/// Stacks rows of `x` picked by `rows` (repeats allowed).
template <typename T>
Matrix<T> gather_rows(const Matrix<T>& x, const std::vector<int>& rows);

/// Adds each row of `src` into dst.row(rows[i]).
template <typename T>
void scatter_add_rows(Matrix<T>& dst, const Matrix<T>& src, const std::vector<int>& rows);

/// Horizontal concatenation of equally tall blocks.
template <typename T>
Matrix<T> hconcat(const std::vector<const Matrix<T>*>& blocks);

}  // namespace pttr
