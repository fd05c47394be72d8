#include "pttr/numeric.hpp"

#include <cmath>
#include <stdexcept>

namespace pttr {

void check_shape(const char* what, Eigen::Index rows, Eigen::Index cols, Eigen::Index want_rows,
                 Eigen::Index want_cols) {
  if (rows != want_rows || cols != want_cols) {
    throw std::invalid_argument(std::string(what) + ": expected " + std::to_string(want_rows) +
                                "x" + std::to_string(want_cols) + ", got " +
                                std::to_string(rows) + "x" + std::to_string(cols));
  }
}

template <typename T>
Matrix<T> relu(const Matrix<T>& x) {
  return x.cwiseMax(T(0));
}

template <typename T>
Matrix<T> relu_backward(const Matrix<T>& x, const Matrix<T>& dy) {
  check_shape("relu_backward", dy.rows(), dy.cols(), x.rows(), x.cols());
  return (x.array() > T(0)).select(dy, T(0));
}

template <typename T>
Matrix<T> softmax_rows(const Matrix<T>& x) {
  Matrix<T> y(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const T mx = x.row(r).maxCoeff();
    y.row(r) = (x.row(r).array() - mx).exp();
    y.row(r) /= y.row(r).sum();
  }
  return y;
}

template <typename T>
Matrix<T> softmax_rows_backward(const Matrix<T>& y, const Matrix<T>& dy) {
  check_shape("softmax_rows_backward", dy.rows(), dy.cols(), y.rows(), y.cols());
  const Eigen::Matrix<T, Eigen::Dynamic, 1> dots = (y.array() * dy.array()).rowwise().sum();
  Matrix<T> dx = dy;
  dx.colwise() -= dots;
  return (dx.array() * y.array()).matrix();
}

template <typename T>
Matrix<T> l2_normalize_rows(const Matrix<T>& x, T eps) {
  if (!(eps > T(0))) throw std::invalid_argument("l2_normalize_rows: eps must be > 0");
  Matrix<T> y(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const T n = std::max(x.row(r).norm(), eps);
    y.row(r) = x.row(r) / n;
  }
  return y;
}

template <typename T>
Matrix<T> l2_normalize_rows_backward(const Matrix<T>& x, const Matrix<T>& dy, T eps) {
  check_shape("l2_normalize_rows_backward", dy.rows(), dy.cols(), x.rows(), x.cols());
  Matrix<T> dx(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const T n = x.row(r).norm();
    if (n > eps) {
      const auto y = x.row(r) / n;
      const T dot = y.dot(dy.row(r));
      dx.row(r) = (dy.row(r) - dot * y) / n;
    } else {
      dx.row(r) = dy.row(r) / eps;
    }
  }
  return dx;
}

template <typename T>
T bce_with_logits(const Matrix<T>& logits, const Matrix<T>& targets, Matrix<T>* grad) {
  check_shape("bce_with_logits", targets.rows(), targets.cols(), logits.rows(), logits.cols());
  const auto n = static_cast<T>(logits.size());
  if (logits.size() == 0) {
    if (grad) grad->setZero(logits.rows(), logits.cols());
    return T(0);
  }
  T total = 0;
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    const T z = logits.data()[i];
    const T t = targets.data()[i];
    total += std::max(z, T(0)) - z * t + std::log1p(std::exp(-std::abs(z)));
  }
  if (grad) {
    grad->resize(logits.rows(), logits.cols());
    for (Eigen::Index i = 0; i < logits.size(); ++i) {
      const T z = logits.data()[i];
      const T sig = z >= 0 ? T(1) / (T(1) + std::exp(-z)) : std::exp(z) / (T(1) + std::exp(z));
      grad->data()[i] = (sig - targets.data()[i]) / n;
    }
  }
  return total / n;
}

template <typename T>
T mse_loss(const Matrix<T>& pred, const Matrix<T>& target, Matrix<T>* grad) {
  check_shape("mse_loss", target.rows(), target.cols(), pred.rows(), pred.cols());
  if (pred.size() == 0) {
    if (grad) grad->setZero(pred.rows(), pred.cols());
    return T(0);
  }
  const auto n = static_cast<T>(pred.size());
  const Matrix<T> diff = pred - target;
  if (grad) *grad = diff * (T(2) / n);
  return diff.squaredNorm() / n;
}

template <typename T>
T masked_mse_loss(const Matrix<T>& pred, const Matrix<T>& target,
                  const std::vector<bool>& row_mask, Matrix<T>* grad) {
  check_shape("masked_mse_loss", target.rows(), target.cols(), pred.rows(), pred.cols());
  if (row_mask.size() != static_cast<std::size_t>(pred.rows())) {
    throw std::invalid_argument("masked_mse_loss: mask length differs from row count");
  }
  if (grad) grad->setZero(pred.rows(), pred.cols());
  Eigen::Index selected = 0;
  for (bool m : row_mask) selected += m ? 1 : 0;
  if (selected == 0) return T(0);
  const auto n = static_cast<T>(selected * pred.cols());
  T total = 0;
  for (Eigen::Index r = 0; r < pred.rows(); ++r) {
    if (!row_mask[static_cast<std::size_t>(r)]) continue;
    const auto diff = (pred.row(r) - target.row(r)).eval();
    total += diff.squaredNorm();
    if (grad) grad->row(r) = diff * (T(2) / n);
  }
  return total / n;
}

template <typename T>
Matrix<T> gather_rows(const Matrix<T>& x, const std::vector<int>& rows) {
  Matrix<T> out(static_cast<Eigen::Index>(rows.size()), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = x.row(rows[i]);
  }
  return out;
}

template <typename T>
void scatter_add_rows(Matrix<T>& dst, const Matrix<T>& src, const std::vector<int>& rows) {
  for (std::size_t i = 0; i < rows.size(); ++i) {
    dst.row(rows[i]) += src.row(static_cast<Eigen::Index>(i));
  }
}

template <typename T>
Matrix<T> hconcat(const std::vector<const Matrix<T>*>& blocks) {
  if (blocks.empty()) return {};
  const Eigen::Index rows = blocks.front()->rows();
  Eigen::Index cols = 0;
  for (const auto* b : blocks) {
    if (b->rows() != rows) throw std::invalid_argument("hconcat: row counts differ");
    cols += b->cols();
  }
  Matrix<T> out(rows, cols);
  Eigen::Index at = 0;
  for (const auto* b : blocks) {
    out.middleCols(at, b->cols()) = *b;
    at += b->cols();
  }
  return out;
}

#define PTTR_INSTANTIATE(T)                                                                  \
  template Matrix<T> relu(const Matrix<T>&);                                                 \
  template Matrix<T> relu_backward(const Matrix<T>&, const Matrix<T>&);                      \
  template Matrix<T> softmax_rows(const Matrix<T>&);                                         \
  template Matrix<T> softmax_rows_backward(const Matrix<T>&, const Matrix<T>&);              \
  template Matrix<T> l2_normalize_rows(const Matrix<T>&, T);                                 \
  template Matrix<T> l2_normalize_rows_backward(const Matrix<T>&, const Matrix<T>&, T);      \
  template T bce_with_logits(const Matrix<T>&, const Matrix<T>&, Matrix<T>*);                \
  template T mse_loss(const Matrix<T>&, const Matrix<T>&, Matrix<T>*);                       \
  template T masked_mse_loss(const Matrix<T>&, const Matrix<T>&, const std::vector<bool>&,   \
                             Matrix<T>*);                                                    \
  template Matrix<T> gather_rows(const Matrix<T>&, const std::vector<int>&);                 \
  template void scatter_add_rows(Matrix<T>&, const Matrix<T>&, const std::vector<int>&);     \
  template Matrix<T> hconcat(const std::vector<const Matrix<T>*>&);

PTTR_INSTANTIATE(float)
PTTR_INSTANTIATE(double)
#undef PTTR_INSTANTIATE

}  // namespace pttr
