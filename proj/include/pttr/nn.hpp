#pragma once

#include <string>
#include <vector>

#include "pttr/geometry.hpp"
#include "pttr/numeric.hpp"

namespace pttr {

enum class Mode { kTrain, kEval };

template <typename T>
struct Parameter {
  std::string name;
  Matrix<T> value;
  Matrix<T> grad;
  // Buffers (batch-norm running statistics) are checkpointed but never optimized.
  bool trainable = true;

  void reset(std::string n, Eigen::Index rows, Eigen::Index cols, bool is_trainable = true) {
    name = std::move(n);
    value = Matrix<T>::Zero(rows, cols);
    grad = Matrix<T>::Zero(rows, cols);
    trainable = is_trainable;
  }
  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

template <typename T>
using ParameterList = std::vector<Parameter<T>*>;

template <typename T>
void zero_grads(const ParameterList<T>& params) {
  for (auto* p : params) p->zero_grad();
}

/// Copies values between parameter lists of identical layout (names and shapes checked).
template <typename To, typename From>
void copy_parameters(const ParameterList<To>& dst, const ParameterList<From>& src);

/// y = x * W^T + b, with W stored out x in.
template <typename T>
class Linear {
 public:
  Linear() = default;
  Linear(const std::string& name, int in_dim, int out_dim);

  int in_dim() const { return static_cast<int>(weight.value.cols()); }
  int out_dim() const { return static_cast<int>(weight.value.rows()); }

  /// He-uniform weights, zero bias.
  void init(Rng& rng);
  Matrix<T> forward(const Matrix<T>& x) const;
  /// Accumulates dW, db and returns dx.
  Matrix<T> backward(const Matrix<T>& x, const Matrix<T>& dy);
  void collect(ParameterList<T>& out);

  Parameter<T> weight;
  Parameter<T> bias;
};

/// Normalizes each column over the rows of the input (the rows are the batch).
template <typename T>
class BatchNorm {
 public:
  struct Cache {
    Matrix<T> xhat;
    Matrix<T> inv_std;  // 1 x C
    bool training = false;
  };

  BatchNorm() = default;
  BatchNorm(const std::string& name, int channels);

  Matrix<T> forward(const Matrix<T>& x, Mode mode, Cache* cache);
  Matrix<T> backward(const Cache& cache, const Matrix<T>& dy);
  void collect(ParameterList<T>& out);

  static constexpr double kEps = 1e-5;
  static constexpr double kMomentum = 0.1;

  Parameter<T> gamma;
  Parameter<T> beta;
  Parameter<T> running_mean;
  Parameter<T> running_var;
};

/// Stack of Linear layers; every layer but the last gets (optional BN +) ReLU,
/// unless `final_activation` is set.
template <typename T>
class Mlp {
 public:
  struct Cache {
    std::vector<Matrix<T>> inputs;
    std::vector<Matrix<T>> pre_activation;
    std::vector<typename BatchNorm<T>::Cache> bn;
  };

  Mlp() = default;
  Mlp(const std::string& name, const std::vector<int>& dims, bool final_activation,
      bool batchnorm);

  void init(Rng& rng);
  int in_dim() const { return layers_.front().in_dim(); }
  int out_dim() const { return layers_.back().out_dim(); }
  std::size_t depth() const { return layers_.size(); }

  Matrix<T> forward(const Matrix<T>& x, Mode mode, Cache* cache);
  Matrix<T> backward(const Cache& cache, const Matrix<T>& dy);
  void collect(ParameterList<T>& out);

  std::vector<Linear<T>>& layers() { return layers_; }
  const std::vector<Linear<T>>& layers() const { return layers_; }

 private:
  bool activated(std::size_t layer) const {
    return layer + 1 < layers_.size() || final_activation_;
  }

  std::vector<Linear<T>> layers_;
  std::vector<BatchNorm<T>> norms_;  // empty when batch norm is off
  bool final_activation_ = false;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename T>
class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}

  /// One bias-corrected update over the trainable parameters. Throws
  /// std::runtime_error naming the first parameter with a non-finite gradient.
  void step(const ParameterList<T>& params);

  void set_lr(double lr) { config_.lr = lr; }
  double lr() const { return config_.lr; }
  long steps() const { return step_; }

 private:
  AdamConfig config_;
  std::vector<Matrix<T>> m_;
  std::vector<Matrix<T>> v_;
  long step_ = 0;
};

}  // namespace pttr
