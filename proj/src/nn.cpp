#include "pttr/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace pttr {

template <typename To, typename From>
void copy_parameters(const ParameterList<To>& dst, const ParameterList<From>& src) {
  if (dst.size() != src.size()) {
    throw std::invalid_argument("copy_parameters: parameter counts differ");
  }
  for (std::size_t i = 0; i < dst.size(); ++i) {
    if (dst[i]->name != src[i]->name) {
      throw std::invalid_argument("copy_parameters: name mismatch " + dst[i]->name + " vs " +
                                  src[i]->name);
    }
    check_shape(dst[i]->name.c_str(), src[i]->value.rows(), src[i]->value.cols(),
                dst[i]->value.rows(), dst[i]->value.cols());
    dst[i]->value = src[i]->value.template cast<To>();
  }
}

template void copy_parameters(const ParameterList<float>&, const ParameterList<double>&);
template void copy_parameters(const ParameterList<double>&, const ParameterList<float>&);
template void copy_parameters(const ParameterList<float>&, const ParameterList<float>&);
template void copy_parameters(const ParameterList<double>&, const ParameterList<double>&);

// ---------------------------------------------------------------------------
// Linear

template <typename T>
Linear<T>::Linear(const std::string& name, int in_dim, int out_dim) {
  if (in_dim < 1 || out_dim < 1) throw std::invalid_argument("Linear " + name + ": bad dims");
  weight.reset(name + ".weight", out_dim, in_dim);
  bias.reset(name + ".bias", 1, out_dim);
}

template <typename T>
void Linear<T>::init(Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(in_dim()));
  std::uniform_real_distribution<double> u(-bound, bound);
  for (Eigen::Index i = 0; i < weight.value.size(); ++i) weight.value.data()[i] = T(u(rng));
  bias.value.setZero();
}

template <typename T>
Matrix<T> Linear<T>::forward(const Matrix<T>& x) const {
  if (x.cols() != in_dim()) {
    throw std::invalid_argument(weight.name + ": input has " + std::to_string(x.cols()) +
                                " columns, expected " + std::to_string(in_dim()));
  }
  Matrix<T> y = x * weight.value.transpose();
  y.rowwise() += bias.value.row(0);
  return y;
}

template <typename T>
Matrix<T> Linear<T>::backward(const Matrix<T>& x, const Matrix<T>& dy) {
  check_shape(weight.name.c_str(), dy.rows(), dy.cols(), x.rows(), out_dim());
  weight.grad.noalias() += dy.transpose() * x;
  bias.grad.row(0) += dy.colwise().sum();
  return dy * weight.value;
}

template <typename T>
void Linear<T>::collect(ParameterList<T>& out) {
  out.push_back(&weight);
  out.push_back(&bias);
}

// ---------------------------------------------------------------------------
// BatchNorm

template <typename T>
BatchNorm<T>::BatchNorm(const std::string& name, int channels) {
  gamma.reset(name + ".gamma", 1, channels);
  gamma.value.setOnes();
  beta.reset(name + ".beta", 1, channels);
  running_mean.reset(name + ".running_mean", 1, channels, false);
  running_var.reset(name + ".running_var", 1, channels, false);
  running_var.value.setOnes();
}

template <typename T>
Matrix<T> BatchNorm<T>::forward(const Matrix<T>& x, Mode mode, Cache* cache) {
  const Eigen::Index c = gamma.value.cols();
  if (x.cols() != c) throw std::invalid_argument(gamma.name + ": channel mismatch");
  Matrix<T> mean(1, c);
  Matrix<T> var(1, c);
  const bool training = mode == Mode::kTrain && x.rows() > 0;
  if (training) {
    mean = x.colwise().mean();
    var = (x.rowwise() - mean.row(0)).array().square().colwise().mean();
    const T m = T(kMomentum);
    running_mean.value = (T(1) - m) * running_mean.value + m * mean;
    running_var.value = (T(1) - m) * running_var.value + m * var;
  } else {
    mean = running_mean.value;
    var = running_var.value;
  }
  Matrix<T> inv_std = (var.array() + T(kEps)).rsqrt().matrix();
  Matrix<T> xhat = ((x.rowwise() - mean.row(0)).array().rowwise() * inv_std.row(0).array()).matrix();
  Matrix<T> y = (xhat.array().rowwise() * gamma.value.row(0).array()).matrix();
  y.rowwise() += beta.value.row(0);
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->inv_std = std::move(inv_std);
    cache->training = training;
  }
  return y;
}

template <typename T>
Matrix<T> BatchNorm<T>::backward(const Cache& cache, const Matrix<T>& dy) {
  gamma.grad.row(0) += (dy.array() * cache.xhat.array()).colwise().sum().matrix();
  beta.grad.row(0) += dy.colwise().sum();
  const Matrix<T> dxhat = (dy.array().rowwise() * gamma.value.row(0).array()).matrix();
  if (!cache.training) {
    return (dxhat.array().rowwise() * cache.inv_std.row(0).array()).matrix();
  }
  const T n = static_cast<T>(dy.rows());
  const Matrix<T> sum_dxhat = dxhat.colwise().sum();
  const Matrix<T> sum_dxhat_xhat = (dxhat.array() * cache.xhat.array()).colwise().sum().matrix();
  Matrix<T> dx = dxhat * n;
  dx.rowwise() -= sum_dxhat.row(0);
  dx -= (cache.xhat.array().rowwise() * sum_dxhat_xhat.row(0).array()).matrix();
  return (dx.array().rowwise() * (cache.inv_std.row(0).array() / n)).matrix();
}

template <typename T>
void BatchNorm<T>::collect(ParameterList<T>& out) {
  out.push_back(&gamma);
  out.push_back(&beta);
  out.push_back(&running_mean);
  out.push_back(&running_var);
}

// ---------------------------------------------------------------------------
// Mlp

template <typename T>
Mlp<T>::Mlp(const std::string& name, const std::vector<int>& dims, bool final_activation,
            bool batchnorm)
    : final_activation_(final_activation) {
  if (dims.size() < 2) throw std::invalid_argument("Mlp " + name + " needs at least 2 dims");
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    layers_.emplace_back(name + "." + std::to_string(l), dims[l], dims[l + 1]);
  }
  if (batchnorm) {
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      if (activated(l)) norms_.emplace_back(name + ".bn" + std::to_string(l), dims[l + 1]);
    }
  }
}

template <typename T>
void Mlp<T>::init(Rng& rng) {
  for (auto& layer : layers_) layer.init(rng);
}

template <typename T>
Matrix<T> Mlp<T>::forward(const Matrix<T>& x, Mode mode, Cache* cache) {
  if (cache) {
    cache->inputs.clear();
    cache->pre_activation.clear();
    cache->bn.clear();
  }
  Matrix<T> h = x;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    Matrix<T> z = layers_[l].forward(h);
    if (cache) cache->inputs.push_back(std::move(h));
    if (activated(l)) {
      if (!norms_.empty()) {
        typename BatchNorm<T>::Cache bn_cache;
        z = norms_[l].forward(z, mode, cache ? &bn_cache : nullptr);
        if (cache) cache->bn.push_back(std::move(bn_cache));
      }
      h = relu(z);
      if (cache) cache->pre_activation.push_back(std::move(z));
    } else {
      h = std::move(z);
      if (cache) cache->pre_activation.emplace_back();
    }
  }
  return h;
}

template <typename T>
Matrix<T> Mlp<T>::backward(const Cache& cache, const Matrix<T>& dy) {
  if (cache.inputs.size() != layers_.size()) {
    throw std::logic_error("Mlp::backward called without a matching forward cache");
  }
  Matrix<T> g = dy;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    if (activated(i)) {
      g = relu_backward(cache.pre_activation[i], g);
      if (!norms_.empty()) g = norms_[i].backward(cache.bn[i], g);
    }
    g = layers_[i].backward(cache.inputs[i], g);
  }
  return g;
}

template <typename T>
void Mlp<T>::collect(ParameterList<T>& out) {
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    layers_[l].collect(out);
    if (!norms_.empty() && activated(l)) norms_[l].collect(out);
  }
}

// ---------------------------------------------------------------------------
// Adam

template <typename T>
void Adam<T>::step(const ParameterList<T>& params) {
  for (const auto* p : params) {
    if (p->trainable && !p->grad.allFinite()) {
      throw std::runtime_error("non-finite gradient in parameter " + p->name);
    }
  }
  if (m_.empty()) {
    for (const auto* p : params) {
      m_.push_back(Matrix<T>::Zero(p->value.rows(), p->value.cols()));
      v_.push_back(Matrix<T>::Zero(p->value.rows(), p->value.cols()));
    }
  }
  if (m_.size() != params.size()) throw std::logic_error("Adam: parameter list changed");
  ++step_;
  const double b1 = config_.beta1;
  const double b2 = config_.beta2;
  const T c1 = T(1.0 - std::pow(b1, static_cast<double>(step_)));
  const T c2 = T(1.0 - std::pow(b2, static_cast<double>(step_)));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto* p = params[i];
    if (!p->trainable) continue;
    check_shape(p->name.c_str(), m_[i].rows(), m_[i].cols(), p->value.rows(), p->value.cols());
    m_[i] = T(b1) * m_[i] + T(1.0 - b1) * p->grad;
    v_[i] = T(b2) * v_[i] + T(1.0 - b2) * p->grad.cwiseAbs2();
    const auto mhat = m_[i].array() / c1;
    const auto vhat = v_[i].array() / c2;
    p->value.array() -= T(config_.lr) * mhat / (vhat.sqrt() + T(config_.eps));
  }
}

template class Linear<float>;
template class Linear<double>;
template class BatchNorm<float>;
template class BatchNorm<double>;
template class Mlp<float>;
template class Mlp<double>;
template class Adam<float>;
template class Adam<double>;

}  // namespace pttr
