#pragma once

#include <optional>
#include <string>

#include "pttr/nn.hpp"

namespace pttr {

inline constexpr double kNormEps = 1e-12;

template <typename T>
struct AttentionTrace {
  Matrix<T> scores;   // raw query-key similarity, N_q x N_k
  Matrix<T> weights;  // softmax of scores, rows sum to 1
};

/// Single-head relation attention:
///   A = norm(Q Wq) norm(K Wk)^T,  P = softmax(A),
///   out = relu(phi(Q - P (V Wv)))   with offset attention,
///   out = relu(phi(P (V Wv)))       without it.
/// With use_l2_norm off the projections enter A un-normalized.
template <typename T>
class RelationAttention {
 public:
  struct Cache {
    Matrix<T> q, k, v;
    Matrix<T> qp, kp, vp;
    Matrix<T> qn, kn;
    Matrix<T> weights;
    Matrix<T> mixed;  // input of phi
    Matrix<T> phi_pre;
  };
  struct Grads {
    Matrix<T> dq, dk, dv;
  };

  RelationAttention() = default;
  RelationAttention(const std::string& name, int channels, bool use_l2_norm, bool use_offset);

  void init(Rng& rng);
  int channels() const { return wq_.in_dim(); }
  bool use_l2_norm() const { return use_l2_norm_; }
  bool use_offset() const { return use_offset_; }

  Matrix<T> forward(const Matrix<T>& q, const Matrix<T>& k, const Matrix<T>& v, Cache* cache,
                    AttentionTrace<T>* trace = nullptr) const;
  Grads backward(const Cache& cache, const Matrix<T>& d_out);
  void collect(ParameterList<T>& out);

  Linear<T>& wq() { return wq_; }
  Linear<T>& wk() { return wk_; }
  Linear<T>& wv() { return wv_; }
  Linear<T>& phi() { return phi_; }

 private:
  Linear<T> wq_, wk_, wv_, phi_;
  bool use_l2_norm_ = true;
  bool use_offset_ = true;
};

template <typename T>
struct PrtTraces {
  AttentionTrace<T> search_self;
  AttentionTrace<T> template_self;
  AttentionTrace<T> cross;
};

/// Shared self-attention on each branch, then search-to-template cross-attention.
template <typename T>
class PointRelationTransformer {
 public:
  struct Cache {
    typename RelationAttention<T>::Cache search_self, template_self, cross;
  };
  struct Output {
    Matrix<T> matched;          // X^s after cross-attention
    Matrix<T> search_context;   // self-attended search features
    Matrix<T> template_context;  // self-attended template features
    PrtTraces<T> traces;
  };
  struct Grads {
    Matrix<T> d_search, d_template;
  };

  PointRelationTransformer() = default;
  PointRelationTransformer(int channels, bool use_l2_norm, bool use_offset);

  void init(Rng& rng);
  Output forward(const Matrix<T>& search, const Matrix<T>& templ, Cache* cache) const;
  Grads backward(const Cache& cache, const Matrix<T>& d_matched);
  void collect(ParameterList<T>& out);

  RelationAttention<T>& self_attention() { return self_; }
  RelationAttention<T>& cross_attention() { return cross_; }

 private:
  RelationAttention<T> self_;
  RelationAttention<T> cross_;
};

/// Parameter-free matching baseline: softmax(norm(Xs) norm(Xt)^T) Xt.
template <typename T>
struct CosineMatchCache {
  Matrix<T> search, templ, sn, tn, weights;
};

template <typename T>
Matrix<T> cosine_match(const Matrix<T>& search, const Matrix<T>& templ,
                       CosineMatchCache<T>* cache = nullptr, AttentionTrace<T>* trace = nullptr);

template <typename T>
std::pair<Matrix<T>, Matrix<T>> cosine_match_backward(const CosineMatchCache<T>& cache,
                                                      const Matrix<T>& d_out);

}  // namespace pttr
