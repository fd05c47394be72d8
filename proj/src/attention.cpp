#include "pttr/attention.hpp"

#include <stdexcept>

namespace pttr {

template <typename T>
RelationAttention<T>::RelationAttention(const std::string& name, int channels, bool use_l2_norm,
                                        bool use_offset)
    : wq_(name + ".wq", channels, channels),
      wk_(name + ".wk", channels, channels),
      wv_(name + ".wv", channels, channels),
      phi_(name + ".phi", channels, channels),
      use_l2_norm_(use_l2_norm),
      use_offset_(use_offset) {}

template <typename T>
void RelationAttention<T>::init(Rng& rng) {
  wq_.init(rng);
  wk_.init(rng);
  wv_.init(rng);
  phi_.init(rng);
}

template <typename T>
Matrix<T> RelationAttention<T>::forward(const Matrix<T>& q, const Matrix<T>& k,
                                        const Matrix<T>& v, Cache* cache,
                                        AttentionTrace<T>* trace) const {
  if (q.rows() < 1 || k.rows() < 1) throw std::invalid_argument("attention needs non-empty token sets");
  if (k.rows() != v.rows()) throw std::invalid_argument("attention key/value counts differ");
  if (q.cols() != channels() || k.cols() != channels() || v.cols() != channels()) {
    throw std::invalid_argument("attention channel mismatch: expected " + std::to_string(channels()));
  }
  Matrix<T> qp = wq_.forward(q);
  Matrix<T> kp = wk_.forward(k);
  Matrix<T> vp = wv_.forward(v);
  Matrix<T> qn = use_l2_norm_ ? l2_normalize_rows(qp, T(kNormEps)) : qp;
  Matrix<T> kn = use_l2_norm_ ? l2_normalize_rows(kp, T(kNormEps)) : kp;
  Matrix<T> scores = qn * kn.transpose();
  Matrix<T> weights = softmax_rows(scores);
  Matrix<T> mixed = weights * vp;
  if (use_offset_) mixed = q - mixed;
  Matrix<T> phi_pre = phi_.forward(mixed);
  Matrix<T> out = relu(phi_pre);
  if (trace) {
    trace->scores = scores;
    trace->weights = weights;
  }
  if (cache) {
    cache->q = q;
    cache->k = k;
    cache->v = v;
    cache->qp = std::move(qp);
    cache->kp = std::move(kp);
    cache->vp = std::move(vp);
    cache->qn = std::move(qn);
    cache->kn = std::move(kn);
    cache->weights = std::move(weights);
    cache->mixed = std::move(mixed);
    cache->phi_pre = std::move(phi_pre);
  }
  return out;
}

template <typename T>
typename RelationAttention<T>::Grads RelationAttention<T>::backward(const Cache& cache,
                                                                    const Matrix<T>& d_out) {
  const Matrix<T> d_phi_pre = relu_backward(cache.phi_pre, d_out);
  const Matrix<T> d_mixed = phi_.backward(cache.mixed, d_phi_pre);
  const Matrix<T> d_attended = use_offset_ ? Matrix<T>(-d_mixed) : d_mixed;
  const Matrix<T> d_weights = d_attended * cache.vp.transpose();
  const Matrix<T> d_vp = cache.weights.transpose() * d_attended;
  const Matrix<T> d_scores = softmax_rows_backward(cache.weights, d_weights);
  const Matrix<T> d_qn = d_scores * cache.kn;
  const Matrix<T> d_kn = d_scores.transpose() * cache.qn;
  const Matrix<T> d_qp = use_l2_norm_ ? l2_normalize_rows_backward(cache.qp, d_qn, T(kNormEps)) : d_qn;
  const Matrix<T> d_kp = use_l2_norm_ ? l2_normalize_rows_backward(cache.kp, d_kn, T(kNormEps)) : d_kn;
  Grads g;
  g.dq = wq_.backward(cache.q, d_qp);
  if (use_offset_) g.dq += d_mixed;
  g.dk = wk_.backward(cache.k, d_kp);
  g.dv = wv_.backward(cache.v, d_vp);
  return g;
}

template <typename T>
void RelationAttention<T>::collect(ParameterList<T>& out) {
  wq_.collect(out);
  wk_.collect(out);
  wv_.collect(out);
  phi_.collect(out);
}

template <typename T>
PointRelationTransformer<T>::PointRelationTransformer(int channels, bool use_l2_norm,
                                                      bool use_offset)
    : self_("prt.self", channels, use_l2_norm, use_offset),
      cross_("prt.cross", channels, use_l2_norm, use_offset) {}

template <typename T>
void PointRelationTransformer<T>::init(Rng& rng) {
  self_.init(rng);
  cross_.init(rng);
}

template <typename T>
typename PointRelationTransformer<T>::Output PointRelationTransformer<T>::forward(
    const Matrix<T>& search, const Matrix<T>& templ, Cache* cache) const {
  Output out;
  out.search_context = self_.forward(search, search, search, cache ? &cache->search_self : nullptr,
                                     &out.traces.search_self);
  out.template_context = self_.forward(templ, templ, templ, cache ? &cache->template_self : nullptr,
                                       &out.traces.template_self);
  out.matched = cross_.forward(out.search_context, out.template_context, out.template_context,
                               cache ? &cache->cross : nullptr, &out.traces.cross);
  return out;
}

template <typename T>
typename PointRelationTransformer<T>::Grads PointRelationTransformer<T>::backward(
    const Cache& cache, const Matrix<T>& d_matched) {
  const auto gc = cross_.backward(cache.cross, d_matched);
  const Matrix<T> d_template_context = gc.dk + gc.dv;
  const auto gs = self_.backward(cache.search_self, gc.dq);
  const auto gt = self_.backward(cache.template_self, d_template_context);
  return {gs.dq + gs.dk + gs.dv, gt.dq + gt.dk + gt.dv};
}

template <typename T>
void PointRelationTransformer<T>::collect(ParameterList<T>& out) {
  self_.collect(out);
  cross_.collect(out);
}

template <typename T>
Matrix<T> cosine_match(const Matrix<T>& search, const Matrix<T>& templ, CosineMatchCache<T>* cache,
                       AttentionTrace<T>* trace) {
  if (search.rows() < 1 || templ.rows() < 1) throw std::invalid_argument("cosine_match: empty token set");
  if (search.cols() != templ.cols()) throw std::invalid_argument("cosine_match: channel mismatch");
  Matrix<T> sn = l2_normalize_rows(search, T(kNormEps));
  Matrix<T> tn = l2_normalize_rows(templ, T(kNormEps));
  Matrix<T> scores = sn * tn.transpose();
  Matrix<T> weights = softmax_rows(scores);
  Matrix<T> out = weights * templ;
  if (trace) {
    trace->scores = scores;
    trace->weights = weights;
  }
  if (cache) {
    cache->search = search;
    cache->templ = templ;
    cache->sn = std::move(sn);
    cache->tn = std::move(tn);
    cache->weights = std::move(weights);
  }
  return out;
}

template <typename T>
std::pair<Matrix<T>, Matrix<T>> cosine_match_backward(const CosineMatchCache<T>& cache,
                                                      const Matrix<T>& d_out) {
  const Matrix<T> d_weights = d_out * cache.templ.transpose();
  Matrix<T> d_templ = cache.weights.transpose() * d_out;
  const Matrix<T> d_scores = softmax_rows_backward(cache.weights, d_weights);
  const Matrix<T> d_sn = d_scores * cache.tn;
  const Matrix<T> d_tn = d_scores.transpose() * cache.sn;
  Matrix<T> d_search = l2_normalize_rows_backward(cache.search, d_sn, T(kNormEps));
  d_templ += l2_normalize_rows_backward(cache.templ, d_tn, T(kNormEps));
  return {std::move(d_search), std::move(d_templ)};
}

template class RelationAttention<float>;
template class RelationAttention<double>;
template class PointRelationTransformer<float>;
template class PointRelationTransformer<double>;
template Matrix<float> cosine_match(const Matrix<float>&, const Matrix<float>&,
                                    CosineMatchCache<float>*, AttentionTrace<float>*);
template Matrix<double> cosine_match(const Matrix<double>&, const Matrix<double>&,
                                     CosineMatchCache<double>*, AttentionTrace<double>*);
template std::pair<Matrix<float>, Matrix<float>> cosine_match_backward(const CosineMatchCache<float>&,
                                                                       const Matrix<float>&);
template std::pair<Matrix<double>, Matrix<double>> cosine_match_backward(
    const CosineMatchCache<double>&, const Matrix<double>&);

}  // namespace pttr
