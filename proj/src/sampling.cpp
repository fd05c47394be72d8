#include "pttr/sampling.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace pttr {

namespace {

// Repeats the selection round-robin until it reaches k entries.
void pad_to(SampleSelection& sel, std::size_t k) {
  const std::size_t n = sel.indices.size();
  if (n >= k || n == 0) return;
  sel.indices.reserve(k);
  for (std::size_t i = 0; sel.indices.size() < k; ++i) sel.indices.push_back(sel.indices[i % n]);
  sel.padded = true;
}

template <typename Dist>
std::vector<int> greedy_farthest(std::size_t n, std::size_t k, std::size_t start, Dist&& dist) {
  if (n == 0) throw std::invalid_argument("farthest point sampling on an empty set");
  if (start >= n) throw std::invalid_argument("farthest point sampling start index out of range");
  const std::size_t take = std::min(k, n);
  std::vector<int> out;
  out.reserve(take);
  std::vector<double> best(n, std::numeric_limits<double>::infinity());
  std::vector<bool> chosen(n, false);
  std::size_t current = start;
  while (out.size() < take) {
    out.push_back(static_cast<int>(current));
    chosen[current] = true;
    if (out.size() == take) break;
    std::size_t next = n;
    double next_d = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (chosen[i]) continue;
      best[i] = std::min(best[i], dist(i, current));
      if (best[i] > next_d) {
        next_d = best[i];
        next = i;
      }
    }
    current = next;
  }
  return out;
}

template <typename T>
void check_feature_pair(const Matrix<T>& search, const Matrix<T>& templ) {
  if (templ.rows() < 1) throw std::invalid_argument("relation-aware sampling needs template points");
  if (search.cols() != templ.cols()) {
    throw std::invalid_argument("search/template feature widths differ (" +
                                std::to_string(search.cols()) + " vs " +
                                std::to_string(templ.cols()) + ")");
  }
}

std::vector<int> order_by_score(const std::vector<double>& v) {
  std::vector<int> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return v[a] < v[b]; });
  return order;
}

template <typename T>
std::vector<double> scores_as_double(const Matrix<T>& search, const Matrix<T>& templ) {
  const auto v = ras_scores(search, templ);
  return {v.begin(), v.end()};
}

}  // namespace

std::string to_string(SamplerKind kind) {
  switch (kind) {
    case SamplerKind::kRandom: return "random";
    case SamplerKind::kDfps: return "dfps";
    case SamplerKind::kFfps: return "ffps";
    case SamplerKind::kRas: return "ras";
    case SamplerKind::kHybrid: return "hybrid";
  }
  return "unknown";
}

SamplerKind parse_sampler(std::string_view name) {
  if (name == "random") return SamplerKind::kRandom;
  if (name == "dfps") return SamplerKind::kDfps;
  if (name == "ffps") return SamplerKind::kFfps;
  if (name == "ras") return SamplerKind::kRas;
  if (name == "hybrid") return SamplerKind::kHybrid;
  throw std::invalid_argument("unknown sampler '" + std::string(name) +
                              "' (expected random|dfps|ffps|ras|hybrid)");
}

SampleSelection sample_random(std::size_t n, std::size_t k, Rng& rng) {
  if (n < 1) throw std::invalid_argument("sample_random needs n >= 1");
  SampleSelection sel{{}, SamplerKind::kRandom, false};
  std::vector<int> pool(n);
  std::iota(pool.begin(), pool.end(), 0);
  const std::size_t take = std::min(k, n);
  // Partial Fisher-Yates.
  for (std::size_t i = 0; i < take; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
  sel.indices.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(take));
  pad_to(sel, k);
  return sel;
}

SampleSelection sample_dfps(std::span<const Point3> coords, std::size_t k, std::size_t start_index) {
  SampleSelection sel{{}, SamplerKind::kDfps, false};
  sel.indices = greedy_farthest(coords.size(), k, start_index, [&](std::size_t a, std::size_t b) {
    return squared_distance(coords[a], coords[b]);
  });
  pad_to(sel, k);
  return sel;
}

template <typename T>
SampleSelection sample_ffps(const Matrix<T>& features, std::size_t k, std::size_t start_index) {
  SampleSelection sel{{}, SamplerKind::kFfps, false};
  const auto n = static_cast<std::size_t>(features.rows());
  const Eigen::Index c = features.cols();
  sel.indices = greedy_farthest(n, k, start_index, [&](std::size_t a, std::size_t b) {
    double d = 0.0;
    for (Eigen::Index j = 0; j < c; ++j) {
      const double diff = static_cast<double>(features(static_cast<Eigen::Index>(a), j)) -
                          static_cast<double>(features(static_cast<Eigen::Index>(b), j));
      d += diff * diff;
    }
    return d;
  });
  pad_to(sel, k);
  return sel;
}

template <typename T>
std::vector<T> ras_scores(const Matrix<T>& search_features, const Matrix<T>& template_features) {
  check_feature_pair(search_features, template_features);
  std::vector<T> v(static_cast<std::size_t>(search_features.rows()));
  for (Eigen::Index i = 0; i < search_features.rows(); ++i) {
    const T min_sq =
        (template_features.rowwise() - search_features.row(i)).rowwise().squaredNorm().minCoeff();
    v[static_cast<std::size_t>(i)] = std::sqrt(min_sq);
  }
  return v;
}

template <typename T>
SampleSelection sample_ras(const Matrix<T>& search_features, const Matrix<T>& template_features,
                           std::size_t k) {
  const auto order = order_by_score(scores_as_double(search_features, template_features));
  if (order.empty()) throw std::invalid_argument("relation-aware sampling on an empty search set");
  SampleSelection sel{{}, SamplerKind::kRas, false};
  sel.indices.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(std::min(k, order.size())));
  pad_to(sel, k);
  return sel;
}

template <typename T>
SampleSelection sample_hybrid(const Matrix<T>& search_features,
                              const Matrix<T>& template_features, std::size_t k, Rng& rng) {
  const auto order = order_by_score(scores_as_double(search_features, template_features));
  const std::size_t n = order.size();
  if (n == 0) throw std::invalid_argument("hybrid sampling on an empty search set");
  SampleSelection sel{{}, SamplerKind::kHybrid, false};
  const std::size_t take = std::min(k, n);
  const std::size_t by_relation = take / 2;
  sel.indices.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(by_relation));
  std::vector<int> rest(order.begin() + static_cast<std::ptrdiff_t>(by_relation), order.end());
  std::sort(rest.begin(), rest.end());
  const SampleSelection extra = sample_random(rest.size(), take - by_relation, rng);
  for (int idx : extra.indices) sel.indices.push_back(rest[static_cast<std::size_t>(idx)]);
  pad_to(sel, k);
  return sel;
}

template <typename T>
SampleSelection sample_points(SamplerKind kind, std::span<const Point3> coords,
                              const Matrix<T>& features, const Matrix<T>* template_features,
                              std::size_t k, Rng& rng) {
  switch (kind) {
    case SamplerKind::kRandom: return sample_random(coords.size(), k, rng);
    case SamplerKind::kDfps: return sample_dfps(coords, k);
    case SamplerKind::kFfps: return sample_ffps(features, k);
    case SamplerKind::kRas:
    case SamplerKind::kHybrid:
      if (template_features == nullptr) {
        throw std::invalid_argument(to_string(kind) + " sampling requires template features");
      }
      return kind == SamplerKind::kRas ? sample_ras(features, *template_features, k)
                                       : sample_hybrid(features, *template_features, k, rng);
  }
  throw std::invalid_argument("bad sampler kind");
}

#define PTTR_INSTANTIATE(T)                                                                   \
  template SampleSelection sample_ffps(const Matrix<T>&, std::size_t, std::size_t);           \
  template std::vector<T> ras_scores(const Matrix<T>&, const Matrix<T>&);                     \
  template SampleSelection sample_ras(const Matrix<T>&, const Matrix<T>&, std::size_t);       \
  template SampleSelection sample_hybrid(const Matrix<T>&, const Matrix<T>&, std::size_t,     \
                                         Rng&);                                               \
  template SampleSelection sample_points(SamplerKind, std::span<const Point3>,                \
                                         const Matrix<T>&, const Matrix<T>*, std::size_t, Rng&);

PTTR_INSTANTIATE(float)
PTTR_INSTANTIATE(double)
#undef PTTR_INSTANTIATE

}  // namespace pttr
