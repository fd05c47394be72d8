#include "pttr/backbone.hpp"

#include <limits>
#include <stdexcept>

namespace pttr {

namespace {

std::vector<int> prepend(int first, const std::vector<int>& rest) {
  std::vector<int> out{first};
  out.insert(out.end(), rest.begin(), rest.end());
  return out;
}

void check_selection(const SampleSelection& sel, std::size_t n, std::size_t want) {
  if (sel.indices.size() != want) {
    throw std::invalid_argument("selection has " + std::to_string(sel.indices.size()) +
                                " indices, layer expects " + std::to_string(want));
  }
  for (int i : sel.indices) {
    if (i < 0 || static_cast<std::size_t>(i) >= n) {
      throw std::invalid_argument("selection index " + std::to_string(i) + " out of range");
    }
  }
}

}  // namespace

template <typename T>
SetAbstraction<T>::SetAbstraction(const std::string& name, int in_channels,
                                  const SALayerConfig& cfg, bool batchnorm)
    : cfg_(cfg),
      in_channels_(in_channels),
      mlp_(name, prepend(in_channels + 3, cfg.mlp_dims), true, batchnorm) {}

template <typename T>
PointLevel<T> SetAbstraction<T>::forward(const PointLevel<T>& in, const SampleSelection& selection,
                                         Mode mode, Cache* cache) {
  const std::size_t n = in.coords.size();
  if (static_cast<std::size_t>(in.features.rows()) != n || in.features.cols() != in_channels_) {
    throw std::invalid_argument("set abstraction input shape mismatch");
  }
  check_selection(selection, n, selection.indices.size());

  PointLevel<T> out;
  out.coords.reserve(selection.indices.size());
  for (int i : selection.indices) out.coords.push_back(in.coords[static_cast<std::size_t>(i)]);

  const auto groups = ball_query(out.coords, in.coords, cfg_.radius,
                                 static_cast<std::size_t>(cfg_.max_neighbors));
  std::vector<int> neighbor;
  std::vector<int> segment{0};
  for (std::size_t c = 0; c < groups.size(); ++c) {
    if (groups[c].empty()) {
      neighbor.push_back(selection.indices[c]);
    } else {
      neighbor.insert(neighbor.end(), groups[c].begin(), groups[c].end());
    }
    segment.push_back(static_cast<int>(neighbor.size()));
  }

  const auto rows = static_cast<Eigen::Index>(neighbor.size());
  Matrix<T> grouped(rows, in_channels_ + 3);
  const double inv_r = 1.0 / cfg_.radius;
  for (std::size_t c = 0; c < groups.size(); ++c) {
    const Point3& center = out.coords[c];
    for (int g = segment[c]; g < segment[c + 1]; ++g) {
      const int src = neighbor[static_cast<std::size_t>(g)];
      grouped.row(g).head(in_channels_) = in.features.row(src);
      const Point3 rel = (in.coords[static_cast<std::size_t>(src)] - center) * inv_r;
      grouped(g, in_channels_) = static_cast<T>(rel.x);
      grouped(g, in_channels_ + 1) = static_cast<T>(rel.y);
      grouped(g, in_channels_ + 2) = static_cast<T>(rel.z);
    }
  }

  typename Mlp<T>::Cache* mlp_cache = cache ? &cache->mlp : nullptr;
  const Matrix<T> encoded = mlp_.forward(grouped, mode, mlp_cache);
  const Eigen::Index channels = encoded.cols();
  const auto centroids = static_cast<Eigen::Index>(groups.size());
  out.features.resize(centroids, channels);
  std::vector<int> winner(static_cast<std::size_t>(centroids * channels));
  for (Eigen::Index c = 0; c < centroids; ++c) {
    for (Eigen::Index ch = 0; ch < channels; ++ch) {
      int best_row = segment[static_cast<std::size_t>(c)];
      T best = encoded(best_row, ch);
      for (int g = best_row + 1; g < segment[static_cast<std::size_t>(c) + 1]; ++g) {
        if (encoded(g, ch) > best) {
          best = encoded(g, ch);
          best_row = g;
        }
      }
      out.features(c, ch) = best;
      winner[static_cast<std::size_t>(c * channels + ch)] = best_row;
    }
  }

  if (cache) {
    cache->neighbor = std::move(neighbor);
    cache->segment = std::move(segment);
    cache->winner = std::move(winner);
    cache->in_rows = static_cast<Eigen::Index>(n);
  }
  return out;
}

template <typename T>
Matrix<T> SetAbstraction<T>::backward(const Cache& cache, const Matrix<T>& d_out) {
  const Eigen::Index channels = d_out.cols();
  const auto rows = static_cast<Eigen::Index>(cache.neighbor.size());
  Matrix<T> d_encoded = Matrix<T>::Zero(rows, channels);
  for (Eigen::Index c = 0; c < d_out.rows(); ++c) {
    for (Eigen::Index ch = 0; ch < channels; ++ch) {
      d_encoded(cache.winner[static_cast<std::size_t>(c * channels + ch)], ch) += d_out(c, ch);
    }
  }
  const Matrix<T> d_grouped = mlp_.backward(cache.mlp, d_encoded);
  Matrix<T> d_in = Matrix<T>::Zero(cache.in_rows, in_channels_);
  for (Eigen::Index g = 0; g < rows; ++g) {
    d_in.row(cache.neighbor[static_cast<std::size_t>(g)]) += d_grouped.row(g).head(in_channels_);
  }
  return d_in;
}

template <typename T>
Backbone<T>::Backbone(const ModelConfig& cfg) : cfg_(cfg) {
  embed_ = Mlp<T>("backbone.embed", prepend(3, cfg.embed_dims), true, cfg.use_batchnorm);
  int in = cfg.embed_dims.back();
  for (std::size_t l = 0; l < 3; ++l) {
    SALayerConfig layer;
    layer.radius = cfg.sa_radius[l];
    layer.max_neighbors = cfg.sa_max_neighbors;
    layer.mlp_dims = cfg.sa_mlp[l];
    sa_[l] = SetAbstraction<T>("backbone.sa" + std::to_string(l + 1), in, layer, cfg.use_batchnorm);
    in = cfg.sa_mlp[l].back();
  }
}

template <typename T>
void Backbone<T>::init(Rng& rng) {
  embed_.init(rng);
  for (auto& layer : sa_) layer.init(rng);
}

template <typename T>
PointLevel<T> Backbone<T>::embed(const std::vector<Point3>& points, const Point3& reference,
                                 Mode mode, typename Mlp<T>::Cache* cache) {
  Matrix<T> raw(static_cast<Eigen::Index>(points.size()), 3);
  for (std::size_t i = 0; i < points.size(); ++i) {
    const Point3 rel = points[i] - reference;
    raw(static_cast<Eigen::Index>(i), 0) = static_cast<T>(rel.x);
    raw(static_cast<Eigen::Index>(i), 1) = static_cast<T>(rel.y);
    raw(static_cast<Eigen::Index>(i), 2) = static_cast<T>(rel.z);
  }
  return {points, embed_.forward(raw, mode, cache)};
}

template <typename T>
typename Backbone<T>::Output Backbone<T>::forward(const std::vector<Point3>& template_points,
                                                  const std::vector<Point3>& search_points,
                                                  const Point3& reference, Mode mode, Rng& rng,
                                                  const BackboneSelections* replay, Cache* cache) {
  if (template_points.empty()) throw std::invalid_argument("backbone: empty template cloud");
  if (search_points.empty()) throw std::invalid_argument("backbone: empty search cloud");
  Output out;
  auto& tl = out.template_branch.levels;
  auto& sl = out.search_branch.levels;
  tl[0] = embed(template_points, reference, mode, cache ? &cache->template_branch.embed : nullptr);
  sl[0] = embed(search_points, reference, mode, cache ? &cache->search_branch.embed : nullptr);

  for (std::size_t l = 0; l < 3; ++l) {
    // The template level must exist before the search branch can sample against it.
    SampleSelection tsel =
        replay ? replay->template_levels[l]
               : sample_points<T>(cfg_.template_sampler, tl[l].coords, tl[l].features, nullptr,
                                  static_cast<std::size_t>(cfg_.template_pyramid[l]), rng);
    check_selection(tsel, tl[l].coords.size(), static_cast<std::size_t>(cfg_.template_pyramid[l]));
    tl[l + 1] = sa_[l].forward(tl[l], tsel, mode, cache ? &cache->template_branch.sa[l] : nullptr);
    SampleSelection ssel =
        replay ? replay->search_levels[l]
               : sample_points<T>(cfg_.search_samplers[l], sl[l].coords, sl[l].features,
                                  &tl[l].features, static_cast<std::size_t>(cfg_.search_pyramid[l]),
                                  rng);
    check_selection(ssel, sl[l].coords.size(), static_cast<std::size_t>(cfg_.search_pyramid[l]));
    sl[l + 1] = sa_[l].forward(sl[l], ssel, mode, cache ? &cache->search_branch.sa[l] : nullptr);
    out.selections.template_levels[l] = std::move(tsel);
    out.selections.search_levels[l] = std::move(ssel);
  }
  return out;
}

template <typename T>
void Backbone<T>::backward_branch(const BranchCache& cache, const Matrix<T>& d_final) {
  Matrix<T> g = d_final;
  for (std::size_t l = 3; l-- > 0;) g = sa_[l].backward(cache.sa[l], g);
  embed_.backward(cache.embed, g);
}

template <typename T>
void Backbone<T>::backward(const Cache& cache, const Matrix<T>& d_template_final,
                           const Matrix<T>& d_search_final) {
  backward_branch(cache.template_branch, d_template_final);
  backward_branch(cache.search_branch, d_search_final);
}

template <typename T>
void Backbone<T>::collect(ParameterList<T>& out) {
  embed_.collect(out);
  for (auto& layer : sa_) layer.collect(out);
}

template class SetAbstraction<float>;
template class SetAbstraction<double>;
template class Backbone<float>;
template class Backbone<double>;

}  // namespace pttr
