#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace oracle {

namespace {

double sq(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    const double diff = a[j] - b[j];
    d += diff * diff;
  }
  return d;
}

}  // namespace

std::vector<int> greedy_fps(const Rows& rows, std::size_t k, std::size_t start) {
  std::vector<int> picked{static_cast<int>(start)};
  while (picked.size() < std::min(k, rows.size())) {
    int best = -1;
    double best_d = -1.0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (std::find(picked.begin(), picked.end(), static_cast<int>(i)) != picked.end()) continue;
      double m = INFINITY;
      for (int s : picked) m = std::min(m, sq(rows[i], rows[static_cast<std::size_t>(s)]));
      if (m > best_d) {
        best_d = m;
        best = static_cast<int>(i);
      }
    }
    picked.push_back(best);
  }
  return picked;
}

Rows coords_as_rows(const std::vector<pttr::Point3>& pts) {
  Rows out;
  for (const auto& p : pts) out.push_back({p.x, p.y, p.z});
  return out;
}

std::vector<double> min_distances(const Rows& search, const Rows& templ) {
  std::vector<double> v;
  for (const auto& s : search) {
    double m = INFINITY;
    for (const auto& t : templ) m = std::min(m, std::sqrt(sq(s, t)));
    v.push_back(m);
  }
  return v;
}

std::vector<int> sort_select(const std::vector<double>& scores, std::size_t k) {
  std::vector<int> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](int a, int b) {
    return scores[a] != scores[b] ? scores[a] < scores[b] : a < b;
  });
  idx.resize(std::min(k, idx.size()));
  return idx;
}

std::vector<std::vector<int>> ball_query(const std::vector<pttr::Point3>& queries,
                                         const std::vector<pttr::Point3>& cloud, double radius,
                                         std::size_t max_k) {
  std::vector<std::vector<int>> out;
  for (const auto& q : queries) {
    std::vector<int> hits;
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      const double d = std::sqrt(std::pow(q.x - cloud[i].x, 2) + std::pow(q.y - cloud[i].y, 2) +
                                 std::pow(q.z - cloud[i].z, 2));
      if (d <= radius) hits.push_back(static_cast<int>(i));
    }
    if (hits.size() > max_k) hits.resize(max_k);
    out.push_back(hits);
  }
  return out;
}

pttr::MatrixD local_pool(const std::vector<pttr::Point3>& queries,
                         const std::vector<pttr::Point3>& cloud, const pttr::MatrixD& feats,
                         double radius) {
  pttr::MatrixD out = pttr::MatrixD::Zero(static_cast<Eigen::Index>(queries.size()), feats.cols());
  const auto groups = ball_query(queries, cloud, radius, cloud.size());
  for (std::size_t q = 0; q < queries.size(); ++q) {
    for (Eigen::Index c = 0; c < feats.cols(); ++c) {
      double m = -INFINITY;
      for (int i : groups[q]) m = std::max(m, feats(i, c));
      if (!groups[q].empty()) out(static_cast<Eigen::Index>(q), c) = m;
    }
  }
  return out;
}

bool inside(const pttr::Box3D& box, const pttr::Point3& p) {
  const double c = std::cos(box.yaw), s = std::sin(box.yaw);
  const double dx = p.x - box.center.x, dy = p.y - box.center.y, dz = p.z - box.center.z;
  const double lx = c * dx + s * dy;
  const double ly = -s * dx + c * dy;
  return std::abs(lx) <= box.size.length / 2 && std::abs(ly) <= box.size.width / 2 &&
         std::abs(dz) <= box.size.height / 2;
}

double monte_carlo_iou(const pttr::Box3D& a, const pttr::Box3D& b, std::size_t samples,
                       std::uint64_t seed) {
  double lo[3] = {INFINITY, INFINITY, INFINITY};
  double hi[3] = {-INFINITY, -INFINITY, -INFINITY};
  for (const auto* box : {&a, &b}) {
    for (const auto& c : pttr::box_corners(*box)) {
      const double v[3] = {c.x, c.y, c.z};
      for (int i = 0; i < 3; ++i) {
        lo[i] = std::min(lo[i], v[i]);
        hi[i] = std::max(hi[i], v[i]);
      }
    }
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::size_t in_a = 0, in_b = 0, both = 0;
  for (std::size_t i = 0; i < samples; ++i) {
    const pttr::Point3 p{lo[0] + u(rng) * (hi[0] - lo[0]), lo[1] + u(rng) * (hi[1] - lo[1]),
                         lo[2] + u(rng) * (hi[2] - lo[2])};
    const bool ia = inside(a, p), ib = inside(b, p);
    in_a += ia;
    in_b += ib;
    both += ia && ib;
  }
  const double uni = static_cast<double>(in_a + in_b - both);
  return uni > 0 ? static_cast<double>(both) / uni : 0.0;
}

void jitter_biases(const pttr::ParameterList<double>& params, pttr::Rng& rng) {
  std::uniform_real_distribution<double> mag(0.02, 0.1);
  std::bernoulli_distribution sign(0.5);
  for (auto* p : params) {
    if (p->name.size() < 5 || p->name.compare(p->name.size() - 5, 5, ".bias") != 0) continue;
    for (Eigen::Index i = 0; i < p->value.size(); ++i) {
      p->value.data()[i] = (sign(rng) ? 1.0 : -1.0) * mag(rng);
    }
  }
}

SamplingFixture sampling_fixture(std::uint64_t seed, std::size_t search_points,
                                 double fg_fraction) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::normal_distribution<double> noise(0.0, 0.02);
  const pttr::BoxSize size{4.0, 1.8, 1.6};
  // A point on the object's surface (object centered at the origin, heading +x).
  auto surface = [&] {
    const double hl = size.length / 2, hw = size.width / 2, hh = size.height / 2;
    const int face = static_cast<int>((u(rng) + 1.0) * 1.5);  // 0, 1, 2
    const double sgn = u(rng) < 0 ? -1.0 : 1.0;
    pttr::Point3 p{u(rng) * hl, u(rng) * hw, u(rng) * hh};
    if (face == 0) p.x = sgn * hl;
    if (face == 1) p.y = sgn * hw;
    if (face >= 2) p.z = sgn * hh;
    return pttr::Point3{p.x + noise(rng), p.y + noise(rng), p.z + noise(rng)};
  };
  SamplingFixture f;
  const auto fg = static_cast<std::size_t>(std::round(fg_fraction * search_points));
  // Background: ground plane and clutter over the search region (object box + 2 m per side).
  const pttr::Box3D object{{0, 0, 0}, size, 0.0};
  for (std::size_t i = 0; i < search_points; ++i) {
    if (i < fg) {
      f.search.push_back(surface());
      f.foreground.push_back(true);
      continue;
    }
    pttr::Point3 p;
    do {
      const bool ground = u(rng) < 0.5;
      p = {u(rng) * 4.0, u(rng) * 2.9, ground ? -0.9 + 0.02 * u(rng) : u(rng) * 2.8};
    } while (inside(object, p));
    f.search.push_back(p);
    f.foreground.push_back(false);
  }
  // Shuffle so foreground points are not a prefix.
  std::vector<std::size_t> perm(search_points);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<pttr::Point3> pts;
  std::vector<bool> fgm;
  for (std::size_t i : perm) {
    pts.push_back(f.search[i]);
    fgm.push_back(f.foreground[i]);
  }
  f.search = std::move(pts);
  f.foreground = std::move(fgm);

  std::vector<pttr::Point3> templ;
  for (int i = 0; i < 128; ++i) templ.push_back(surface());
  const pttr::Point3 ref = pttr::centroid(templ);

  pttr::Mlp<double> embed("embed", {3, 32}, true, false);
  pttr::Rng init(seed ^ 0x5bd1e995ULL);
  embed.init(init);
  auto encode = [&](const std::vector<pttr::Point3>& pts_in) {
    pttr::MatrixD m(static_cast<Eigen::Index>(pts_in.size()), 3);
    for (std::size_t i = 0; i < pts_in.size(); ++i) {
      m.row(static_cast<Eigen::Index>(i)) << pts_in[i].x - ref.x, pts_in[i].y - ref.y,
          pts_in[i].z - ref.z;
    }
    return embed.forward(m, pttr::Mode::kEval, nullptr);
  };
  f.search_features = encode(f.search);
  f.template_features = encode(templ);
  return f;
}

double foreground_fraction(const std::vector<int>& indices, const std::vector<bool>& foreground) {
  std::size_t hits = 0;
  for (int i : indices) hits += foreground[static_cast<std::size_t>(i)];
  return indices.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(indices.size());
}

}  // namespace oracle
