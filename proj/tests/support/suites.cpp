#include "suites.hpp"

#include <chrono>
#include <functional>
#include <random>

#include "oracles.hpp"
#include "pttr/attention.hpp"
#include "pttr/backbone.hpp"
#include "pttr/heads.hpp"
#include "pttr/pipeline.hpp"
#include "pttr/sampling.hpp"

namespace oracle {

using namespace pttr;

namespace {

MatrixD randn(Rng& rng, Eigen::Index r, Eigen::Index c, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  MatrixD m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
  return m;
}

// Entries at least 0.05 away from zero, so ReLU inputs stay off the kink.
MatrixD off_zero(Rng& rng, Eigen::Index r, Eigen::Index c) {
  MatrixD m = randn(rng, r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    double& v = m.data()[i];
    if (std::abs(v) < 0.05) v = v < 0 ? v - 0.05 : v + 0.05;
  }
  return m;
}

std::vector<Point3> cloud(Rng& rng, std::size_t n, double sx, double sy, double sz) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<Point3> pts(n);
  for (auto& p : pts) p = {u(rng) * sx, u(rng) * sy, u(rng) * sz};
  return pts;
}

double weighted(const MatrixD& y, const MatrixD& w) { return (y.array() * w.array()).sum(); }

Parameter<double> input(const std::string& name, MatrixD value) {
  Parameter<double> p;
  p.reset(name, value.rows(), value.cols());
  p.value = std::move(value);
  return p;
}

template <typename F>
CheckResult timed(const std::string& name, double limit, F&& run) {
  const auto t0 = std::chrono::steady_clock::now();
  CheckResult r{name, run(), limit, 0.0};
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

constexpr double kGradLimit = 1e-4;

double elementwise_check(const std::function<MatrixD(const MatrixD&)>& f,
                         const std::function<MatrixD(const MatrixD&, const MatrixD&, const MatrixD&)>& df,
                         MatrixD x, Rng& rng) {
  auto p = input("x", std::move(x));
  const MatrixD w = randn(rng, p.value.rows(), p.value.cols());
  return grad_check(
             [&](bool g) {
               const MatrixD y = f(p.value);
               if (g) p.grad += df(p.value, y, w);
               return weighted(y, w);
             },
             {&p})
      .max_rel_error;
}

}  // namespace

ModelConfig gradcheck_model() {
  ModelConfig m;
  m.search_points = 16;
  m.template_points = 12;
  m.search_pyramid = {12, 8, 6};
  m.template_pyramid = {8, 6, 4};
  m.sa_radius = {0.6, 0.9, 1.2};
  m.embed_dims = {6};
  m.sa_mlp = {{{6, 6}, {8, 8}, {8, 8}}};
  m.head_hidden = 8;
  m.refine_hidden = {8, 8, 8, 8};
  return m;
}

GradCheckResult full_model_grad_check(const ModelConfig& cfg, std::uint64_t seed, double h) {
  Rng rng(seed);
  TrackerNet<double> net(cfg);
  net.init(rng);
  auto params = net.parameters();
  jitter_biases(params, rng);
  const auto t = cloud(rng, static_cast<std::size_t>(cfg.template_points), 0.8, 0.5, 0.4);
  const auto s = cloud(rng, static_cast<std::size_t>(cfg.search_points), 1.2, 1.0, 0.5);
  const Box3D gt{{0.2, 0.1, 0.0}, {1.6, 1.0, 0.8}, 0.1};
  const ForwardRecord record = net.forward(t, s, Mode::kTrain, rng).record;
  return grad_check(
      [&](bool with_grad) {
        typename TrackerNet<double>::Cache cache;
        const auto out = net.forward(t, s, Mode::kTrain, rng, &record, &cache);
        const auto targets = make_targets<double>(out.seeds, gt, 0.0);
        Prediction<double> dc, dr;
        const auto* refined = out.refined ? &*out.refined : nullptr;
        const auto loss = total_loss(out.coarse, refined, targets, 0.7, &dc, &dr);
        if (with_grad) net.backward(cache, dc, refined ? &dr : nullptr);
        return loss.total;
      },
      params, h);
}

std::vector<CheckResult> gradient_suite() {
  std::vector<CheckResult> out;
  Rng rng(2024);
  auto add = [&](const std::string& name, auto&& run) { out.push_back(timed(name, kGradLimit, run)); };

  add("linear", [&] {
    Linear<double> lin("lin", 5, 4);
    lin.init(rng);
    auto x = input("x", randn(rng, 6, 5));
    const MatrixD w = randn(rng, 6, 4);
    return grad_check(
               [&](bool g) {
                 if (g) x.grad += lin.backward(x.value, w);
                 return weighted(lin.forward(x.value), w);
               },
               {&lin.weight, &lin.bias, &x})
        .max_rel_error;
  });
  add("relu", [&] {
    return elementwise_check([](const MatrixD& x) { return relu(x); },
                             [](const MatrixD& x, const MatrixD&, const MatrixD& w) { return relu_backward(x, w); },
                             off_zero(rng, 5, 6), rng);
  });
  add("softmax_rows", [&] {
    return elementwise_check([](const MatrixD& x) { return softmax_rows(x); },
                             [](const MatrixD&, const MatrixD& y, const MatrixD& w) {
                               return softmax_rows_backward(y, w);
                             },
                             randn(rng, 5, 6, 2.0), rng);
  });
  add("l2_normalize_rows", [&] {
    return elementwise_check(
        [](const MatrixD& x) { return l2_normalize_rows(x, kNormEps); },
        [](const MatrixD& x, const MatrixD&, const MatrixD& w) {
          return l2_normalize_rows_backward(x, w, kNormEps);
        },
        randn(rng, 5, 6), rng);
  });
  add("bce_with_logits", [&] {
    auto z = input("z", randn(rng, 9, 1, 3.0));
    MatrixD t(9, 1);
    t << 1, 0, 1, 1, 0, 0, 1, 0, 1;
    return grad_check(
               [&](bool g) {
                 MatrixD d;
                 const double l = bce_with_logits(z.value, t, g ? &d : nullptr);
                 if (g) z.grad += d;
                 return l;
               },
               {&z})
        .max_rel_error;
  });
  add("mse_loss", [&] {
    auto p = input("p", randn(rng, 5, 4));
    const MatrixD t = randn(rng, 5, 4);
    return grad_check(
               [&](bool g) {
                 MatrixD d;
                 const double l = mse_loss(p.value, t, g ? &d : nullptr);
                 if (g) p.grad += d;
                 return l;
               },
               {&p})
        .max_rel_error;
  });
  add("masked_mse_loss", [&] {
    auto p = input("p", randn(rng, 5, 4));
    const MatrixD t = randn(rng, 5, 4);
    const std::vector<bool> mask{true, false, true, true, false};
    return grad_check(
               [&](bool g) {
                 MatrixD d;
                 const double l = masked_mse_loss(p.value, t, mask, g ? &d : nullptr);
                 if (g) p.grad += d;
                 return l;
               },
               {&p})
        .max_rel_error;
  });
  add("mlp", [&] {
    Mlp<double> mlp("mlp", {4, 7, 6, 3}, false, false);
    mlp.init(rng);
    ParameterList<double> params;
    mlp.collect(params);
    jitter_biases(params, rng);
    auto x = input("x", randn(rng, 8, 4));
    params.push_back(&x);
    const MatrixD w = randn(rng, 8, 3);
    return grad_check(
               [&](bool g) {
                 typename Mlp<double>::Cache c;
                 const MatrixD y = mlp.forward(x.value, Mode::kTrain, &c);
                 if (g) x.grad += mlp.backward(c, w);
                 return weighted(y, w);
               },
               params)
        .max_rel_error;
  });
  add("batch_norm", [&] {
    BatchNorm<double> bn("bn", 4);
    bn.gamma.value = randn(rng, 1, 4);
    bn.beta.value = randn(rng, 1, 4);
    auto x = input("x", randn(rng, 10, 4));
    const MatrixD w = randn(rng, 10, 4);
    return grad_check(
               [&](bool g) {
                 typename BatchNorm<double>::Cache c;
                 const MatrixD y = bn.forward(x.value, Mode::kTrain, &c);
                 if (g) x.grad += bn.backward(c, w);
                 return weighted(y, w);
               },
               {&x, &bn.gamma, &bn.beta})
        .max_rel_error;
  });
  for (const auto& [norm, offset] : {std::pair{true, true}, {true, false}, {false, true}, {false, false}}) {
    const std::string name = std::string("relation_attention") + (norm ? "" : " -norm") + (offset ? "" : " -offset");
    add(name, [&, norm = norm, offset = offset] {
      RelationAttention<double> ram("ram", 5, norm, offset);
      ram.init(rng);
      ParameterList<double> params;
      ram.collect(params);
      jitter_biases(params, rng);
      auto q = input("q", randn(rng, 6, 5));
      auto k = input("k", randn(rng, 4, 5));
      auto v = input("v", randn(rng, 4, 5));
      params.insert(params.end(), {&q, &k, &v});
      const MatrixD w = randn(rng, 6, 5);
      return grad_check(
                 [&](bool g) {
                   typename RelationAttention<double>::Cache c;
                   const MatrixD y = ram.forward(q.value, k.value, v.value, &c);
                   if (g) {
                     const auto d = ram.backward(c, w);
                     q.grad += d.dq;
                     k.grad += d.dk;
                     v.grad += d.dv;
                   }
                   return weighted(y, w);
                 },
                 params)
          .max_rel_error;
    });
  }
  add("point_relation_transformer", [&] {
    PointRelationTransformer<double> prt(5, true, true);
    prt.init(rng);
    ParameterList<double> params;
    prt.collect(params);
    jitter_biases(params, rng);
    auto xs = input("xs", randn(rng, 6, 5));
    auto xt = input("xt", randn(rng, 4, 5));
    params.insert(params.end(), {&xs, &xt});
    const MatrixD w = randn(rng, 6, 5);
    return grad_check(
               [&](bool g) {
                 typename PointRelationTransformer<double>::Cache c;
                 const auto y = prt.forward(xs.value, xt.value, &c);
                 if (g) {
                   const auto d = prt.backward(c, w);
                   xs.grad += d.d_search;
                   xt.grad += d.d_template;
                 }
                 return weighted(y.matched, w);
               },
               params)
        .max_rel_error;
  });
  add("cosine_match", [&] {
    auto xs = input("xs", randn(rng, 6, 5));
    auto xt = input("xt", randn(rng, 4, 5));
    const MatrixD w = randn(rng, 6, 5);
    return grad_check(
               [&](bool g) {
                 CosineMatchCache<double> c;
                 const MatrixD y = cosine_match<double>(xs.value, xt.value, &c);
                 if (g) {
                   const auto [ds, dt] = cosine_match_backward(c, w);
                   xs.grad += ds;
                   xt.grad += dt;
                 }
                 return weighted(y, w);
               },
               {&xs, &xt})
        .max_rel_error;
  });
  add("set_abstraction", [&] {
    SALayerConfig cfg;
    cfg.radius = 0.6;
    cfg.mlp_dims = {6, 6};
    SetAbstraction<double> sa("sa", 4, cfg, false);
    sa.init(rng);
    ParameterList<double> params;
    sa.collect(params);
    jitter_biases(params, rng);
    PointLevel<double> in;
    in.coords = cloud(rng, 12, 0.8, 0.5, 0.4);
    auto f = input("f", randn(rng, 12, 4));
    params.push_back(&f);
    const SampleSelection sel = sample_dfps(in.coords, 8);
    const MatrixD w = randn(rng, 8, 6);
    return grad_check(
               [&](bool g) {
                 in.features = f.value;
                 typename SetAbstraction<double>::Cache c;
                 const auto y = sa.forward(in, sel, Mode::kTrain, &c);
                 if (g) f.grad += sa.backward(c, w);
                 return weighted(y.features, w);
               },
               params)
        .max_rel_error;
  });
  add("backbone", [&] {
    ModelConfig m = gradcheck_model();
    m.search_points = m.template_points = 8;
    m.search_pyramid = m.template_pyramid = {6, 4, 2};
    Rng local(1);
    Backbone<double> bb(m);
    bb.init(local);
    ParameterList<double> params;
    bb.collect(params);
    jitter_biases(params, local);
    const auto t = cloud(local, 8, 0.8, 0.5, 0.4);
    const auto s = cloud(local, 8, 1.2, 1.0, 0.5);
    const auto record = bb.forward(t, s, centroid(t), Mode::kTrain, local, nullptr, nullptr).selections;
    const MatrixD wt = randn(local, 2, 8), ws = randn(local, 2, 8);
    return grad_check(
               [&](bool g) {
                 typename Backbone<double>::Cache c;
                 const auto o = bb.forward(t, s, centroid(t), Mode::kTrain, local, &record, &c);
                 if (g) bb.backward(c, wt, ws);
                 return weighted(o.template_branch.final().features, wt) +
                        weighted(o.search_branch.final().features, ws);
               },
               params)
        .max_rel_error;
  });
  add("coarse_head", [&] {
    CoarseHead<double> head(5, 6, false);
    head.init(rng);
    ParameterList<double> params;
    head.collect(params);
    jitter_biases(params, rng);
    auto x = input("x", randn(rng, 7, 5));
    params.push_back(&x);
    const MatrixD wc = randn(rng, 7, 1), wr = randn(rng, 7, 4);
    return grad_check(
               [&](bool g) {
                 typename CoarseHead<double>::Cache c;
                 const auto y = head.forward(x.value, Mode::kTrain, &c);
                 if (g) x.grad += head.backward(c, {wc, wr});
                 return weighted(y.cls, wc) + weighted(y.reg, wr);
               },
               params)
        .max_rel_error;
  });
  add("local_pool", [&] {
    const auto pts = cloud(rng, 24, 2.0, 2.0, 0.5);
    const auto queries = cloud(rng, 10, 2.0, 2.0, 0.5);
    auto f = input("f", randn(rng, 24, 5));
    const MatrixD w = randn(rng, 10, 5);
    return grad_check(
               [&](bool g) {
                 PoolCache c;
                 const MatrixD y = local_pool(queries, pts, f.value, 1.0, &c);
                 if (g) f.grad += local_pool_backward(c, w);
                 return weighted(y, w);
               },
               {&f})
        .max_rel_error;
  });
  add("refine_head", [&] {
    RefineHead<double> head(4, {6, 6, 5, 5}, false);
    head.init(rng);
    ParameterList<double> params;
    head.collect(params);
    jitter_biases(params, rng);
    auto a = input("fs", randn(rng, 7, 4));
    auto b = input("ft", randn(rng, 7, 4));
    auto c = input("xm", randn(rng, 7, 4));
    params.insert(params.end(), {&a, &b, &c});
    const MatrixD wc = randn(rng, 7, 1), wr = randn(rng, 7, 4);
    return grad_check(
               [&](bool g) {
                 typename RefineHead<double>::Cache cache;
                 const auto y = head.forward(a.value, b.value, c.value, Mode::kTrain, &cache);
                 if (g) {
                   const auto d = head.backward(cache, {wc, wr});
                   a.grad += d.d_search_pool;
                   b.grad += d.d_template_pool;
                   c.grad += d.d_matched;
                 }
                 return weighted(y.cls, wc) + weighted(y.reg, wr);
               },
               params)
        .max_rel_error;
  });

  const ModelConfig base = gradcheck_model();
  auto model_variant = [&](const std::string& name, ModelConfig cfg) {
    // Seed 1 puts the no-refinement variant within 1e-5 of a ReLU kink; see test_pipeline.
    add(name, [cfg] { return full_model_grad_check(cfg, 2).max_rel_error; });
  };
  model_variant("model + loss", base);
  ModelConfig cosine = base;
  cosine.use_prt = false;
  model_variant("model + loss, cosine matching", cosine);
  ModelConfig plain = base;
  plain.use_offset = false;
  plain.use_l2_norm = false;
  model_variant("model + loss, plain attention", plain);
  ModelConfig coarse_only = base;
  coarse_only.use_prm = false;
  model_variant("model + loss, no refinement", coarse_only);
  return out;
}

std::vector<CheckResult> sampling_oracle_suite() {
  std::vector<CheckResult> out;
  Rng rng(77);
  auto fixture_size = [&] { return 1 + rng() % 64; };
  out.push_back(timed("dfps vs greedy oracle (100 fixtures)", 1.0, [&] {
    int mismatches = 0;
    for (int trial = 0; trial < 100; ++trial) {
      const std::size_t n = fixture_size();
      const auto pts = cloud(rng, n, 5.0, 5.0, 5.0);
      const std::size_t k = 1 + rng() % n, start = rng() % n;
      mismatches += sample_dfps(pts, k, start).indices != greedy_fps(coords_as_rows(pts), k, start);
    }
    return static_cast<double>(mismatches);
  }));
  out.push_back(timed("ffps vs greedy oracle (100 fixtures)", 1.0, [&] {
    int mismatches = 0;
    for (int trial = 0; trial < 100; ++trial) {
      const auto n = static_cast<Eigen::Index>(fixture_size());
      const MatrixD f = randn(rng, n, 1 + static_cast<Eigen::Index>(rng() % 16));
      const std::size_t k = 1 + rng() % static_cast<std::size_t>(n);
      const std::size_t start = rng() % static_cast<std::size_t>(n);
      mismatches += sample_ffps(f, k, start).indices != greedy_fps(matrix_rows(f), k, start);
    }
    return static_cast<double>(mismatches);
  }));
  out.push_back(timed("ras vs sorting oracle (100 fixtures)", 1.0, [&] {
    int mismatches = 0;
    for (int trial = 0; trial < 100; ++trial) {
      const auto ns = static_cast<Eigen::Index>(fixture_size());
      const auto nt = static_cast<Eigen::Index>(1 + rng() % 32);
      const auto c = static_cast<Eigen::Index>(1 + rng() % 16);
      const MatrixD s = randn(rng, ns, c), t = randn(rng, nt, c);
      const std::size_t k = 1 + rng() % static_cast<std::size_t>(ns);
      mismatches += sample_ras(s, t, k).indices !=
                    sort_select(min_distances(matrix_rows(s), matrix_rows(t)), k);
    }
    return static_cast<double>(mismatches);
  }));
  return out;
}

std::vector<CheckResult> geometry_oracle_suite(std::size_t iou_samples) {
  std::vector<CheckResult> out;
  Rng rng(78);
  out.push_back(timed("ball_query vs brute force (50 fixtures)", 1.0, [&] {
    int mismatches = 0;
    for (int trial = 0; trial < 50; ++trial) {
      const auto pts = cloud(rng, 1 + rng() % 200, 3.0, 3.0, 1.0);
      const auto q = cloud(rng, 1 + rng() % 20, 3.0, 3.0, 1.0);
      const double radius = 0.2 + 0.1 * static_cast<double>(rng() % 10);
      const std::size_t cap = 1 + rng() % 40;
      mismatches += pttr::ball_query(q, pts, radius, cap) != ball_query(q, pts, radius, cap);
    }
    return static_cast<double>(mismatches);
  }));
  out.push_back(timed("local_pool vs brute force (20 fixtures)", 1e-15, [&] {
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
      const auto pts = cloud(rng, 32, 2.0, 2.0, 0.5);
      const auto q = cloud(rng, 12, 2.5, 2.5, 0.5);
      const MatrixD f = randn(rng, 32, 6);
      worst = std::max(worst, (pttr::local_pool(q, pts, f, 1.0) - local_pool(q, pts, f, 1.0))
                                  .cwiseAbs()
                                  .maxCoeff());
    }
    return worst;
  }));
  out.push_back(timed("unit cubes offset 0.5: |iou - 1/3|", 1e-9, [] {
    const Box3D a{{0, 0, 0}, {1, 1, 1}, 0.0};
    const Box3D b{{0.5, 0, 0}, {1, 1, 1}, 0.0};
    return std::abs(box_iou_3d(a, b) - 1.0 / 3.0);
  }));
  out.push_back(timed("iou vs Monte-Carlo (50 rotated pairs): max gap", 0.01, [&] {
    std::uniform_real_distribution<double> pos(-1.0, 1.0), size(0.5, 3.0), yaw(-3.14159, 3.14159);
    double worst = 0.0;
    for (int pair = 0; pair < 50; ++pair) {
      const Box3D a{{pos(rng), pos(rng), 0.3 * pos(rng)}, {size(rng), size(rng), size(rng)}, yaw(rng)};
      const Box3D b{{pos(rng), pos(rng), 0.3 * pos(rng)}, {size(rng), size(rng), size(rng)}, yaw(rng)};
      worst = std::max(worst, std::abs(box_iou_3d(a, b) - monte_carlo_iou(a, b, iou_samples, rng())));
    }
    return worst;
  }));
  return out;
}

}  // namespace oracle
