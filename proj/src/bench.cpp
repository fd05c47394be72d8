#include "pttr/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <stdexcept>

#include "pttr/dataset.hpp"
#include "pttr/pipeline.hpp"

namespace pttr {

BenchReport bench_forward(const TrainConfig& cfg, int iterations, std::uint64_t seed) {
  if (iterations < 1) throw std::invalid_argument("bench needs at least one iteration");
  cfg.validate();
  SynthSpec spec;
  spec.frames = 2;
  spec.points_on_object = 2 * cfg.model.template_points;
  const Tracklet t = synth_tracklet(spec, seed);
  Rng rng(seed);
  const auto in = build_input(t.frames[0].cloud, t.frames[1].cloud, t.frames[0].box,
                              enlarge_box(t.frames[0].box, cfg.search_margin), cfg, rng);
  if (!in) throw std::logic_error("bench fixture produced an empty crop");

  TrackerNet<float> net(cfg.model);
  net.init(rng);
  net.forward(in->template_points, in->search_points, Mode::kEval, rng);

  BenchReport r;
  r.iterations = iterations;
  r.search_points = cfg.model.search_points;
  r.template_points = cfg.model.template_points;
  std::vector<double> totals;
  for (int i = 0; i < iterations; ++i) {
    const auto start = std::chrono::steady_clock::now();
    net.forward(in->template_points, in->search_points, Mode::kEval, rng, nullptr, nullptr,
                &r.mean_stage);
    totals.push_back(
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count());
  }
  const double n = iterations;
  r.mean_stage.backbone_ms /= n;
  r.mean_stage.matching_ms /= n;
  r.mean_stage.coarse_ms /= n;
  r.mean_stage.refine_ms /= n;
  for (double v : totals) r.mean_ms += v / n;
  r.max_ms = *std::max_element(totals.begin(), totals.end());
  std::sort(totals.begin(), totals.end());
  const std::size_t mid = totals.size() / 2;
  r.median_ms = totals.size() % 2 ? totals[mid] : 0.5 * (totals[mid - 1] + totals[mid]);
  return r;
}

std::string format_bench(const BenchReport& r) {
  char buf[1024];
  std::snprintf(buf, sizeof(buf),
                "forward pass, %d search / %d template points, %d iterations\n"
                "%-10s %10s\n"
                "%-10s %10.2f\n%-10s %10.2f\n%-10s %10.2f\n%-10s %10.2f\n"
                "%-10s %10.2f\n%-10s %10.2f\n%-10s %10.2f\n",
                r.search_points, r.template_points, r.iterations, "stage", "ms", "backbone",
                r.mean_stage.backbone_ms, "matching", r.mean_stage.matching_ms, "coarse",
                r.mean_stage.coarse_ms, "refine", r.mean_stage.refine_ms, "mean", r.mean_ms,
                "median", r.median_ms, "max", r.max_ms);
  return buf;
}

}  // namespace pttr
