#include "pttr/metrics.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <fstream>
#include <map>
#include <stdexcept>
#include <thread>

#include <json.hpp>

namespace pttr {

namespace {

void require_nonempty(std::size_t n, const char* what) {
  if (n == 0) throw std::invalid_argument(std::string(what) + ": empty input");
}

double trapezoid(const std::vector<double>& ys, double step) {
  double area = 0.0;
  for (std::size_t i = 1; i < ys.size(); ++i) area += 0.5 * (ys[i - 1] + ys[i]) * step;
  return area;
}

}  // namespace

double success_metric(std::span<const double> ious) {
  require_nonempty(ious.size(), "success_metric");
  double sum = 0.0;
  for (double v : ious) {
    if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("IoU outside [0, 1]");
    sum += v;
  }
  return 100.0 * sum / static_cast<double>(ious.size());
}

double success_auc(std::span<const double> ious, int thresholds) {
  require_nonempty(ious.size(), "success_auc");
  if (thresholds < 2) throw std::invalid_argument("success_auc needs >= 2 thresholds");
  std::vector<double> sorted(ious.begin(), ious.end());
  std::sort(sorted.begin(), sorted.end());
  const double n = static_cast<double>(sorted.size());
  std::vector<double> curve(static_cast<std::size_t>(thresholds));
  for (int i = 0; i < thresholds; ++i) {
    const double t = static_cast<double>(i) / (thresholds - 1);
    const auto below = std::lower_bound(sorted.begin(), sorted.end(), t) - sorted.begin();
    curve[static_cast<std::size_t>(i)] = (n - static_cast<double>(below)) / n;
  }
  return std::clamp(100.0 * trapezoid(curve, 1.0 / (thresholds - 1)), 0.0, 100.0);
}

double precision_metric(std::span<const double> distances) {
  require_nonempty(distances.size(), "precision_metric");
  constexpr int kThresholds = 201;
  constexpr double kMaxDistance = 2.0;
  // Absorbs round-off so an exact prediction counts at tau = 0.
  constexpr double kSlack = 1e-9;
  std::vector<double> sorted(distances.begin(), distances.end());
  for (double d : sorted) {
    if (!(d >= 0.0)) throw std::invalid_argument("distance must be >= 0");
  }
  std::sort(sorted.begin(), sorted.end());
  const double n = static_cast<double>(sorted.size());
  std::vector<double> curve(kThresholds);
  for (int i = 0; i < kThresholds; ++i) {
    const double tau = kMaxDistance * i / (kThresholds - 1);
    const auto within = std::upper_bound(sorted.begin(), sorted.end(), tau + kSlack) - sorted.begin();
    curve[static_cast<std::size_t>(i)] = static_cast<double>(within) / n;
  }
  // Clamped: the summed trapezoids can overshoot 100 by an ulp.
  return std::clamp(100.0 * trapezoid(curve, kMaxDistance / (kThresholds - 1)) / kMaxDistance, 0.0, 100.0);
}

ClassMetrics weighted_average(const std::vector<ClassMetrics>& classes) {
  ClassMetrics avg;
  avg.label = "Average";
  for (const auto& c : classes) {
    avg.frames += c.frames;
    avg.tracklets += c.tracklets;
    avg.success += c.success * static_cast<double>(c.frames);
    avg.precision += c.precision * static_cast<double>(c.frames);
  }
  if (avg.frames > 0) {
    avg.success /= static_cast<double>(avg.frames);
    avg.precision /= static_cast<double>(avg.frames);
  }
  return avg;
}

// ---------------------------------------------------------------------------
// Report serialization

namespace {

nlohmann::json class_to_json(const ClassMetrics& c) {
  return {{"label", c.label},
          {"success", c.success},
          {"precision", c.precision},
          {"frames", c.frames},
          {"tracklets", c.tracklets}};
}

ClassMetrics class_from_json(const nlohmann::json& j) {
  ClassMetrics c;
  c.label = j.at("label").get<std::string>();
  c.success = j.at("success").get<double>();
  c.precision = j.at("precision").get<double>();
  c.frames = j.at("frames").get<std::size_t>();
  c.tracklets = j.at("tracklets").get<std::size_t>();
  for (double v : {c.success, c.precision}) {
    if (!(v >= 0.0 && v <= 100.0)) throw std::invalid_argument("metric outside [0, 100]");
  }
  return c;
}

}  // namespace

std::string EvalReport::to_json() const {
  nlohmann::json j;
  j["classes"] = nlohmann::json::array();
  for (const auto& c : classes) j["classes"].push_back(class_to_json(c));
  j["average"] = class_to_json(average);
  j["failures"] = failures;
  return j.dump(2);
}

EvalReport EvalReport::from_json(const std::string& text) {
  EvalReport r;
  try {
    const auto j = nlohmann::json::parse(text);
    for (const auto& c : j.at("classes")) r.classes.push_back(class_from_json(c));
    r.average = class_from_json(j.at("average"));
    r.failures = j.at("failures").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("bad evaluation report: ") + e.what());
  }
  return r;
}

// ---------------------------------------------------------------------------
// Evaluation

EvalReport evaluate(const std::vector<Tracklet>& tracklets, TrackingModel& model,
                    const TrainConfig& cfg, std::uint64_t seed, int threads, bool pass_gt) {
  if (tracklets.empty()) throw std::invalid_argument("evaluate: no tracklets");
  const std::size_t n = tracklets.size();
  std::vector<std::vector<FrameRecord>> per_tracklet(n);
  std::vector<std::string> errors(n);

  auto run_one = [&](std::size_t i) {
    try {
      std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                        static_cast<std::uint32_t>(i)};
      Rng rng(seq);
      const Tracklet& t = tracklets[i];
      const TrackResult res = track_tracklet(t, model, cfg, rng, pass_gt);
      for (std::size_t f = 1; f < t.frames.size(); ++f) {
        FrameRecord r;
        r.tracklet = i;
        r.frame = f;
        r.predicted = res.boxes[f];
        r.iou = box_iou_3d(res.boxes[f], t.frames[f].box);
        r.center_distance = distance(res.boxes[f].center, t.frames[f].box.center);
        r.flagged = res.flagged[f];
        per_tracklet[i].push_back(r);
      }
    } catch (const std::exception& e) {
      errors[i] = "tracklet " + std::to_string(i) + " (" + tracklets[i].object_id + "): " + e.what();
    }
  };

  const auto workers = static_cast<std::size_t>(std::clamp(threads, 1, 256));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) run_one(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < std::min(workers, n); ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) run_one(i);
      });
    }
    for (auto& th : pool) th.join();
  }

  EvalReport report;
  struct Pooled {
    std::vector<double> ious, dists;
    std::size_t tracklets = 0;
  };
  std::map<std::string, Pooled> by_label;
  for (std::size_t i = 0; i < n; ++i) {
    if (!errors[i].empty()) {
      report.failures.push_back(errors[i]);
      continue;
    }
    auto& pool = by_label[tracklets[i].label];
    ++pool.tracklets;
    for (const auto& r : per_tracklet[i]) {
      pool.ious.push_back(r.iou);
      pool.dists.push_back(r.center_distance);
      report.records.push_back(r);
    }
  }
  for (const auto& [label, pool] : by_label) {
    ClassMetrics c;
    c.label = label;
    c.tracklets = pool.tracklets;
    c.frames = pool.ious.size();
    if (c.frames > 0) {
      c.success = success_metric(pool.ious);
      c.precision = precision_metric(pool.dists);
    }
    report.classes.push_back(c);
  }
  report.average = weighted_average(report.classes);
  return report;
}

std::string format_report_table(const EvalReport& report) {
  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%-12s %9s %8s %9s %10s\n", "class", "tracklets", "frames",
                "success", "precision");
  out += buf;
  auto row = [&](const ClassMetrics& c) {
    std::snprintf(buf, sizeof(buf), "%-12s %9zu %8zu %9.1f %10.1f\n", c.label.c_str(), c.tracklets,
                  c.frames, c.success, c.precision);
    out += buf;
  };
  for (const auto& c : report.classes) row(c);
  row(report.average);
  for (const auto& f : report.failures) out += "failed: " + f + "\n";
  return out;
}

void write_records_csv(const std::string& path, const std::vector<FrameRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "tracklet,frame,cx,cy,cz,l,w,h,yaw,iou,center_distance,flagged\n";
  char buf[512];
  for (const auto& r : records) {
    const auto b = r.predicted.to_array();
    std::snprintf(buf, sizeof(buf), "%zu,%zu,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%d\n",
                  r.tracklet, r.frame, b[0], b[1], b[2], b[3], b[4], b[5], b[6], r.iou,
                  r.center_distance, r.flagged ? 1 : 0);
    out << buf;
  }
}

}  // namespace pttr
