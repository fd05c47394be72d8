#include "pttr/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "pttr/checkpoint.hpp"

namespace fs = std::filesystem;

namespace pttr {

namespace {

std::string frame_object(std::size_t frame, const std::string& id) {
  return "frame " + std::to_string(frame) + ", object '" + id + "'";
}

}  // namespace

std::vector<Tracklet> build_tracklets(const std::vector<AnnotatedScene>& scenes,
                                      std::size_t min_points, std::size_t min_len) {
  // Validate and index annotations per object.
  std::vector<std::string> order;
  std::map<std::string, std::string> labels;
  std::vector<std::map<std::string, const Annotation*>> by_frame(scenes.size());
  for (std::size_t f = 0; f < scenes.size(); ++f) {
    for (const auto& a : scenes[f].annotations) {
      if (a.object_id.empty()) {
        throw std::invalid_argument("frame " + std::to_string(f) + ": annotation without object_id");
      }
      try {
        a.box.validate();
      } catch (const std::invalid_argument& e) {
        throw std::invalid_argument(frame_object(f, a.object_id) + ": " + e.what());
      }
      if (!by_frame[f].emplace(a.object_id, &a).second) {
        throw std::invalid_argument(frame_object(f, a.object_id) + ": duplicate annotation");
      }
      auto [it, fresh] = labels.emplace(a.object_id, a.label);
      if (fresh) {
        order.push_back(a.object_id);
      } else if (it->second != a.label) {
        throw std::invalid_argument(frame_object(f, a.object_id) + ": class changed from '" +
                                    it->second + "' to '" + a.label + "'");
      }
    }
  }

  struct Run {
    std::size_t start;
    std::size_t object_rank;
    std::vector<std::size_t> frames;
  };
  std::vector<Run> runs;
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    const std::string& id = order[rank];
    Run current{0, rank, {}};
    auto close = [&] {
      if (current.frames.size() >= min_len) runs.push_back(current);
      current.frames.clear();
    };
    for (std::size_t f = 0; f < scenes.size(); ++f) {
      const auto it = by_frame[f].find(id);
      const bool keep = it != by_frame[f].end() &&
                        count_points_in_box(scenes[f].cloud.points, it->second->box) >= min_points;
      if (!keep) {
        close();
        continue;
      }
      if (current.frames.empty()) current.start = f;
      current.frames.push_back(f);
    }
    close();
  }
  std::stable_sort(runs.begin(), runs.end(), [](const Run& a, const Run& b) {
    return a.start != b.start ? a.start < b.start : a.object_rank < b.object_rank;
  });

  std::vector<Tracklet> out;
  for (const auto& run : runs) {
    Tracklet t;
    t.object_id = order[run.object_rank];
    t.label = labels.at(t.object_id);
    for (std::size_t f : run.frames) {
      t.frames.push_back({scenes[f].cloud, by_frame[f].at(t.object_id)->box});
    }
    out.push_back(std::move(t));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Cloud and tracklet files

std::vector<std::uint8_t> encode_cloud(const PointCloud& cloud) {
  std::vector<std::uint8_t> out;
  out.reserve(4 + cloud.size() * 12);
  auto put = [&](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  };
  put(static_cast<std::uint32_t>(cloud.size()));
  for (const auto& p : cloud.points) {
    for (double c : {p.x, p.y, p.z}) put(std::bit_cast<std::uint32_t>(static_cast<float>(c)));
  }
  return out;
}

PointCloud decode_cloud(const std::vector<std::uint8_t>& bytes) {
  auto get = [&](std::size_t pos) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[pos + i]) << (8 * i);
    return v;
  };
  if (bytes.size() < 4) throw std::runtime_error("cloud file truncated");
  const std::uint32_t n = get(0);
  if (bytes.size() != 4 + static_cast<std::size_t>(n) * 12) {
    throw std::runtime_error("cloud file size does not match its point count " + std::to_string(n));
  }
  PointCloud cloud;
  cloud.points.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t base = 4 + i * 12;
    cloud.points[i] = {std::bit_cast<float>(get(base)), std::bit_cast<float>(get(base + 4)),
                       std::bit_cast<float>(get(base + 8))};
  }
  cloud.validate();
  return cloud;
}

void write_cloud(const std::string& path, const PointCloud& cloud) {
  write_file_bytes(path, encode_cloud(cloud));
}

PointCloud read_cloud(const std::string& path) {
  try {
    return decode_cloud(read_file_bytes(path));
  } catch (const std::exception& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
}

namespace {

nlohmann::json box_json(const Box3D& b) { return b.to_array(); }

Box3D box_from_json(const nlohmann::json& j) {
  return Box3D::from_array(j.get<std::vector<double>>());
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

std::string frame_file(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "frame_%04zu.bin", i);
  return buf;
}

}  // namespace

std::vector<AnnotatedScene> read_scenes_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  const fs::path dir = fs::path(path).parent_path();
  std::vector<AnnotatedScene> scenes;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path + ":" + std::to_string(lineno);
    AnnotatedScene scene;
    try {
      const auto j = nlohmann::json::parse(line);
      fs::path cloud = j.at("cloud").get<std::string>();
      if (cloud.is_relative()) cloud = dir / cloud;
      scene.cloud = read_cloud(cloud.string());
      for (const auto& a : j.at("annotations")) {
        scene.annotations.push_back({a.at("object_id").get<std::string>(),
                                     a.at("class").get<std::string>(), box_from_json(a.at("box"))});
      }
    } catch (const nlohmann::json::exception& e) {
      throw std::invalid_argument(where + ": " + e.what());
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument(where + ": " + e.what());
    }
    scenes.push_back(std::move(scene));
  }
  return scenes;
}

void write_scenes_jsonl(const std::string& path, const std::vector<AnnotatedScene>& scenes) {
  const fs::path dir = fs::path(path).parent_path();
  std::string text;
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "scene_%04zu.bin", i);
    write_cloud((dir / name).string(), scenes[i].cloud);
    nlohmann::json j;
    j["cloud"] = name;
    j["annotations"] = nlohmann::json::array();
    for (const auto& a : scenes[i].annotations) {
      j["annotations"].push_back(
          {{"object_id", a.object_id}, {"class", a.label}, {"box", box_json(a.box)}});
    }
    text += j.dump() + "\n";
  }
  write_text(path, text);
}

void save_tracklet(const std::string& dir, const Tracklet& tracklet) {
  fs::create_directories(dir);
  nlohmann::json meta;
  meta["object_id"] = tracklet.object_id;
  meta["class"] = tracklet.label;
  meta["frame_count"] = tracklet.frames.size();
  meta["boxes"] = nlohmann::json::array();
  for (const auto& f : tracklet.frames) meta["boxes"].push_back(box_json(f.box));
  write_text((fs::path(dir) / "meta.json").string(), meta.dump(2) + "\n");
  for (std::size_t i = 0; i < tracklet.frames.size(); ++i) {
    write_cloud((fs::path(dir) / frame_file(i)).string(), tracklet.frames[i].cloud);
  }
}

Tracklet load_tracklet(const std::string& dir) {
  const std::string meta_path = (fs::path(dir) / "meta.json").string();
  Tracklet t;
  std::vector<Box3D> boxes;
  try {
    const auto meta = nlohmann::json::parse(read_text(meta_path));
    t.object_id = meta.at("object_id").get<std::string>();
    t.label = meta.at("class").get<std::string>();
    const auto count = meta.at("frame_count").get<std::size_t>();
    for (const auto& b : meta.at("boxes")) boxes.push_back(box_from_json(b));
    if (boxes.size() != count) throw std::invalid_argument("frame_count differs from box count");
    if (count == 0) throw std::invalid_argument("tracklet has no frames");
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(meta_path + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(meta_path + ": " + e.what());
  }
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    t.frames.push_back({read_cloud((fs::path(dir) / frame_file(i)).string()), boxes[i]});
  }
  return t;
}

void save_dataset(const std::string& root, const std::vector<Tracklet>& tracklets) {
  fs::create_directories(root);
  for (std::size_t i = 0; i < tracklets.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "tracklet_%04zu", i);
    save_tracklet((fs::path(root) / name).string(), tracklets[i]);
  }
}

std::vector<Tracklet> load_dataset(const std::string& root) {
  if (!fs::is_directory(root)) throw std::runtime_error("not a directory: " + root);
  std::vector<fs::path> dirs;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory() && fs::exists(entry.path() / "meta.json")) dirs.push_back(entry.path());
  }
  std::sort(dirs.begin(), dirs.end());
  std::vector<Tracklet> out;
  for (const auto& d : dirs) out.push_back(load_tracklet(d.string()));
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic data

void SynthSpec::validate() const {
  if (!(size.length >= 1e-3 && size.width >= 1e-3 && size.height >= 1e-3)) {
    throw std::invalid_argument("synth: size components must be >= 1 mm");
  }
  if (frames < 1) throw std::invalid_argument("synth: frames must be >= 1");
  if (points_on_object < 1) throw std::invalid_argument("synth: points_on_object must be >= 1");
  if (noise_sigma < 0 || ground_density < 0) {
    throw std::invalid_argument("synth: noise_sigma and ground_density must be >= 0");
  }
  if (distractors < 0 || distractor_points < 1) {
    throw std::invalid_argument("synth: bad distractor settings");
  }
}

namespace {

// Points on the surface of a box shrunk to 98%, in its local frame, faces
// picked in proportion to their area.
std::vector<Point3> surface_pattern(const BoxSize& size, int count, Rng& rng) {
  const double hl = 0.49 * size.length;
  const double hw = 0.49 * size.width;
  const double hh = 0.49 * size.height;
  const double a_x = hw * hh;  // faces with normal +-x
  const double a_y = hl * hh;
  const double a_z = hl * hw;
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_real_distribution<double> pick(0.0, a_x + a_y + a_z);
  std::bernoulli_distribution side(0.5);
  std::vector<Point3> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    const double r = pick(rng);
    const double sign = side(rng) ? 1.0 : -1.0;
    const double s = u(rng);
    const double t = u(rng);
    if (r < a_x) {
      out.push_back({sign * hl, s * hw, t * hh});
    } else if (r < a_x + a_y) {
      out.push_back({s * hl, sign * hw, t * hh});
    } else {
      out.push_back({s * hl, t * hw, sign * hh});
    }
  }
  return out;
}

// The volatile stores keep the float32 rounding: GCC 11 at -O3 with AVX-512
// tuning otherwise drops the round trip inside the vectorized point loops.
Point3 to_float(const Point3& p) {
  volatile float x = static_cast<float>(p.x), y = static_cast<float>(p.y), z = static_cast<float>(p.z);
  return {x, y, z};
}

}  // namespace

Tracklet synth_tracklet(const SynthSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng(seed);
  const std::vector<Point3> pattern = surface_pattern(spec.size, spec.points_on_object, rng);

  // Trajectory: velocity is expressed in the object's own frame.
  std::vector<Box3D> boxes;
  Box3D box{spec.start, spec.size, normalize_angle(spec.start_yaw)};
  for (int f = 0; f < spec.frames; ++f) {
    boxes.push_back(box);
    const Pose2 heading{{}, box.yaw};
    box.center = box.center + heading.apply(spec.velocity);
    box.yaw = normalize_angle(box.yaw + spec.yaw_rate);
  }

  // Static surroundings, generated once so a still object sees identical frames.
  double x_lo = boxes[0].center.x, x_hi = x_lo, y_lo = boxes[0].center.y, y_hi = y_lo;
  for (const auto& b : boxes) {
    x_lo = std::min(x_lo, b.center.x);
    x_hi = std::max(x_hi, b.center.x);
    y_lo = std::min(y_lo, b.center.y);
    y_hi = std::max(y_hi, b.center.y);
  }
  constexpr double kGroundMargin = 8.0;
  x_lo -= kGroundMargin;
  x_hi += kGroundMargin;
  y_lo -= kGroundMargin;
  y_hi += kGroundMargin;
  const double ground_z = spec.start.z - spec.size.height / 2.0 - 0.1;
  std::vector<Point3> static_points;
  const auto ground_count =
      static_cast<int>(std::round(spec.ground_density * (x_hi - x_lo) * (y_hi - y_lo)));
  std::uniform_real_distribution<double> gx(x_lo, x_hi);
  std::uniform_real_distribution<double> gy(y_lo, y_hi);
  std::uniform_real_distribution<double> gz(-0.02, 0.02);
  for (int i = 0; i < ground_count; ++i) {
    static_points.push_back(to_float({gx(rng), gy(rng), ground_z + gz(rng)}));
  }

  std::uniform_int_distribution<int> at_frame(0, spec.frames - 1);
  std::uniform_real_distribution<double> lateral(4.0, 8.0);
  std::uniform_real_distribution<double> any_yaw(-std::numbers::pi, std::numbers::pi);
  std::bernoulli_distribution left(0.5);
  for (int d = 0; d < spec.distractors; ++d) {
    Point3 where;
    for (int attempt = 0; attempt < 100; ++attempt) {
      const Box3D& anchor = boxes[static_cast<std::size_t>(at_frame(rng))];
      const double off = (left(rng) ? 1.0 : -1.0) * lateral(rng);
      where = Pose2{anchor.center, anchor.yaw}.apply(Point3{0.0, off, 0.0});
      const bool clear = std::all_of(boxes.begin(), boxes.end(), [&](const Box3D& b) {
        return std::hypot(b.center.x - where.x, b.center.y - where.y) >= 4.0;
      });
      if (clear) break;
    }
    const Pose2 pose{where, any_yaw(rng)};
    for (const auto& p : surface_pattern(spec.size, spec.distractor_points, rng)) {
      static_points.push_back(to_float(pose.apply(p)));
    }
  }

  Tracklet t;
  t.object_id = "synth";
  t.label = spec.label;
  // Object points are clamped slightly inside the box so that neither noise nor
  // the rotation and float32 rounding can move them out of it.
  constexpr double kInset = 1e-4;
  const double hl = spec.size.length / 2.0 - kInset, hw = spec.size.width / 2.0 - kInset,
               hh = spec.size.height / 2.0 - kInset;
  for (const auto& b : boxes) {
    Frame frame;
    frame.box = b;
    const Pose2 pose = box_pose(b);
    for (const auto& p : pattern) {
      Point3 local = p;
      if (spec.noise_sigma > 0.0) {
        std::normal_distribution<double> noise(0.0, spec.noise_sigma);
        local = local + Point3{noise(rng), noise(rng), noise(rng)};
      }
      local = {std::clamp(local.x, -hl, hl), std::clamp(local.y, -hw, hw), std::clamp(local.z, -hh, hh)};
      frame.cloud.points.push_back(to_float(pose.apply(local)));
    }
    frame.cloud.points.insert(frame.cloud.points.end(), static_points.begin(), static_points.end());
    t.frames.push_back(std::move(frame));
  }
  return t;
}

std::vector<Tracklet> synth_suite(const SynthSpec& base, int count, std::uint64_t seed,
                                  double max_speed, bool constant_velocity) {
  if (count < 0) throw std::invalid_argument("synth_suite: count must be >= 0");
  if (!(max_speed >= 0.2)) throw std::invalid_argument("synth_suite: max_speed must be >= 0.2");
  Rng rng(seed);
  std::uniform_real_distribution<double> pos(-20.0, 20.0);
  std::uniform_real_distribution<double> yaw(-std::numbers::pi, std::numbers::pi);
  std::uniform_real_distribution<double> speed(0.2, max_speed);
  std::uniform_real_distribution<double> turn(-0.05, 0.05);
  std::vector<Tracklet> out;
  for (int i = 0; i < count; ++i) {
    SynthSpec s = base;
    s.start = {pos(rng), pos(rng), base.start.z};
    s.start_yaw = yaw(rng);
    s.velocity = {speed(rng), 0.0, 0.0};
    s.yaw_rate = constant_velocity ? 0.0 : turn(rng);
    const std::uint64_t tseed = rng();
    Tracklet t = synth_tracklet(s, tseed);
    char id[32];
    std::snprintf(id, sizeof(id), "synth_%03d", i);
    t.object_id = id;
    out.push_back(std::move(t));
  }
  return out;
}

std::uint64_t tracklet_digest(const Tracklet& tracklet) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&](const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= p[i];
      h *= 0x100000001b3ULL;
    }
  };
  mix(tracklet.object_id.data(), tracklet.object_id.size());
  mix(tracklet.label.data(), tracklet.label.size());
  for (const auto& f : tracklet.frames) {
    for (double v : f.box.to_array()) mix(&v, sizeof v);
    for (const auto& p : f.cloud.points) {
      for (double c : {p.x, p.y, p.z}) {
        const float x = static_cast<float>(c);
        mix(&x, sizeof x);
      }
    }
  }
  return h;
}

}  // namespace pttr
