#include "pttr/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace pttr {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* want) {
  throw std::invalid_argument("config key '" + key + "': cannot parse '" + value + "' as " + want);
}

long long to_int(const std::string& key, const std::string& v) {
  long long out = 0;
  const auto* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || p != end) bad_value(key, v, "an integer");
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    bad_value(key, v, "a number");
  }
  if (used != v.size() || !std::isfinite(out)) bad_value(key, v, "a finite number");
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on") return true;
  if (v == "false" || v == "0" || v == "off") return false;
  bad_value(key, v, "a boolean");
}

std::string fmt_double(double v) {
  std::ostringstream os;
  os.precision(std::numeric_limits<double>::max_digits10);
  os << v;
  return os.str();
}

template <typename C, typename F>
std::string join(const C& items, F&& f) {
  std::string out;
  for (const auto& x : items) {
    if (!out.empty()) out += ",";
    out += f(x);
  }
  return out;
}

std::vector<int> to_int_list(const std::string& key, const std::string& v) {
  std::vector<int> out;
  for (const auto& item : split_list(v)) out.push_back(static_cast<int>(to_int(key, item)));
  if (out.empty()) bad_value(key, v, "a non-empty integer list");
  return out;
}

template <std::size_t N, typename T, typename F>
std::array<T, N> to_array(const std::string& key, const std::string& v, F&& conv) {
  const auto items = split_list(v);
  if (items.size() != N) bad_value(key, v, "a list of 3 values");
  std::array<T, N> out{};
  for (std::size_t i = 0; i < N; ++i) out[i] = conv(key, items[i]);
  return out;
}

struct Field {
  std::function<void(TrainConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const TrainConfig&)> get;
};

const std::vector<std::pair<std::string, Field>>& fields() {
  static const std::vector<std::pair<std::string, Field>> table = [] {
    std::vector<std::pair<std::string, Field>> t;
    auto add = [&](std::string key, Field f) { t.emplace_back(std::move(key), std::move(f)); };
    auto int_field = [&](std::string key, auto member) {
      add(key, {[member](TrainConfig& c, const std::string& k, const std::string& v) {
                  member(c) = static_cast<std::remove_reference_t<decltype(member(c))>>(to_int(k, v));
                },
                [member](const TrainConfig& c) {
                  return std::to_string(member(const_cast<TrainConfig&>(c)));
                }});
    };
    auto double_field = [&](std::string key, auto member) {
      add(key, {[member](TrainConfig& c, const std::string& k, const std::string& v) {
                  member(c) = to_double(k, v);
                },
                [member](const TrainConfig& c) {
                  return fmt_double(member(const_cast<TrainConfig&>(c)));
                }});
    };
    auto bool_field = [&](std::string key, auto member) {
      add(key, {[member](TrainConfig& c, const std::string& k, const std::string& v) {
                  member(c) = to_bool(k, v);
                },
                [member](const TrainConfig& c) {
                  return std::string(member(const_cast<TrainConfig&>(c)) ? "true" : "false");
                }});
    };
    auto int3_field = [&](std::string key, auto member) {
      add(key, {[member](TrainConfig& c, const std::string& k, const std::string& v) {
                  member(c) = to_array<3, int>(k, v, [](const std::string& kk, const std::string& s) {
                    return static_cast<int>(to_int(kk, s));
                  });
                },
                [member](const TrainConfig& c) {
                  return join(member(const_cast<TrainConfig&>(c)), [](int x) { return std::to_string(x); });
                }});
    };
    auto ilist_field = [&](std::string key, auto member) {
      add(key, {[member](TrainConfig& c, const std::string& k, const std::string& v) {
                  member(c) = to_int_list(k, v);
                },
                [member](const TrainConfig& c) {
                  return join(member(const_cast<TrainConfig&>(c)), [](int x) { return std::to_string(x); });
                }});
    };

    int_field("search_points", [](TrainConfig& c) -> int& { return c.model.search_points; });
    int_field("template_points", [](TrainConfig& c) -> int& { return c.model.template_points; });
    int3_field("search_pyramid", [](TrainConfig& c) -> std::array<int, 3>& { return c.model.search_pyramid; });
    int3_field("template_pyramid", [](TrainConfig& c) -> std::array<int, 3>& { return c.model.template_pyramid; });
    add("sa_radius", {[](TrainConfig& c, const std::string& k, const std::string& v) {
                        c.model.sa_radius = to_array<3, double>(k, v, to_double);
                      },
                      [](const TrainConfig& c) { return join(c.model.sa_radius, fmt_double); }});
    int_field("sa_max_neighbors", [](TrainConfig& c) -> int& { return c.model.sa_max_neighbors; });
    ilist_field("embed_dims", [](TrainConfig& c) -> std::vector<int>& { return c.model.embed_dims; });
    for (int l = 0; l < 3; ++l) {
      ilist_field("sa_mlp" + std::to_string(l + 1),
                  [l](TrainConfig& c) -> std::vector<int>& { return c.model.sa_mlp[static_cast<std::size_t>(l)]; });
    }
    add("search_samplers",
        {[](TrainConfig& c, const std::string& k, const std::string& v) {
           const auto items = split_list(v);
           // A single name applies to every level.
           if (items.size() == 1) {
             c.model.search_samplers.fill(parse_sampler(items[0]));
           } else {
             c.model.search_samplers = to_array<3, SamplerKind>(
                 k, v, [](const std::string&, const std::string& s) { return parse_sampler(s); });
           }
         },
         [](const TrainConfig& c) {
           return join(c.model.search_samplers, [](SamplerKind s) { return to_string(s); });
         }});
    add("template_sampler", {[](TrainConfig& c, const std::string&, const std::string& v) {
                               c.model.template_sampler = parse_sampler(v);
                             },
                             [](const TrainConfig& c) { return to_string(c.model.template_sampler); }});
    int_field("head_hidden", [](TrainConfig& c) -> int& { return c.model.head_hidden; });
    ilist_field("refine_hidden", [](TrainConfig& c) -> std::vector<int>& { return c.model.refine_hidden; });
    double_field("pool_radius", [](TrainConfig& c) -> double& { return c.model.pool_radius; });
    bool_field("use_prt", [](TrainConfig& c) -> bool& { return c.model.use_prt; });
    bool_field("use_offset", [](TrainConfig& c) -> bool& { return c.model.use_offset; });
    bool_field("use_l2_norm", [](TrainConfig& c) -> bool& { return c.model.use_l2_norm; });
    bool_field("use_prm", [](TrainConfig& c) -> bool& { return c.model.use_prm; });
    bool_field("use_batchnorm", [](TrainConfig& c) -> bool& { return c.model.use_batchnorm; });

    double_field("lambda", [](TrainConfig& c) -> double& { return c.lambda; });
    double_field("lr", [](TrainConfig& c) -> double& { return c.lr; });
    double_field("lr_divisor", [](TrainConfig& c) -> double& { return c.lr_divisor; });
    int_field("lr_step_epochs", [](TrainConfig& c) -> int& { return c.lr_step_epochs; });
    int_field("epochs", [](TrainConfig& c) -> int& { return c.epochs; });
    int_field("batch_size", [](TrainConfig& c) -> int& { return c.batch_size; });
    int_field("seed", [](TrainConfig& c) -> std::uint64_t& { return c.seed; });
    double_field("distort_range", [](TrainConfig& c) -> double& { return c.distort_range; });
    double_field("yaw_distort_range", [](TrainConfig& c) -> double& { return c.yaw_distort_range; });
    double_field("template_extend", [](TrainConfig& c) -> double& { return c.template_extend; });
    double_field("search_margin", [](TrainConfig& c) -> double& { return c.search_margin; });
    double_field("adam_beta1", [](TrainConfig& c) -> double& { return c.adam_beta1; });
    double_field("adam_beta2", [](TrainConfig& c) -> double& { return c.adam_beta2; });
    double_field("adam_eps", [](TrainConfig& c) -> double& { return c.adam_eps; });
    return t;
  }();
  return table;
}

}  // namespace

void ModelConfig::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("model config: " + m); };
  if (search_points < 1 || template_points < 1) fail("point counts must be >= 1");
  for (std::size_t l = 0; l < 3; ++l) {
    if (search_pyramid[l] < 1 || template_pyramid[l] < 1) fail("pyramid counts must be >= 1");
    if (!(sa_radius[l] > 0.0)) fail("SA radii must be > 0");
    if (sa_mlp[l].empty()) fail("SA MLP widths must be non-empty");
    for (int w : sa_mlp[l]) {
      if (w < 1) fail("SA MLP widths must be >= 1");
    }
  }
  if (sa_max_neighbors < 1) fail("sa_max_neighbors must be >= 1");
  if (embed_dims.empty()) fail("embed_dims must be non-empty");
  for (int w : embed_dims) {
    if (w < 1) fail("embed widths must be >= 1");
  }
  if (head_hidden < 1) fail("head_hidden must be >= 1");
  if (refine_hidden.size() != 4) fail("refine_hidden must list 4 widths (5-layer MLP)");
  for (int w : refine_hidden) {
    if (w < 1) fail("refine widths must be >= 1");
  }
  if (!(pool_radius > 0.0)) fail("pool_radius must be > 0");
  if (template_sampler == SamplerKind::kRas || template_sampler == SamplerKind::kHybrid) {
    fail("the template branch cannot use relation-aware sampling");
  }
  for (std::size_t l = 0; l < 3; ++l) {
    if (search_samplers[l] == SamplerKind::kHybrid && search_pyramid[l] % 2 != 0) {
      fail("hybrid sampling needs an even point count at level " + std::to_string(l + 1));
    }
  }
}

double TrainConfig::lr_at_epoch(int epoch) const {
  if (lr_step_epochs <= 0) return lr;
  return lr / std::pow(lr_divisor, static_cast<double>(epoch / lr_step_epochs));
}

void TrainConfig::validate() const {
  model.validate();
  auto fail = [](const std::string& m) { throw std::invalid_argument("train config: " + m); };
  if (!(lambda >= 0.0)) fail("lambda must be >= 0");
  if (!(lr > 0.0)) fail("lr must be > 0");
  if (!(lr_divisor > 0.0)) fail("lr_divisor must be > 0");
  if (epochs < 0) fail("epochs must be >= 0");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (distort_range < 0.0 || yaw_distort_range < 0.0 || template_extend < 0.0 ||
      search_margin < 0.0) {
    fail("distortion, extension and margin must be >= 0");
  }
}

void apply_setting(TrainConfig& cfg, const std::string& key, const std::string& value) {
  for (const auto& [name, field] : fields()) {
    if (name == key) {
      field.set(cfg, key, trim(value));
      return;
    }
  }
  throw std::invalid_argument("unknown config key '" + key + "'");
}

TrainConfig parse_config(const std::string& text, TrainConfig base) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": expected key = value");
    }
    apply_setting(base, trim(line.substr(0, eq)), line.substr(eq + 1));
  }
  return base;
}

TrainConfig load_config(const std::string& path, TrainConfig base) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), std::move(base));
}

std::string serialize_config(const TrainConfig& cfg) {
  std::string out;
  for (const auto& [name, field] : fields()) out += name + " = " + field.get(cfg) + "\n";
  return out;
}

TrainConfig preset_config(const std::string& name) {
  TrainConfig cfg;
  if (name == "desk") return cfg;
  if (name == "paper") {
    cfg.epochs = 160;
    cfg.batch_size = 64;
    cfg.model.use_batchnorm = true;
    return cfg;
  }
  if (name == "tiny") {
    cfg.model.search_points = 256;
    cfg.model.template_points = 128;
    cfg.model.search_pyramid = {128, 64, 32};
    cfg.model.template_pyramid = {64, 32, 16};
    cfg.model.embed_dims = {16};
    cfg.model.sa_mlp = {{{16, 16}, {32, 32}, {32, 32}}};
    cfg.model.head_hidden = 32;
    cfg.model.refine_hidden = {64, 64, 32, 32};
    cfg.epochs = 20;
    cfg.batch_size = 4;
    return cfg;
  }
  throw std::invalid_argument("unknown preset '" + name + "' (expected desk|paper|tiny)");
}

}  // namespace pttr
