#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "pttr/sampling.hpp"

namespace pttr {

/// Network hyperparameters. Point counts and channel widths are desk-scale
/// choices; radii, head depths and the pooling radius follow the tracker's
/// published setup.
struct ModelConfig {
  int search_points = 1024;
  int template_points = 512;
  std::array<int, 3> search_pyramid = {512, 256, 128};
  std::array<int, 3> template_pyramid = {256, 128, 64};
  std::array<double, 3> sa_radius = {0.3, 0.5, 0.7};
  int sa_max_neighbors = 32;
  std::vector<int> embed_dims = {32};
  std::array<std::vector<int>, 3> sa_mlp = {{{32, 64}, {64, 128}, {128, 256}}};
  std::array<SamplerKind, 3> search_samplers = {SamplerKind::kHybrid, SamplerKind::kHybrid,
                                                SamplerKind::kHybrid};
  SamplerKind template_sampler = SamplerKind::kDfps;
  int head_hidden = 128;
  std::vector<int> refine_hidden = {256, 256, 128, 128};
  double pool_radius = 1.0;
  bool use_prt = true;
  bool use_offset = true;
  bool use_l2_norm = true;
  bool use_prm = true;
  bool use_batchnorm = false;

  /// Feature width C of the backbone output.
  int channels() const { return sa_mlp[2].back(); }
  void validate() const;
};

struct TrainConfig {
  ModelConfig model;
  double lambda = 1.0;
  double lr = 1e-3;
  double lr_divisor = 5.0;
  int lr_step_epochs = 40;
  int epochs = 200;
  int batch_size = 8;
  std::uint64_t seed = 1;
  double distort_range = 0.3;
  // Uniform yaw jitter (radians) of the training reference box. Off by default;
  // it teaches the heads to correct heading drift that tracking feeds back.
  double yaw_distort_range = 0.0;
  double template_extend = 0.1;
  double search_margin = 2.0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;

  /// Learning rate in effect during `epoch` (0-based).
  double lr_at_epoch(int epoch) const;
  void validate() const;
};

/// Applies one `key = value` setting; unknown keys and malformed values throw
/// std::invalid_argument.
void apply_setting(TrainConfig& cfg, const std::string& key, const std::string& value);

/// Parses a run-config text: one `key = value` per line, `#` comments.
TrainConfig parse_config(const std::string& text, TrainConfig base = {});
TrainConfig load_config(const std::string& path, TrainConfig base = {});

/// Every field as `key = value` lines; parse_config(serialize_config(c)) == c.
std::string serialize_config(const TrainConfig& cfg);

/// Named presets: "desk" (default), "paper" (160 epochs, batch 64, BN on), "tiny" (fast tests).
TrainConfig preset_config(const std::string& name);

}  // namespace pttr
