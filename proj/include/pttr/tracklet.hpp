#pragma once

#include <string>
#include <vector>

#include "pttr/geometry.hpp"

namespace pttr {

struct Frame {
  PointCloud cloud;  // full scene
  Box3D box;         // ground truth of the tracked object
};

/// One object instance over consecutive frames.
struct Tracklet {
  std::string object_id;
  std::string label;
  std::vector<Frame> frames;

  std::vector<Box3D> boxes() const {
    std::vector<Box3D> out;
    out.reserve(frames.size());
    for (const auto& f : frames) out.push_back(f.box);
    return out;
  }
};

}  // namespace pttr
