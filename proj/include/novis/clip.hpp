#pragma once

// Clip-level ground truth and training sample containers.

#include <vector>

#include "novis/bitvolume.hpp"
#include "novis/tensor.hpp"

namespace novis {

struct ClipObject {
  int class_id = 0;   // 0..K-1
  int identity = 0;   // persistent per-video instance id
  BitVolume masks;    // [T x H x W]; fully occluded frames are all-zero planes
};

// Objects visible in at least one clip frame. Occluded frames are kept as
// empty planes, never dropped.
struct ClipGroundTruth {
  int frames = 0, height = 0, width = 0;
  std::vector<ClipObject> objects;
};

struct ClipBatch {
  Tensor frames;  // [T x 3 x H x W], values in [0, 1]
  ClipGroundTruth gt;
  std::vector<int> frame_indices;  // source frame numbers, ascending
};

}  // namespace novis
