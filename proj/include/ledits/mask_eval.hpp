#pragma once

#include <cstdint>
#include <vector>

#include "ledits/model.hpp"
#include "ledits/schedule.hpp"
#include "ledits/shapes.hpp"

namespace ledits {

/// Mean IoU against ground truth at one grid step, averaged over (image, token) pairs.
struct MaskIouRow {
  int t = 0;
  std::size_t pairs = 0;
  double iou_m1 = 0.0;
  double iou_m2 = 0.0;
  double iou_both = 0.0;
};

struct MaskIouReport {
  std::vector<MaskIouRow> rows;  // grid order (noisiest first)
  double mean_m1 = 0.0;
  double mean_m2 = 0.0;
  double mean_both = 0.0;
  /// Mean IoU of a random mask at the thresholded density p against a region of area fraction a,
  /// pa / (p + a - pa), over the same pairs.
  double random_floor = 0.0;

  bool intersection_wins() const { return mean_both > mean_m1 && mean_both > mean_m2; }
};

/// Scores M1, M2 and their product against each shape's region along the edit-friendly
/// reconstruction sequence. Each present token is edited with conditioning {start, token};
/// lambda = 1 - bounding-box area / image area. Only grid steps with t in [t_low, t_high] count.
MaskIouReport evaluate_mask_iou(const DenoiserModel& model, const NoiseSchedule& schedule,
                                const TimestepGrid& grid, const std::vector<ShapeImage>& images,
                                std::uint64_t seed, int t_low, int t_high);

}  // namespace ledits
