#include "ledits/mask_eval.hpp"

#include <algorithm>

#include "ledits/error.hpp"
#include "ledits/guidance.hpp"
#include "ledits/inversion.hpp"
#include "ledits/masking.hpp"

namespace ledits {

MaskIouReport evaluate_mask_iou(const DenoiserModel& model, const NoiseSchedule& schedule,
                                const TimestepGrid& grid, const std::vector<ShapeImage>& images,
                                std::uint64_t seed, int t_low, int t_high) {
  if (images.empty()) throw ParameterError("mask evaluation needs at least one image");
  if (t_low > t_high) throw ParameterError("mask evaluation needs t_low <= t_high");

  MaskIouReport report;
  std::vector<std::size_t> rows_for_step(grid.size(), SIZE_MAX);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (grid.steps[i] >= t_low && grid.steps[i] <= t_high) {
      rows_for_step[i] = report.rows.size();
      report.rows.push_back({grid.steps[i], 0, 0.0, 0.0, 0.0});
    }
  }
  if (report.rows.empty()) throw ParameterError("no grid step inside the mask evaluation window");

  std::size_t pairs = 0;
  const std::vector<int> edit_token_position{1};
  for (std::size_t n = 0; n < images.size(); ++n) {
    const ShapeImage& img = images[n];
    const std::vector<Field> x_seq = build_reconstruction_sequence(img.x0, schedule, grid, seed + n);
    for (int token : img.tokens()) {
      const Field truth = img.region(token);
      const double area = static_cast<double>(count_selected(truth)) / truth.size();
      // The threshold only knows the bounding box, not the exact outline.
      const double box = static_cast<double>(img.box_area(token)) / truth.size();
      const double lambda = std::clamp(1.0 - box, 1e-3, 1.0 - 1e-3);
      Conditioning cond;
      cond.token_ids = {0, token};
      cond.label = "token " + std::to_string(token);
      report.random_floor += box * area / (box + area - box * area);
      ++pairs;
      for (std::size_t i = 0; i < grid.size(); ++i) {
        if (rows_for_step[i] == SIZE_MAX) continue;
        const int t = grid.steps[i];
        const EpsOutput base = model.eps(x_seq[i], t, nullptr);
        const EpsOutput edit = model.eps(x_seq[i], t, &cond);
        const Field direction = psi(base.eps, edit.eps, Direction::positive);
        const MaskPair masks = compute_masks(edit.attention, edit_token_position, direction, lambda, 1.0);
        MaskIouRow& row = report.rows[rows_for_step[i]];
        row.pairs += 1;
        row.iou_m1 += iou(masks.m1, truth);
        row.iou_m2 += iou(masks.m2, truth);
        row.iou_both += iou(masks.phi, truth);
      }
    }
  }
  for (MaskIouRow& row : report.rows) {
    row.iou_m1 /= row.pairs;
    row.iou_m2 /= row.pairs;
    row.iou_both /= row.pairs;
    report.mean_m1 += row.iou_m1;
    report.mean_m2 += row.iou_m2;
    report.mean_both += row.iou_both;
  }
  const double rows = static_cast<double>(report.rows.size());
  report.mean_m1 /= rows;
  report.mean_m2 /= rows;
  report.mean_both /= rows;
  report.random_floor /= static_cast<double>(pairs);
  return report;
}

}  // namespace ledits
