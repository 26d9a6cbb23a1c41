#pragma once

#include "scg/detections.hpp"
#include "scg/model.hpp"

#include "json.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace scg {

/// One scored interaction: a row of the predictions file.
struct Prediction {
  std::string image_id;
  int interaction_id = 0;
  double score = 0;
  Box human;
  Box object;
};

/// Expands pair predictions into one row per valid action, using final scores.
std::vector<Prediction> to_predictions(const std::vector<PairPrediction>& pairs, const InteractionSpace& space);

void save_predictions(const std::string& path, const std::vector<Prediction>& preds);
std::vector<Prediction> load_predictions(const std::string& path);

struct GtInstance {
  std::string image_id;
  Box human;
  Box object;
};

/// Ranking used by matching and AP: descending score, ties by input index.
std::vector<std::size_t> rank_by_score(std::span<const Prediction> preds);

/// TP flags (input order) for predictions of one interaction class. In
/// ranked order each prediction claims the unclaimed ground truth of its
/// image with the highest min(IoU_h, IoU_o) above the threshold (lowest
/// index on ties); without one it is a false positive.
std::vector<std::uint8_t> match_predictions(std::span<const Prediction> preds, std::span<const GtInstance> gt,
                                            double iou_threshold = 0.5);

/// 11-point interpolated AP of TP flags given in ranked order. Requires
/// num_gt >= 1.
double ap_11point(std::span<const std::uint8_t> ranked_tp, std::size_t num_gt);

enum class Setting { default_setting, known_object };

std::string_view to_string(Setting s);
Setting parse_setting(std::string_view name);

struct EvalReport {
  Setting setting = Setting::default_setting;
  std::vector<std::optional<double>> ap;  // per interaction; empty when it has no GT
  std::vector<std::size_t> num_gt;
  std::vector<std::size_t> num_predictions;
  std::optional<double> map_full, map_rare, map_non_rare;

  nlohmann::json to_json(const InteractionSpace& space) const;
  /// Aligned Full / Rare / Non-rare table, values in percent.
  std::string table() const;
};

/// Drops, per image, predictions whose object category has no ground-truth
/// interaction in that image.
std::vector<Prediction> known_object_filter(const std::vector<Prediction>& preds, const std::vector<Scene>& scenes,
                                            const InteractionSpace& space);

/// mAP over interactions with at least one ground-truth pair, split by the
/// rare flags of the interaction space.
EvalReport evaluate(const std::vector<Prediction>& preds, const std::vector<Scene>& scenes,
                    const InteractionSpace& space, Setting setting, double iou_threshold = 0.5);

/// Several reports as one aligned table.
std::string report_table(const std::vector<std::pair<std::string, EvalReport>>& rows);

}  // namespace scg
