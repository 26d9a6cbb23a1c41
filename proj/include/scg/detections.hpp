#pragma once

#include <Eigen/Core>
#include "json.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace scg {

/// Corner-format box (x1, y1, x2, y2) in pixels; area is (x2-x1)(y2-y1).
struct Box {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;

  double width() const noexcept { return x2 - x1; }
  double height() const noexcept { return y2 - y1; }
  double area() const noexcept { return width() * height(); }
  double cx() const noexcept { return 0.5 * (x1 + x2); }
  double cy() const noexcept { return 0.5 * (y1 + y2); }
  bool valid() const noexcept { return x2 > x1 && y2 > y1; }

  friend bool operator==(const Box&, const Box&) = default;
};

struct Detection {
  Box box;
  double score = 1.0;
  int class_id = 0;
};

struct GtPair {
  Box human;
  Box object;
  int interaction = 0;
};

/// Deferred Gaussian noise on the augmented spatial features of every pair.
struct SpatialNoise {
  double sigma = 0.0;
  std::uint64_t seed = 0;
};

class InteractionSpace;

struct Scene {
  std::string image_id;
  double width = 0, height = 0;
  std::vector<Detection> detections;
  Eigen::MatrixXd appearance;  // one row per detection
  Eigen::VectorXd global_feature;
  std::vector<GtPair> gt_pairs;
  // Distinct ground-truth boxes (score 1) and their appearance rows, used
  // to augment detections during training.
  std::vector<Detection> gt_boxes;
  Eigen::MatrixXd gt_appearance;
  std::optional<SpatialNoise> spatial_noise;

  /// Throws std::invalid_argument on any broken invariant.
  void validate(const InteractionSpace& space) const;
};

struct Interaction {
  int action = 0;
  int object = 0;
  bool rare = false;
};

/// Object categories, actions, valid (action, object) combinations and the
/// rare/non-rare split. Interaction ids enumerate objects in order and, per
/// object, its valid actions in listed order, unless given explicitly.
class InteractionSpace {
 public:
  std::vector<std::string> actions;
  std::vector<std::string> objects;
  int human_class = 0;

  InteractionSpace() = default;
  InteractionSpace(std::vector<std::string> actions, std::vector<std::string> objects,
                   std::vector<std::vector<int>> valid_actions, std::vector<int> rare = {},
                   std::string human = "person");

  std::size_t num_actions() const noexcept { return actions.size(); }
  std::size_t num_objects() const noexcept { return objects.size(); }
  std::size_t num_interactions() const noexcept { return interactions_.size(); }

  const std::vector<int>& valid_actions(int object) const;
  bool is_valid(int action, int object) const { return interaction_id(action, object).has_value(); }
  std::optional<int> interaction_id(int action, int object) const;
  const Interaction& interaction(int id) const;
  const std::vector<Interaction>& interactions() const noexcept { return interactions_; }

  int action_index(const std::string& name) const;
  int object_index(const std::string& name) const;

  nlohmann::json to_json() const;
  static InteractionSpace from_json(const nlohmann::json& j);
  static InteractionSpace load(const std::string& path);
  void save(const std::string& path) const;

 private:
  std::vector<std::vector<int>> valid_;
  std::vector<Interaction> interactions_;
  std::vector<std::vector<int>> id_table_;  // [object][action] -> id or -1
};

double iou(const Box& a, const Box& b);

/// [x1, y1, x2, y2]
nlohmann::json box_json(const Box& b);
Box box_from(const nlohmann::json& j);

/// Greedy NMS over one class. Returns indices into `dets`, ordered by
/// descending score with ties broken by original index. A box is dropped
/// iff its IoU with an already kept box exceeds `iou_threshold`.
std::vector<std::size_t> nms(const std::vector<Detection>& dets, double iou_threshold);

struct DetectionConfig {
  double score_threshold = 0.2;
  double nms_threshold = 0.5;
  std::size_t max_per_side = 15;  // m
};

/// Graph node lists as indices into Scene::detections. Object nodes
/// subsume human nodes: the first |humans| entries of `objects` are the
/// humans, followed by the selected non-human detections.
struct NodeSelection {
  std::vector<std::size_t> humans;
  std::vector<std::size_t> objects;
};

enum class Mode { train, infer };

/// Score filtering, per-class NMS and top-m selection of humans and objects.
NodeSelection filter_and_select(const Scene& scene, const InteractionSpace& space,
                                const DetectionConfig& config);

/// Appends ground-truth boxes (score 1) and their features to the
/// detections in training mode; returns the scene unchanged for inference.
Scene augment_with_gt(const Scene& scene, Mode mode);

/// Node-position pairs (i, j): human node i, object node j, skipping pairs
/// where both positions refer to the same detection.
std::vector<std::pair<std::size_t, std::size_t>> build_pairs(const std::vector<std::size_t>& humans,
                                                             const std::vector<std::size_t>& objects);

/// Distinct (box, class) entries referenced by `pairs`, humans before
/// objects within each pair, in order of first appearance.
std::vector<Detection> distinct_gt_boxes(const std::vector<GtPair>& pairs, const InteractionSpace& space);

// Scene files: JSON lines; feature paths are relative to the file's folder.
std::vector<Scene> load_scenes(const std::string& path);
void save_scenes(const std::string& path, const std::vector<Scene>& scenes);

}  // namespace scg
