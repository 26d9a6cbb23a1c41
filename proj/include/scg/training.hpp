#pragma once

#include "scg/model.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace scg {

struct TrainConfig {
  // Focal loss
  double beta = 0.5;
  double gamma = 0.2;
  double lambda_train = 1.0;
  double lambda_infer = 2.8;
  // AdamW
  double lr_head = 1e-4;
  double lr_encoder = 1e-5;  // node encoder, in place of the backbone
  double weight_decay = 1e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  // Schedule
  std::size_t epochs = 10;
  std::size_t lr_drop_epoch = 6;  // 1-based, first epoch at the reduced rate
  double lr_drop_factor = 0.1;
  std::size_t batch_size = 4;     // scenes per step

  DetectionConfig detection;
  ModelConfig model;
  std::uint64_t seed = 0;
  bool double_precision = false;
  std::size_t threads = 1;

  nlohmann::json to_json() const;
  /// Missing keys keep their defaults.
  static TrainConfig from_json(const nlohmann::json& j);
};

/// Multi-label targets of one graph, restricted to the valid actions of each
/// pair's object class. Entries are pair-major, actions in A_o order.
struct TargetMatrix {
  std::size_t num_actions = 0;
  std::vector<std::size_t> pair;    // candidate pair index per entry
  std::vector<int> action;          // action id per entry
  std::vector<std::uint8_t> label;  // 0 or 1 per entry

  std::size_t size() const noexcept { return label.size(); }
  std::size_t positives() const;
  /// Flat indices into a (pairs x |A|) logit matrix.
  std::vector<std::size_t> flat_indices() const;
};

/// label(k, a) = 1 iff some ground-truth pair with action a and the pair's
/// object class has min(IoU_h, IoU_o) > iou_threshold against pair k.
TargetMatrix assign_targets(const PreparedGraph& graph, const std::vector<GtPair>& gt_pairs,
                            const InteractionSpace& space, double iou_threshold = 0.5);

inline constexpr double kScoreClamp = 1e-7;

/// Focal loss of one clamped prediction.
double focal_loss(double y_hat, bool positive, double beta, double gamma);
/// Σ focal losses / max(1, positives).
double normalized_batch_loss(std::span<const double> y_hat, std::span<const std::uint8_t> labels, double beta,
                             double gamma);

/// Summed focal loss of predictions `y_hat` (rank 1), clamped to
/// [kScoreClamp, 1 - kScoreClamp] first.
template <typename S>
Var<S> focal_loss(Var<S> y_hat, std::span<const std::uint8_t> labels, double beta, double gamma);

/// Unnormalized focal loss of one graph: final scores with detection
/// scores raised to `lambda`, valid actions only.
template <typename S>
Var<S> scene_loss(const ScgModel<S>& model, Tape<S>& tape, const PreparedGraph& graph, const TargetMatrix& targets,
                  const TrainConfig& config);

struct AdamState {
  Eigen::ArrayXd m, v;
  std::size_t step = 0;
};

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
};

class NonFiniteGradient : public std::runtime_error {
 public:
  NonFiniteGradient(const std::string& parameter, std::size_t index, double value);
  std::string parameter;
  std::size_t index;
};

/// One AdamW update: θ ← θ(1 − lr·wd) − lr·m̂/(√v̂ + eps).
template <typename S>
void adamw_step(Tensor<S>& param, const typename Tensor<S>::Array& grad, AdamState& state, double lr,
                const AdamWConfig& config);

/// AdamW over named parameter groups, reading each parameter's own gradient
/// buffer. A step with any non-finite gradient leaves every parameter
/// untouched and throws NonFiniteGradient.
template <typename S>
class AdamW {
 public:
  struct Group {
    std::vector<std::pair<std::string, Tensor<S>*>> params;
    double lr = 1e-4;
  };

  AdamW(std::vector<Group> groups, AdamWConfig config);

  void step(double lr_scale = 1.0);
  void zero_grad();
  const std::vector<Group>& groups() const noexcept { return groups_; }

 private:
  std::vector<Group> groups_;
  AdamWConfig config_;
  std::vector<std::vector<AdamState>> state_;
};

struct EpochMetrics {
  std::size_t epoch = 0;
  std::size_t steps = 0;
  double mean_loss = 0;
  double lr = 0;
  std::size_t positives = 0;
};

struct TrainOptions {
  std::string output_dir;  // empty: nothing written
  bool checkpoint_every_epoch = false;
  std::function<void(const EpochMetrics&)> on_epoch;
};

template <typename S>
struct TrainResult {
  ScgModel<S> model;
  std::vector<EpochMetrics> epochs;
};

/// Learning rate multiplier in `epoch` (1-based).
double lr_scale(const TrainConfig& config, std::size_t epoch);

/// Trains from scratch. Writes `metrics.jsonl` and `checkpoint/` (plus
/// `epoch_<e>/` when asked) under options.output_dir.
template <typename S>
TrainResult<S> train(const TrainConfig& config, const std::vector<Scene>& scenes, const InteractionSpace& space,
                     const TrainOptions& options = {});

/// Inference over scenes in order, possibly on several threads.
template <typename S>
std::vector<PairPrediction> predict_scenes(const ScgModel<S>& model, const std::vector<Scene>& scenes,
                                           const InteractionSpace& space, const DetectionConfig& detection,
                                           double lambda, std::size_t threads = 1);

}  // namespace scg
