#pragma once

#include "scg/detections.hpp"
#include "scg/layers.hpp"
#include "scg/mbf.hpp"
#include "scg/spatial.hpp"

#include "json.hpp"

#include <optional>
#include <string>
#include <vector>

namespace scg {

/// Which computations receive the pairwise spatial encoding. A disabled
/// stage falls back to its appearance-only form.
struct StageSet {
  bool adjacency = true;
  bool messages = true;
  bool global = true;
  bool refinement = true;

  static StageSet all() { return {}; }
  static StageSet none() { return {false, false, false, false}; }
  /// "all", "none", or a comma-separated subset of
  /// adjacency,messages,global,refinement.
  static StageSet parse(std::string_view text);
  std::string to_string() const;
  bool any() const { return adjacency || messages || global || refinement; }

  friend bool operator==(const StageSet&, const StageSet&) = default;
};

struct ModelConfig {
  std::size_t appearance_dim = 1024;
  std::size_t global_dim = 1024;
  std::size_t hidden = 1024;     // n
  std::size_t cardinality = 16;  // c
  std::size_t iterations = 2;    // T
  FusionOp fusion = FusionOp::product;
  StageSet stages;
  std::size_t num_actions = 0;
  double layer_norm_eps = 1e-5;

  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

/// Per-image graph inputs after detection filtering. Pair cells are laid
/// out row-major over (human node i, object node j): k = i * |O| + j.
struct PreparedGraph {
  std::string image_id;
  double width = 0, height = 0;
  std::vector<Detection> humans;
  std::vector<Detection> objects;  // the first |humans| entries are the humans
  std::vector<std::size_t> object_source;  // detection index of each object node
  Eigen::MatrixXd object_appearance;       // |O| x appearance_dim
  Eigen::VectorXd global_feature;
  Eigen::MatrixXd spatial;                 // |H||O| x 36
  std::vector<std::uint8_t> keep;          // 0 where both nodes are one detection
  std::vector<std::size_t> cell_human, cell_object;  // per cell
  // Candidate pairs (self pairs excluded), as cell indices and node positions.
  std::vector<std::size_t> pair_cell, pair_human, pair_object;

  std::size_t num_humans() const { return humans.size(); }
  std::size_t num_objects() const { return objects.size(); }
  std::size_t num_pairs() const { return pair_cell.size(); }
  bool empty() const { return pair_cell.empty(); }
};

/// Ground-truth augmentation (training), filtering and node selection,
/// pair enumeration and spatial encoding. Applies the scene's deferred
/// spatial noise, if any.
PreparedGraph prepare_graph(const Scene& scene, const InteractionSpace& space,
                            const DetectionConfig& config, Mode mode);

template <typename S>
struct ScgParams {
  Mlp<S> node_encoder;  // appearance_dim -> n -> n
  Mlp<S> edge_encoder;  // 36 -> n -> n -> n
  Mbf<S> mbf_h;         // messages human -> object
  Mbf<S> mbf_o;         // messages object -> human
  Mbf<S> mbf_alpha;     // adjacency and pairwise refinement, input x ⊕ y
  Mbf<S> mbf_g;         // global context
  Linear<S> adjacency_head;  // n -> 1
  Linear<S> classifier;      // 2n -> |A|
  LayerNormParams<S> norm_h;
  LayerNormParams<S> norm_o;
  // Appearance-only message functions, present when the message stage is off.
  std::optional<Linear<S>> message_linear_h;
  std::optional<Linear<S>> message_linear_o;

  static ScgParams init(const ModelConfig& config, Rng& rng);
  void visit(const ParamVisitor<S>& fn);
};

/// Node, edge and adjacency values during message passing.
template <typename S>
struct GraphState {
  Var<S> humans;   // |H| x n
  Var<S> objects;  // |O| x n
  Var<S> edges;    // |H||O| x n, fixed across iterations
  Var<S> alpha_row;  // |H| x |O|, rows sum to 1 (last computed)
  Var<S> alpha_col;  // |H| x |O|, columns sum to 1
};

struct PairPrediction {
  std::string image_id;
  Box human_box;
  double human_score = 0;
  Box object_box;
  double object_score = 0;
  int object_class = 0;
  std::size_t human_node = 0, object_node = 0;
  std::vector<int> actions;         // A_o of the object class
  std::vector<double> raw_scores;   // sigmoid of the logits, per action
  std::vector<double> final_scores; // detection-score weighted, per action
};

template <typename S>
class ScgModel {
 public:
  ScgModel(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const noexcept { return config_; }
  ScgParams<S>& params() noexcept { return params_; }
  const ScgParams<S>& params() const noexcept { return params_; }

  std::vector<std::pair<std::string, Tensor<S>*>> named_parameters();
  std::size_t parameter_count();

  GraphState<S> init_graph(Tape<S>& tape, const PreparedGraph& graph) const;
  /// Row- and column-normalized adjacency from the current node states.
  std::pair<Var<S>, Var<S>> compute_adjacency(Tape<S>& tape, const GraphState<S>& state,
                                              const PreparedGraph& graph) const;
  /// `iterations` synchronous updates of both node sets.
  GraphState<S> message_pass(Tape<S>& tape, GraphState<S> state, const PreparedGraph& graph,
                             std::size_t iterations) const;
  /// Interaction logits for every candidate pair: (pairs x |A|).
  Var<S> pair_logits(Tape<S>& tape, const GraphState<S>& state, const PreparedGraph& graph) const;
  /// init_graph, message_pass with the configured T, pair_logits.
  Var<S> forward(Tape<S>& tape, const PreparedGraph& graph) const;

  std::vector<PairPrediction> predict(const PreparedGraph& graph, const InteractionSpace& space,
                                      double lambda) const;

  /// Writes `model.scgt` and `manifest.json` into `dir`.
  void save(const std::string& dir, const nlohmann::json& extra = nlohmann::json::object());
  static ScgModel load(const std::string& dir);

 private:
  Var<S> messages(Tape<S>& tape, const Mbf<S>& mbf, const std::optional<Linear<S>>& linear_fallback,
                  Var<S> senders, std::span<const std::size_t> sender_of_cell, Var<S> edges) const;

  ModelConfig config_;
  ScgParams<S> params_;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Raw scores masked to the valid actions of each pair's object class.
std::vector<PairPrediction> classify_pairs(const Eigen::MatrixXd& logits, const PreparedGraph& graph,
                                           const InteractionSpace& space);

/// s = (s_h)^λ (s_o)^λ s̃ for every action of the pair.
PairPrediction final_scores(PairPrediction pred, double lambda);

enum class Modality { appearance, spatial };

/// Adds zero-mean Gaussian noise of standard deviation `sigma` to the
/// appearance rows, or schedules it for the augmented spatial features.
Scene corrupt_modality(const Scene& scene, Modality target, double sigma, std::uint64_t seed);

}  // namespace scg
