#pragma once

#include "scg/detections.hpp"
#include "scg/random.hpp"
#include "scg/spatial.hpp"

#include "json.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace scg {

/// Bound on one named spatial component: min < value < max.
struct SpatialPredicate {
  std::string component;
  std::optional<double> min, max;

  bool operator()(const SpatialVector& p) const;
};

/// A set of predicates that must all hold for one (human, object) pair.
struct PairCondition {
  std::string object;  // object category name
  std::vector<SpatialPredicate> all;

  bool holds(const SpatialVector& p) const;
};

/// The action holds for (human, object of class `object`) when `all`
/// holds for the pair and, if given, the human also has some object of
/// class `context->object` satisfying `context->all`.
struct ActionRule {
  std::string action;
  PairCondition pair;
  std::optional<PairCondition> context;

  std::string name() const { return action + " " + pair.object; }
};

struct ObjectClassSpec {
  std::string name;
  std::vector<double> prototype;  // empty: drawn from the seed
  std::optional<double> noise;    // appearance noise, default SynthSpec::appearance_noise
  double per_human = 0.0;         // chance each human gets one anchored instance
  double weight = 1.0;            // for free objects
  std::map<std::string, double> templates;  // placement template -> weight
};

struct DetectionNoise {
  double jitter = 0.02;       // corner std, relative to box size
  double dropout = 0.0;       // chance a true box is missed
  double distractors = 0.0;   // expected false boxes per scene
};

struct SynthSpec {
  std::size_t num_train = 200;
  std::size_t num_test = 100;
  double image_width = 640, image_height = 480;
  std::size_t appearance_dim = 16;
  double prototype_scale = 1.0;
  double appearance_noise = 0.05;
  std::string human = "person";
  std::vector<ObjectClassSpec> objects;  // non-human categories
  std::vector<std::string> actions;
  std::vector<ActionRule> rules;
  /// Extra valid (action, object) combinations beyond those with rules.
  std::vector<std::pair<std::string, std::string>> extra_valid;
  std::size_t min_humans = 1, max_humans = 3;
  std::size_t min_free_objects = 0, max_free_objects = 0;
  /// "ambiguity": at least two humans, each with one instance of the first
  /// object class; "free": anchored and free objects as configured.
  std::string layout = "free";
  DetectionNoise detection;
  std::uint64_t seed = 0;

  nlohmann::json to_json() const;
  static SynthSpec from_json(const nlohmann::json& j);
  static SynthSpec load(const std::string& path);
  SynthSpec with_seed(std::uint64_t s) const {
    SynthSpec copy = *this;
    copy.seed = s;
    return copy;
  }

  /// Benchmark where pairs of one class differ only in geometry, and
  /// "ride bicycle" additionally needs a helmet on the rider's head.
  static SynthSpec ambiguity_benchmark(std::uint64_t seed = 0);
  /// Labels that depend only on pairwise geometry.
  static SynthSpec spatial_only(std::uint64_t seed = 0);
};

/// Interaction space implied by a spec; `rare` lists interaction ids.
InteractionSpace make_interaction_space(const SynthSpec& spec, const std::vector<int>& rare = {});

/// Per-class prototypes in InteractionSpace object order (human first).
std::vector<Eigen::VectorXd> class_prototypes(const SynthSpec& spec);

struct Instance {
  Box box;
  int class_id = 0;
  Eigen::VectorXd appearance;
};

/// Ground-truth pairs implied by the rules, over all human/object instances.
std::vector<GtPair> label_pairs(const SynthSpec& spec, const InteractionSpace& space,
                                const std::vector<Instance>& instances, double width, double height);

/// Scene `index` of the stream `split` ("train" / "test").
Scene generate_scene(const SynthSpec& spec, const InteractionSpace& space, std::string_view split,
                     std::uint64_t index);

/// Scene with >= 2 humans and one instance of the first object class per
/// human, labelled by rule evaluation only.
Scene ambiguity_stress_scene(const SynthSpec& spec, const InteractionSpace& space, std::uint64_t index);

/// Builds a scene from true instances: GT pairs by rule, jittered
/// detections, distractors, GT boxes with features, global feature.
Scene make_scene(const SynthSpec& spec, const InteractionSpace& space, std::string image_id,
                 std::vector<Instance> instances, Rng& rng);

struct SynthDataset {
  InteractionSpace space;
  std::vector<Scene> train;
  std::vector<Scene> test;
};

/// Generates both splits; rare = fewer than 10 training instances. Throws
/// naming any rule that no training scene satisfies.
SynthDataset generate_dataset(const SynthSpec& spec);

/// Writes train.jsonl, test.jsonl, space.json and spec.json under `dir`.
void save_dataset(const std::string& dir, const SynthDataset& data, const SynthSpec& spec);

}  // namespace scg
