#pragma once

#include "scg/evaluation.hpp"
#include "scg/gradcheck.hpp"
#include "scg/synth.hpp"
#include "scg/training.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace scg {

/// Writes `content` to a sibling temporary file and renames it over `path`.
void write_file_atomic(const std::string& path, const std::string& content);

/// `resolved_config.json` under `dir`.
void write_resolved_config(const std::string& dir, const nlohmann::json& config);

struct Dataset {
  InteractionSpace space;
  std::vector<Scene> scenes;
};

/// `<dir>/space.json` and `<dir>/<split>.jsonl`.
Dataset load_dataset(const std::string& dir, const std::string& split);

/// Generates a synthetic dataset into `out_dir`.
SynthDataset cmd_synth(const SynthSpec& spec, const std::string& out_dir);

/// Trains on `<data_dir>/train.jsonl`; writes checkpoint/, metrics.jsonl. The
/// feature widths of the model are taken from the data.
std::vector<EpochMetrics> cmd_train(const TrainConfig& config, const std::string& data_dir,
                                    const std::string& out_dir);

struct InferOptions {
  std::string split = "test";
  std::optional<double> lambda;  // default: the checkpoint's
  std::size_t threads = 1;
  std::ostream* dump_pairs = nullptr;
};

/// Writes `<out_dir>/predictions.jsonl`, and `<out_dir>/pair_scores.json`
/// when `dump_pairs` is set.
std::vector<Prediction> cmd_infer(const std::string& checkpoint, const std::string& data_dir,
                                  const std::string& out_dir, const InferOptions& options = {});

/// Per-image tables of action scores: rows are human nodes, columns object
/// nodes, one table per action.
void dump_pair_scores(std::ostream& out, const std::vector<PairPrediction>& pairs, const InteractionSpace& space);

/// The same tables as JSON: one entry per image with its human and object
/// nodes and, per action, a humans x objects matrix (null where undefined).
nlohmann::json pair_scores_json(const std::vector<PairPrediction>& pairs, const InteractionSpace& space);

/// Writes `<out_dir>/report.json` and `<out_dir>/report.txt`.
EvalReport cmd_eval(const std::string& predictions, const std::string& data_dir, const std::string& split,
                    Setting setting, const std::string& out_dir);

struct AblationGrid {
  std::vector<std::string> stages{"all"};
  std::vector<FusionOp> fusion{FusionOp::product};
  std::vector<std::size_t> cardinality{16};
  std::vector<std::size_t> iterations{2};
  std::vector<std::uint64_t> seeds{0};

  nlohmann::json to_json() const;
  static AblationGrid from_json(const nlohmann::json& j);
};

struct AblationRow {
  std::string stages;
  FusionOp fusion = FusionOp::product;
  std::size_t cardinality = 0;
  std::size_t iterations = 0;
  double map_full = 0, map_rare = 0, map_non_rare = 0;  // seed means
};

/// Trains and evaluates each grid cell on `<data_dir>`; writes
/// ablation.json and ablation.txt.
std::vector<AblationRow> cmd_ablate(const TrainConfig& base, const AblationGrid& grid, const std::string& data_dir,
                                    const std::string& out_dir, std::ostream* progress = nullptr);
std::string ablation_table(const std::vector<AblationRow>& rows);

struct CurvePoint {
  Modality modality = Modality::appearance;
  double sigma = 0;
  double map_full = 0;  // mean over noise seeds
};

/// mAP under Gaussian noise on each modality; writes curve.csv.
std::vector<CurvePoint> cmd_corrupt_eval(const std::string& checkpoint, const std::string& data_dir,
                                         const std::string& split, const std::vector<double>& sigmas,
                                         const std::vector<std::uint64_t>& seeds, const std::string& out_dir,
                                         std::size_t threads = 1);

/// Test-time corruption of every scene, seeded per scene.
std::vector<Scene> corrupt_scenes(const std::vector<Scene>& scenes, Modality modality, double sigma,
                                  std::uint64_t seed);

/// Central-difference check of the full training loss with respect to every
/// parameter of a small model on a two-human, two-object graph.
GradcheckReport model_gradcheck(std::uint64_t seed, const StageSet& stages = StageSet::all(),
                                FusionOp fusion = FusionOp::product, double step = 1e-6, double tol = 1e-4);

}  // namespace scg
