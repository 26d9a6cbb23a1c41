#include "scg/app.hpp"
#include "scg/parallel.hpp"

#include "CLI11.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>

namespace {

using nlohmann::json;

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  return json::parse(in);
}

/// Flags shared by train and ablate that override the config file.
struct ModelOverrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<double> lambda;
  std::optional<std::size_t> T, cardinality, epochs;
  std::optional<std::string> fusion, stages;
  bool double_precision = false;

  void add(CLI::App* cmd) {
    cmd->add_option("--config", config, "Training config JSON");
    cmd->add_option("--seed", seed, "Run seed");
    cmd->add_option("--lambda", lambda, "Detection-score exponent at inference");
    cmd->add_option("--T", T, "Message-passing iterations");
    cmd->add_option("--cardinality", cardinality, "MBF cardinality c");
    cmd->add_option("--fusion", fusion, "Fusion op")->check(CLI::IsMember({"product", "sum", "concat"}));
    cmd->add_option("--stages", stages, "Spatially conditioned stages: all, none or a csv subset");
    cmd->add_option("--epochs", epochs, "Training epochs");
    cmd->add_flag("--double", double_precision, "Train in 64-bit");
  }

  scg::TrainConfig resolve() const {
    scg::TrainConfig c = config.empty() ? scg::TrainConfig{} : scg::TrainConfig::from_json(read_json(config));
    if (seed) c.seed = *seed;
    if (lambda) c.lambda_infer = *lambda;
    if (T) c.model.iterations = *T;
    if (cardinality) c.model.cardinality = *cardinality;
    if (epochs) c.epochs = *epochs;
    if (fusion) c.model.fusion = scg::parse_fusion_op(*fusion);
    if (stages) c.model.stages = scg::StageSet::parse(*stages);
    if (double_precision) c.double_precision = true;
    c.threads = scg::default_threads();
    return c;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spatially conditioned graphs for human-object interaction detection"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  std::string synth_config, synth_preset = "ambiguity", synth_out;
  std::optional<std::uint64_t> synth_seed;
  synth->add_option("--config", synth_config, "Synthetic spec JSON");
  synth->add_option("--preset", synth_preset, "Built-in spec when no config is given")
      ->check(CLI::IsMember({"ambiguity", "spatial_only"}));
  synth->add_option("--seed", synth_seed, "Generation seed");
  synth->add_option("--out", synth_out, "Output directory")->required();

  // train
  auto* train = app.add_subcommand("train", "Train a model");
  ModelOverrides train_flags;
  std::string train_data, train_out;
  train_flags.add(train);
  train->add_option("--data", train_data, "Dataset directory")->required();
  train->add_option("--out", train_out, "Output directory")->required();

  // infer
  auto* infer = app.add_subcommand("infer", "Score every candidate pair");
  std::string infer_ckpt, infer_data, infer_out, infer_split = "test";
  std::optional<double> infer_lambda;
  bool dump_pairs = false;
  infer->add_option("--checkpoint", infer_ckpt, "Checkpoint directory")->required();
  infer->add_option("--data", infer_data, "Dataset directory")->required();
  infer->add_option("--split", infer_split, "Dataset split");
  infer->add_option("--out", infer_out, "Output directory")->required();
  infer->add_option("--lambda", infer_lambda, "Detection-score exponent");
  infer->add_flag("--dump-pairs", dump_pairs, "Print per-pair action score tables and write pair_scores.json");

  // eval
  auto* eval = app.add_subcommand("eval", "Compute mAP");
  std::string eval_preds, eval_data, eval_out, eval_split = "test", eval_setting = "default";
  eval->add_option("--predictions", eval_preds, "Predictions JSONL")->required();
  eval->add_option("--data", eval_data, "Dataset directory")->required();
  eval->add_option("--split", eval_split, "Dataset split");
  eval->add_option("--setting", eval_setting, "Evaluation setting")
      ->check(CLI::IsMember({"default", "known_object"}));
  eval->add_option("--out", eval_out, "Output directory")->required();

  // gradcheck
  auto* grad = app.add_subcommand("gradcheck", "Check end-to-end gradients on a small graph");
  std::uint64_t grad_seed = 0;
  std::string grad_fusion = "product", grad_stages = "all";
  grad->add_option("--seed", grad_seed, "Parameter seed");
  grad->add_option("--fusion", grad_fusion, "Fusion op")->check(CLI::IsMember({"product", "sum", "concat"}));
  grad->add_option("--stages", grad_stages, "Spatially conditioned stages");

  // ablate
  auto* ablate = app.add_subcommand("ablate", "Train and evaluate an ablation grid");
  ModelOverrides ablate_flags;
  std::string ablate_grid, ablate_data, ablate_out;
  ablate_flags.add(ablate);
  ablate->add_option("--grid", ablate_grid, "Grid JSON: stages, fusion, cardinality, T, seeds");
  ablate->add_option("--data", ablate_data, "Dataset directory")->required();
  ablate->add_option("--out", ablate_out, "Output directory")->required();

  // corrupt-eval
  auto* corrupt = app.add_subcommand("corrupt-eval", "mAP under feature noise per modality");
  std::string corrupt_ckpt, corrupt_data, corrupt_out, corrupt_split = "test";
  std::vector<double> sigmas{0.0, 0.25, 0.5, 1.0};
  std::vector<std::uint64_t> noise_seeds{0, 1, 2};
  corrupt->add_option("--checkpoint", corrupt_ckpt, "Checkpoint directory")->required();
  corrupt->add_option("--data", corrupt_data, "Dataset directory")->required();
  corrupt->add_option("--split", corrupt_split, "Dataset split");
  corrupt->add_option("--sigmas", sigmas, "Noise standard deviations")->delimiter(',');
  corrupt->add_option("--noise-seeds", noise_seeds, "Noise seeds averaged per point")->delimiter(',');
  corrupt->add_option("--out", corrupt_out, "Output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) {
      scg::SynthSpec spec = !synth_config.empty()          ? scg::SynthSpec::load(synth_config)
                            : synth_preset == "spatial_only" ? scg::SynthSpec::spatial_only()
                                                             : scg::SynthSpec::ambiguity_benchmark();
      if (synth_seed) spec.seed = *synth_seed;
      const auto data = scg::cmd_synth(spec, synth_out);
      std::cout << "wrote " << data.train.size() << " train and " << data.test.size() << " test scenes to "
                << synth_out << '\n';
    } else if (train->parsed()) {
      const auto epochs = scg::cmd_train(train_flags.resolve(), train_data, train_out);
      for (const auto& e : epochs) std::cout << "epoch " << e.epoch << "  loss " << e.mean_loss << "  lr " << e.lr << '\n';
      std::cout << "checkpoint: " << (std::filesystem::path(train_out) / "checkpoint").string() << '\n';
    } else if (infer->parsed()) {
      scg::InferOptions opt;
      opt.split = infer_split;
      opt.lambda = infer_lambda;
      opt.threads = scg::default_threads();
      opt.dump_pairs = dump_pairs ? &std::cout : nullptr;
      const auto preds = scg::cmd_infer(infer_ckpt, infer_data, infer_out, opt);
      std::cout << "wrote " << preds.size() << " predictions\n";
    } else if (eval->parsed()) {
      const auto report =
          scg::cmd_eval(eval_preds, eval_data, eval_split, scg::parse_setting(eval_setting), eval_out);
      std::cout << report.table();
    } else if (grad->parsed()) {
      const auto r = scg::model_gradcheck(grad_seed, scg::StageSet::parse(grad_stages), scg::parse_fusion_op(grad_fusion));
      std::cout << "checked " << r.checked << " coordinates, " << r.kinks.size() << " kinks excluded\n"
                << "max relative error " << r.max_rel_error << " (tensor " << r.worst_tensor << ", index "
                << r.worst_index << ")\n";
      if (r.non_finite) std::cout << "non-finite gradient: " << *r.non_finite << '\n';
      std::cout << (r.passed ? "PASS" : "FAIL") << '\n';
      return r.passed ? 0 : 1;
    } else if (ablate->parsed()) {
      const auto grid = ablate_grid.empty() ? scg::AblationGrid{} : scg::AblationGrid::from_json(read_json(ablate_grid));
      const auto rows = scg::cmd_ablate(ablate_flags.resolve(), grid, ablate_data, ablate_out);
      std::cout << scg::ablation_table(rows);
    } else if (corrupt->parsed()) {
      const auto points = scg::cmd_corrupt_eval(corrupt_ckpt, corrupt_data, corrupt_split, sigmas, noise_seeds,
                                                corrupt_out, scg::default_threads());
      std::cout << "modality,sigma,map_full\n";
      for (const auto& p : points) {
        std::cout << (p.modality == scg::Modality::appearance ? "appearance" : "spatial") << ',' << p.sigma << ','
                  << p.map_full << '\n';
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
