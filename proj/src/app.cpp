#include "scg/app.hpp"

#include "scg/parallel.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

namespace scg {

using nlohmann::json;
namespace fs = std::filesystem;

void write_file_atomic(const std::string& path, const std::string& content) {
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << content;
    if (!out) throw std::runtime_error("write failed: " + tmp.string());
  }
  fs::rename(tmp, target);
}

void write_resolved_config(const std::string& dir, const json& config) {
  write_file_atomic((fs::path(dir) / "resolved_config.json").string(), config.dump(2) + "\n");
}

Dataset load_dataset(const std::string& dir, const std::string& split) {
  const fs::path root(dir);
  if (!fs::exists(root / "space.json")) throw std::runtime_error("missing " + (root / "space.json").string());
  Dataset d{InteractionSpace::load((root / "space.json").string()), {}};
  d.scenes = load_scenes((root / (split + ".jsonl")).string());
  for (const auto& s : d.scenes) s.validate(d.space);
  return d;
}

SynthDataset cmd_synth(const SynthSpec& spec, const std::string& out_dir) {
  SynthDataset data = generate_dataset(spec);
  save_dataset(out_dir, data, spec);
  write_resolved_config(out_dir, {{"command", "synth"}, {"spec", spec.to_json()}});
  return data;
}

namespace {

/// Feature widths come from the data, not the config.
TrainConfig fit_to_data(TrainConfig config, const std::vector<Scene>& scenes) {
  if (scenes.empty()) throw std::invalid_argument("dataset has no scenes");
  config.model.appearance_dim = static_cast<std::size_t>(scenes.front().appearance.cols());
  config.model.global_dim = static_cast<std::size_t>(scenes.front().global_feature.size());
  return config;
}

}  // namespace

std::vector<EpochMetrics> cmd_train(const TrainConfig& requested, const std::string& data_dir,
                                    const std::string& out_dir) {
  const Dataset data = load_dataset(data_dir, "train");
  const TrainConfig config = fit_to_data(requested, data.scenes);
  write_resolved_config(out_dir, {{"command", "train"}, {"data", data_dir}, {"train", config.to_json()}});
  TrainOptions options;
  options.output_dir = out_dir;
  if (config.double_precision) return train<double>(config, data.scenes, data.space, options).epochs;
  return train<float>(config, data.scenes, data.space, options).epochs;
}

namespace {

double checkpoint_lambda(const std::string& checkpoint) {
  std::ifstream in(fs::path(checkpoint) / "manifest.json");
  if (!in) throw std::runtime_error("missing checkpoint manifest under " + checkpoint);
  return json::parse(in).value("lambda", 2.8);
}

std::string format_score(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

}  // namespace

void dump_pair_scores(std::ostream& out, const std::vector<PairPrediction>& pairs, const InteractionSpace& space) {
  std::size_t start = 0;
  while (start < pairs.size()) {
    std::size_t end = start;
    while (end < pairs.size() && pairs[end].image_id == pairs[start].image_id) ++end;
    std::size_t n_h = 0, n_o = 0;
    for (std::size_t i = start; i < end; ++i) {
      n_h = std::max(n_h, pairs[i].human_node + 1);
      n_o = std::max(n_o, pairs[i].object_node + 1);
    }
    for (std::size_t a = 0; a < space.num_actions(); ++a) {
      std::vector<std::vector<std::string>> cells(n_h, std::vector<std::string>(n_o, "-"));
      bool any = false;
      for (std::size_t i = start; i < end; ++i) {
        const auto& p = pairs[i];
        for (std::size_t k = 0; k < p.actions.size(); ++k) {
          if (p.actions[k] != static_cast<int>(a)) continue;
          cells[p.human_node][p.object_node] = format_score(p.final_scores[k]);
          any = true;
        }
      }
      if (!any) continue;
      out << pairs[start].image_id << "  " << space.actions[a] << '\n' << std::setw(8) << "";
      for (std::size_t j = 0; j < n_o; ++j) out << std::setw(8) << ("o" + std::to_string(j));
      out << '\n';
      for (std::size_t i = 0; i < n_h; ++i) {
        out << std::setw(8) << ("h" + std::to_string(i));
        for (std::size_t j = 0; j < n_o; ++j) out << std::setw(8) << cells[i][j];
        out << '\n';
      }
      out << '\n';
    }
    start = end;
  }
}

json pair_scores_json(const std::vector<PairPrediction>& pairs, const InteractionSpace& space) {
  json images = json::array();
  std::size_t start = 0;
  while (start < pairs.size()) {
    std::size_t end = start;
    while (end < pairs.size() && pairs[end].image_id == pairs[start].image_id) ++end;
    std::size_t n_h = 0, n_o = 0;
    for (std::size_t i = start; i < end; ++i) {
      n_h = std::max(n_h, pairs[i].human_node + 1);
      n_o = std::max(n_o, pairs[i].object_node + 1);
    }
    json humans = json::array(), objects = json::array();
    humans.get_ref<json::array_t&>().resize(n_h);
    objects.get_ref<json::array_t&>().resize(n_o);
    json tables = json::object();
    for (std::size_t i = start; i < end; ++i) {
      const auto& p = pairs[i];
      humans[p.human_node] = {{"bbox", box_json(p.human_box)}, {"score", p.human_score}};
      objects[p.object_node] = {{"bbox", box_json(p.object_box)},
                                {"score", p.object_score},
                                {"class", space.objects[static_cast<std::size_t>(p.object_class)]}};
      for (std::size_t k = 0; k < p.actions.size(); ++k) {
        const auto& name = space.actions[static_cast<std::size_t>(p.actions[k])];
        if (!tables.contains(name)) tables[name] = json::array();
        auto& t = tables[name];
        if (t.empty()) {
          for (std::size_t r = 0; r < n_h; ++r) t.push_back(std::vector<std::nullptr_t>(n_o, nullptr));
        }
        t[p.human_node][p.object_node] = p.final_scores[k];
      }
    }
    images.push_back({{"image_id", pairs[start].image_id}, {"humans", humans}, {"objects", objects}, {"scores", tables}});
    start = end;
  }
  return images;
}

std::vector<Prediction> cmd_infer(const std::string& checkpoint, const std::string& data_dir,
                                  const std::string& out_dir, const InferOptions& options) {
  const Dataset data = load_dataset(data_dir, options.split);
  const auto model = ScgModel<double>::load(checkpoint);
  const double lambda = options.lambda.value_or(checkpoint_lambda(checkpoint));
  write_resolved_config(out_dir, {{"command", "infer"},
                                  {"checkpoint", checkpoint},
                                  {"data", data_dir},
                                  {"split", options.split},
                                  {"lambda", lambda},
                                  {"model", model.config().to_json()}});
  const auto pairs = predict_scenes(model, data.scenes, data.space, DetectionConfig{}, lambda, options.threads);
  auto preds = to_predictions(pairs, data.space);
  fs::create_directories(out_dir);
  if (options.dump_pairs) {
    dump_pair_scores(*options.dump_pairs, pairs, data.space);
    write_file_atomic((fs::path(out_dir) / "pair_scores.json").string(),
                      pair_scores_json(pairs, data.space).dump(2) + "\n");
  }
  save_predictions((fs::path(out_dir) / "predictions.jsonl").string(), preds);
  return preds;
}

EvalReport cmd_eval(const std::string& predictions, const std::string& data_dir, const std::string& split,
                    Setting setting, const std::string& out_dir) {
  const Dataset data = load_dataset(data_dir, split);
  const EvalReport report = evaluate(load_predictions(predictions), data.scenes, data.space, setting);
  write_resolved_config(out_dir, {{"command", "eval"},
                                  {"predictions", predictions},
                                  {"data", data_dir},
                                  {"split", split},
                                  {"setting", std::string(to_string(setting))}});
  write_file_atomic((fs::path(out_dir) / "report.json").string(), report.to_json(data.space).dump(2) + "\n");
  write_file_atomic((fs::path(out_dir) / "report.txt").string(), report.table());
  return report;
}

json AblationGrid::to_json() const {
  std::vector<std::string> ops;
  for (auto f : fusion) ops.emplace_back(scg::to_string(f));
  return {{"stages", stages}, {"fusion", ops}, {"cardinality", cardinality}, {"T", iterations}, {"seeds", seeds}};
}

AblationGrid AblationGrid::from_json(const json& j) {
  AblationGrid g;
  g.stages = j.value("stages", g.stages);
  if (j.contains("fusion")) {
    g.fusion.clear();
    for (const auto& f : j.at("fusion")) g.fusion.push_back(parse_fusion_op(f.get<std::string>()));
  }
  g.cardinality = j.value("cardinality", g.cardinality);
  g.iterations = j.value("T", g.iterations);
  g.seeds = j.value("seeds", g.seeds);
  return g;
}

std::string ablation_table(const std::vector<AblationRow>& rows) {
  std::ostringstream out;
  char line[160];
  std::snprintf(line, sizeof line, "%-40s %-8s %4s %3s %9s %9s %9s\n", "stages", "fusion", "c", "T", "Full", "Rare",
                "Non-rare");
  out << line;
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%-40s %-8s %4zu %3zu %9.2f %9.2f %9.2f\n", r.stages.c_str(),
                  std::string(to_string(r.fusion)).c_str(), r.cardinality, r.iterations, 100 * r.map_full,
                  100 * r.map_rare, 100 * r.map_non_rare);
    out << line;
  }
  return out.str();
}

std::vector<AblationRow> cmd_ablate(const TrainConfig& requested, const AblationGrid& grid, const std::string& data_dir,
                                    const std::string& out_dir, std::ostream* progress) {
  const Dataset train_set = load_dataset(data_dir, "train");
  const TrainConfig base = fit_to_data(requested, train_set.scenes);
  const Dataset test_set = load_dataset(data_dir, "test");
  write_resolved_config(out_dir, {{"command", "ablate"}, {"data", data_dir}, {"train", base.to_json()},
                                  {"grid", grid.to_json()}});
  if (grid.seeds.empty()) throw std::invalid_argument("ablation grid needs at least one seed");
  std::vector<AblationRow> rows;
  json cells = json::array();
  for (const auto& stages : grid.stages) {
    for (auto fusion : grid.fusion) {
      for (auto c : grid.cardinality) {
        for (auto T : grid.iterations) {
          AblationRow row{StageSet::parse(stages).to_string(), fusion, c, T};
          json per_seed = json::array();
          for (auto seed : grid.seeds) {
            TrainConfig cfg = base;
            cfg.model.stages = StageSet::parse(stages);
            cfg.model.fusion = fusion;
            cfg.model.cardinality = c;
            cfg.model.iterations = T;
            cfg.seed = seed;
            const auto result = train<double>(cfg, train_set.scenes, train_set.space);
            const auto preds = to_predictions(
                predict_scenes(result.model, test_set.scenes, test_set.space, cfg.detection, cfg.lambda_infer,
                               base.threads),
                test_set.space);
            const auto report = evaluate(preds, test_set.scenes, test_set.space, Setting::default_setting);
            row.map_full += report.map_full.value_or(0);
            row.map_rare += report.map_rare.value_or(0);
            row.map_non_rare += report.map_non_rare.value_or(0);
            per_seed.push_back({{"seed", seed}, {"map_full", report.map_full.value_or(0)}});
          }
          const double k = static_cast<double>(grid.seeds.size());
          row.map_full /= k;
          row.map_rare /= k;
          row.map_non_rare /= k;
          rows.push_back(row);
          cells.push_back({{"stages", row.stages},
                           {"fusion", std::string(to_string(fusion))},
                           {"c", c},
                           {"T", T},
                           {"map_full", row.map_full},
                           {"map_rare", row.map_rare},
                           {"map_non_rare", row.map_non_rare},
                           {"seeds", per_seed}});
          if (progress) *progress << ablation_table({row}).substr(ablation_table({}).size()) << std::flush;
        }
      }
    }
  }
  write_file_atomic((fs::path(out_dir) / "ablation.json").string(), cells.dump(2) + "\n");
  write_file_atomic((fs::path(out_dir) / "ablation.txt").string(), ablation_table(rows));
  return rows;
}

std::vector<Scene> corrupt_scenes(const std::vector<Scene>& scenes, Modality modality, double sigma,
                                  std::uint64_t seed) {
  std::vector<Scene> out;
  out.reserve(scenes.size());
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    out.push_back(corrupt_modality(scenes[i], modality, sigma, derive_seed(seed, "corrupt", i)));
  }
  return out;
}

std::vector<CurvePoint> cmd_corrupt_eval(const std::string& checkpoint, const std::string& data_dir,
                                         const std::string& split, const std::vector<double>& sigmas,
                                         const std::vector<std::uint64_t>& seeds, const std::string& out_dir,
                                         std::size_t threads) {
  if (seeds.empty()) throw std::invalid_argument("corrupt-eval needs at least one noise seed");
  const Dataset data = load_dataset(data_dir, split);
  const auto model = ScgModel<double>::load(checkpoint);
  const double lambda = checkpoint_lambda(checkpoint);
  write_resolved_config(out_dir, {{"command", "corrupt-eval"},
                                  {"checkpoint", checkpoint},
                                  {"data", data_dir},
                                  {"split", split},
                                  {"sigmas", sigmas},
                                  {"seeds", seeds},
                                  {"lambda", lambda}});
  std::vector<CurvePoint> points;
  std::string csv = "modality,sigma,map_full\n";
  for (auto modality : {Modality::appearance, Modality::spatial}) {
    for (double sigma : sigmas) {
      CurvePoint pt{modality, sigma, 0.0};
      for (auto seed : seeds) {
        const auto scenes = corrupt_scenes(data.scenes, modality, sigma, seed);
        const auto preds =
            to_predictions(predict_scenes(model, scenes, data.space, DetectionConfig{}, lambda, threads), data.space);
        pt.map_full += evaluate(preds, data.scenes, data.space, Setting::default_setting).map_full.value_or(0);
      }
      pt.map_full /= static_cast<double>(seeds.size());
      points.push_back(pt);
      char line[96];
      std::snprintf(line, sizeof line, "%s,%g,%.6f\n", modality == Modality::appearance ? "appearance" : "spatial",
                    sigma, pt.map_full);
      csv += line;
    }
  }
  write_file_atomic((fs::path(out_dir) / "curve.csv").string(), csv);
  return points;
}

GradcheckReport model_gradcheck(std::uint64_t seed, const StageSet& stages, FusionOp fusion, double step,
                                double tol) {
  const InteractionSpace space({"ride", "hold"}, {"person", "bicycle"}, {{1}, {0, 1}});
  Rng rng = make_rng(seed, "gradcheck");
  std::uniform_real_distribution<double> u(-1, 1);

  Scene scene;
  scene.image_id = "gradcheck";
  scene.width = 100;
  scene.height = 100;
  scene.detections = {{{10, 10, 30, 60}, 0.9, 0},
                      {{55, 15, 75, 70}, 0.8, 0},
                      {{5, 40, 40, 80}, 0.7, 1},
                      {{50, 45, 90, 85}, 0.95, 1}};
  scene.appearance = Eigen::MatrixXd::NullaryExpr(4, 3, [&] { return u(rng); });
  scene.global_feature = Eigen::VectorXd::NullaryExpr(3, [&] { return u(rng); });
  scene.gt_pairs = {{{10, 10, 30, 60}, {5, 40, 40, 80}, *space.interaction_id(0, 1)},
                    {{55, 15, 75, 70}, {50, 45, 90, 85}, *space.interaction_id(1, 1)}};

  const PreparedGraph graph = prepare_graph(scene, space, DetectionConfig{}, Mode::infer);
  const TargetMatrix targets = assign_targets(graph, scene.gt_pairs, space);

  ModelConfig mc;
  mc.appearance_dim = 3;
  mc.global_dim = 3;
  mc.hidden = 4;
  mc.cardinality = 2;
  mc.iterations = 2;
  mc.fusion = fusion;
  mc.stages = stages;
  mc.num_actions = space.num_actions();
  ScgModel<double> model(mc, seed);
  TrainConfig tc;
  tc.model = mc;

  std::vector<Tensor<double>*> params;
  for (auto& [name, t] : model.named_parameters()) params.push_back(t);
  const double norm = 1.0 / static_cast<double>(std::max<std::size_t>(1, targets.positives()));
  return gradcheck_parameters(
      [&](Tape<double>& tape) { return mul_scalar(scene_loss(model, tape, graph, targets, tc), norm); }, params,
      step, tol);
}

}  // namespace scg
