#include "scg/model.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

namespace scg {

namespace fs = std::filesystem;

StageSet StageSet::parse(std::string_view text) {
  if (text == "all") return all();
  if (text == "none" || text.empty()) return none();
  StageSet s = none();
  std::stringstream in{std::string(text)};
  std::string item;
  while (std::getline(in, item, ',')) {
    if (item == "adjacency") s.adjacency = true;
    else if (item == "messages") s.messages = true;
    else if (item == "global") s.global = true;
    else if (item == "refinement") s.refinement = true;
    else throw std::invalid_argument("unknown stage '" + item + "' (adjacency, messages, global, refinement)");
  }
  return s;
}

std::string StageSet::to_string() const {
  if (*this == all()) return "all";
  if (!any()) return "none";
  std::string out;
  auto add = [&](bool on, const char* name) {
    if (!on) return;
    if (!out.empty()) out += ',';
    out += name;
  };
  add(adjacency, "adjacency");
  add(messages, "messages");
  add(global, "global");
  add(refinement, "refinement");
  return out;
}

nlohmann::json ModelConfig::to_json() const {
  return {{"appearance_dim", appearance_dim}, {"global_dim", global_dim},     {"n", hidden},
          {"c", cardinality},                 {"T", iterations},              {"fusion", std::string(scg::to_string(fusion))},
          {"stages", stages.to_string()},     {"num_actions", num_actions},   {"layer_norm_eps", layer_norm_eps}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.appearance_dim = j.value("appearance_dim", c.appearance_dim);
  c.global_dim = j.value("global_dim", c.global_dim);
  c.hidden = j.value("n", c.hidden);
  c.cardinality = j.value("c", c.cardinality);
  c.iterations = j.value("T", c.iterations);
  c.fusion = parse_fusion_op(j.value("fusion", std::string("product")));
  c.stages = StageSet::parse(j.value("stages", std::string("all")));
  c.num_actions = j.value("num_actions", c.num_actions);
  c.layer_norm_eps = j.value("layer_norm_eps", c.layer_norm_eps);
  return c;
}

PreparedGraph prepare_graph(const Scene& scene, const InteractionSpace& space, const DetectionConfig& config,
                            Mode mode) {
  const Scene s = augment_with_gt(scene, mode);
  const NodeSelection sel = filter_and_select(s, space, config);

  PreparedGraph g;
  g.image_id = s.image_id;
  g.width = s.width;
  g.height = s.height;
  g.global_feature = s.global_feature;
  for (auto h : sel.humans) g.humans.push_back(s.detections[h]);
  g.object_appearance.resize(static_cast<Eigen::Index>(sel.objects.size()), s.appearance.cols());
  for (std::size_t j = 0; j < sel.objects.size(); ++j) {
    g.objects.push_back(s.detections[sel.objects[j]]);
    g.object_source.push_back(sel.objects[j]);
    g.object_appearance.row(static_cast<Eigen::Index>(j)) = s.appearance.row(static_cast<Eigen::Index>(sel.objects[j]));
  }

  const std::size_t H = sel.humans.size(), O = sel.objects.size();
  g.spatial.resize(static_cast<Eigen::Index>(H * O), kAugmentedSpatialDim);
  g.keep.assign(H * O, 0);
  for (std::size_t i = 0; i < H; ++i) {
    for (std::size_t j = 0; j < O; ++j) {
      const std::size_t k = i * O + j;
      g.spatial.row(static_cast<Eigen::Index>(k)) =
          encode_pair(g.humans[i].box, g.objects[j].box, s.width, s.height).augmented.transpose();
      g.cell_human.push_back(i);
      g.cell_object.push_back(j);
      if (sel.humans[i] != sel.objects[j]) {
        g.keep[k] = 1;
        g.pair_cell.push_back(k);
        g.pair_human.push_back(i);
        g.pair_object.push_back(j);
      }
    }
  }
  if (s.spatial_noise && s.spatial_noise->sigma > 0) {
    Rng rng = make_rng(s.spatial_noise->seed, "spatial_noise");
    std::normal_distribution<double> noise(0.0, s.spatial_noise->sigma);
    for (Eigen::Index r = 0; r < g.spatial.rows(); ++r) {
      for (Eigen::Index c = 0; c < g.spatial.cols(); ++c) g.spatial(r, c) += noise(rng);
    }
  }
  return g;
}

template <typename S>
ScgParams<S> ScgParams<S>::init(const ModelConfig& config, Rng& rng) {
  const std::size_t n = config.hidden;
  if (config.num_actions == 0) throw std::invalid_argument("model needs at least one action");
  ScgParams p;
  p.node_encoder = Mlp<S>::init({config.appearance_dim, n, n}, rng);
  p.edge_encoder = Mlp<S>::init({kAugmentedSpatialDim, n, n, n}, rng);
  p.mbf_h = Mbf<S>::init(n, n, n, config.cardinality, config.fusion, rng);
  p.mbf_o = Mbf<S>::init(n, n, n, config.cardinality, config.fusion, rng);
  p.mbf_alpha = Mbf<S>::init(2 * n, n, n, config.cardinality, config.fusion, rng);
  p.mbf_g = Mbf<S>::init(config.global_dim, n, n, config.cardinality, config.fusion, rng);
  p.adjacency_head = Linear<S>::init(n, 1, rng);
  p.classifier = Linear<S>::init(2 * n, config.num_actions, rng);
  p.norm_h = LayerNormParams<S>::init(n);
  p.norm_o = LayerNormParams<S>::init(n);
  if (!config.stages.messages) {
    p.message_linear_h = Linear<S>::init(n, n, rng);
    p.message_linear_o = Linear<S>::init(n, n, rng);
  }
  return p;
}

template <typename S>
void ScgParams<S>::visit(const ParamVisitor<S>& fn) {
  node_encoder.visit("node_encoder", fn);
  edge_encoder.visit("edge_encoder", fn);
  mbf_h.visit("h", fn);
  mbf_o.visit("o", fn);
  mbf_alpha.visit("alpha", fn);
  mbf_g.visit("g", fn);
  adjacency_head.visit("adjacency_head", fn);
  classifier.visit("classifier", fn);
  norm_h.visit("norm_h", fn);
  norm_o.visit("norm_o", fn);
  if (message_linear_h) message_linear_h->visit("message_linear_h", fn);
  if (message_linear_o) message_linear_o->visit("message_linear_o", fn);
}

template <typename S>
ScgModel<S>::ScgModel(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  Rng rng = make_rng(seed, "init");
  params_ = ScgParams<S>::init(config_, rng);
}

template <typename S>
std::vector<std::pair<std::string, Tensor<S>*>> ScgModel<S>::named_parameters() {
  std::vector<std::pair<std::string, Tensor<S>*>> out;
  params_.visit([&](const std::string& name, Tensor<S>& t) { out.emplace_back(name, &t); });
  return out;
}

template <typename S>
std::size_t ScgModel<S>::parameter_count() {
  std::size_t total = 0;
  for (auto& [name, t] : named_parameters()) total += t->size();
  return total;
}

namespace {

template <typename S>
Tensor<S> to_tensor(const Eigen::MatrixXd& m) {
  return Tensor<S>::from_matrix(m.cast<S>());
}

}  // namespace

template <typename S>
GraphState<S> ScgModel<S>::init_graph(Tape<S>& tape, const PreparedGraph& graph) const {
  if (graph.num_humans() == 0 || graph.num_objects() == 0) {
    throw std::invalid_argument("init_graph: graph of " + graph.image_id + " has no human or no object nodes");
  }
  if (static_cast<std::size_t>(graph.object_appearance.cols()) != config_.appearance_dim) {
    throw DimensionError("init_graph: appearance width " + std::to_string(graph.object_appearance.cols()) +
                         ", model expects " + std::to_string(config_.appearance_dim));
  }
  std::vector<std::size_t> human_rows(graph.num_humans());
  std::iota(human_rows.begin(), human_rows.end(), std::size_t{0});

  GraphState<S> st;
  st.objects = params_.node_encoder(tape, tape.constant(to_tensor<S>(graph.object_appearance)));
  st.humans = gather_rows(st.objects, std::span<const std::size_t>(human_rows));
  st.edges = params_.edge_encoder(tape, tape.constant(to_tensor<S>(graph.spatial)));
  return st;
}

template <typename S>
std::pair<Var<S>, Var<S>> ScgModel<S>::compute_adjacency(Tape<S>& tape, const GraphState<S>& state,
                                                         const PreparedGraph& graph) const {
  const std::size_t H = graph.num_humans(), O = graph.num_objects();
  Var<S> xy = concat(gather_rows(state.humans, std::span<const std::size_t>(graph.cell_human)),
                     gather_rows(state.objects, std::span<const std::size_t>(graph.cell_object)), 1);
  Var<S> fused = config_.stages.adjacency ? params_.mbf_alpha(tape, xy, state.edges)
                                          : params_.mbf_alpha.unconditioned(tape, xy);
  Var<S> logits = reshape(params_.adjacency_head(tape, relu(fused)), {H, O});
  const std::span<const std::uint8_t> keep(graph.keep);
  return {masked_softmax(logits, keep, 1), masked_softmax(logits, keep, 0)};
}

template <typename S>
Var<S> ScgModel<S>::messages(Tape<S>& tape, const Mbf<S>& mbf, const std::optional<Linear<S>>& linear_fallback,
                             Var<S> senders, std::span<const std::size_t> sender_of_cell, Var<S> edges) const {
  if (linear_fallback) return gather_rows((*linear_fallback)(tape, senders), sender_of_cell);
  return mbf(tape, gather_rows(senders, sender_of_cell), edges);
}

template <typename S>
GraphState<S> ScgModel<S>::message_pass(Tape<S>& tape, GraphState<S> state, const PreparedGraph& graph,
                                        std::size_t iterations) const {
  const S eps = static_cast<S>(config_.layer_norm_eps);
  const std::span<const std::size_t> cell_h(graph.cell_human), cell_o(graph.cell_object);
  for (std::size_t t = 0; t < iterations; ++t) {
    auto [alpha_row, alpha_col] = compute_adjacency(tape, state, graph);
    Var<S> to_humans = messages(tape, params_.mbf_o, params_.message_linear_o, state.objects, cell_o, state.edges);
    Var<S> to_objects = messages(tape, params_.mbf_h, params_.message_linear_h, state.humans, cell_h, state.edges);
    Var<S> agg_h = segment_sum(row_scale(to_humans, alpha_row), cell_h, graph.num_humans());
    Var<S> agg_o = segment_sum(row_scale(to_objects, alpha_col), cell_o, graph.num_objects());
    GraphState<S> next = state;
    next.humans = params_.norm_h(tape, add(state.humans, relu(agg_h)), eps);
    next.objects = params_.norm_o(tape, add(state.objects, relu(agg_o)), eps);
    next.alpha_row = alpha_row;
    next.alpha_col = alpha_col;
    state = next;
  }
  return state;
}

template <typename S>
Var<S> ScgModel<S>::pair_logits(Tape<S>& tape, const GraphState<S>& state, const PreparedGraph& graph) const {
  if (static_cast<std::size_t>(graph.global_feature.size()) != config_.global_dim) {
    throw DimensionError("pair_logits: global feature width " + std::to_string(graph.global_feature.size()) +
                         ", model expects " + std::to_string(config_.global_dim));
  }
  const std::size_t P = graph.num_pairs();
  Var<S> xy = concat(gather_rows(state.humans, std::span<const std::size_t>(graph.pair_human)),
                     gather_rows(state.objects, std::span<const std::size_t>(graph.pair_object)), 1);
  Var<S> z = gather_rows(state.edges, std::span<const std::size_t>(graph.pair_cell));
  Var<S> refined = config_.stages.refinement ? params_.mbf_alpha(tape, xy, z) : params_.mbf_alpha.unconditioned(tape, xy);

  Tensor<S> g({1, config_.global_dim});
  for (std::size_t d = 0; d < config_.global_dim; ++d) g[d] = static_cast<S>(graph.global_feature[static_cast<Eigen::Index>(d)]);
  const std::vector<std::size_t> zeros(P, 0);
  Var<S> gp = gather_rows(tape.constant(std::move(g)), std::span<const std::size_t>(zeros));
  Var<S> context = config_.stages.global ? params_.mbf_g(tape, gp, z) : params_.mbf_g.unconditioned(tape, gp);

  return params_.classifier(tape, relu(concat(refined, context, 1)));
}

template <typename S>
Var<S> ScgModel<S>::forward(Tape<S>& tape, const PreparedGraph& graph) const {
  GraphState<S> state = init_graph(tape, graph);
  state = message_pass(tape, state, graph, config_.iterations);
  return pair_logits(tape, state, graph);
}

template <typename S>
std::vector<PairPrediction> ScgModel<S>::predict(const PreparedGraph& graph, const InteractionSpace& space,
                                                 double lambda) const {
  if (graph.empty()) return {};
  Tape<S> tape(false);
  Var<S> logits = forward(tape, graph);
  auto preds = classify_pairs(logits.value().matrix().template cast<double>(), graph, space);
  for (auto& p : preds) p = final_scores(std::move(p), lambda);
  return preds;
}

template <typename S>
void ScgModel<S>::save(const std::string& dir, const nlohmann::json& extra) {
  fs::create_directories(dir);
  nlohmann::json manifest = extra;
  manifest["format_version"] = kCheckpointVersion;
  manifest["model"] = config_.to_json();
  std::vector<Tensor<float>> tensors;
  nlohmann::json names = nlohmann::json::array();
  for (auto& [name, t] : named_parameters()) {
    names.push_back({{"name", name}, {"shape", t->shape()}});
    tensors.push_back(t->template cast<float>());
  }
  manifest["parameters"] = names;
  save_tensors((fs::path(dir) / "model.scgt").string(), tensors);
  std::ofstream out(fs::path(dir) / "manifest.json");
  if (!out) throw std::runtime_error("cannot write " + (fs::path(dir) / "manifest.json").string());
  out << manifest.dump(2) << '\n';
}

template <typename S>
ScgModel<S> ScgModel<S>::load(const std::string& dir) {
  const fs::path manifest_path = fs::path(dir) / "manifest.json";
  std::ifstream in(manifest_path);
  if (!in) throw std::runtime_error("missing checkpoint manifest " + manifest_path.string());
  const nlohmann::json manifest = nlohmann::json::parse(in);
  const auto version = manifest.value("format_version", 0u);
  if (version != kCheckpointVersion) {
    throw std::runtime_error("checkpoint " + dir + " has format version " + std::to_string(version) +
                             ", expected " + std::to_string(kCheckpointVersion));
  }
  ScgModel model(ModelConfig::from_json(manifest.at("model")), 0);
  auto params = model.named_parameters();
  const auto tensors = load_tensors((fs::path(dir) / "model.scgt").string());
  const auto& names = manifest.at("parameters");
  if (tensors.size() != params.size() || names.size() != params.size()) {
    throw std::runtime_error("checkpoint " + dir + " holds " + std::to_string(tensors.size()) +
                             " tensors, model has " + std::to_string(params.size()) + " parameters");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& [name, t] = params[i];
    if (names[i].at("name").get<std::string>() != name || tensors[i].shape() != t->shape()) {
      throw std::runtime_error("checkpoint " + dir + ": parameter " + std::to_string(i) + " is " +
                               names[i].at("name").get<std::string>() + " " + to_string(tensors[i].shape()) +
                               ", expected " + name + " " + to_string(t->shape()));
    }
    *t = tensors[i].template cast<S>();
    t->set_requires_grad(true);
  }
  return model;
}

std::vector<PairPrediction> classify_pairs(const Eigen::MatrixXd& logits, const PreparedGraph& graph,
                                           const InteractionSpace& space) {
  if (static_cast<std::size_t>(logits.rows()) != graph.num_pairs() ||
      static_cast<std::size_t>(logits.cols()) != space.num_actions()) {
    throw DimensionError("classify_pairs: logits (" + std::to_string(logits.rows()) + "," +
                         std::to_string(logits.cols()) + ") for " + std::to_string(graph.num_pairs()) +
                         " pairs and " + std::to_string(space.num_actions()) + " actions");
  }
  std::vector<PairPrediction> out;
  out.reserve(graph.num_pairs());
  for (std::size_t p = 0; p < graph.num_pairs(); ++p) {
    const Detection& h = graph.humans[graph.pair_human[p]];
    const Detection& o = graph.objects[graph.pair_object[p]];
    PairPrediction q;
    q.image_id = graph.image_id;
    q.human_box = h.box;
    q.human_score = h.score;
    q.object_box = o.box;
    q.object_score = o.score;
    q.object_class = o.class_id;
    q.human_node = graph.pair_human[p];
    q.object_node = graph.pair_object[p];
    q.actions = space.valid_actions(o.class_id);
    for (int a : q.actions) {
      const double x = logits(static_cast<Eigen::Index>(p), a);
      q.raw_scores.push_back(x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)));
    }
    out.push_back(std::move(q));
  }
  return out;
}

PairPrediction final_scores(PairPrediction pred, double lambda) {
  const double weight = std::pow(pred.human_score, lambda) * std::pow(pred.object_score, lambda);
  pred.final_scores.resize(pred.raw_scores.size());
  for (std::size_t i = 0; i < pred.raw_scores.size(); ++i) pred.final_scores[i] = weight * pred.raw_scores[i];
  return pred;
}

Scene corrupt_modality(const Scene& scene, Modality target, double sigma, std::uint64_t seed) {
  if (sigma < 0) throw std::invalid_argument("noise standard deviation must be non-negative");
  Scene out = scene;
  if (sigma == 0) return out;
  if (target == Modality::spatial) {
    out.spatial_noise = SpatialNoise{sigma, seed};
    return out;
  }
  Rng rng = make_rng(seed, "appearance_noise");
  std::normal_distribution<double> noise(0.0, sigma);
  for (Eigen::Index r = 0; r < out.appearance.rows(); ++r) {
    for (Eigen::Index c = 0; c < out.appearance.cols(); ++c) out.appearance(r, c) += noise(rng);
  }
  return out;
}

template struct ScgParams<float>;
template struct ScgParams<double>;
template class ScgModel<float>;
template class ScgModel<double>;

}  // namespace scg
