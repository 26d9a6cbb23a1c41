#include "scg/training.hpp"

#include "scg/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <memory>
#include <numeric>

namespace scg {

namespace fs = std::filesystem;

nlohmann::json TrainConfig::to_json() const {
  return {{"beta", beta},
          {"gamma", gamma},
          {"lambda_train", lambda_train},
          {"lambda_infer", lambda_infer},
          {"lr_head", lr_head},
          {"lr_encoder", lr_encoder},
          {"weight_decay", weight_decay},
          {"adam_beta1", adam_beta1},
          {"adam_beta2", adam_beta2},
          {"adam_eps", adam_eps},
          {"epochs", epochs},
          {"lr_drop_epoch", lr_drop_epoch},
          {"lr_drop_factor", lr_drop_factor},
          {"batch_size", batch_size},
          {"score_threshold", detection.score_threshold},
          {"nms_threshold", detection.nms_threshold},
          {"max_per_side", detection.max_per_side},
          {"model", model.to_json()},
          {"seed", seed},
          {"double_precision", double_precision}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.beta = j.value("beta", c.beta);
  c.gamma = j.value("gamma", c.gamma);
  c.lambda_train = j.value("lambda_train", c.lambda_train);
  c.lambda_infer = j.value("lambda_infer", c.lambda_infer);
  c.lr_head = j.value("lr_head", c.lr_head);
  c.lr_encoder = j.value("lr_encoder", c.lr_encoder);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.adam_beta1 = j.value("adam_beta1", c.adam_beta1);
  c.adam_beta2 = j.value("adam_beta2", c.adam_beta2);
  c.adam_eps = j.value("adam_eps", c.adam_eps);
  c.epochs = j.value("epochs", c.epochs);
  c.lr_drop_epoch = j.value("lr_drop_epoch", c.lr_drop_epoch);
  c.lr_drop_factor = j.value("lr_drop_factor", c.lr_drop_factor);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.detection.score_threshold = j.value("score_threshold", c.detection.score_threshold);
  c.detection.nms_threshold = j.value("nms_threshold", c.detection.nms_threshold);
  c.detection.max_per_side = j.value("max_per_side", c.detection.max_per_side);
  if (j.contains("model")) c.model = ModelConfig::from_json(j.at("model"));
  c.seed = j.value("seed", c.seed);
  c.double_precision = j.value("double_precision", c.double_precision);
  if (!(c.beta >= 0 && c.beta <= 1)) throw std::invalid_argument("beta must lie in [0, 1]");
  if (!(c.gamma >= 0)) throw std::invalid_argument("gamma must be non-negative");
  if (c.batch_size == 0) throw std::invalid_argument("batch_size must be positive");
  return c;
}

std::size_t TargetMatrix::positives() const {
  return static_cast<std::size_t>(std::count(label.begin(), label.end(), std::uint8_t{1}));
}

std::vector<std::size_t> TargetMatrix::flat_indices() const {
  std::vector<std::size_t> out(size());
  for (std::size_t e = 0; e < size(); ++e) out[e] = pair[e] * num_actions + static_cast<std::size_t>(action[e]);
  return out;
}

TargetMatrix assign_targets(const PreparedGraph& graph, const std::vector<GtPair>& gt_pairs,
                            const InteractionSpace& space, double iou_threshold) {
  TargetMatrix t;
  t.num_actions = space.num_actions();
  for (std::size_t p = 0; p < graph.num_pairs(); ++p) {
    const Detection& h = graph.humans[graph.pair_human[p]];
    const Detection& o = graph.objects[graph.pair_object[p]];
    for (int a : space.valid_actions(o.class_id)) {
      bool positive = false;
      for (const auto& gt : gt_pairs) {
        const Interaction& in = space.interaction(gt.interaction);
        if (in.action != a || in.object != o.class_id) continue;
        if (std::min(iou(h.box, gt.human), iou(o.box, gt.object)) > iou_threshold) {
          positive = true;
          break;
        }
      }
      t.pair.push_back(p);
      t.action.push_back(a);
      t.label.push_back(positive ? 1 : 0);
    }
  }
  return t;
}

double focal_loss(double y_hat, bool positive, double beta, double gamma) {
  const double y = std::clamp(y_hat, kScoreClamp, 1.0 - kScoreClamp);
  return positive ? -beta * std::pow(1.0 - y, gamma) * std::log(y)
                  : -(1.0 - beta) * std::pow(y, gamma) * std::log(1.0 - y);
}

double normalized_batch_loss(std::span<const double> y_hat, std::span<const std::uint8_t> labels, double beta,
                             double gamma) {
  if (y_hat.size() != labels.size()) throw DimensionError("normalized_batch_loss: scores and labels differ in length");
  double total = 0;
  std::size_t positives = 0;
  for (std::size_t i = 0; i < y_hat.size(); ++i) {
    total += focal_loss(y_hat[i], labels[i] != 0, beta, gamma);
    positives += labels[i] != 0;
  }
  return total / static_cast<double>(std::max<std::size_t>(1, positives));
}

template <typename S>
Var<S> focal_loss(Var<S> y_hat, std::span<const std::uint8_t> labels, double beta, double gamma) {
  if (y_hat.size() != labels.size()) throw DimensionError("focal_loss: scores and labels differ in length");
  Tape<S>& tape = y_hat.tape();
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < labels.size(); ++i) (labels[i] ? pos : neg).push_back(i);
  const S lo = static_cast<S>(kScoreClamp), hi = static_cast<S>(1.0 - kScoreClamp), g = static_cast<S>(gamma);
  Var<S> y = clamp(y_hat, lo, hi);
  Var<S> total = tape.constant(Tensor<S>::scalar(0));
  if (!pos.empty()) {
    Var<S> p = take(y, std::span<const std::size_t>(pos));
    total = add(total, sum(mul(pow(S(1) - p, g), log(p))) * static_cast<S>(-beta));
  }
  if (!neg.empty()) {
    Var<S> q = take(y, std::span<const std::size_t>(neg));
    total = add(total, sum(mul(pow(q, g), log(S(1) - q))) * static_cast<S>(-(1.0 - beta)));
  }
  return total;
}

template <typename S>
Var<S> scene_loss(const ScgModel<S>& model, Tape<S>& tape, const PreparedGraph& graph, const TargetMatrix& targets,
                  const TrainConfig& config) {
  if (targets.size() == 0) return tape.constant(Tensor<S>::scalar(0));
  Var<S> logits = model.forward(tape, graph);
  const auto flat = targets.flat_indices();
  Var<S> raw = sigmoid(take(logits, std::span<const std::size_t>(flat)));
  Tensor<S> weight({targets.size()});
  for (std::size_t e = 0; e < targets.size(); ++e) {
    const std::size_t p = targets.pair[e];
    const double sh = graph.humans[graph.pair_human[p]].score, so = graph.objects[graph.pair_object[p]].score;
    weight[e] = static_cast<S>(std::pow(sh, config.lambda_train) * std::pow(so, config.lambda_train));
  }
  Var<S> y_hat = mul(raw, tape.constant(std::move(weight)));
  return focal_loss(y_hat, std::span<const std::uint8_t>(targets.label), config.beta, config.gamma);
}

NonFiniteGradient::NonFiniteGradient(const std::string& name, std::size_t i, double value)
    : std::runtime_error("non-finite gradient " + std::to_string(value) + " at " + name + "[" + std::to_string(i) +
                         "]; step aborted"),
      parameter(name),
      index(i) {}

template <typename S>
void adamw_step(Tensor<S>& param, const typename Tensor<S>::Array& grad, AdamState& state, double lr,
                const AdamWConfig& config) {
  if (static_cast<std::size_t>(grad.size()) != param.size()) {
    throw DimensionError("adamw_step: gradient of " + std::to_string(grad.size()) + " values for parameter " +
                         to_string(param.shape()));
  }
  const Eigen::Index n = grad.size();
  if (state.m.size() != n) {
    state.m = Eigen::ArrayXd::Zero(n);
    state.v = Eigen::ArrayXd::Zero(n);
    state.step = 0;
  }
  ++state.step;
  const Eigen::ArrayXd g = grad.template cast<double>();
  state.m = config.beta1 * state.m + (1.0 - config.beta1) * g;
  state.v = config.beta2 * state.v + (1.0 - config.beta2) * g.square();
  const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
  Eigen::ArrayXd theta = param.data().template cast<double>();
  theta *= 1.0 - lr * config.weight_decay;
  theta -= lr * (state.m / c1) / ((state.v / c2).sqrt() + config.eps);
  param.data() = theta.cast<S>();
}

template <typename S>
AdamW<S>::AdamW(std::vector<Group> groups, AdamWConfig config) : groups_(std::move(groups)), config_(config) {
  for (const auto& g : groups_) state_.emplace_back(g.params.size());
}

template <typename S>
void AdamW<S>::step(double lr_scale) {
  for (const auto& g : groups_) {
    for (const auto& [name, t] : g.params) {
      if (!t->grad()) continue;
      const auto& gr = *t->grad();
      for (Eigen::Index i = 0; i < gr.size(); ++i) {
        if (!std::isfinite(static_cast<double>(gr[i]))) {
          throw NonFiniteGradient(name, static_cast<std::size_t>(i), static_cast<double>(gr[i]));
        }
      }
    }
  }
  for (std::size_t gi = 0; gi < groups_.size(); ++gi) {
    const auto& g = groups_[gi];
    for (std::size_t pi = 0; pi < g.params.size(); ++pi) {
      Tensor<S>& t = *g.params[pi].second;
      const typename Tensor<S>::Array zero = Tensor<S>::Array::Zero(static_cast<Eigen::Index>(t.size()));
      adamw_step(t, t.grad() ? *t.grad() : zero, state_[gi][pi], g.lr * lr_scale, config_);
    }
  }
}

template <typename S>
void AdamW<S>::zero_grad() {
  for (auto& g : groups_) {
    for (auto& [name, t] : g.params) t->grad().reset();
  }
}

double lr_scale(const TrainConfig& config, std::size_t epoch) {
  return config.lr_drop_epoch > 0 && epoch >= config.lr_drop_epoch ? config.lr_drop_factor : 1.0;
}

namespace {

void write_metrics_line(std::ofstream& out, const nlohmann::json& j) {
  if (out) out << j.dump() << '\n';
}

}  // namespace

template <typename S>
TrainResult<S> train(const TrainConfig& config, const std::vector<Scene>& scenes, const InteractionSpace& space,
                     const TrainOptions& options) {
  if (scenes.empty()) throw std::invalid_argument("train: empty dataset");
  std::vector<PreparedGraph> graphs;
  std::vector<TargetMatrix> targets;
  for (const auto& s : scenes) {
    PreparedGraph g = prepare_graph(s, space, config.detection, Mode::train);
    if (g.empty()) continue;
    targets.push_back(assign_targets(g, s.gt_pairs, space));
    graphs.push_back(std::move(g));
  }
  if (graphs.empty()) throw std::invalid_argument("train: every scene yields an empty graph");

  ModelConfig mc = config.model;
  mc.num_actions = space.num_actions();
  TrainResult<S> result{ScgModel<S>(mc, config.seed), {}};
  ScgModel<S>& model = result.model;

  typename AdamW<S>::Group encoder{{}, config.lr_encoder}, head{{}, config.lr_head};
  for (auto& np : model.named_parameters()) (np.first.starts_with("node_encoder") ? encoder : head).params.push_back(np);
  AdamW<S> optimizer({encoder, head},
                     {config.adam_beta1, config.adam_beta2, config.adam_eps, config.weight_decay});

  std::ofstream metrics;
  if (!options.output_dir.empty()) {
    fs::create_directories(options.output_dir);
    metrics.open(fs::path(options.output_dir) / "metrics.jsonl");
    if (!metrics) throw std::runtime_error("cannot write metrics under " + options.output_dir);
  }
  const nlohmann::json manifest_extra = {{"lambda", config.lambda_infer},
                                         {"lambda_train", config.lambda_train},
                                         {"num_objects", space.num_objects()},
                                         {"num_actions", space.num_actions()},
                                         {"num_interactions", space.num_interactions()}};

  std::size_t global_step = 0;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::vector<std::size_t> order(graphs.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng = make_rng(config.seed, "data_order", epoch);
    std::shuffle(order.begin(), order.end(), rng);

    const double scale = lr_scale(config, epoch);
    EpochMetrics em{epoch, 0, 0.0, config.lr_head * scale, 0};
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      std::size_t positives = 0;
      for (std::size_t b = start; b < end; ++b) positives += targets[order[b]].positives();
      const S norm = static_cast<S>(1.0 / static_cast<double>(std::max<std::size_t>(1, positives)));

      std::vector<std::unique_ptr<Tape<S>>> tapes(end - start);
      std::vector<double> losses(end - start, 0.0);
      parallel_for(end - start, config.threads, [&](std::size_t b) {
        const std::size_t idx = order[start + b];
        tapes[b] = std::make_unique<Tape<S>>();
        Var<S> loss = mul_scalar(scene_loss(model, *tapes[b], graphs[idx], targets[idx], config), norm);
        losses[b] = static_cast<double>(loss.value().item());
        if (tapes[b]->requires_grad(loss.id())) tapes[b]->backward(loss);
      });
      double batch_loss = 0;
      for (std::size_t b = 0; b < tapes.size(); ++b) {
        tapes[b]->accumulate_into_parameters();
        batch_loss += losses[b];
      }
      tapes.clear();
      if (!std::isfinite(batch_loss)) {
        throw std::runtime_error("non-finite loss at epoch " + std::to_string(epoch) + " step " +
                                 std::to_string(global_step + 1));
      }
      optimizer.step(scale);
      optimizer.zero_grad();
      ++global_step;
      ++em.steps;
      em.mean_loss += batch_loss;
      em.positives += positives;
      write_metrics_line(metrics, {{"epoch", epoch},
                                   {"step", global_step},
                                   {"loss", batch_loss},
                                   {"lr", config.lr_head * scale},
                                   {"positives", positives}});
    }
    em.mean_loss /= static_cast<double>(std::max<std::size_t>(1, em.steps));
    result.epochs.push_back(em);
    if (options.on_epoch) options.on_epoch(em);
    if (!options.output_dir.empty() && options.checkpoint_every_epoch) {
      model.save((fs::path(options.output_dir) / ("epoch_" + std::to_string(epoch))).string(), manifest_extra);
    }
  }
  if (!options.output_dir.empty()) model.save((fs::path(options.output_dir) / "checkpoint").string(), manifest_extra);
  return result;
}

template <typename S>
std::vector<PairPrediction> predict_scenes(const ScgModel<S>& model, const std::vector<Scene>& scenes,
                                           const InteractionSpace& space, const DetectionConfig& detection,
                                           double lambda, std::size_t threads) {
  std::vector<std::vector<PairPrediction>> per_scene(scenes.size());
  parallel_for(scenes.size(), threads, [&](std::size_t i) {
    per_scene[i] = model.predict(prepare_graph(scenes[i], space, detection, Mode::infer), space, lambda);
  });
  std::vector<PairPrediction> out;
  for (auto& v : per_scene) std::move(v.begin(), v.end(), std::back_inserter(out));
  return out;
}

#define SCG_INSTANTIATE_TRAINING(S)                                                                            \
  template Var<S> focal_loss<S>(Var<S>, std::span<const std::uint8_t>, double, double);                     \
  template Var<S> scene_loss<S>(const ScgModel<S>&, Tape<S>&, const PreparedGraph&, const TargetMatrix&,      \
                                const TrainConfig&);                                                           \
  template void adamw_step<S>(Tensor<S>&, const Tensor<S>::Array&, AdamState&, double, const AdamWConfig&);  \
  template class AdamW<S>;                                                                                     \
  template TrainResult<S> train<S>(const TrainConfig&, const std::vector<Scene>&, const InteractionSpace&,     \
                                   const TrainOptions&);                                                       \
  template std::vector<PairPrediction> predict_scenes<S>(const ScgModel<S>&, const std::vector<Scene>&,       \
                                                         const InteractionSpace&, const DetectionConfig&,      \
                                                         double, std::size_t);

SCG_INSTANTIATE_TRAINING(float)
SCG_INSTANTIATE_TRAINING(double)

}  // namespace scg
