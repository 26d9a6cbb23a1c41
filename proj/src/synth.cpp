#include "scg/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

namespace scg {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const std::set<std::string> kTemplates = {"below", "beside", "head", "ground", "hand", "far"};

double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

double normal(Rng& rng, double sigma) {
  return sigma > 0 ? std::normal_distribution<double>(0.0, sigma)(rng) : 0.0;
}

std::size_t uniform_count(Rng& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, std::max(lo, hi))(rng);
}

template <typename Map>
typename Map::key_type pick_weighted(const Map& weights, Rng& rng) {
  double total = 0;
  for (const auto& [k, w] : weights) total += w;
  double r = uniform(rng, 0.0, total);
  for (const auto& [k, w] : weights) {
    if (r < w) return k;
    r -= w;
  }
  return weights.rbegin()->first;
}

Box clip(Box b, double W, double H) {
  b.x1 = std::clamp(b.x1, 0.0, W);
  b.x2 = std::clamp(b.x2, 0.0, W);
  b.y1 = std::clamp(b.y1, 0.0, H);
  b.y2 = std::clamp(b.y2, 0.0, H);
  return b;
}

Box centred(double cx, double cy, double w, double h) { return {cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2}; }

/// Object box placed relative to `human` by the named template.
Box place(const std::string& tmpl, const Box& human, Rng& rng, double W, double H) {
  const double hw = human.width(), hh = human.height(), hcx = human.cx();
  const double side = uniform(rng, 0, 1) < 0.5 ? -1.0 : 1.0;
  if (tmpl == "below") {
    const double w = hw * uniform(rng, 1.4, 1.8), h = hh * uniform(rng, 0.4, 0.5);
    const double y1 = human.y1 + hh * uniform(rng, 0.45, 0.55);
    const double cx = hcx + hw * uniform(rng, -0.1, 0.1);
    return {cx - w / 2, y1, cx + w / 2, y1 + h};
  }
  if (tmpl == "beside") {
    const double w = hw * uniform(rng, 1.4, 1.8), h = hh * uniform(rng, 0.4, 0.5);
    const double cx = hcx + side * hw * uniform(rng, 1.4, 1.8);
    const double y2 = human.y2 - hh * uniform(rng, 0.0, 0.05);
    return {cx - w / 2, y2 - h, cx + w / 2, y2};
  }
  if (tmpl == "head") {
    const double w = hw * uniform(rng, 0.5, 0.65), h = hh * uniform(rng, 0.12, 0.16);
    const double y1 = human.y1 - h * uniform(rng, 0.2, 0.4);
    return centred(hcx + hw * uniform(rng, -0.05, 0.05), y1 + h / 2, w, h);
  }
  if (tmpl == "ground") {
    const double w = hw * uniform(rng, 0.5, 0.65), h = hh * uniform(rng, 0.12, 0.16);
    const double y2 = human.y2 - hh * uniform(rng, 0.0, 0.03);
    return centred(hcx + side * hw * uniform(rng, 0.9, 1.3), y2 - h / 2, w, h);
  }
  if (tmpl == "hand") {
    const double w = hw * uniform(rng, 0.3, 0.45), h = hh * uniform(rng, 0.1, 0.16);
    return centred(hcx + side * hw * uniform(rng, 0.45, 0.65), human.y1 + hh * uniform(rng, 0.4, 0.55), w, h);
  }
  // far
  const double w = hw * uniform(rng, 0.5, 1.5), h = hh * uniform(rng, 0.2, 0.5);
  return centred(uniform(rng, w / 2, W - w / 2), uniform(rng, h / 2, H - h / 2), w, h);
}

bool usable(const Box& b) { return b.width() >= 4 && b.height() >= 4; }

json predicate_json(const SpatialPredicate& p) {
  json j = {{"component", p.component}};
  if (p.min) j["min"] = *p.min;
  if (p.max) j["max"] = *p.max;
  return j;
}

json condition_json(const PairCondition& c) {
  json all = json::array();
  for (const auto& p : c.all) all.push_back(predicate_json(p));
  return {{"object", c.object}, {"all", all}};
}

PairCondition condition_from(const json& j, const std::string& object) {
  PairCondition c;
  c.object = j.value("object", object);
  for (const auto& p : j.at("all")) {
    SpatialPredicate sp;
    sp.component = p.at("component").get<std::string>();
    spatial_component_index(sp.component);  // validates
    if (p.contains("min")) sp.min = p.at("min").get<double>();
    if (p.contains("max")) sp.max = p.at("max").get<double>();
    c.all.push_back(std::move(sp));
  }
  return c;
}

}  // namespace

bool SpatialPredicate::operator()(const SpatialVector& p) const {
  const double v = p[spatial_component_index(component)];
  return (!min || v > *min) && (!max || v < *max);
}

bool PairCondition::holds(const SpatialVector& p) const {
  return std::all_of(all.begin(), all.end(), [&](const SpatialPredicate& pred) { return pred(p); });
}

json SynthSpec::to_json() const {
  json objs = json::array();
  for (const auto& o : objects) {
    json j = {{"name", o.name}, {"per_human", o.per_human}, {"weight", o.weight}, {"templates", o.templates}};
    if (!o.prototype.empty()) j["prototype"] = o.prototype;
    if (o.noise) j["noise"] = *o.noise;
    objs.push_back(j);
  }
  json rules_json = json::array();
  for (const auto& r : rules) {
    json j = condition_json(r.pair);
    j["action"] = r.action;
    if (r.context) j["context"] = condition_json(*r.context);
    rules_json.push_back(j);
  }
  json extra = json::array();
  for (const auto& [a, o] : extra_valid) extra.push_back({a, o});
  return {{"num_train", num_train},
          {"num_test", num_test},
          {"image_width", image_width},
          {"image_height", image_height},
          {"appearance_dim", appearance_dim},
          {"prototype_scale", prototype_scale},
          {"appearance_noise", appearance_noise},
          {"human", human},
          {"objects", objs},
          {"actions", actions},
          {"rules", rules_json},
          {"extra_valid", extra},
          {"humans", {min_humans, max_humans}},
          {"free_objects", {min_free_objects, max_free_objects}},
          {"layout", layout},
          {"detection", {{"jitter", detection.jitter}, {"dropout", detection.dropout},
                         {"distractors", detection.distractors}}},
          {"seed", seed}};
}

SynthSpec SynthSpec::from_json(const json& j) {
  SynthSpec s;
  s.num_train = j.value("num_train", s.num_train);
  s.num_test = j.value("num_test", s.num_test);
  s.image_width = j.value("image_width", s.image_width);
  s.image_height = j.value("image_height", s.image_height);
  s.appearance_dim = j.value("appearance_dim", s.appearance_dim);
  s.prototype_scale = j.value("prototype_scale", s.prototype_scale);
  s.appearance_noise = j.value("appearance_noise", s.appearance_noise);
  s.human = j.value("human", s.human);
  for (const auto& o : j.at("objects")) {
    ObjectClassSpec c;
    c.name = o.at("name").get<std::string>();
    c.per_human = o.value("per_human", 0.0);
    c.weight = o.value("weight", 1.0);
    c.templates = o.value("templates", std::map<std::string, double>{{"far", 1.0}});
    if (o.contains("prototype")) c.prototype = o.at("prototype").get<std::vector<double>>();
    if (o.contains("noise")) c.noise = o.at("noise").get<double>();
    s.objects.push_back(std::move(c));
  }
  s.actions = j.at("actions").get<std::vector<std::string>>();
  for (const auto& r : j.value("rules", json::array())) {
    ActionRule rule;
    rule.action = r.at("action").get<std::string>();
    rule.pair = condition_from(r, "");
    if (r.contains("context")) rule.context = condition_from(r.at("context"), "");
    s.rules.push_back(std::move(rule));
  }
  for (const auto& e : j.value("extra_valid", json::array())) {
    s.extra_valid.emplace_back(e.at(0).get<std::string>(), e.at(1).get<std::string>());
  }
  if (j.contains("humans")) {
    s.min_humans = j.at("humans").at(0).get<std::size_t>();
    s.max_humans = j.at("humans").at(1).get<std::size_t>();
  }
  if (j.contains("free_objects")) {
    s.min_free_objects = j.at("free_objects").at(0).get<std::size_t>();
    s.max_free_objects = j.at("free_objects").at(1).get<std::size_t>();
  }
  s.layout = j.value("layout", s.layout);
  if (j.contains("detection")) {
    const auto& d = j.at("detection");
    s.detection.jitter = d.value("jitter", s.detection.jitter);
    s.detection.dropout = d.value("dropout", s.detection.dropout);
    s.detection.distractors = d.value("distractors", s.detection.distractors);
  }
  s.seed = j.value("seed", s.seed);

  // Validation.
  auto has = [](const auto& names, const std::string& n) { return std::find(names.begin(), names.end(), n) != names.end(); };
  std::vector<std::string> object_names{s.human};
  for (const auto& o : s.objects) object_names.push_back(o.name);
  for (const auto& o : s.objects) {
    if (!o.prototype.empty() && o.prototype.size() != s.appearance_dim) {
      throw std::invalid_argument("prototype of " + o.name + " has " + std::to_string(o.prototype.size()) +
                                  " values, appearance_dim is " + std::to_string(s.appearance_dim));
    }
    if (o.templates.empty()) throw std::invalid_argument("object " + o.name + " has no placement templates");
    for (const auto& [t, w] : o.templates) {
      if (!kTemplates.contains(t)) throw std::invalid_argument("unknown placement template '" + t + "'");
    }
  }
  for (const auto& r : s.rules) {
    if (!has(s.actions, r.action)) throw std::invalid_argument("rule uses unknown action " + r.action);
    if (!has(object_names, r.pair.object)) throw std::invalid_argument("rule uses unknown object " + r.pair.object);
    if (r.context && !has(object_names, r.context->object)) {
      throw std::invalid_argument("rule context uses unknown object " + r.context->object);
    }
  }
  for (const auto& [a, o] : s.extra_valid) {
    if (!has(s.actions, a) || !has(object_names, o)) throw std::invalid_argument("unknown extra valid pair " + a + " " + o);
  }
  if (s.min_humans == 0 || s.min_humans > s.max_humans) throw std::invalid_argument("invalid human count range");
  if (s.layout != "free" && s.layout != "ambiguity") throw std::invalid_argument("layout must be free or ambiguity");
  if (s.layout == "ambiguity" && s.objects.empty()) throw std::invalid_argument("ambiguity layout needs an object class");
  return s;
}

SynthSpec SynthSpec::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  return from_json(json::parse(in));
}

SynthSpec SynthSpec::ambiguity_benchmark(std::uint64_t seed) {
  return from_json(json::parse(R"({
    "num_train": 200, "num_test": 100,
    "appearance_dim": 16, "appearance_noise": 0.05,
    "objects": [
      {"name": "bicycle", "per_human": 1.0, "templates": {"below": 0.6, "beside": 0.4}},
      {"name": "helmet", "per_human": 0.7, "templates": {"head": 0.6, "ground": 0.4}}
    ],
    "actions": ["ride"],
    "rules": [
      {"action": "ride", "object": "bicycle",
       "all": [{"component": "dy_neg", "min": 0.1}, {"component": "iou", "min": 0.15}],
       "context": {"object": "helmet",
                   "all": [{"component": "dy_pos", "min": 0.3}, {"component": "iou", "min": 0.02},
                           {"component": "dx_pos", "max": 0.3}, {"component": "dx_neg", "max": 0.3}]}}
    ],
    "humans": [2, 4], "layout": "ambiguity",
    "detection": {"jitter": 0.02}
  })"))
      .with_seed(seed);
}

SynthSpec SynthSpec::spatial_only(std::uint64_t seed) {
  return from_json(json::parse(R"({
    "num_train": 200, "num_test": 100,
    "appearance_dim": 16, "appearance_noise": 0.05,
    "objects": [
      {"name": "bicycle", "per_human": 0.8, "templates": {"below": 0.6, "beside": 0.4}},
      {"name": "cup", "per_human": 0.6, "templates": {"hand": 0.6, "ground": 0.4}}
    ],
    "actions": ["ride", "hold"],
    "rules": [
      {"action": "ride", "object": "bicycle",
       "all": [{"component": "dy_neg", "min": 0.1}, {"component": "iou", "min": 0.15}]},
      {"action": "hold", "object": "cup",
       "all": [{"component": "iou", "min": 0.02}, {"component": "dy_pos", "max": 0.15},
               {"component": "dy_neg", "max": 0.15}]}
    ],
    "extra_valid": [["hold", "bicycle"]],
    "humans": [2, 4], "layout": "ambiguity",
    "detection": {"jitter": 0.02}
  })"))
      .with_seed(seed);
}

InteractionSpace make_interaction_space(const SynthSpec& spec, const std::vector<int>& rare) {
  std::vector<std::string> objects{spec.human};
  for (const auto& o : spec.objects) objects.push_back(o.name);
  std::vector<std::vector<int>> valid(objects.size());
  auto add = [&](const std::string& action, const std::string& object) {
    const auto a = static_cast<int>(std::find(spec.actions.begin(), spec.actions.end(), action) - spec.actions.begin());
    const auto o = static_cast<std::size_t>(std::find(objects.begin(), objects.end(), object) - objects.begin());
    if (std::find(valid[o].begin(), valid[o].end(), a) == valid[o].end()) valid[o].push_back(a);
  };
  for (const auto& r : spec.rules) add(r.action, r.pair.object);
  for (const auto& [a, o] : spec.extra_valid) add(a, o);
  for (auto& v : valid) std::sort(v.begin(), v.end());
  return InteractionSpace(spec.actions, objects, valid, rare, spec.human);
}

std::vector<Eigen::VectorXd> class_prototypes(const SynthSpec& spec) {
  Rng rng = make_rng(spec.seed, "prototypes");
  std::normal_distribution<double> dist(0.0, spec.prototype_scale);
  const auto d = static_cast<Eigen::Index>(spec.appearance_dim);
  std::vector<Eigen::VectorXd> out;
  auto draw = [&] {
    Eigen::VectorXd v(d);
    for (Eigen::Index i = 0; i < d; ++i) v[i] = dist(rng);
    return v;
  };
  out.push_back(draw());  // human
  for (const auto& o : spec.objects) {
    Eigen::VectorXd v = draw();
    if (!o.prototype.empty()) v = Eigen::Map<const Eigen::VectorXd>(o.prototype.data(), d);
    out.push_back(v);
  }
  for (std::size_t a = 0; a < out.size(); ++a) {
    for (std::size_t b = a + 1; b < out.size(); ++b) {
      if (out[a] == out[b]) throw std::invalid_argument("appearance prototypes must be pairwise distinct");
    }
  }
  return out;
}

std::vector<GtPair> label_pairs(const SynthSpec& spec, const InteractionSpace& space,
                                const std::vector<Instance>& instances, double width, double height) {
  std::vector<GtPair> out;
  std::set<std::tuple<std::size_t, std::size_t, int>> seen;
  for (std::size_t h = 0; h < instances.size(); ++h) {
    if (instances[h].class_id != space.human_class) continue;
    for (const auto& rule : spec.rules) {
      const int object = space.object_index(rule.pair.object);
      const auto id = space.interaction_id(space.action_index(rule.action), object);
      if (!id) continue;
      bool context_ok = !rule.context;
      if (rule.context) {
        const int ctx = space.object_index(rule.context->object);
        for (std::size_t c = 0; c < instances.size() && !context_ok; ++c) {
          if (c == h || instances[c].class_id != ctx) continue;
          context_ok = rule.context->holds(encode_pair(instances[h].box, instances[c].box, width, height).p);
        }
      }
      if (!context_ok) continue;
      for (std::size_t o = 0; o < instances.size(); ++o) {
        if (o == h || instances[o].class_id != object) continue;
        if (!rule.pair.holds(encode_pair(instances[h].box, instances[o].box, width, height).p)) continue;
        if (!seen.insert({h, o, *id}).second) continue;
        out.push_back({instances[h].box, instances[o].box, *id});
      }
    }
  }
  return out;
}

Scene make_scene(const SynthSpec& spec, const InteractionSpace& space, std::string image_id,
                 std::vector<Instance> instances, Rng& rng) {
  const double W = spec.image_width, H = spec.image_height;
  const auto prototypes = class_prototypes(spec);
  const auto d = static_cast<Eigen::Index>(spec.appearance_dim);
  auto appearance_of = [&](int cls) {
    const double sigma = cls == space.human_class || !spec.objects[static_cast<std::size_t>(cls - 1)].noise
                             ? spec.appearance_noise
                             : *spec.objects[static_cast<std::size_t>(cls - 1)].noise;
    Eigen::VectorXd v = prototypes[static_cast<std::size_t>(cls)];
    for (Eigen::Index i = 0; i < d; ++i) v[i] += normal(rng, sigma);
    return v;
  };
  for (auto& inst : instances) {
    if (inst.appearance.size() == 0) inst.appearance = appearance_of(inst.class_id);
  }

  Scene s;
  s.image_id = std::move(image_id);
  s.width = W;
  s.height = H;
  s.gt_pairs = label_pairs(spec, space, instances, W, H);

  std::vector<Eigen::VectorXd> rows;
  for (const auto& inst : instances) {
    const bool dropped = uniform(rng, 0, 1) < spec.detection.dropout;
    const double jw = spec.detection.jitter * inst.box.width(), jh = spec.detection.jitter * inst.box.height();
    Box b{inst.box.x1 + normal(rng, jw), inst.box.y1 + normal(rng, jh), inst.box.x2 + normal(rng, jw),
          inst.box.y2 + normal(rng, jh)};
    if (dropped) continue;
    b = clip(b, W, H);
    if (!usable(b)) continue;
    const double diag = std::hypot(inst.box.width(), inst.box.height());
    const double shift = 0.5 * (std::hypot(b.x1 - inst.box.x1, b.y1 - inst.box.y1) +
                                std::hypot(b.x2 - inst.box.x2, b.y2 - inst.box.y2));
    s.detections.push_back({b, std::max(0.2, 1.0 - shift / diag), inst.class_id});
    rows.push_back(inst.appearance);
  }
  const std::size_t n_distractors =
      spec.detection.distractors > 0 ? std::poisson_distribution<std::size_t>(spec.detection.distractors)(rng) : 0;
  for (std::size_t k = 0; k < n_distractors; ++k) {
    const int cls = std::uniform_int_distribution<int>(0, static_cast<int>(space.num_objects()) - 1)(rng);
    const Box anchor = centred(W / 2, H / 2, 60, 180);
    const Box b = clip(place("far", anchor, rng, W, H), W, H);
    const double score = uniform(rng, 0.05, 0.6);
    if (!usable(b)) continue;
    s.detections.push_back({b, score, cls});
    rows.push_back(appearance_of(cls));
  }

  s.appearance.resize(static_cast<Eigen::Index>(rows.size()), d);
  for (std::size_t r = 0; r < rows.size(); ++r) s.appearance.row(static_cast<Eigen::Index>(r)) = rows[r].transpose();
  s.global_feature = rows.empty() ? Eigen::VectorXd::Zero(d) : Eigen::VectorXd(s.appearance.colwise().mean().transpose());

  s.gt_boxes = distinct_gt_boxes(s.gt_pairs, space);
  s.gt_appearance.resize(static_cast<Eigen::Index>(s.gt_boxes.size()), d);
  for (std::size_t g = 0; g < s.gt_boxes.size(); ++g) {
    auto it = std::find_if(instances.begin(), instances.end(), [&](const Instance& inst) {
      return inst.box == s.gt_boxes[g].box && inst.class_id == s.gt_boxes[g].class_id;
    });
    s.gt_appearance.row(static_cast<Eigen::Index>(g)) = it->appearance.transpose();
  }
  return s;
}

namespace {

Scene layout_scene(const SynthSpec& spec, const InteractionSpace& space, std::string image_id, Rng& rng,
                   bool ambiguity) {
  const double W = spec.image_width, H = spec.image_height;
  const std::size_t lo = ambiguity ? std::max<std::size_t>(2, spec.min_humans) : spec.min_humans;
  const std::size_t n_humans = uniform_count(rng, lo, std::max(lo, spec.max_humans));
  const double slot = W / static_cast<double>(n_humans);

  std::vector<Instance> instances;
  for (std::size_t i = 0; i < n_humans; ++i) {
    const double w = uniform(rng, 50, 70), h = uniform(rng, 150, 210);
    const double cx = (static_cast<double>(i) + 0.5) * slot + uniform(rng, -0.15, 0.15) * slot;
    const double y2 = H * uniform(rng, 0.8, 0.96);
    instances.push_back({clip({cx - w / 2, y2 - h, cx + w / 2, y2}, W, H), space.human_class, {}});
  }
  auto add_object = [&](std::size_t cls_index, const Box& anchor) {
    const auto& cls = spec.objects[cls_index];
    for (int attempt = 0; attempt < 20; ++attempt) {
      const Box b = clip(place(pick_weighted(cls.templates, rng), anchor, rng, W, H), W, H);
      if (usable(b)) {
        instances.push_back({b, static_cast<int>(cls_index) + 1, {}});
        return;
      }
    }
  };
  for (std::size_t i = 0; i < n_humans; ++i) {
    const Box anchor = instances[i].box;
    for (std::size_t c = 0; c < spec.objects.size(); ++c) {
      const double chance = ambiguity && c == 0 ? 1.0 : spec.objects[c].per_human;
      if (uniform(rng, 0, 1) < chance) add_object(c, anchor);
    }
  }
  const std::size_t n_free = uniform_count(rng, spec.min_free_objects, spec.max_free_objects);
  if (!spec.objects.empty()) {
    std::map<std::size_t, double> weights;
    for (std::size_t c = 0; c < spec.objects.size(); ++c) weights[c] = spec.objects[c].weight;
    for (std::size_t k = 0; k < n_free; ++k) {
      const std::size_t c = pick_weighted(weights, rng);
      add_object(c, instances[std::uniform_int_distribution<std::size_t>(0, n_humans - 1)(rng)].box);
    }
  }
  return make_scene(spec, space, std::move(image_id), std::move(instances), rng);
}

std::string scene_id(std::string_view split, std::uint64_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "_%06llu", static_cast<unsigned long long>(index));
  return std::string(split) + buf;
}

}  // namespace

Scene generate_scene(const SynthSpec& spec, const InteractionSpace& space, std::string_view split,
                     std::uint64_t index) {
  Rng rng = make_rng(spec.seed, split, index);
  return layout_scene(spec, space, scene_id(split, index), rng, spec.layout == "ambiguity");
}

Scene ambiguity_stress_scene(const SynthSpec& spec, const InteractionSpace& space, std::uint64_t index) {
  if (spec.objects.empty()) throw std::invalid_argument("ambiguity scene needs an object class");
  Rng rng = make_rng(spec.seed, "stress", index);
  return layout_scene(spec, space, scene_id("stress", index), rng, true);
}

SynthDataset generate_dataset(const SynthSpec& spec) {
  InteractionSpace space = make_interaction_space(spec);
  SynthDataset data{space, {}, {}};
  for (std::size_t i = 0; i < spec.num_train; ++i) data.train.push_back(generate_scene(spec, space, "train", i));
  for (std::size_t i = 0; i < spec.num_test; ++i) data.test.push_back(generate_scene(spec, space, "test", i));

  std::vector<std::size_t> counts(space.num_interactions(), 0);
  for (const auto& s : data.train) {
    for (const auto& g : s.gt_pairs) ++counts[static_cast<std::size_t>(g.interaction)];
  }
  for (const auto& rule : spec.rules) {
    const auto id = space.interaction_id(space.action_index(rule.action), space.object_index(rule.pair.object));
    if (spec.num_train > 0 && counts[static_cast<std::size_t>(*id)] == 0) {
      throw std::runtime_error("rule '" + rule.name() + "' is never satisfied in " + std::to_string(spec.num_train) +
                               " training scenes");
    }
  }
  std::vector<int> rare;
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (counts[c] < 10) rare.push_back(static_cast<int>(c));
  }
  data.space = make_interaction_space(spec, rare);
  return data;
}

void save_dataset(const std::string& dir, const SynthDataset& data, const SynthSpec& spec) {
  fs::create_directories(dir);
  save_scenes((fs::path(dir) / "train.jsonl").string(), data.train);
  save_scenes((fs::path(dir) / "test.jsonl").string(), data.test);
  data.space.save((fs::path(dir) / "space.json").string());
  std::ofstream out(fs::path(dir) / "spec.json");
  if (!out) throw std::runtime_error("cannot write spec.json under " + dir);
  out << spec.to_json().dump(2) << '\n';
}

}  // namespace scg
