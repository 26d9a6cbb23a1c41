#include "scg/detections.hpp"

#include "scg/tensor.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <stdexcept>

namespace scg {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// InteractionSpace

InteractionSpace::InteractionSpace(std::vector<std::string> action_names,
                                   std::vector<std::string> object_names,
                                   std::vector<std::vector<int>> valid_actions,
                                   std::vector<int> rare, std::string human)
    : actions(std::move(action_names)), objects(std::move(object_names)), valid_(std::move(valid_actions)) {
  if (valid_.size() != objects.size()) {
    throw std::invalid_argument("valid-action table needs one entry per object category");
  }
  human_class = object_index(human);
  id_table_.assign(objects.size(), std::vector<int>(actions.size(), -1));
  for (std::size_t o = 0; o < objects.size(); ++o) {
    for (int a : valid_[o]) {
      if (a < 0 || static_cast<std::size_t>(a) >= actions.size()) {
        throw std::invalid_argument("valid action index out of range for object " + objects[o]);
      }
      if (id_table_[o][static_cast<std::size_t>(a)] >= 0) {
        throw std::invalid_argument("duplicate action " + actions[static_cast<std::size_t>(a)] +
                                    " for object " + objects[o]);
      }
      id_table_[o][static_cast<std::size_t>(a)] = static_cast<int>(interactions_.size());
      interactions_.push_back({a, static_cast<int>(o), false});
    }
  }
  for (int id : rare) interactions_.at(static_cast<std::size_t>(id)).rare = true;
}

const std::vector<int>& InteractionSpace::valid_actions(int object) const {
  return valid_.at(static_cast<std::size_t>(object));
}

std::optional<int> InteractionSpace::interaction_id(int action, int object) const {
  if (object < 0 || static_cast<std::size_t>(object) >= objects.size() || action < 0 ||
      static_cast<std::size_t>(action) >= actions.size()) {
    return std::nullopt;
  }
  const int id = id_table_[static_cast<std::size_t>(object)][static_cast<std::size_t>(action)];
  if (id < 0) return std::nullopt;
  return id;
}

const Interaction& InteractionSpace::interaction(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= interactions_.size()) {
    throw std::out_of_range("unknown interaction id " + std::to_string(id));
  }
  return interactions_[static_cast<std::size_t>(id)];
}

int InteractionSpace::action_index(const std::string& name) const {
  auto it = std::find(actions.begin(), actions.end(), name);
  if (it == actions.end()) throw std::invalid_argument("unknown action '" + name + "'");
  return static_cast<int>(it - actions.begin());
}

int InteractionSpace::object_index(const std::string& name) const {
  auto it = std::find(objects.begin(), objects.end(), name);
  if (it == objects.end()) throw std::invalid_argument("unknown object category '" + name + "'");
  return static_cast<int>(it - objects.begin());
}

json InteractionSpace::to_json() const {
  json valid = json::object();
  for (std::size_t o = 0; o < objects.size(); ++o) {
    json names = json::array();
    for (int a : valid_[o]) names.push_back(actions[static_cast<std::size_t>(a)]);
    valid[objects[o]] = names;
  }
  json rare = json::array();
  for (std::size_t i = 0; i < interactions_.size(); ++i) {
    if (interactions_[i].rare) rare.push_back(i);
  }
  return {{"actions", actions},
          {"objects", objects},
          {"human", objects.at(static_cast<std::size_t>(human_class))},
          {"valid_actions", valid},
          {"rare", rare}};
}

InteractionSpace InteractionSpace::from_json(const json& j) {
  auto actions = j.at("actions").get<std::vector<std::string>>();
  auto objects = j.at("objects").get<std::vector<std::string>>();
  const auto& va = j.at("valid_actions");
  std::vector<std::vector<int>> valid(objects.size());
  for (std::size_t o = 0; o < objects.size(); ++o) {
    if (!va.contains(objects[o])) continue;
    for (const auto& name : va.at(objects[o])) {
      auto it = std::find(actions.begin(), actions.end(), name.get<std::string>());
      if (it == actions.end()) throw std::invalid_argument("valid_actions names unknown action " + name.dump());
      valid[o].push_back(static_cast<int>(it - actions.begin()));
    }
  }
  for (const auto& [key, _] : va.items()) {
    if (std::find(objects.begin(), objects.end(), key) == objects.end()) {
      throw std::invalid_argument("valid_actions names unknown object " + key);
    }
  }
  return InteractionSpace(std::move(actions), std::move(objects), std::move(valid),
                          j.value("rare", std::vector<int>{}), j.value("human", std::string("person")));
}

InteractionSpace InteractionSpace::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open interaction space " + path);
  return from_json(json::parse(in));
}

void InteractionSpace::save(const std::string& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << to_json().dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Geometry

double iou(const Box& a, const Box& b) {
  const double iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (iw <= 0 || ih <= 0) return 0.0;
  const double inter = iw * ih;
  return inter / (a.area() + b.area() - inter);
}

namespace {

// Descending score, ascending original index.
std::vector<std::size_t> score_order(const std::vector<Detection>& dets) {
  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return dets[a].score > dets[b].score; });
  return order;
}

}  // namespace

std::vector<std::size_t> nms(const std::vector<Detection>& dets, double iou_threshold) {
  std::vector<std::size_t> kept;
  for (auto idx : score_order(dets)) {
    const bool suppressed = std::any_of(kept.begin(), kept.end(), [&](std::size_t k) {
      return iou(dets[k].box, dets[idx].box) > iou_threshold;
    });
    if (!suppressed) kept.push_back(idx);
  }
  return kept;
}

NodeSelection filter_and_select(const Scene& scene, const InteractionSpace& space,
                                const DetectionConfig& config) {
  if (config.max_per_side < 1) throw std::invalid_argument("m must be at least 1");
  // Per-class candidate lists after the score filter, in original order.
  std::vector<std::vector<std::size_t>> by_class(space.num_objects());
  for (std::size_t i = 0; i < scene.detections.size(); ++i) {
    const auto& d = scene.detections[i];
    if (d.score < config.score_threshold) continue;
    by_class.at(static_cast<std::size_t>(d.class_id)).push_back(i);
  }

  std::vector<std::size_t> humans, others;
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    std::vector<Detection> group;
    for (auto i : by_class[c]) group.push_back(scene.detections[i]);
    for (auto k : nms(group, config.nms_threshold)) {
      (static_cast<int>(c) == space.human_class ? humans : others).push_back(by_class[c][k]);
    }
  }

  auto top_m = [&](std::vector<std::size_t>& v) {
    std::stable_sort(v.begin(), v.end(), [&](std::size_t a, std::size_t b) {
      const double sa = scene.detections[a].score, sb = scene.detections[b].score;
      return sa != sb ? sa > sb : a < b;
    });
    if (v.size() > config.max_per_side) v.resize(config.max_per_side);
  };
  top_m(humans);
  top_m(others);

  NodeSelection sel;
  sel.humans = humans;
  sel.objects = humans;
  sel.objects.insert(sel.objects.end(), others.begin(), others.end());
  return sel;
}

std::vector<std::pair<std::size_t, std::size_t>> build_pairs(const std::vector<std::size_t>& humans,
                                                             const std::vector<std::size_t>& objects) {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  pairs.reserve(humans.size() * objects.size());
  for (std::size_t i = 0; i < humans.size(); ++i) {
    for (std::size_t j = 0; j < objects.size(); ++j) {
      if (humans[i] != objects[j]) pairs.emplace_back(i, j);
    }
  }
  return pairs;
}

std::vector<Detection> distinct_gt_boxes(const std::vector<GtPair>& pairs, const InteractionSpace& space) {
  std::vector<Detection> out;
  auto add = [&](const Box& b, int cls) {
    for (const auto& d : out) {
      if (d.box == b && d.class_id == cls) return;
    }
    out.push_back({b, 1.0, cls});
  };
  for (const auto& p : pairs) {
    add(p.human, space.human_class);
    add(p.object, space.interaction(p.interaction).object);
  }
  return out;
}

Scene augment_with_gt(const Scene& scene, Mode mode) {
  if (mode == Mode::infer || scene.gt_boxes.empty()) {
    if (mode == Mode::train && !scene.gt_pairs.empty()) {
      throw std::invalid_argument("scene " + scene.image_id + ": ground-truth boxes have no features");
    }
    return scene;
  }
  if (static_cast<std::size_t>(scene.gt_appearance.rows()) != scene.gt_boxes.size()) {
    throw std::invalid_argument("scene " + scene.image_id + ": " + std::to_string(scene.gt_boxes.size()) +
                                " ground-truth boxes but " + std::to_string(scene.gt_appearance.rows()) +
                                " feature rows");
  }
  if (scene.gt_appearance.cols() != scene.appearance.cols() && scene.appearance.rows() > 0) {
    throw std::invalid_argument("scene " + scene.image_id + ": ground-truth feature width mismatch");
  }
  Scene out = scene;
  for (auto d : scene.gt_boxes) {
    d.score = 1.0;
    out.detections.push_back(d);
  }
  out.appearance.resize(static_cast<Eigen::Index>(out.detections.size()), scene.gt_appearance.cols());
  out.appearance << scene.appearance, scene.gt_appearance;
  return out;
}

void Scene::validate(const InteractionSpace& space) const {
  auto fail = [&](const std::string& what) { throw std::invalid_argument("scene " + image_id + ": " + what); };
  if (!(width > 0 && height > 0)) fail("image dimensions must be positive");
  if (static_cast<std::size_t>(appearance.rows()) != detections.size()) {
    fail(std::to_string(detections.size()) + " detections but " + std::to_string(appearance.rows()) +
         " appearance rows");
  }
  auto check_box = [&](const Box& b) {
    if (!b.valid()) fail("degenerate box");
    if (b.x1 < 0 || b.y1 < 0 || b.x2 > width || b.y2 > height) fail("box outside the image");
  };
  for (const auto& d : detections) {
    check_box(d.box);
    if (!(d.score >= 0 && d.score <= 1)) fail("score outside [0,1]");
    if (d.class_id < 0 || static_cast<std::size_t>(d.class_id) >= space.num_objects()) fail("invalid class id");
  }
  for (const auto& p : gt_pairs) {
    check_box(p.human);
    check_box(p.object);
    space.interaction(p.interaction);
  }
  if (static_cast<std::size_t>(gt_appearance.rows()) != gt_boxes.size()) fail("ground-truth feature rows mismatch");
}

// ---------------------------------------------------------------------------
// Scene files

json box_json(const Box& b) { return json::array({b.x1, b.y1, b.x2, b.y2}); }

Box box_from(const json& j) {
  if (!j.is_array() || j.size() != 4) throw std::invalid_argument("bbox must have 4 coordinates");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}

namespace {

Eigen::MatrixXd to_matrix(const Tensor<float>& t) {
  return t.matrix().cast<double>();
}

Tensor<float> to_tensor(const Eigen::MatrixXd& m) {
  Tensor<float> t({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())});
  t.matrix() = m.cast<float>();
  return t;
}

}  // namespace

std::vector<Scene> load_scenes(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open scene file " + path);
  const fs::path base = fs::path(path).parent_path();
  std::vector<Scene> scenes;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = json::parse(line);
      Scene s;
      s.image_id = j.at("image_id").is_string() ? j.at("image_id").get<std::string>() : j.at("image_id").dump();
      s.width = j.at("width").get<double>();
      s.height = j.at("height").get<double>();
      for (const auto& d : j.at("detections")) {
        s.detections.push_back({box_from(d.at("bbox")), d.at("score").get<double>(), d.at("class_id").get<int>()});
      }
      for (const auto& g : j.value("gt_pairs", json::array())) {
        s.gt_pairs.push_back({box_from(g.at("h_bbox")), box_from(g.at("o_bbox")), g.at("interaction_id").get<int>()});
      }
      const auto features = load_tensors((base / j.at("feature_file").get<std::string>()).string());
      if (features.size() != 1 || features[0].rank() != 2) throw std::runtime_error("feature file must hold one matrix");
      const auto all = to_matrix(features[0]);
      const auto n = static_cast<Eigen::Index>(s.detections.size());
      if (all.rows() != n + 1) {
        throw std::runtime_error("feature file has " + std::to_string(all.rows()) + " rows, expected " +
                                 std::to_string(n + 1));
      }
      s.appearance = all.topRows(n);
      s.global_feature = all.row(n).transpose();
      if (j.contains("gt_feature_file")) {
        for (const auto& b : j.at("gt_boxes")) {
          s.gt_boxes.push_back({box_from(b.at("bbox")), 1.0, b.at("class_id").get<int>()});
        }
        const auto gt = load_tensors((base / j.at("gt_feature_file").get<std::string>()).string());
        s.gt_appearance = to_matrix(gt.at(0));
      }
      scenes.push_back(std::move(s));
    } catch (const std::exception& e) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return scenes;
}

void save_scenes(const std::string& path, const std::vector<Scene>& scenes) {
  const fs::path base = fs::path(path).parent_path();
  const fs::path feature_dir = fs::path(path).stem().string() + "_features";
  fs::create_directories(base / feature_dir);
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  for (const auto& s : scenes) {
    json dets = json::array();
    for (const auto& d : s.detections) {
      dets.push_back({{"bbox", box_json(d.box)}, {"score", d.score}, {"class_id", d.class_id}});
    }
    json gts = json::array();
    for (const auto& g : s.gt_pairs) {
      gts.push_back({{"h_bbox", box_json(g.human)}, {"o_bbox", box_json(g.object)}, {"interaction_id", g.interaction}});
    }
    Eigen::MatrixXd all(s.appearance.rows() + 1, s.appearance.cols());
    all << s.appearance, s.global_feature.transpose();
    const auto feature_file = (feature_dir / (s.image_id + ".scgt")).string();
    save_tensors((base / feature_file).string(), {to_tensor(all)});
    json j = {{"image_id", s.image_id}, {"width", s.width},       {"height", s.height},
              {"detections", dets},     {"gt_pairs", gts},       {"feature_file", feature_file}};
    if (!s.gt_boxes.empty()) {
      json boxes = json::array();
      for (const auto& d : s.gt_boxes) boxes.push_back({{"bbox", box_json(d.box)}, {"class_id", d.class_id}});
      const auto gt_file = (feature_dir / (s.image_id + ".gt.scgt")).string();
      save_tensors((base / gt_file).string(), {to_tensor(s.gt_appearance)});
      j["gt_boxes"] = boxes;
      j["gt_feature_file"] = gt_file;
    }
    out << j.dump() << '\n';
  }
}

}  // namespace scg
