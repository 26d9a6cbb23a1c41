#include "scg/evaluation.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_map>

namespace scg {

using nlohmann::json;

std::vector<Prediction> to_predictions(const std::vector<PairPrediction>& pairs, const InteractionSpace& space) {
  std::vector<Prediction> out;
  for (const auto& p : pairs) {
    for (std::size_t i = 0; i < p.actions.size(); ++i) {
      const auto id = space.interaction_id(p.actions[i], p.object_class);
      if (!id) continue;
      out.push_back({p.image_id, *id, p.final_scores.at(i), p.human_box, p.object_box});
    }
  }
  return out;
}

void save_predictions(const std::string& path, const std::vector<Prediction>& preds) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  for (const auto& p : preds) {
    out << json{{"image_id", p.image_id},
                {"interaction_id", p.interaction_id},
                {"score", p.score},
                {"h_bbox", box_json(p.human)},
                {"o_bbox", box_json(p.object)}}
               .dump()
        << '\n';
  }
}

std::vector<Prediction> load_predictions(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::vector<Prediction> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const json j = json::parse(line);
    out.push_back({j.at("image_id").get<std::string>(), j.at("interaction_id").get<int>(), j.at("score").get<double>(),
                   box_from(j.at("h_bbox")), box_from(j.at("o_bbox"))});
  }
  return out;
}

std::vector<std::size_t> rank_by_score(std::span<const Prediction> preds) {
  std::vector<std::size_t> order(preds.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return preds[a].score > preds[b].score; });
  return order;
}

std::vector<std::uint8_t> match_predictions(std::span<const Prediction> preds, std::span<const GtInstance> gt,
                                            double iou_threshold) {
  std::unordered_map<std::string, std::vector<std::size_t>> gt_by_image;
  for (std::size_t g = 0; g < gt.size(); ++g) gt_by_image[gt[g].image_id].push_back(g);
  std::vector<std::uint8_t> claimed(gt.size(), 0), tp(preds.size(), 0);
  for (std::size_t p : rank_by_score(preds)) {
    auto it = gt_by_image.find(preds[p].image_id);
    if (it == gt_by_image.end()) continue;
    std::optional<std::size_t> best;
    double best_iou = iou_threshold;
    for (std::size_t g : it->second) {
      if (claimed[g]) continue;
      const double v = std::min(iou(preds[p].human, gt[g].human), iou(preds[p].object, gt[g].object));
      if (v > best_iou) {
        best_iou = v;
        best = g;
      }
    }
    if (best) {
      claimed[*best] = 1;
      tp[p] = 1;
    }
  }
  return tp;
}

double ap_11point(std::span<const std::uint8_t> ranked_tp, std::size_t num_gt) {
  if (num_gt == 0) throw std::invalid_argument("ap_11point: no ground truth");
  // best[r]: highest precision among ranks with recall >= r / 10.
  double best[11] = {};
  std::size_t tp = 0;
  for (std::size_t k = 1; k <= ranked_tp.size(); ++k) {
    tp += ranked_tp[k - 1] != 0;
    const double precision = static_cast<double>(tp) / static_cast<double>(k);
    for (std::size_t r = 0; r <= 10; ++r) {
      if (tp * 10 >= r * num_gt) best[r] = std::max(best[r], precision);
    }
  }
  double total = 0;
  for (double b : best) total += b;
  return total / 11.0;
}

std::string_view to_string(Setting s) { return s == Setting::known_object ? "known_object" : "default"; }

Setting parse_setting(std::string_view name) {
  if (name == "default") return Setting::default_setting;
  if (name == "known_object") return Setting::known_object;
  throw std::invalid_argument("unknown setting '" + std::string(name) + "' (default, known_object)");
}

std::vector<Prediction> known_object_filter(const std::vector<Prediction>& preds, const std::vector<Scene>& scenes,
                                            const InteractionSpace& space) {
  std::unordered_map<std::string, std::set<int>> present;
  for (const auto& s : scenes) {
    auto& objs = present[s.image_id];
    for (const auto& g : s.gt_pairs) objs.insert(space.interaction(g.interaction).object);
  }
  std::vector<Prediction> out;
  for (const auto& p : preds) {
    auto it = present.find(p.image_id);
    if (it != present.end() && it->second.contains(space.interaction(p.interaction_id).object)) out.push_back(p);
  }
  return out;
}

EvalReport evaluate(const std::vector<Prediction>& preds, const std::vector<Scene>& scenes,
                    const InteractionSpace& space, Setting setting, double iou_threshold) {
  const std::size_t n = space.num_interactions();
  for (const auto& p : preds) {
    if (p.interaction_id < 0 || static_cast<std::size_t>(p.interaction_id) >= n) {
      throw std::invalid_argument("prediction for " + p.image_id + " has unknown interaction id " +
                                  std::to_string(p.interaction_id));
    }
  }
  const std::vector<Prediction> kept =
      setting == Setting::known_object ? known_object_filter(preds, scenes, space) : preds;

  std::vector<std::vector<Prediction>> by_class(n);
  for (const auto& p : kept) by_class[static_cast<std::size_t>(p.interaction_id)].push_back(p);
  std::vector<std::vector<GtInstance>> gt(n);
  for (const auto& s : scenes) {
    for (const auto& g : s.gt_pairs) {
      if (g.interaction < 0 || static_cast<std::size_t>(g.interaction) >= n) {
        throw std::invalid_argument("scene " + s.image_id + " has unknown interaction id " +
                                    std::to_string(g.interaction));
      }
      gt[static_cast<std::size_t>(g.interaction)].push_back({s.image_id, g.human, g.object});
    }
  }

  EvalReport r;
  r.setting = setting;
  r.ap.resize(n);
  r.num_gt.resize(n);
  r.num_predictions.resize(n);
  double full = 0, rare = 0, non_rare = 0;
  std::size_t n_full = 0, n_rare = 0, n_non_rare = 0;
  for (std::size_t c = 0; c < n; ++c) {
    r.num_gt[c] = gt[c].size();
    r.num_predictions[c] = by_class[c].size();
    if (gt[c].empty()) continue;
    const auto tp = match_predictions(by_class[c], gt[c], iou_threshold);
    std::vector<std::uint8_t> ranked;
    for (std::size_t i : rank_by_score(by_class[c])) ranked.push_back(tp[i]);
    const double ap = ap_11point(ranked, gt[c].size());
    r.ap[c] = ap;
    full += ap;
    ++n_full;
    if (space.interaction(static_cast<int>(c)).rare) {
      rare += ap;
      ++n_rare;
    } else {
      non_rare += ap;
      ++n_non_rare;
    }
  }
  if (n_full) r.map_full = full / static_cast<double>(n_full);
  if (n_rare) r.map_rare = rare / static_cast<double>(n_rare);
  if (n_non_rare) r.map_non_rare = non_rare / static_cast<double>(n_non_rare);
  return r;
}

namespace {

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::string percent(const std::optional<double>& v) {
  if (!v) return "-";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", 100.0 * *v);
  return buf;
}

}  // namespace

json EvalReport::to_json(const InteractionSpace& space) const {
  json classes = json::array();
  for (std::size_t c = 0; c < ap.size(); ++c) {
    const Interaction& in = space.interaction(static_cast<int>(c));
    classes.push_back({{"interaction_id", c},
                       {"action", space.actions[static_cast<std::size_t>(in.action)]},
                       {"object", space.objects[static_cast<std::size_t>(in.object)]},
                       {"rare", in.rare},
                       {"num_gt", num_gt[c]},
                       {"num_predictions", num_predictions[c]},
                       {"ap", optional_json(ap[c])}});
  }
  return {{"setting", std::string(scg::to_string(setting))},
          {"map_full", optional_json(map_full)},
          {"map_rare", optional_json(map_rare)},
          {"map_non_rare", optional_json(map_non_rare)},
          {"classes", classes}};
}

std::string EvalReport::table() const { return report_table({{std::string(scg::to_string(setting)), *this}}); }

std::string report_table(const std::vector<std::pair<std::string, EvalReport>>& rows) {
  std::size_t width = 7;
  for (const auto& [label, r] : rows) width = std::max(width, label.size());
  std::ostringstream out;
  auto cell = [&](const std::string& s, std::size_t w, bool left) {
    if (left) out << s << std::string(w > s.size() ? w - s.size() : 0, ' ');
    else out << std::string(w > s.size() ? w - s.size() : 0, ' ') << s;
  };
  cell("", width, true);
  cell("Full", 10, false);
  cell("Rare", 10, false);
  cell("Non-rare", 10, false);
  out << '\n';
  for (const auto& [label, r] : rows) {
    cell(label, width, true);
    cell(percent(r.map_full), 10, false);
    cell(percent(r.map_rare), 10, false);
    cell(percent(r.map_non_rare), 10, false);
    out << '\n';
  }
  return out.str();
}

}  // namespace scg
