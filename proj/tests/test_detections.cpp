#include "doctest.h"
#include "fixtures.hpp"

#include "scg/detections.hpp"

#include <numeric>

using namespace scg;

namespace {

/// `n` disjoint boxes of class `cls` in a row starting at `y`.
std::vector<Detection> row_of_boxes(std::size_t n, int cls, double y, double score0) {
  std::vector<Detection> out;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = 20.0 * static_cast<double>(i);
    out.push_back({{x, y, x + 15, y + 15}, score0 - 0.01 * static_cast<double>(i), cls});
  }
  return out;
}

Scene scene_from(std::vector<Detection> dets, std::size_t dim = 2) {
  Scene s;
  s.image_id = "s";
  s.width = 1000;
  s.height = 1000;
  s.detections = std::move(dets);
  s.appearance = Eigen::MatrixXd::Ones(static_cast<Eigen::Index>(s.detections.size()), static_cast<Eigen::Index>(dim));
  s.global_feature = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim));
  return s;
}

}  // namespace

TEST_CASE("iou") {
  CHECK(iou({0, 0, 2, 2}, {1, 1, 3, 3}) == doctest::Approx(1.0 / 7.0));
  CHECK(iou({0, 0, 2, 2}, {0, 0, 2, 2}) == 1.0);
  CHECK(iou({0, 0, 1, 1}, {2, 2, 3, 3}) == 0.0);
  CHECK(iou({0, 0, 1, 1}, {1, 0, 2, 1}) == 0.0);  // touching edges
  CHECK(iou({0, 0, 4, 4}, {1, 1, 2, 2}) == doctest::Approx(1.0 / 16.0));
}

TEST_CASE("nms") {
  SUBCASE("identical boxes keep the higher score") {
    std::vector<Detection> d{{{0, 0, 10, 10}, 0.8, 1}, {{0, 0, 10, 10}, 0.9, 1}};
    CHECK(nms(d, 0.5) == std::vector<std::size_t>{1});
  }
  SUBCASE("IoU equal to the threshold is kept") {
    // IoU of [0,0,3,1] and [1,0,4,1] is 2/4.
    std::vector<Detection> d{{{0, 0, 3, 1}, 0.9, 1}, {{1, 0, 4, 1}, 0.8, 1}};
    CHECK(nms(d, 0.5).size() == 2);
  }
  SUBCASE("ties broken by index") {
    std::vector<Detection> d{{{0, 0, 1, 1}, 0.5, 1}, {{5, 5, 6, 6}, 0.7, 1}, {{8, 8, 9, 9}, 0.5, 1}};
    CHECK(nms(d, 0.5) == std::vector<std::size_t>{1, 0, 2});
  }
  SUBCASE("empty input") { CHECK(nms({}, 0.5).empty()); }
}

TEST_CASE("interaction space") {
  const InteractionSpace space({"ride", "eat", "hold"}, {"person", "bicycle", "apple"}, {{2}, {0, 2}, {1, 2}}, {3});
  CHECK(space.num_interactions() == 5);
  CHECK(space.interaction_id(0, 1) == 1);
  CHECK(space.interaction_id(2, 2) == 4);
  CHECK_FALSE(space.is_valid(1, 1));
  CHECK(space.interaction(3).rare);
  CHECK_FALSE(space.interaction(2).rare);
  CHECK(space.action_index("eat") == 1);
  CHECK_THROWS(space.object_index("car"));
  CHECK_THROWS(space.interaction(9));
  const auto back = InteractionSpace::from_json(space.to_json());
  CHECK(back.to_json() == space.to_json());
}

TEST_CASE("filter and select") {
  const InteractionSpace space = testing::ride_hold_space();

  SUBCASE("score threshold") {
    std::vector<Detection> d{{{0, 0, 10, 10}, 0.19, 0}, {{20, 0, 30, 10}, 0.2, 0}, {{40, 0, 50, 10}, 0.9, 1}};
    const auto sel = filter_and_select(scene_from(d), space, DetectionConfig{});
    CHECK(sel.humans == std::vector<std::size_t>{1});
    CHECK(sel.objects == std::vector<std::size_t>{1, 2});
  }
  SUBCASE("NMS is per class") {
    std::vector<Detection> d{{{0, 0, 10, 10}, 0.9, 0}, {{0, 0, 10, 10}, 0.8, 1}, {{1, 0, 10, 10}, 0.7, 1}};
    const auto sel = filter_and_select(scene_from(d), space, DetectionConfig{});
    CHECK(sel.humans == std::vector<std::size_t>{0});
    CHECK(sel.objects == std::vector<std::size_t>{0, 1});
  }
  SUBCASE("top m per side, humans first in the object list") {
    auto d = row_of_boxes(20, 0, 0, 0.95);
    auto o = row_of_boxes(20, 1, 100, 0.9);
    d.insert(d.end(), o.begin(), o.end());
    const auto sel = filter_and_select(scene_from(d), space, DetectionConfig{});
    CHECK(sel.humans.size() == 15);
    CHECK(sel.objects.size() == 30);
    CHECK(std::equal(sel.humans.begin(), sel.humans.end(), sel.objects.begin()));
    CHECK(sel.humans.front() == 0);
    CHECK(sel.objects[15] == 20);
    CHECK(build_pairs(sel.humans, sel.objects).size() == 435);
  }
  SUBCASE("m must be positive") {
    DetectionConfig c;
    c.max_per_side = 0;
    CHECK_THROWS(filter_and_select(scene_from({}), space, c));
  }
}

TEST_CASE("pair enumeration") {
  CHECK(build_pairs({0, 1, 2}, {0, 1, 2}).size() == 6);
  const auto two = build_pairs({4, 7}, {4, 7});
  REQUIRE(two.size() == 2);
  CHECK(two[0] == std::pair<std::size_t, std::size_t>{0, 1});
  CHECK(two[1] == std::pair<std::size_t, std::size_t>{1, 0});
  CHECK(build_pairs({}, {1, 2}).empty());
  std::vector<std::size_t> h(15), o(30);
  std::iota(h.begin(), h.end(), std::size_t{0});
  std::iota(o.begin(), o.end(), std::size_t{0});
  CHECK(build_pairs(h, o).size() == 15 * 29);
}

TEST_CASE("ground-truth augmentation") {
  const InteractionSpace space = testing::ride_hold_space();
  Scene s = testing::two_by_two_scene(3, 1);
  s.gt_boxes = distinct_gt_boxes(s.gt_pairs, space);
  CHECK(s.gt_boxes.size() == 4);
  s.gt_appearance = Eigen::MatrixXd::Constant(4, 3, 0.5);

  const Scene inferred = augment_with_gt(s, Mode::infer);
  CHECK(inferred.detections.size() == s.detections.size());

  const Scene trained = augment_with_gt(s, Mode::train);
  REQUIRE(trained.detections.size() == 8);
  CHECK(trained.detections[4].score == 1.0);
  CHECK(trained.appearance.rows() == 8);
  CHECK(trained.appearance(7, 2) == 0.5);
  // The GT copies duplicate existing detections; per-class NMS removes them again.
  const auto sel = filter_and_select(trained, space, DetectionConfig{});
  CHECK(sel.humans.size() == 2);
  CHECK(sel.objects.size() == 4);
  for (auto i : sel.objects) CHECK(i >= 4);
}

TEST_CASE("scene validation") {
  const InteractionSpace space = testing::ride_hold_space();
  Scene s = testing::two_by_two_scene(3, 2);
  CHECK_NOTHROW(s.validate(space));
  Scene bad = s;
  bad.detections[0].score = 1.5;
  CHECK_THROWS_AS(bad.validate(space), std::invalid_argument);
  bad = s;
  bad.detections[1].box = {50, 50, 40, 60};
  CHECK_THROWS_AS(bad.validate(space), std::invalid_argument);
  bad = s;
  bad.detections[2].class_id = 5;
  CHECK_THROWS_AS(bad.validate(space), std::invalid_argument);
  bad = s;
  bad.appearance.conservativeResize(3, 3);
  CHECK_THROWS_AS(bad.validate(space), std::invalid_argument);
  bad = s;
  bad.gt_pairs[0].interaction = 17;
  CHECK_THROWS(bad.validate(space));
}

TEST_CASE("scene files round trip") {
  const InteractionSpace space = testing::ride_hold_space();
  Scene s = testing::two_by_two_scene(3, 3);
  s.gt_boxes = distinct_gt_boxes(s.gt_pairs, space);
  s.gt_appearance = Eigen::MatrixXd::Constant(4, 3, 0.25);
  const auto dir = testing::scratch_dir("scenes");
  save_scenes((dir / "x.jsonl").string(), {s});
  const auto back = load_scenes((dir / "x.jsonl").string());
  REQUIRE(back.size() == 1);
  CHECK(back[0].image_id == s.image_id);
  CHECK(back[0].detections[3].box == s.detections[3].box);
  CHECK(back[0].detections[3].score == doctest::Approx(s.detections[3].score));
  CHECK(back[0].appearance.isApprox(s.appearance, 1e-6));
  CHECK(back[0].global_feature.isApprox(s.global_feature, 1e-6));
  CHECK(back[0].gt_pairs.size() == 2);
  CHECK(back[0].gt_pairs[1].interaction == s.gt_pairs[1].interaction);
  CHECK(back[0].gt_boxes.size() == 4);
  CHECK(back[0].gt_appearance(2, 1) == doctest::Approx(0.25));
}
