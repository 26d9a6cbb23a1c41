#pragma once

#include "scg/model.hpp"

#include <cstdlib>
#include <filesystem>
#include <string>

namespace scg::testing {

/// Fresh scratch directory under SCG_TEST_TMP (or the system temp dir).
inline std::filesystem::path scratch_dir(const std::string& name) {
  const char* root = std::getenv("SCG_TEST_TMP");
  const auto base = root ? std::filesystem::path(root) : std::filesystem::temp_directory_path() / "scg_tests";
  const auto dir = base / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

/// {"ride", "hold"} x {"person", "bicycle"}; hold is valid for both.
inline InteractionSpace ride_hold_space() {
  return InteractionSpace({"ride", "hold"}, {"person", "bicycle"}, {{1}, {0, 1}});
}

/// Two humans, two bicycles, appearance and global width `dim`.
inline Scene two_by_two_scene(std::size_t dim, std::uint64_t seed) {
  const InteractionSpace space = ride_hold_space();
  Rng rng = make_rng(seed, "fixture");
  std::uniform_real_distribution<double> u(-1, 1);
  Scene s;
  s.image_id = "fixture";
  s.width = 100;
  s.height = 100;
  s.detections = {{{10, 10, 30, 60}, 0.9, 0},
                  {{55, 15, 75, 70}, 0.8, 0},
                  {{5, 40, 40, 80}, 0.7, 1},
                  {{50, 45, 90, 85}, 0.95, 1}};
  const auto d = static_cast<Eigen::Index>(dim);
  s.appearance = Eigen::MatrixXd::NullaryExpr(4, d, [&] { return u(rng); });
  s.global_feature = Eigen::VectorXd::NullaryExpr(d, [&] { return u(rng); });
  s.gt_pairs = {{{10, 10, 30, 60}, {5, 40, 40, 80}, *space.interaction_id(0, 1)},
                {{55, 15, 75, 70}, {50, 45, 90, 85}, *space.interaction_id(1, 1)}};
  return s;
}

inline ModelConfig tiny_config(std::size_t dim, std::size_t n, std::size_t c, std::size_t actions) {
  ModelConfig mc;
  mc.appearance_dim = dim;
  mc.global_dim = dim;
  mc.hidden = n;
  mc.cardinality = c;
  mc.num_actions = actions;
  return mc;
}

}  // namespace scg::testing
