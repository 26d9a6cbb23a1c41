#pragma once

#include "scg/detections.hpp"

#include <Eigen/Core>

#include <array>
#include <string_view>

namespace scg {

inline constexpr int kSpatialDim = 18;
inline constexpr int kAugmentedSpatialDim = 36;
inline constexpr double kSpatialEps = 1e-6;

using SpatialVector = Eigen::Matrix<double, kSpatialDim, 1>;
using AugmentedSpatialVector = Eigen::Matrix<double, kAugmentedSpatialDim, 1>;

/// Component layout of the 18-dim pairwise encoding. The order is part of
/// the checkpoint contract; do not reorder.
enum SpatialComponent : int {
  kHumanCx = 0,     // cx / W
  kHumanCy,         // cy / H
  kHumanW,          // w / W
  kHumanH,          // h / H
  kHumanAspect,     // w / h
  kHumanArea,       // area / (W H)
  kObjectCx,
  kObjectCy,
  kObjectW,
  kObjectH,
  kObjectAspect,
  kObjectArea,
  kPairIou,
  kAreaRatio,       // human area / object area
  kDxPos,           // ReLU(dx), dx = (cx_h - cx_o) / w_h
  kDxNeg,           // ReLU(-dx)
  kDyPos,           // ReLU(dy), dy = (cy_h - cy_o) / h_h
  kDyNeg,           // ReLU(-dy)
};

/// Lower-case names ("h_cx", "iou", "dy_neg", ...) by component index.
std::string_view spatial_component_name(int index);
/// Inverse of spatial_component_name; throws std::invalid_argument.
int spatial_component_index(std::string_view name);

struct SpatialEncoding {
  SpatialVector p;
  AugmentedSpatialVector augmented;  // p ⊕ log(p + eps)
};

/// p ⊕ log(p + eps). Throws std::invalid_argument on a negative component.
AugmentedSpatialVector log_augment(const SpatialVector& p, double eps = kSpatialEps);

SpatialEncoding encode_pair(const Box& human, const Box& object, double image_width,
                            double image_height, double eps = kSpatialEps);

}  // namespace scg
