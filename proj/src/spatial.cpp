#include "scg/spatial.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace scg {

namespace {

constexpr std::array<std::string_view, kSpatialDim> kNames = {
    "h_cx", "h_cy", "h_w", "h_h", "h_aspect", "h_area",  //
    "o_cx", "o_cy", "o_w", "o_h", "o_aspect", "o_area",  //
    "iou",  "area_ratio",                                //
    "dx_pos", "dx_neg", "dy_pos", "dy_neg"};

void write_box(SpatialVector& p, int offset, const Box& b, double w, double h) {
  p[offset + 0] = b.cx() / w;
  p[offset + 1] = b.cy() / h;
  p[offset + 2] = b.width() / w;
  p[offset + 3] = b.height() / h;
  p[offset + 4] = b.width() / b.height();
  p[offset + 5] = b.area() / (w * h);
}

}  // namespace

std::string_view spatial_component_name(int index) {
  return kNames.at(static_cast<std::size_t>(index));
}

int spatial_component_index(std::string_view name) {
  auto it = std::find(kNames.begin(), kNames.end(), name);
  if (it == kNames.end()) throw std::invalid_argument("unknown spatial component '" + std::string(name) + "'");
  return static_cast<int>(it - kNames.begin());
}

AugmentedSpatialVector log_augment(const SpatialVector& p, double eps) {
  if ((p.array() < 0).any()) throw std::invalid_argument("log_augment: negative spatial component");
  if (!(eps > 0)) throw std::invalid_argument("log_augment: eps must be positive");
  AugmentedSpatialVector out;
  out << p, (p.array() + eps).log().matrix();
  return out;
}

SpatialEncoding encode_pair(const Box& human, const Box& object, double image_width, double image_height,
                            double eps) {
  SpatialEncoding enc;
  auto& p = enc.p;
  write_box(p, kHumanCx, human, image_width, image_height);
  write_box(p, kObjectCx, object, image_width, image_height);
  p[kPairIou] = iou(human, object);
  p[kAreaRatio] = human.area() / object.area();
  const double dx = (human.cx() - object.cx()) / human.width();
  const double dy = (human.cy() - object.cy()) / human.height();
  p[kDxPos] = std::max(dx, 0.0);
  p[kDxNeg] = std::max(-dx, 0.0);
  p[kDyPos] = std::max(dy, 0.0);
  p[kDyNeg] = std::max(-dy, 0.0);
  enc.augmented = log_augment(p, eps);
  return enc;
}

}  // namespace scg
