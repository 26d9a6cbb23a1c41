#include "scg/mbf.hpp"

namespace scg {

std::string_view to_string(FusionOp op) {
  switch (op) {
    case FusionOp::product: return "product";
    case FusionOp::sum: return "sum";
    case FusionOp::concat: return "concat";
  }
  return "?";
}

FusionOp parse_fusion_op(std::string_view name) {
  if (name == "product") return FusionOp::product;
  if (name == "sum") return FusionOp::sum;
  if (name == "concat") return FusionOp::concat;
  throw std::invalid_argument("unknown fusion op '" + std::string(name) + "' (product, sum, concat)");
}

std::size_t mbf_param_count(std::size_t appearance_dim, std::size_t spatial_dim, std::size_t n,
                            std::size_t cardinality, FusionOp op) {
  if (cardinality == 0 || n == 0 || n % cardinality != 0) {
    throw std::invalid_argument("cardinality " + std::to_string(cardinality) + " does not divide n = " +
                                std::to_string(n));
  }
  const std::size_t sub = n / cardinality;
  const std::size_t fused = op == FusionOp::concat ? 2 * sub : sub;
  const std::size_t per_branch = sub * appearance_dim + sub  // appearance projection
                                 + sub * spatial_dim + sub   // spatial projection
                                 + n * fused;                // output projection
  return cardinality * per_branch + n;
}

}  // namespace scg
