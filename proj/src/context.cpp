#include "polydiff/context.hpp"

#include "polydiff/errors.hpp"

namespace polydiff {

ContextVector context_vector(int type_id) {
  if (type_id < 0 || type_id >= kConfigTypeCount)
    throw ConfigError("configuration type " + std::to_string(type_id) + " outside 0..8");
  ContextVector c = ContextVector::Zero();
  if (type_id < 8) {
    c[4 * type_id] = 1.0;
  } else {
    // The stacked pair is the union of a cube in each grid cell, so it carries
    // the bits of the two single-cube types.
    c[0] = 1.0;
    c[4] = 1.0;
  }
  return c;
}

}  // namespace polydiff
