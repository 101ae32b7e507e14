#pragma once

#include <Eigen/Core>

namespace polydiff {

inline constexpr int kContextBits = 29;
inline constexpr int kConfigTypeCount = 9;

// Conditioning vector: 29 binary entries.  Configuration types 0..7 set the
// single bit 4*type; type 8 (the two-primitive stack) sets bits 0 and 4.
using ContextVector = Eigen::Matrix<double, kContextBits, 1>;

ContextVector context_vector(int type_id);

}  // namespace polydiff
