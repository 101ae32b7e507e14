#pragma once

#include <array>
#include <string>
#include <utility>
#include <vector>

#include "polydiff/geometry.hpp"

namespace polydiff {

struct QualityReport {
  std::vector<double> per_hex_min;   // minimum scaled Jacobian per hex
  std::array<int, 40> histogram{};   // bins of width 0.05 over [-1, 1]
  double min_scaled_jacobian = 1.0;
  int inverted_count = 0;            // hexes whose minimum is negative
  int degenerate_count = 0;          // hexes with a zero-length corner edge
};

// Per corner: determinant of the three normalized emanating edge vectors;
// per hex: minimum over the eight corners.  Zero-length edges score the
// corner 0 and flag the hex degenerate.  Histogram counts sum to cell count.
QualityReport scaled_jacobian(const HexMesh& mesh);

struct ImproveConfig {
  double w_fit = 1.0;     // boundary surface-distance weight
  double w_shape = 0.1;   // corner (1 - SJ)^2 weight
  int outer_iterations = 8;
  int descent_steps = 3;  // gradient steps per outer iteration
};

// Quality improvement: per outer iteration run (a) interior Laplacian
// smoothing with per-vertex accept-if-local-min-SJ-non-decreasing, (b) the
// same for boundary vertices with projection onto `surface`, (c) backtracking
// gradient descent on E = w_fit * sum dist(v, surface)^2 +
// w_shape * sum_corners (1 - SJ)^2.  Iterations that would lower the global
// minimum scaled Jacobian are rolled back, so the reported minimum is
// non-decreasing across accepted iterations.
std::pair<HexMesh, QualityReport> improve_quality(const HexMesh& mesh, const TriMesh& surface,
                                                  const ImproveConfig& config = {});

// Multi-line text rendering of the histogram plus the summary counters,
// nonzero bins only, for terminal output.
std::string render_sj_histogram(const QualityReport& report);

}  // namespace polydiff
