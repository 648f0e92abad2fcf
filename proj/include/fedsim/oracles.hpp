#pragma once

// Naive reference implementations used to cross-check the production code
// paths. Everything here is written independently of the main library:
// straight loops, no shared helpers beyond the Matrix container. Used by the
// unit tests and by the `check` subcommand.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "fedsim/matrix.hpp"
#include "fedsim/network.hpp"

namespace fedsim::oracle {

// Straight-line forward pass for dense/relu/tanh/scale/flatten networks,
// one sample at a time, reading weights directly from the flat vector.
std::vector<double> naive_forward_sample(const Network& net, const std::vector<double>& x);

// Central finite differences of the mean cross-entropy loss with respect to
// each parameter in `coords` (all parameters when empty). h is the probe step.
std::vector<double> finite_diff_param_grad(const Network& net, const Matrix& batch, const std::vector<int>& labels,
                                           const std::vector<std::size_t>& coords, double h = 1e-4);

// Max relative error between analytic and finite-difference gradients on
// `n_coords` coordinates chosen deterministically from `seed`.
double gradient_check(const Network& net, const Matrix& batch, const std::vector<int>& labels, int n_coords,
                      std::uint64_t seed, double h = 1e-4);

// Coordinate-wise sorted trim-then-mean.
std::vector<double> trimmed_mean(const std::vector<std::vector<double>>& updates, int m);

// Coordinate-wise median (even count: midpoint of the central pair).
std::vector<double> coordinate_median(const std::vector<std::vector<double>>& updates);

// Krum scores: for each candidate, the sum of squared distances to its
// n-f-1 nearest peers, from the full pairwise distance matrix.
std::vector<double> krum_scores(const std::vector<std::vector<double>>& updates, int f);

// Argmin Krum score, lowest index on ties.
int krum_select(const std::vector<std::vector<double>>& updates, int f);

// Repeated Krum selection until c indices are chosen, against the original
// index set. Returns selected original indices in selection order.
std::vector<int> multi_krum_select(const std::vector<std::vector<double>>& updates, int f, int c);

// Brute-force geometric median of 2-D points over a grid_n x grid_n grid
// spanning the bounding box of the points.
std::vector<double> grid_geometric_median_2d(const std::vector<std::vector<double>>& points, int grid_n);

// Sum of Euclidean distances from v to every update.
double geometric_median_objective(const std::vector<std::vector<double>>& updates, const std::vector<double>& v);

}  // namespace fedsim::oracle
