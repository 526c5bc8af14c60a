#pragma once

// Naive reference implementations used by the self-test and the test suites.
// They share no code with the production paths they check: quadratic loops,
// explicit flood fill, per-pixel predicates.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "imba_lens/tensor_io.hpp"

namespace imba::oracle {

/// Fraction of pos/neg pairs ordered correctly, ties counting one half.
double pairwise_auroc(std::span<const double> scores, std::span<const std::uint8_t> labels);

/// AP by recomputing precision and recall from scratch at every prefix of a
/// selection-sorted ranking (score descending, negatives first within ties,
/// then input order).
double prefix_average_precision(std::span<const double> scores, std::span<const std::uint8_t> labels);

/// Number of components by breadth-first flood fill.
std::size_t flood_fill_count(std::span<const std::uint8_t> mask, std::size_t height, std::size_t width,
                             bool eight_connected);

/// Per-pixel membership test against every box.
bool pixel_in_boxes(std::size_t px, std::size_t py, std::span<const io::Box> boxes);

struct SoftScores {
    double iobb = 0;
    double ior = 0;
};

SoftScores brute_soft_scores(std::span<const double> map, std::size_t height, std::size_t width,
                             std::span<const io::Box> boxes);

/// max(0, sum_c w[c] * A[c, y, x]) evaluated pixel by pixel.
std::vector<double> brute_cam(std::span<const float> features, std::size_t channels, std::size_t height,
                              std::size_t width, std::span<const double> weights);

/// #{v >= tau}.
std::size_t count_at_least(std::span<const float> values, double tau);

}  // namespace imba::oracle
