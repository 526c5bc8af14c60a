#pragma once

// Soft IoBB / IoR between a normalised heatmap and annotation boxes.
//
//   iobb = sum_{p in U} map(p) / |U|          (soft recall of the box region)
//   ior  = sum_{p in U} map(p) / sum_p map(p) (soft precision of the heatmap)
//
// U is the pixel union of the boxes. A pixel belongs to a box when its unit
// footprint [x, x+1) x [y, y+1) overlaps the box with positive area.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "imba_lens/cam.hpp"
#include "imba_lens/tensor_io.hpp"

namespace imba::alignment {

/// Marks cells of a height x width grid whose footprint
/// [c*cell_w, (c+1)*cell_w) x [r*cell_h, (r+1)*cell_h) overlaps any box with
/// positive area. Box coordinates are in the same units as cell_w / cell_h.
std::vector<std::uint8_t> region_mask(std::size_t height, std::size_t width, std::span<const io::Box> boxes,
                                      double cell_w = 1.0, double cell_h = 1.0);

struct AlignmentScore {
    double iobb = 0;
    double ior = 0;
    std::size_t box_area = 0;  // pixels in the union
    double total_mass = 0;
    bool zero_mass = false;
};

AlignmentScore score(const cam::Heatmap& map, std::span<const io::Box> boxes);
double soft_iobb(const cam::Heatmap& map, std::span<const io::Box> boxes);
double soft_ior(const cam::Heatmap& map, std::span<const io::Box> boxes);

struct ClassAlignment {
    std::string class_name;
    std::size_t n_pairs = 0;
    double mean_iobb = 0;
    double mean_ior = 0;
};

struct PairScore {
    std::string image_id;
    std::string class_name;
    AlignmentScore score;
};

struct AlignmentReport {
    std::vector<ClassAlignment> per_class;  // classes with >= 1 pair, manifest order
    double mean_iobb = 0;
    double mean_ior = 0;
    std::size_t n_pairs = 0;
    std::size_t zero_mass_count = 0;
    std::vector<PairScore> pairs;  // manifest order, then class order
};

struct AlignmentOptions {
    cam::Order order = cam::Order::NormalizeThenUpsample;
    std::size_t threads = 1;
};

/// Scores every (annotated image, annotated class) pair and averages per
/// class and uniformly over all pairs.
AlignmentReport aggregate_alignment(const io::Manifest& manifest, const io::AnnotationSet& annotations,
                                    const cam::HeadWeights& head, const AlignmentOptions& options = {});

std::string to_json(const AlignmentReport& r);
std::string to_csv(const AlignmentReport& r);

}  // namespace imba::alignment
