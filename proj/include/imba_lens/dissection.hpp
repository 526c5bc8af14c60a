#pragma once

// Dissection-style concept counting.
//
// Each channel c gets a dataset-wide threshold tau_c (top-q order statistic of
// all its activations). On every annotated image the channel's map is
// thresholded at tau_c, split into connected components, and each component
// touching the image's box region (scaled to the feature grid) counts as one
// pathology-related concept.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "imba_lens/tensor_io.hpp"

namespace imba::dissection {

enum class Connectivity { Four = 4, Eight = 8 };

Connectivity parse_connectivity(int n);

enum class BoxScaling {
    CellFootprint,  // cell in region iff its pixel footprint overlaps a box
    NearestPixel,   // cell in region iff some box pixel maps to it under nearest-neighbour upsampling
};

struct DissectionConfig {
    double q = 0.01;
    Connectivity connectivity = Connectivity::Eight;
    BoxScaling scaling = BoxScaling::CellFootprint;
    std::size_t threads = 1;

    void validate() const;
};

struct ChannelThresholds {
    std::vector<double> tau;
    std::vector<std::uint8_t> degenerate;  // 1 when the channel is constant over the dataset
    std::vector<std::size_t> pooled;       // number of values behind each tau

    std::size_t channels() const { return tau.size(); }
    std::size_t degenerate_count() const;
};

/// 1-based ascending index ceil((1 - q) n), clamped to [1, n].
std::size_t threshold_rank(std::size_t n, double q);

/// tau for one channel's pooled values (the span is copied and sorted).
/// Returns {tau, degenerate}.
std::pair<double, bool> quantile_threshold(std::span<const float> values, double q);

ChannelThresholds channel_thresholds(const io::Manifest& manifest, const DissectionConfig& config);

/// Component = row-major cell indices, ascending.
using Component = std::vector<std::size_t>;

/// Components of true cells; ordered by their smallest cell index.
std::vector<Component> connected_components(std::span<const std::uint8_t> mask, std::size_t height,
                                             std::size_t width, Connectivity connectivity);

/// Box region of one image on the feature grid.
std::vector<std::uint8_t> feature_region(const io::Manifest& manifest, std::span<const io::Box> boxes,
                                         BoxScaling scaling);

/// Per channel: number of thresholded components sharing >= 1 cell with
/// `region`. Degenerate channels report 0.
std::vector<std::size_t> detect_concepts(const io::FeatureMapStack& stack, const ChannelThresholds& thresholds,
                                         std::span<const std::uint8_t> region, const DissectionConfig& config);

struct ChannelDetail {
    std::size_t channel = 0;
    std::size_t images_with_detection = 0;
    std::size_t total_components = 0;
};

struct ConceptReport {
    double q = 0;
    int connectivity = 8;
    std::size_t n_images = 0;
    double disjoint = 0;
    double unique = 0;
    std::vector<std::size_t> degenerate_channels;
    std::vector<ChannelDetail> per_channel;
};

ConceptReport concept_report(const io::Manifest& manifest, const io::AnnotationSet& annotations,
                             const ChannelThresholds& thresholds, const DissectionConfig& config);

std::string to_json(const ConceptReport& r);
std::string to_csv(const ConceptReport& r);

}  // namespace imba::dissection
