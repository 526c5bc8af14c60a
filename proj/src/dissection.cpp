#include "imba_lens/dissection.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "imba_lens/alignment.hpp"
#include "imba_lens/errors.hpp"
#include "imba_lens/parallel.hpp"
#include "json.hpp"

namespace imba::dissection {

namespace {

class DisjointSet {
public:
    explicit DisjointSet(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), 0); }

    std::size_t find(std::size_t x) {
        while (parent_[x] != x) {
            parent_[x] = parent_[parent_[x]];
            x = parent_[x];
        }
        return x;
    }

    void unite(std::size_t a, std::size_t b) {
        a = find(a);
        b = find(b);
        if (a == b) return;
        if (b < a) std::swap(a, b);
        parent_[b] = a;  // smaller index is root
    }

private:
    std::vector<std::size_t> parent_;
};

std::vector<const io::ManifestEntry*> annotated_entries(const io::Manifest& m, const io::AnnotationSet& a) {
    std::vector<const io::ManifestEntry*> out;
    for (const auto& e : m.entries) {
        if (const auto* b = a.find(e.image_id); b && !b->empty()) out.push_back(&e);
    }
    return out;
}

}  // namespace

Connectivity parse_connectivity(int n) {
    if (n == 4) return Connectivity::Four;
    if (n == 8) return Connectivity::Eight;
    throw UsageError("connectivity must be 4 or 8, got " + std::to_string(n));
}

void DissectionConfig::validate() const {
    if (!(q > 0.0 && q < 1.0)) throw UsageError("q must lie in (0, 1)");
    if (threads < 1) throw UsageError("thread count must be >= 1");
}

std::size_t ChannelThresholds::degenerate_count() const {
    return static_cast<std::size_t>(std::count(degenerate.begin(), degenerate.end(), std::uint8_t{1}));
}

std::size_t threshold_rank(std::size_t n, double q) {
    if (n == 0) throw DataError("cannot threshold an empty channel");
    // ceil((1-q) n) == n - floor(q n); snap q n to an integer when it is one
    // up to rounding so that e.g. q = 0.01, n = 100 gives exactly 99.
    const double qn = q * static_cast<double>(n);
    const double nearest = std::round(qn);
    const double fl = std::abs(qn - nearest) <= 1e-9 * std::max(1.0, qn) ? nearest : std::floor(qn);
    const double k = static_cast<double>(n) - fl;
    return static_cast<std::size_t>(std::clamp(k, 1.0, static_cast<double>(n)));
}

std::pair<double, bool> quantile_threshold(std::span<const float> values, double q) {
    if (values.empty()) throw DataError("cannot threshold an empty channel");
    std::vector<float> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    const std::size_t k = threshold_rank(sorted.size(), q);
    return {static_cast<double>(sorted[k - 1]), sorted.front() == sorted.back()};
}

ChannelThresholds channel_thresholds(const io::Manifest& manifest, const DissectionConfig& config) {
    config.validate();
    if (manifest.entries.empty()) throw DataError("cannot compute thresholds over an empty dataset");
    const std::size_t C = manifest.layer.channels;
    const std::size_t plane = manifest.layer.height * manifest.layer.width;
    const std::size_t n_images = manifest.entries.size();

    std::vector<std::vector<float>> pooled(C, std::vector<float>(plane * n_images));
    parallel_for(n_images, config.threads, [&](std::size_t i) {
        const auto stack = io::load_features(manifest, manifest.entries[i]);
        for (std::size_t c = 0; c < C; ++c) {
            const auto src = stack.channel(c);
            std::copy(src.begin(), src.end(), pooled[c].begin() + static_cast<std::ptrdiff_t>(i * plane));
        }
    });

    ChannelThresholds t;
    t.tau.resize(C);
    t.degenerate.resize(C);
    t.pooled.assign(C, plane * n_images);
    parallel_for(C, config.threads, [&](std::size_t c) {
        const auto [tau, degenerate] = quantile_threshold(pooled[c], config.q);
        t.tau[c] = tau;
        t.degenerate[c] = degenerate ? 1 : 0;
        std::vector<float>().swap(pooled[c]);
    });
    return t;
}

std::vector<Component> connected_components(std::span<const std::uint8_t> mask, std::size_t height,
                                             std::size_t width, Connectivity connectivity) {
    if (mask.size() != height * width) throw DataError("mask size does not match its extent");
    DisjointSet ds(mask.size());
    const bool diag = connectivity == Connectivity::Eight;
    for (std::size_t y = 0; y < height; ++y) {
        for (std::size_t x = 0; x < width; ++x) {
            const std::size_t i = y * width + x;
            if (!mask[i]) continue;
            // Already-visited neighbours: left, and the three above.
            if (x > 0 && mask[i - 1]) ds.unite(i, i - 1);
            if (y > 0) {
                const std::size_t up = i - width;
                if (mask[up]) ds.unite(i, up);
                if (diag && x > 0 && mask[up - 1]) ds.unite(i, up - 1);
                if (diag && x + 1 < width && mask[up + 1]) ds.unite(i, up + 1);
            }
        }
    }

    std::vector<Component> components;
    std::vector<std::size_t> slot(mask.size(), SIZE_MAX);
    for (std::size_t i = 0; i < mask.size(); ++i) {
        if (!mask[i]) continue;
        const std::size_t root = ds.find(i);
        if (slot[root] == SIZE_MAX) {
            slot[root] = components.size();
            components.emplace_back();
        }
        components[slot[root]].push_back(i);
    }
    return components;
}

std::vector<std::uint8_t> feature_region(const io::Manifest& manifest, std::span<const io::Box> boxes,
                                         BoxScaling scaling) {
    const std::size_t H = manifest.layer.height;
    const std::size_t W = manifest.layer.width;
    const double img_w = static_cast<double>(manifest.image_width);
    const double img_h = static_cast<double>(manifest.image_height);
    if (scaling == BoxScaling::CellFootprint) {
        return alignment::region_mask(H, W, boxes, img_w / static_cast<double>(W), img_h / static_cast<double>(H));
    }
    const auto pixels = alignment::region_mask(manifest.image_height, manifest.image_width, boxes);
    std::vector<std::uint8_t> region(H * W, 0);
    for (std::size_t py = 0; py < manifest.image_height; ++py) {
        const auto cy = std::min(H - 1, static_cast<std::size_t>((static_cast<double>(py) + 0.5) * H / img_h));
        for (std::size_t px = 0; px < manifest.image_width; ++px) {
            if (!pixels[py * manifest.image_width + px]) continue;
            const auto cx = std::min(W - 1, static_cast<std::size_t>((static_cast<double>(px) + 0.5) * W / img_w));
            region[cy * W + cx] = 1;
        }
    }
    return region;
}

std::vector<std::size_t> detect_concepts(const io::FeatureMapStack& stack, const ChannelThresholds& thresholds,
                                         std::span<const std::uint8_t> region, const DissectionConfig& config) {
    if (thresholds.channels() != stack.channels) throw DataError("threshold count does not match channel count");
    if (region.size() != stack.plane_size()) throw DataError("box region does not match the feature grid");
    std::vector<std::size_t> counts(stack.channels, 0);
    std::vector<std::uint8_t> mask(stack.plane_size());
    for (std::size_t c = 0; c < stack.channels; ++c) {
        if (thresholds.degenerate[c]) continue;
        const auto plane = stack.channel(c);
        const double tau = thresholds.tau[c];
        for (std::size_t i = 0; i < plane.size(); ++i) mask[i] = static_cast<double>(plane[i]) >= tau ? 1 : 0;
        for (const auto& comp : connected_components(mask, stack.height, stack.width, config.connectivity)) {
            const bool overlaps = std::any_of(comp.begin(), comp.end(), [&](std::size_t i) { return region[i] != 0; });
            counts[c] += overlaps ? 1 : 0;
        }
    }
    return counts;
}

ConceptReport concept_report(const io::Manifest& manifest, const io::AnnotationSet& annotations,
                             const ChannelThresholds& thresholds, const DissectionConfig& config) {
    config.validate();
    const auto images = annotated_entries(manifest, annotations);
    if (images.empty()) throw DataError("no annotated images in the manifest");
    if (thresholds.channels() != manifest.layer.channels) {
        throw DataError("threshold count does not match the manifest layer");
    }

    std::vector<std::vector<std::size_t>> per_image(images.size());
    parallel_for(images.size(), config.threads, [&](std::size_t i) {
        const auto stack = io::load_features(manifest, *images[i]);
        const auto region = feature_region(manifest, *annotations.find(images[i]->image_id), config.scaling);
        per_image[i] = detect_concepts(stack, thresholds, region, config);
    });

    ConceptReport r;
    r.q = config.q;
    r.connectivity = static_cast<int>(config.connectivity);
    r.n_images = images.size();
    r.per_channel.resize(thresholds.channels());
    for (std::size_t c = 0; c < thresholds.channels(); ++c) {
        r.per_channel[c].channel = c;
        if (thresholds.degenerate[c]) r.degenerate_channels.push_back(c);
    }
    std::size_t total = 0;
    std::size_t detectors = 0;
    for (const auto& counts : per_image) {
        for (std::size_t c = 0; c < counts.size(); ++c) {
            total += counts[c];
            r.per_channel[c].total_components += counts[c];
            if (counts[c] > 0) {
                ++detectors;
                ++r.per_channel[c].images_with_detection;
            }
        }
    }
    r.disjoint = static_cast<double>(total) / static_cast<double>(r.n_images);
    r.unique = static_cast<double>(detectors) / static_cast<double>(r.n_images);
    return r;
}

std::string to_json(const ConceptReport& r) {
    nlohmann::ordered_json j;
    j["q"] = r.q;
    j["connectivity"] = r.connectivity;
    j["n_images"] = r.n_images;
    j["disjoint"] = r.disjoint;
    j["unique"] = r.unique;
    j["degenerate_channels"] = r.degenerate_channels;
    j["per_channel"] = nlohmann::ordered_json::array();
    for (const auto& c : r.per_channel) {
        j["per_channel"].push_back({{"channel", c.channel},
                                    {"images_with_detection", c.images_with_detection},
                                    {"total_components", c.total_components}});
    }
    return j.dump(2) + "\n";
}

std::string to_csv(const ConceptReport& r) {
    std::ostringstream out;
    out.precision(17);
    out << "# q=" << r.q << " connectivity=" << r.connectivity << " n_images=" << r.n_images
        << " disjoint=" << r.disjoint << " unique=" << r.unique << '\n';
    out << "channel,images_with_detection,total_components,degenerate\n";
    for (const auto& c : r.per_channel) {
        const bool deg = std::find(r.degenerate_channels.begin(), r.degenerate_channels.end(), c.channel) !=
                         r.degenerate_channels.end();
        out << c.channel << ',' << c.images_with_detection << ',' << c.total_components << ',' << (deg ? 1 : 0)
            << '\n';
    }
    return out.str();
}

}  // namespace imba::dissection
