#include "imba_lens/alignment.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "imba_lens/errors.hpp"
#include "imba_lens/parallel.hpp"
#include "json.hpp"

namespace imba::alignment {

namespace {

// Half-open index range [lo, hi) of cells of size `cell` overlapping
// [start, start + extent) with positive length.
std::pair<std::size_t, std::size_t> cell_range(double start, double extent, double cell, std::size_t n) {
    const double end = start + extent;
    const auto overlaps = [&](std::size_t i) {
        const double a = static_cast<double>(i) * cell;
        return a < end && a + cell > start;
    };
    std::size_t lo = 0;
    while (lo < n && !overlaps(lo)) ++lo;
    std::size_t hi = lo;
    while (hi < n && overlaps(hi)) ++hi;
    return {lo, hi};
}

}  // namespace

std::vector<std::uint8_t> region_mask(std::size_t height, std::size_t width, std::span<const io::Box> boxes,
                                      double cell_w, double cell_h) {
    std::vector<std::uint8_t> mask(height * width, 0);
    for (const auto& b : boxes) {
        const auto [x0, x1] = cell_range(b.x, b.w, cell_w, width);
        const auto [y0, y1] = cell_range(b.y, b.h, cell_h, height);
        for (std::size_t y = y0; y < y1; ++y) {
            std::fill(mask.begin() + static_cast<std::ptrdiff_t>(y * width + x0),
                      mask.begin() + static_cast<std::ptrdiff_t>(y * width + x1), std::uint8_t{1});
        }
    }
    return mask;
}

AlignmentScore score(const cam::Heatmap& map, std::span<const io::Box> boxes) {
    if (boxes.empty()) throw DataError("alignment needs at least one box");
    const auto mask = region_mask(map.height(), map.width(), boxes);
    AlignmentScore s;
    double inside = 0;
    for (std::size_t i = 0; i < mask.size(); ++i) {
        const double v = map.map.values[i];
        s.total_mass += v;
        if (mask[i]) {
            inside += v;
            ++s.box_area;
        }
    }
    if (s.box_area == 0) throw DataError("boxes cover no pixel of the heatmap");
    s.iobb = inside / static_cast<double>(s.box_area);
    if (s.total_mass > 0) {
        s.ior = inside / s.total_mass;
    } else {
        s.zero_mass = true;
    }
    s.iobb = std::clamp(s.iobb, 0.0, 1.0);
    s.ior = std::clamp(s.ior, 0.0, 1.0);
    return s;
}

double soft_iobb(const cam::Heatmap& map, std::span<const io::Box> boxes) { return score(map, boxes).iobb; }

double soft_ior(const cam::Heatmap& map, std::span<const io::Box> boxes) { return score(map, boxes).ior; }

AlignmentReport aggregate_alignment(const io::Manifest& manifest, const io::AnnotationSet& annotations,
                                    const cam::HeadWeights& head, const AlignmentOptions& options) {
    struct Job {
        const io::ManifestEntry* entry;
        const std::vector<io::Box>* boxes;
    };
    std::vector<Job> jobs;
    for (const auto& e : manifest.entries) {
        if (const auto* b = annotations.find(e.image_id); b && !b->empty()) jobs.push_back({&e, b});
    }
    if (jobs.empty()) throw DataError("no annotated images in the manifest");

    // Per job: one PairScore per annotated class, in class order.
    std::vector<std::vector<PairScore>> results(jobs.size());
    parallel_for(jobs.size(), options.threads, [&](std::size_t j) {
        const auto& job = jobs[j];
        std::vector<std::vector<io::Box>> by_class(manifest.num_classes());
        for (const auto& b : *job.boxes) {
            const auto cls = manifest.class_index(b.label);
            if (!cls) throw DataError("annotated class '" + b.label + "' is not in the manifest");
            by_class[*cls].push_back(b);
        }
        const auto features = io::load_features(manifest, *job.entry);
        for (std::size_t cls = 0; cls < by_class.size(); ++cls) {
            if (by_class[cls].empty()) continue;
            const auto heat = cam::image_heatmap(features, head, cls, manifest.image_height, manifest.image_width,
                                                 options.order);
            results[j].push_back({job.entry->image_id, manifest.class_names[cls], score(heat, by_class[cls])});
        }
    });

    AlignmentReport report;
    std::vector<ClassAlignment> acc(manifest.num_classes());
    double sum_iobb = 0;
    double sum_ior = 0;
    for (auto& per_job : results) {
        for (auto& p : per_job) {
            const auto cls = *manifest.class_index(p.class_name);
            acc[cls].n_pairs += 1;
            acc[cls].mean_iobb += p.score.iobb;
            acc[cls].mean_ior += p.score.ior;
            sum_iobb += p.score.iobb;
            sum_ior += p.score.ior;
            report.zero_mass_count += p.score.zero_mass ? 1 : 0;
            report.pairs.push_back(std::move(p));
        }
    }
    for (std::size_t cls = 0; cls < acc.size(); ++cls) {
        auto& a = acc[cls];
        if (a.n_pairs == 0) continue;
        a.class_name = manifest.class_names[cls];
        a.mean_iobb /= static_cast<double>(a.n_pairs);
        a.mean_ior /= static_cast<double>(a.n_pairs);
        report.per_class.push_back(a);
    }
    report.n_pairs = report.pairs.size();
    report.mean_iobb = sum_iobb / static_cast<double>(report.n_pairs);
    report.mean_ior = sum_ior / static_cast<double>(report.n_pairs);
    return report;
}

std::string to_json(const AlignmentReport& r) {
    nlohmann::ordered_json j;
    j["per_class"] = nlohmann::ordered_json::array();
    for (const auto& c : r.per_class) {
        j["per_class"].push_back(
            {{"class", c.class_name}, {"n_pairs", c.n_pairs}, {"mean_iobb", c.mean_iobb}, {"mean_ior", c.mean_ior}});
    }
    j["overall"] = {{"n_pairs", r.n_pairs}, {"mean_iobb", r.mean_iobb}, {"mean_ior", r.mean_ior}};
    j["zero_mass_count"] = r.zero_mass_count;
    j["pairs"] = nlohmann::ordered_json::array();
    for (const auto& p : r.pairs) {
        j["pairs"].push_back({{"image_id", p.image_id},
                              {"class", p.class_name},
                              {"iobb", p.score.iobb},
                              {"ior", p.score.ior},
                              {"box_area", p.score.box_area},
                              {"total_mass", p.score.total_mass},
                              {"zero_mass", p.score.zero_mass}});
    }
    return j.dump(2) + "\n";
}

std::string to_csv(const AlignmentReport& r) {
    std::ostringstream out;
    out.precision(17);
    out << "class,n_pairs,mean_iobb,mean_ior\n";
    for (const auto& c : r.per_class) {
        out << c.class_name << ',' << c.n_pairs << ',' << c.mean_iobb << ',' << c.mean_ior << '\n';
    }
    out << "overall," << r.n_pairs << ',' << r.mean_iobb << ',' << r.mean_ior << '\n';
    return out.str();
}

}  // namespace imba::alignment
