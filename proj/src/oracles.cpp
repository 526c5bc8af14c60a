#include "imba_lens/oracles.hpp"

#include <deque>

#include "imba_lens/errors.hpp"

namespace imba::oracle {

double pairwise_auroc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
    double good = 0;
    double pairs = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (!labels[i]) continue;
        for (std::size_t j = 0; j < scores.size(); ++j) {
            if (labels[j]) continue;
            pairs += 1;
            if (scores[i] > scores[j]) {
                good += 1;
            } else if (scores[i] == scores[j]) {
                good += 0.5;
            }
        }
    }
    if (pairs == 0) throw DataError("pairwise AUROC needs both classes");
    return good / pairs;
}

double prefix_average_precision(std::span<const double> scores, std::span<const std::uint8_t> labels) {
    const std::size_t n = scores.size();
    // Selection sort: repeatedly take the best remaining sample.
    std::vector<std::size_t> ranking;
    std::vector<bool> taken(n, false);
    for (std::size_t r = 0; r < n; ++r) {
        std::size_t best = n;
        for (std::size_t i = 0; i < n; ++i) {
            if (taken[i]) continue;
            if (best == n) {
                best = i;
                continue;
            }
            const bool higher = scores[i] > scores[best];
            const bool tie_neg_first = scores[i] == scores[best] && !labels[i] && labels[best];
            if (higher || tie_neg_first) best = i;
        }
        taken[best] = true;
        ranking.push_back(best);
    }

    std::size_t total_pos = 0;
    for (std::size_t i = 0; i < n; ++i) total_pos += labels[i] ? 1 : 0;
    if (total_pos == 0) throw DataError("AP needs a positive");

    double ap = 0;
    double prev_recall = 0;
    for (std::size_t k = 1; k <= n; ++k) {
        std::size_t tp = 0;
        for (std::size_t r = 0; r < k; ++r) tp += labels[ranking[r]] ? 1 : 0;
        const double precision = static_cast<double>(tp) / static_cast<double>(k);
        const double recall = static_cast<double>(tp) / static_cast<double>(total_pos);
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    return ap;
}

std::size_t flood_fill_count(std::span<const std::uint8_t> mask, std::size_t height, std::size_t width,
                             bool eight_connected) {
    std::vector<bool> seen(mask.size(), false);
    std::size_t count = 0;
    for (std::size_t start = 0; start < mask.size(); ++start) {
        if (!mask[start] || seen[start]) continue;
        ++count;
        std::deque<std::size_t> queue{start};
        seen[start] = true;
        while (!queue.empty()) {
            const std::size_t cur = queue.front();
            queue.pop_front();
            const long cy = static_cast<long>(cur / width);
            const long cx = static_cast<long>(cur % width);
            for (long dy = -1; dy <= 1; ++dy) {
                for (long dx = -1; dx <= 1; ++dx) {
                    if (dx == 0 && dy == 0) continue;
                    if (!eight_connected && dx != 0 && dy != 0) continue;
                    const long ny = cy + dy;
                    const long nx = cx + dx;
                    if (ny < 0 || nx < 0 || ny >= static_cast<long>(height) || nx >= static_cast<long>(width)) continue;
                    const auto ni = static_cast<std::size_t>(ny) * width + static_cast<std::size_t>(nx);
                    if (mask[ni] && !seen[ni]) {
                        seen[ni] = true;
                        queue.push_back(ni);
                    }
                }
            }
        }
    }
    return count;
}

bool pixel_in_boxes(std::size_t px, std::size_t py, std::span<const io::Box> boxes) {
    const double x = static_cast<double>(px);
    const double y = static_cast<double>(py);
    for (const auto& b : boxes) {
        const double ox = std::min(x + 1, b.x + b.w) - std::max(x, b.x);
        const double oy = std::min(y + 1, b.y + b.h) - std::max(y, b.y);
        if (ox > 0 && oy > 0) return true;
    }
    return false;
}

SoftScores brute_soft_scores(std::span<const double> map, std::size_t height, std::size_t width,
                             std::span<const io::Box> boxes) {
    double inside = 0;
    double total = 0;
    double area = 0;
    for (std::size_t y = 0; y < height; ++y) {
        for (std::size_t x = 0; x < width; ++x) {
            const double v = map[y * width + x];
            total += v;
            if (pixel_in_boxes(x, y, boxes)) {
                inside += v;
                area += 1;
            }
        }
    }
    return {area > 0 ? inside / area : 0.0, total > 0 ? inside / total : 0.0};
}

std::vector<double> brute_cam(std::span<const float> features, std::size_t channels, std::size_t height,
                              std::size_t width, std::span<const double> weights) {
    std::vector<double> out(height * width);
    for (std::size_t y = 0; y < height; ++y) {
        for (std::size_t x = 0; x < width; ++x) {
            double dot = 0;
            for (std::size_t c = 0; c < channels; ++c) {
                dot += weights[c] * static_cast<double>(features[(c * height + y) * width + x]);
            }
            out[y * width + x] = dot > 0 ? dot : 0.0;
        }
    }
    return out;
}

std::size_t count_at_least(std::span<const float> values, double tau) {
    std::size_t n = 0;
    for (float v : values) n += static_cast<double>(v) >= tau ? 1 : 0;
    return n;
}

}  // namespace imba::oracle
