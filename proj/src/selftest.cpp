#include "imba_lens/selftest.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "imba_lens/alignment.hpp"
#include "imba_lens/cam.hpp"
#include "imba_lens/dissection.hpp"
#include "imba_lens/losses.hpp"
#include "imba_lens/metrics.hpp"
#include "imba_lens/oracles.hpp"
#include "imba_lens/rng.hpp"

namespace imba::selftest {

namespace {

SuiteResult finish(std::string name, double worst, double tolerance, std::string detail = {}) {
    return {std::move(name), worst, tolerance, worst <= tolerance, std::move(detail)};
}

std::vector<float> distinct_floats(Rng& rng, std::size_t n) {
    while (true) {
        std::vector<float> v(n);
        for (auto& x : v) x = static_cast<float>(rng.uniform(-3.0, 3.0));
        std::vector<float> s = v;
        std::sort(s.begin(), s.end());
        if (std::adjacent_find(s.begin(), s.end()) == s.end()) return v;
    }
}

io::Box random_box(Rng& rng, double w, double h) {
    io::Box b;
    b.label = "x";
    const bool fractional = rng.coin(0.3);
    const auto coord = [&](double extent) {
        return fractional ? rng.uniform(0.0, extent - 0.5) : static_cast<double>(rng.between(0, static_cast<std::int64_t>(extent) - 1));
    };
    b.x = coord(w);
    b.y = coord(h);
    b.w = fractional ? rng.uniform(0.1, w - b.x) : static_cast<double>(rng.between(1, static_cast<std::int64_t>(w - b.x)));
    b.h = fractional ? rng.uniform(0.1, h - b.y) : static_cast<double>(rng.between(1, static_cast<std::int64_t>(h - b.y)));
    return b;
}

}  // namespace

SuiteResult loss_closed_forms(const Options&) {
    using namespace losses;
    const std::uint64_t counts[] = {1, 2, 7, 100, 5000};
    const double probs[] = {0.0, 1e-7, 0.01, 0.3, 0.5, 0.77, 1.0 - 1e-7, 1.0};
    const double alphas[] = {0.05, 0.25, 0.5, 0.9};
    const double gammas[] = {0.0, 0.5, 1.0, 2.0, 5.0};
    const double betas[] = {0.0, 0.9, 0.99, 0.999, 0.9999};

    double worst = 0;
    const auto check = [&](const Weights& got, double wp, double wm) {
        worst = std::max({worst, std::abs(got.w_plus - wp), std::abs(got.w_minus - wm)});
        if (std::isnan(got.w_plus) || std::isnan(got.w_minus)) worst = INFINITY;
    };
    for (double p : probs) {
        check(class_weights(LossConfig::bce(), 0, p), 1.0, 1.0);
        for (auto np : counts) {
            for (auto nn : counts) {
                const double total = static_cast<double>(np + nn);
                check(class_weights(LossConfig::wbce({{np, nn}}), 0, p), nn / total, np / total);
            }
        }
        for (double a : alphas) {
            for (double g : gammas) {
                check(class_weights(LossConfig::focal(a, g), 0, p), a * std::pow(1 - p, g), (1 - a) * std::pow(p, g));
            }
        }
        for (double b : betas) {
            for (double g : gammas) {
                for (auto np : counts) {
                    for (auto nn : counts) {
                        const double wp = (1 - b) / (1 - std::pow(b, static_cast<double>(np))) * std::pow(1 - p, g);
                        const double wm = (1 - b) / (1 - std::pow(b, static_cast<double>(nn))) * std::pow(p, g);
                        check(class_weights(LossConfig::cb_focal(b, g, {{np, nn}}), 0, p), wp, wm);
                    }
                }
            }
        }
    }
    return finish("loss-closed-forms", worst, 1e-12);
}

SuiteResult loss_gradients(const Options& o) {
    using namespace losses;
    const LossConfig configs[] = {
        LossConfig::bce(),
        LossConfig::wbce({{120, 880}}),
        LossConfig::focal(0.25, 2.0),
        LossConfig::cb_focal(0.9999, 2.0, {{120, 880}}),
    };
    double worst = 0;
    std::ostringstream detail;
    for (std::size_t i = 0; i < std::size(configs); ++i) {
        const auto r = validate_grad(configs[i], o.trials, o.seed + i);
        detail << to_string(configs[i].method) << '=' << r.max_relative_error << ' ';
        worst = std::max(worst, r.max_relative_error);
    }
    return {"loss-gradient", worst, 1e-6, worst < 1e-6, detail.str()};
}

SuiteResult cam_oracle(const Options& o) {
    Rng rng(o.seed ^ 0xca3ULL);
    double worst = 0;
    for (std::size_t t = 0; t < o.trials; ++t) {
        io::FeatureMapStack s;
        s.channels = static_cast<std::size_t>(rng.between(1, 8));
        s.height = static_cast<std::size_t>(rng.between(1, 12));
        s.width = static_cast<std::size_t>(rng.between(1, 12));
        s.values.resize(s.channels * s.plane_size());
        for (auto& v : s.values) v = static_cast<float>(rng.uniform(-2.0, 2.0));
        cam::HeadWeights head;
        head.classes = 2;
        head.channels = s.channels;
        head.weights.resize(2 * s.channels);
        for (auto& w : head.weights) w = rng.uniform(-1.0, 1.0);
        const std::size_t cls = rng.below(2);
        const auto got = cam::compute_cam(s, head, cls);
        const auto want = oracle::brute_cam(s.values, s.channels, s.height, s.width, head.row(cls));
        for (std::size_t i = 0; i < want.size(); ++i) worst = std::max(worst, std::abs(got.values[i] - want[i]));
    }
    return finish("cam-oracle", worst, 1e-12);
}

SuiteResult alignment_oracle(const Options& o) {
    Rng rng(o.seed ^ 0xa11ULL);
    constexpr std::size_t kSide = 32;
    double worst = 0;
    for (std::size_t t = 0; t < o.trials; ++t) {
        cam::Heatmap h{cam::Map2D(kSide, kSide), cam::Resolution::ImagePixels};
        for (auto& v : h.map.values) v = rng.uniform();
        if (rng.coin(0.2)) {
            for (auto& v : h.map.values) v = v < 0.7 ? 0.0 : v;  // sparse maps
        }
        std::vector<io::Box> boxes;
        const auto n_boxes = rng.between(1, 3);
        for (std::int64_t b = 0; b < n_boxes; ++b) boxes.push_back(random_box(rng, kSide, kSide));
        const auto got = alignment::score(h, boxes);
        const auto want = oracle::brute_soft_scores(h.map.values, kSide, kSide, boxes);
        worst = std::max({worst, std::abs(got.iobb - want.iobb), std::abs(got.ior - want.ior)});
    }
    return finish("alignment-oracle", worst, 1e-9);
}

SuiteResult component_oracle(const Options& o) {
    Rng rng(o.seed ^ 0xcc0ULL);
    double mismatches = 0;
    for (std::size_t t = 0; t < o.trials; ++t) {
        const auto h = static_cast<std::size_t>(rng.between(1, 16));
        const auto w = static_cast<std::size_t>(rng.between(1, 16));
        const double density = rng.uniform(0.05, 0.95);
        std::vector<std::uint8_t> mask(h * w);
        for (auto& m : mask) m = rng.coin(density) ? 1 : 0;
        for (auto conn : {dissection::Connectivity::Four, dissection::Connectivity::Eight}) {
            const auto comps = dissection::connected_components(mask, h, w, conn);
            const auto want = oracle::flood_fill_count(mask, h, w, conn == dissection::Connectivity::Eight);
            std::vector<int> owner(mask.size(), 0);
            for (const auto& c : comps) {
                for (auto i : c) owner[i] += 1;
            }
            bool partition = true;
            for (std::size_t i = 0; i < mask.size(); ++i) partition &= owner[i] == (mask[i] ? 1 : 0);
            if (comps.size() != want || !partition) mismatches += 1;
        }
    }
    return finish("component-oracle", mismatches, 0.0, "mismatching masks");
}

SuiteResult quantile_calibration(const Options& o) {
    Rng rng(o.seed ^ 0x9a7ULL);
    double worst_excess = 0;  // how far outside [q - 1/n, q + 1/n], in units of 1/n
    for (double q : {0.01, 0.04, 0.5}) {
        for (std::size_t t = 0; t < o.trials; ++t) {
            const auto n = static_cast<std::size_t>(rng.between(50, 2000));
            const auto values = distinct_floats(rng, n);
            const double q_used = o.fault == Fault::CorruptThreshold ? std::min(0.99, q + 0.2) : q;
            const double tau = dissection::quantile_threshold(values, q_used).first;
            const double frac = static_cast<double>(oracle::count_at_least(values, tau)) / static_cast<double>(n);
            const double dev = std::abs(frac - q) * static_cast<double>(n);
            worst_excess = std::max(worst_excess, dev - 1.0);
        }
    }
    return finish("quantile-calibration", std::max(0.0, worst_excess), 1e-9, "excess beyond +-1/n band, units of 1/n");
}

SuiteResult metrics_oracle(const Options& o) {
    Rng rng(o.seed ^ 0x3e7ULL);
    double worst = 0;
    const auto compare = [&](const std::vector<double>& scores, const std::vector<std::uint8_t>& labels) {
        metrics::ScoredSamples s{"c", scores, labels, metrics::ScoreKind::Probability};
        const auto n_pos = s.positives();
        if (n_pos > 0 && n_pos < labels.size()) {
            worst = std::max(worst, std::abs(metrics::auroc(s) - oracle::pairwise_auroc(scores, labels)));
        }
        if (n_pos > 0) {
            worst = std::max(worst,
                             std::abs(metrics::average_precision(s) - oracle::prefix_average_precision(scores, labels)));
        }
    };
    for (std::size_t t = 0; t < o.trials; ++t) {
        const auto n = static_cast<std::size_t>(rng.between(2, 200));
        const bool quantized = rng.coin(0.5);
        std::vector<double> scores(n);
        std::vector<std::uint8_t> labels(n);
        for (std::size_t i = 0; i < n; ++i) {
            scores[i] = quantized ? std::floor(rng.uniform() * 6.0) / 6.0 : rng.uniform();
            labels[i] = rng.coin(0.3) ? 1 : 0;
        }
        labels[0] = 1;
        labels[1] = 0;
        compare(scores, labels);
    }
    // Degenerate fixtures: all ties and perfect ranking.
    {
        std::vector<double> scores(20, 0.4);
        std::vector<std::uint8_t> labels(20, 0);
        for (std::size_t i = 0; i < 20; i += 3) labels[i] = 1;
        metrics::ScoredSamples s{"ties", scores, labels, metrics::ScoreKind::Probability};
        worst = std::max(worst, std::abs(metrics::auroc(s) - 0.5));
        compare(scores, labels);
    }
    {
        std::vector<double> scores{0.99, 0.9, 0.8, 0.5, 0.2, 0.1};
        std::vector<std::uint8_t> labels{1, 1, 1, 0, 0, 0};
        metrics::ScoredSamples s{"perfect", scores, labels, metrics::ScoreKind::Probability};
        worst = std::max({worst, std::abs(metrics::auroc(s) - 1.0), std::abs(metrics::average_precision(s) - 1.0)});
    }
    return finish("metrics-oracle", worst, 1e-12);
}

std::vector<SuiteResult> run_all(const Options& o) {
    return {loss_closed_forms(o), loss_gradients(o), cam_oracle(o),          alignment_oracle(o),
            component_oracle(o),  quantile_calibration(o), metrics_oracle(o)};
}

}  // namespace imba::selftest
