#include "imba_lens/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "imba_lens/errors.hpp"
#include "imba_lens/losses.hpp"
#include "imba_lens/parallel.hpp"
#include "json.hpp"

namespace imba::metrics {

namespace {

void check_shape(const ScoredSamples& s) {
    if (s.scores.empty() || s.scores.size() != s.labels.size()) {
        throw DataError("scores and labels must have equal nonzero length");
    }
    for (double v : s.scores) {
        if (std::isnan(v)) throw DataError("scores must not be NaN");
    }
}

double as_probability(const ScoredSamples& s, double v) {
    return s.kind == ScoreKind::Logit ? losses::sigmoid(v) : v;
}

}  // namespace

std::size_t ScoredSamples::positives() const {
    return static_cast<std::size_t>(std::count_if(labels.begin(), labels.end(), [](auto l) { return l != 0; }));
}

double auroc(const ScoredSamples& s) {
    check_shape(s);
    const std::size_t n = s.scores.size();
    const std::size_t n_pos = s.positives();
    const std::size_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0) throw DataError("AUROC needs at least one positive and one negative");

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return s.scores[a] < s.scores[b]; });

    // Average 1-based ranks over tie groups; sums of half-integers stay exact.
    double pos_rank_sum = 0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j < n && s.scores[order[j]] == s.scores[order[i]]) ++j;
        const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);
        for (std::size_t k = i; k < j; ++k) {
            if (s.labels[order[k]]) pos_rank_sum += avg_rank;
        }
        i = j;
    }
    const double np = static_cast<double>(n_pos);
    const double u = pos_rank_sum - np * (np + 1) / 2;
    return u / (np * static_cast<double>(n_neg));
}

double average_precision(const ScoredSamples& s) {
    check_shape(s);
    const std::size_t n_pos = s.positives();
    if (n_pos == 0) throw DataError("average precision needs at least one positive");

    std::vector<std::size_t> order(s.scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (s.scores[a] != s.scores[b]) return s.scores[a] > s.scores[b];
        return (s.labels[a] != 0) < (s.labels[b] != 0);
    });

    // Recall only moves at positives, by 1/N+ each time.
    double sum_precision = 0;
    std::size_t tp = 0;
    for (std::size_t k = 0; k < order.size(); ++k) {
        if (!s.labels[order[k]]) continue;
        ++tp;
        sum_precision += static_cast<double>(tp) / static_cast<double>(k + 1);
    }
    return sum_precision / static_cast<double>(n_pos);
}

double mean_predicted_prob(const ScoredSamples& s) {
    check_shape(s);
    double sum = 0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < s.scores.size(); ++i) {
        if (!s.labels[i]) continue;
        sum += as_probability(s, s.scores[i]);
        ++n;
    }
    if (n == 0) throw DataError("mean predicted probability needs at least one positive");
    return sum / static_cast<double>(n);
}

ClassMetrics evaluate(const ScoredSamples& s) {
    check_shape(s);
    ClassMetrics m;
    m.class_name = s.class_name;
    m.n_pos = s.positives();
    m.n_neg = s.labels.size() - m.n_pos;
    if (m.n_pos > 0 && m.n_neg > 0) m.auroc = auroc(s);
    if (m.n_pos > 0) {
        m.ap = average_precision(s);
        m.mean_prob = mean_predicted_prob(s);
    }
    return m;
}

MetricsReport evaluate_manifest(const io::Manifest& manifest, std::size_t threads) {
    if (manifest.entries.empty()) throw DataError("manifest has no entries");
    const std::size_t M = manifest.num_classes();
    const std::size_t N = manifest.entries.size();
    std::vector<std::vector<float>> logits(N);
    parallel_for(N, threads, [&](std::size_t i) { logits[i] = io::load_logits(manifest, manifest.entries[i]); });

    MetricsReport report;
    report.rows.resize(M);
    parallel_for(M, threads, [&](std::size_t m) {
        ScoredSamples s;
        s.class_name = manifest.class_names[m];
        s.kind = ScoreKind::Logit;
        s.scores.reserve(N);
        s.labels.reserve(N);
        for (std::size_t i = 0; i < N; ++i) {
            s.scores.push_back(static_cast<double>(logits[i][m]));
            s.labels.push_back(manifest.entries[i].labels[m]);
        }
        report.rows[m] = evaluate(s);
    });

    if (M > 1) {
        ClassMetrics avg;
        avg.class_name = "Average";
        const auto mean_of = [&](auto field) -> std::optional<double> {
            double sum = 0;
            std::size_t n = 0;
            for (const auto& r : report.rows) {
                if (const auto& v = r.*field) {
                    sum += *v;
                    ++n;
                }
            }
            return n ? std::optional<double>(sum / static_cast<double>(n)) : std::nullopt;
        };
        avg.auroc = mean_of(&ClassMetrics::auroc);
        avg.ap = mean_of(&ClassMetrics::ap);
        avg.mean_prob = mean_of(&ClassMetrics::mean_prob);
        for (const auto& r : report.rows) {
            avg.n_pos += r.n_pos;
            avg.n_neg += r.n_neg;
        }
        report.average = avg;
    }
    return report;
}

std::string to_json(const MetricsReport& r) {
    const auto row = [](const ClassMetrics& m) {
        const auto opt = [](const std::optional<double>& v) {
            return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
        };
        return nlohmann::ordered_json{{"class", m.class_name}, {"auroc", opt(m.auroc)}, {"ap", opt(m.ap)},
                                      {"mean_prob", opt(m.mean_prob)}, {"n_pos", m.n_pos}, {"n_neg", m.n_neg}};
    };
    nlohmann::ordered_json j;
    j["rows"] = nlohmann::ordered_json::array();
    for (const auto& m : r.rows) j["rows"].push_back(row(m));
    j["average"] = r.average ? row(*r.average) : nlohmann::ordered_json(nullptr);
    return j.dump(2) + "\n";
}

std::string to_csv(const MetricsReport& r) {
    std::ostringstream out;
    out.precision(17);
    const auto cell = [&](const std::optional<double>& v) {
        if (v) out << *v;
    };
    const auto row = [&](const ClassMetrics& m) {
        out << m.class_name << ',';
        cell(m.auroc);
        out << ',';
        cell(m.ap);
        out << ',';
        cell(m.mean_prob);
        out << ',' << m.n_pos << ',' << m.n_neg << '\n';
    };
    out << "class,auroc,ap,mean_prob,n_pos,n_neg\n";
    for (const auto& m : r.rows) row(m);
    if (r.average) row(*r.average);
    return out.str();
}

}  // namespace imba::metrics
