#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "imba_lens/tensor_io.hpp"

namespace imba::metrics {

enum class ScoreKind { Probability, Logit };

struct ScoredSamples {
    std::string class_name;
    std::vector<double> scores;
    std::vector<std::uint8_t> labels;
    ScoreKind kind = ScoreKind::Probability;

    std::size_t positives() const;
    std::size_t negatives() const { return labels.size() - positives(); }
};

/// Tie-corrected Mann-Whitney statistic U / (N+ N-).
double auroc(const ScoredSamples& s);

/// Non-interpolated AP over descending-score prefixes. Within a score tie,
/// negatives precede positives; remaining ties keep input order.
double average_precision(const ScoredSamples& s);

/// Mean predicted probability over positive samples (sigmoid applied to logits).
double mean_predicted_prob(const ScoredSamples& s);

struct ClassMetrics {
    std::string class_name;
    std::optional<double> auroc;  // absent when a class lacks positives or negatives
    std::optional<double> ap;
    std::optional<double> mean_prob;
    std::size_t n_pos = 0;
    std::size_t n_neg = 0;
};

struct MetricsReport {
    std::vector<ClassMetrics> rows;    // one per class
    std::optional<ClassMetrics> average;  // class-wise mean, multi-label only
};

ClassMetrics evaluate(const ScoredSamples& s);

/// Per-class metrics over a manifest's logits and labels, plus the class-wise
/// "Average" row when there is more than one class.
MetricsReport evaluate_manifest(const io::Manifest& manifest, std::size_t threads = 1);

std::string to_json(const MetricsReport& r);
std::string to_csv(const MetricsReport& r);

}  // namespace imba::metrics
