#pragma once

// Cost-sensitive binary cross-entropy family. Each class m is treated as an
// independent binary problem:
//
//   L = -sum_i [ w+(p_i) y_i log p_i + w-(p_i) (1 - y_i) log(1 - p_i) ]
//
// with the per-method weights
//   BCE      w+ = w- = 1
//   WBCE     w+ = N-/(N+ + N-),                 w- = N+/(N+ + N-)
//   Focal    w+ = alpha (1-p)^gamma,            w- = (1-alpha) p^gamma
//   CBFocal  w+ = (1-beta)/(1-beta^N+) (1-p)^gamma,
//            w- = (1-beta)/(1-beta^N-) p^gamma

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace imba::losses {

inline constexpr double kProbEpsilon = 1e-7;

enum class Method { BCE, WBCE, Focal, CBFocal };

std::string_view to_string(Method m);
/// Accepts bce|wbce|focal|cbfocal (case-insensitive, "cb-focal" too).
Method parse_method(std::string_view s);

struct ClassCounts {
    std::uint64_t positives = 0;
    std::uint64_t negatives = 0;
};

struct LossConfig {
    Method method = Method::BCE;
    std::optional<double> alpha;  // Focal
    std::optional<double> gamma;  // Focal, CBFocal
    std::optional<double> beta;   // CBFocal
    std::vector<ClassCounts> class_counts;

    static LossConfig bce() { return {}; }
    static LossConfig wbce(std::vector<ClassCounts> counts);
    static LossConfig focal(double alpha, double gamma);
    static LossConfig cb_focal(double beta, double gamma, std::vector<ClassCounts> counts);

    /// Throws UsageError if hyper-parameters are missing, out of range, or
    /// supplied for a method that does not use them.
    void validate() const;
};

struct Weights {
    double w_plus = 0;
    double w_minus = 0;
};

/// Closed-form (w+, w-) for `class_index` at probability p in [0, 1].
Weights class_weights(const LossConfig& config, std::size_t class_index, double p);

enum class Reduction { Sum, Mean };

/// N samples x M classes, row-major. Exactly one of probs/logits is used; when
/// built from logits, p = sigmoid(z).
struct SampleBatch {
    std::size_t samples = 0;
    std::size_t classes = 0;
    std::vector<double> probs;
    std::vector<std::uint8_t> labels;

    static SampleBatch from_probs(std::size_t n, std::size_t m, std::vector<double> p, std::vector<std::uint8_t> y);
    static SampleBatch from_logits(std::size_t n, std::size_t m, std::span<const double> z, std::vector<std::uint8_t> y);
};

double sigmoid(double z);
double clamp_prob(double p);

/// Per-class loss, reduced over samples.
std::vector<double> loss_per_class(const SampleBatch& batch, const LossConfig& config,
                                   Reduction reduction = Reduction::Sum);

/// Total over classes of loss_per_class.
double loss_value(const SampleBatch& batch, const LossConfig& config, Reduction reduction = Reduction::Sum);

/// d loss_value / d z for an N x M logit batch (same layout as SampleBatch),
/// differentiating through p-dependent Focal/CBFocal weights and the
/// probability clamp.
std::vector<double> loss_grad_logits(std::span<const double> logits, std::span<const std::uint8_t> labels,
                                     std::size_t classes, const LossConfig& config,
                                     Reduction reduction = Reduction::Sum);

/// Scalar loss of one (z, y) pair for class `class_index`.
double single_loss(double z, std::uint8_t y, const LossConfig& config, std::size_t class_index = 0);
double single_grad(double z, std::uint8_t y, const LossConfig& config, std::size_t class_index = 0);

struct GradCheck {
    double max_relative_error = 0;
    double worst_logit = 0;
    std::uint8_t worst_label = 0;
};

/// Compares the analytic gradient against central differences (step 1e-5) at
/// `trials` random draws z ~ U[-6, 6], y ~ Bernoulli(0.5) for class 0.
GradCheck validate_grad(const LossConfig& config, std::size_t trials, std::uint64_t seed);

inline constexpr double kFiniteDiffStep = 1e-5;

}  // namespace imba::losses
