#include "imba_lens/losses.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "imba_lens/errors.hpp"
#include "imba_lens/rng.hpp"

namespace imba::losses {

namespace {

// Every method has the shape w+ = kp (1-p)^gamma, w- = km p^gamma; BCE and
// WBCE are the gamma = 0 case.
struct WeightForm {
    double kp = 1;
    double km = 1;
    double gamma = 0;
};

const ClassCounts& counts_for(const LossConfig& c, std::size_t class_index) {
    if (class_index >= c.class_counts.size()) {
        throw UsageError("no class counts for class index " + std::to_string(class_index));
    }
    return c.class_counts[class_index];
}

WeightForm weight_form(const LossConfig& c, std::size_t class_index) {
    switch (c.method) {
        case Method::BCE:
            return {};
        case Method::WBCE: {
            const auto& n = counts_for(c, class_index);
            const double total = static_cast<double>(n.positives) + static_cast<double>(n.negatives);
            if (total == 0) throw UsageError("WBCE requires N+ + N- >= 1");
            return {static_cast<double>(n.negatives) / total, static_cast<double>(n.positives) / total, 0.0};
        }
        case Method::Focal: {
            const double a = c.alpha.value();
            return {a, 1.0 - a, c.gamma.value()};
        }
        case Method::CBFocal: {
            const auto& n = counts_for(c, class_index);
            const double beta = c.beta.value();
            if (beta >= 1.0) throw UsageError("CBFocal requires beta < 1");
            if (n.positives == 0 || n.negatives == 0) {
                throw UsageError("CBFocal requires N+ >= 1 and N- >= 1");
            }
            const double kp = (1.0 - beta) / (1.0 - std::pow(beta, static_cast<double>(n.positives)));
            const double km = (1.0 - beta) / (1.0 - std::pow(beta, static_cast<double>(n.negatives)));
            return {kp, km, c.gamma.value()};
        }
    }
    throw UsageError("unknown loss method");
}

double pos_weight(const WeightForm& f, double p) { return f.kp * std::pow(1.0 - p, f.gamma); }
double neg_weight(const WeightForm& f, double p) { return f.km * std::pow(p, f.gamma); }

double term_loss(const WeightForm& f, double p, std::uint8_t y) {
    return y ? -pos_weight(f, p) * std::log(p) : -neg_weight(f, p) * std::log(1.0 - p);
}

// dL/dz for one term, given the raw (unclamped) sigmoid output.
double term_grad(const WeightForm& f, double raw_p, std::uint8_t y) {
    if (raw_p < kProbEpsilon || raw_p > 1.0 - kProbEpsilon) return 0.0;  // flat inside the clamp
    const double p = raw_p;
    const double q = 1.0 - p;
    if (y) {
        // (dw+/dp)(1-p) = -kp gamma (1-p)^gamma
        const double dw_q = -f.kp * f.gamma * std::pow(q, f.gamma);
        return -(dw_q * p * std::log(p) + pos_weight(f, p) * q);
    }
    // (dw-/dp) p = km gamma p^gamma
    const double dw_p = f.km * f.gamma * std::pow(p, f.gamma);
    return -(dw_p * q * std::log(q) - neg_weight(f, p) * p);
}

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char ch) { return std::tolower(ch); });
    return out;
}

}  // namespace

std::string_view to_string(Method m) {
    switch (m) {
        case Method::BCE: return "bce";
        case Method::WBCE: return "wbce";
        case Method::Focal: return "focal";
        case Method::CBFocal: return "cbfocal";
    }
    return "?";
}

Method parse_method(std::string_view s) {
    const auto v = lower(s);
    if (v == "bce") return Method::BCE;
    if (v == "wbce") return Method::WBCE;
    if (v == "focal") return Method::Focal;
    if (v == "cbfocal" || v == "cb-focal" || v == "cb_focal") return Method::CBFocal;
    throw UsageError("unknown loss '" + std::string(s) + "' (expected bce|wbce|focal|cbfocal)");
}

LossConfig LossConfig::wbce(std::vector<ClassCounts> counts) {
    LossConfig c;
    c.method = Method::WBCE;
    c.class_counts = std::move(counts);
    return c;
}

LossConfig LossConfig::focal(double alpha, double gamma) {
    LossConfig c;
    c.method = Method::Focal;
    c.alpha = alpha;
    c.gamma = gamma;
    return c;
}

LossConfig LossConfig::cb_focal(double beta, double gamma, std::vector<ClassCounts> counts) {
    LossConfig c;
    c.method = Method::CBFocal;
    c.beta = beta;
    c.gamma = gamma;
    c.class_counts = std::move(counts);
    return c;
}

void LossConfig::validate() const {
    const bool uses_alpha = method == Method::Focal;
    const bool uses_gamma = method == Method::Focal || method == Method::CBFocal;
    const bool uses_beta = method == Method::CBFocal;
    const auto name = std::string(to_string(method));
    if (alpha.has_value() != uses_alpha) {
        throw UsageError(name + (uses_alpha ? " requires alpha" : " does not take alpha"));
    }
    if (gamma.has_value() != uses_gamma) {
        throw UsageError(name + (uses_gamma ? " requires gamma" : " does not take gamma"));
    }
    if (beta.has_value() != uses_beta) {
        throw UsageError(name + (uses_beta ? " requires beta" : " does not take beta"));
    }
    if (alpha && !(*alpha > 0.0 && *alpha < 1.0)) throw UsageError("alpha must lie in (0, 1)");
    if (gamma && !(*gamma >= 0.0 && std::isfinite(*gamma))) throw UsageError("gamma must be >= 0");
    if (beta && !(*beta >= 0.0 && *beta < 1.0)) throw UsageError("beta must lie in [0, 1)");
}

Weights class_weights(const LossConfig& config, std::size_t class_index, double p) {
    if (!(p >= 0.0 && p <= 1.0)) throw UsageError("probability must lie in [0, 1]");
    config.validate();
    const auto f = weight_form(config, class_index);
    return {pos_weight(f, p), neg_weight(f, p)};
}

double sigmoid(double z) {
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

double clamp_prob(double p) { return std::clamp(p, kProbEpsilon, 1.0 - kProbEpsilon); }

SampleBatch SampleBatch::from_probs(std::size_t n, std::size_t m, std::vector<double> p, std::vector<std::uint8_t> y) {
    if (p.size() != n * m || y.size() != n * m) throw UsageError("batch shape mismatch");
    for (double v : p) {
        if (!(v >= 0.0 && v <= 1.0)) throw UsageError("probabilities must lie in [0, 1]");
    }
    for (auto& v : p) v = clamp_prob(v);
    return {n, m, std::move(p), std::move(y)};
}

SampleBatch SampleBatch::from_logits(std::size_t n, std::size_t m, std::span<const double> z, std::vector<std::uint8_t> y) {
    if (z.size() != n * m || y.size() != n * m) throw UsageError("batch shape mismatch");
    std::vector<double> p(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) {
        if (!std::isfinite(z[i])) throw UsageError("logits must be finite");
        p[i] = clamp_prob(sigmoid(z[i]));
    }
    return {n, m, std::move(p), std::move(y)};
}

std::vector<double> loss_per_class(const SampleBatch& batch, const LossConfig& config, Reduction reduction) {
    if (batch.samples == 0 || batch.classes == 0) throw UsageError("empty batch");
    if (batch.probs.size() != batch.samples * batch.classes || batch.labels.size() != batch.probs.size()) {
        throw UsageError("batch shape mismatch");
    }
    config.validate();
    std::vector<double> out(batch.classes, 0.0);
    for (std::size_t m = 0; m < batch.classes; ++m) {
        const auto f = weight_form(config, m);
        double sum = 0;
        for (std::size_t i = 0; i < batch.samples; ++i) {
            const std::size_t k = i * batch.classes + m;
            sum += term_loss(f, clamp_prob(batch.probs[k]), batch.labels[k]);
        }
        out[m] = reduction == Reduction::Mean ? sum / static_cast<double>(batch.samples) : sum;
    }
    return out;
}

double loss_value(const SampleBatch& batch, const LossConfig& config, Reduction reduction) {
    double total = 0;
    for (double v : loss_per_class(batch, config, reduction)) total += v;
    return total;
}

std::vector<double> loss_grad_logits(std::span<const double> logits, std::span<const std::uint8_t> labels,
                                     std::size_t classes, const LossConfig& config, Reduction reduction) {
    if (classes == 0 || logits.size() != labels.size() || logits.size() % classes != 0) {
        throw UsageError("logits/labels shape mismatch");
    }
    config.validate();
    const std::size_t samples = logits.size() / classes;
    const double scale = reduction == Reduction::Mean && samples > 0 ? 1.0 / static_cast<double>(samples) : 1.0;
    std::vector<double> grad(logits.size());
    for (std::size_t m = 0; m < classes; ++m) {
        const auto f = weight_form(config, m);
        for (std::size_t i = 0; i < samples; ++i) {
            const std::size_t k = i * classes + m;
            if (!std::isfinite(logits[k])) throw UsageError("logits must be finite");
            grad[k] = scale * term_grad(f, sigmoid(logits[k]), labels[k]);
        }
    }
    return grad;
}

double single_loss(double z, std::uint8_t y, const LossConfig& config, std::size_t class_index) {
    return term_loss(weight_form(config, class_index), clamp_prob(sigmoid(z)), y);
}

double single_grad(double z, std::uint8_t y, const LossConfig& config, std::size_t class_index) {
    return term_grad(weight_form(config, class_index), sigmoid(z), y);
}

GradCheck validate_grad(const LossConfig& config, std::size_t trials, std::uint64_t seed) {
    if (trials == 0) throw UsageError("validate_grad needs trials >= 1");
    config.validate();
    Rng rng(seed);
    GradCheck result;
    for (std::size_t t = 0; t < trials; ++t) {
        const double z = rng.uniform(-6.0, 6.0);
        const std::uint8_t y = rng.coin() ? 1 : 0;
        const double analytic = single_grad(z, y, config);
        const double numeric = (single_loss(z + kFiniteDiffStep, y, config) - single_loss(z - kFiniteDiffStep, y, config)) /
                               (2.0 * kFiniteDiffStep);
        const double scale = std::max(std::abs(analytic), std::abs(numeric));
        const double rel = scale > 0 ? std::abs(analytic - numeric) / scale : 0.0;
        if (rel > result.max_relative_error || std::isnan(rel)) {
            result.max_relative_error = std::isnan(rel) ? INFINITY : rel;
            result.worst_logit = z;
            result.worst_label = y;
        }
    }
    return result;
}

}  // namespace imba::losses
