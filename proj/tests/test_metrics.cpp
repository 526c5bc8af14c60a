#include <cmath>

#include "doctest.h"
#include "fixture_data.hpp"
#include "imba_lens/errors.hpp"
#include "imba_lens/metrics.hpp"
#include "imba_lens/oracles.hpp"
#include "imba_lens/rng.hpp"
#include "json.hpp"
#include "test_helpers.hpp"

using namespace imba;
using namespace imba::metrics;

namespace {

ScoredSamples samples(std::vector<double> scores, std::vector<std::uint8_t> labels,
                      ScoreKind kind = ScoreKind::Probability) {
    return {"c", std::move(scores), std::move(labels), kind};
}

}  // namespace

TEST_CASE("AUROC examples") {
    CHECK(auroc(samples({0.1, 0.2, 0.8, 0.9}, {0, 0, 1, 1})) == 1.0);
    CHECK(auroc(samples({0.9, 0.8, 0.2, 0.1}, {0, 0, 1, 1})) == 0.0);
    CHECK(auroc(samples({0.5, 0.5, 0.5, 0.5}, {0, 1, 0, 1})) == 0.5);
    CHECK(auroc(samples({0.1, 0.4, 0.35, 0.8}, {0, 0, 1, 1})) == 0.75);
    CHECK_THROWS_AS(auroc(samples({0.1, 0.2}, {1, 1})), DataError);
    CHECK_THROWS_AS(auroc(samples({0.1, 0.2}, {0, 0})), DataError);
}

TEST_CASE("AP examples") {
    CHECK(average_precision(samples({0.9, 0.8, 0.2, 0.1}, {1, 1, 0, 0})) == 1.0);
    CHECK(average_precision(samples({0.9, 0.8, 0.2, 0.1}, {0, 1, 0, 0})) == 0.5);
    // Ranks 1 and 3: (1/1 + 2/3) / 2.
    CHECK(average_precision(samples({0.9, 0.8, 0.7}, {1, 0, 1})) == doctest::Approx(5.0 / 6.0).epsilon(1e-15));
    // Tied pair: the negative is ranked first.
    CHECK(average_precision(samples({0.5, 0.5}, {1, 0})) == 0.5);
    CHECK_THROWS_AS(average_precision(samples({0.1, 0.2}, {0, 0})), DataError);
}

TEST_CASE("mean predicted probability") {
    CHECK(mean_predicted_prob(samples({0.2, 0.6, 0.9}, {0, 1, 1})) == doctest::Approx(0.75).epsilon(1e-15));
    CHECK(mean_predicted_prob(samples({0.0, 5.0}, {1, 0}, ScoreKind::Logit)) == 0.5);
    CHECK_THROWS_AS(mean_predicted_prob(samples({0.3}, {0})), DataError);
}

TEST_CASE("metrics agree with the naive oracles") {
    Rng rng(401);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 2 + rng.below(150);
        const bool quantised = trial % 3 == 0;
        std::vector<double> scores(n);
        std::vector<std::uint8_t> labels(n);
        for (std::size_t i = 0; i < n; ++i) {
            scores[i] = quantised ? static_cast<double>(rng.below(5)) / 4.0 : rng.uniform();
            labels[i] = rng.coin(0.3) ? 1 : 0;
        }
        labels[0] = 1;
        labels[1] = 0;
        const auto s = samples(scores, labels);
        CHECK(std::abs(auroc(s) - oracle::pairwise_auroc(scores, labels)) <= 1e-12);
        CHECK(std::abs(average_precision(s) - oracle::prefix_average_precision(scores, labels)) <= 1e-12);
    }
}

TEST_CASE("AUROC is invariant to monotone transforms") {
    Rng rng(403);
    std::vector<double> z(60);
    std::vector<std::uint8_t> y(60);
    for (std::size_t i = 0; i < z.size(); ++i) {
        z[i] = rng.uniform(-4, 4);
        y[i] = i % 3 == 0;
    }
    std::vector<double> p(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) p[i] = 1.0 / (1.0 + std::exp(-z[i]));
    CHECK(auroc(samples(z, y, ScoreKind::Logit)) == auroc(samples(p, y)));
    CHECK(average_precision(samples(z, y, ScoreKind::Logit)) == average_precision(samples(p, y)));
}

TEST_CASE("evaluate leaves undefined metrics empty") {
    const auto all_pos = evaluate(samples({0.2, 0.7}, {1, 1}));
    CHECK_FALSE(all_pos.auroc);
    CHECK(all_pos.ap);
    const auto all_neg = evaluate(samples({0.2, 0.7}, {0, 0}));
    CHECK_FALSE(all_neg.ap);
    CHECK_FALSE(all_neg.mean_prob);
    CHECK(all_neg.n_neg == 2);
    CHECK_THROWS_AS(evaluate(samples({0.2}, {0, 1})), DataError);
    CHECK_THROWS_AS(evaluate(samples({NAN, 0.5}, {0, 1})), DataError);
}

TEST_CASE("manifest evaluation and reports") {
    testing::TempDir dir;
    const auto paths = testing::write_synthetic_fixture(dir.path());
    const auto manifest = io::load_manifest(paths.manifest);
    const auto r = evaluate_manifest(manifest);
    REQUIRE(r.rows.size() == 3);
    REQUIRE(r.average);
    double sum = 0;
    for (const auto& row : r.rows) {
        REQUIRE(row.auroc);
        sum += *row.auroc;
    }
    CHECK(*r.average->auroc == doctest::Approx(sum / 3).epsilon(1e-15));
    CHECK(r.average->class_name == "Average");
    CHECK(to_json(evaluate_manifest(manifest, 4)) == to_json(r));

    const auto j = nlohmann::json::parse(to_json(r));
    CHECK(j["rows"].size() == 3);
    CHECK(j["rows"][0]["class"] == "Cardiomegaly");
    const auto csv = to_csv(r);
    CHECK(csv.rfind("class,auroc,ap,mean_prob,n_pos,n_neg\n", 0) == 0);
    CHECK(csv.find("\nAverage,") != std::string::npos);

    testing::TempDir single;
    testing::SyntheticSpec spec;
    spec.classes = {"Hernia"};
    const auto one = evaluate_manifest(io::load_manifest(testing::write_synthetic_fixture(single.path(), spec).manifest));
    CHECK_FALSE(one.average);
    CHECK(nlohmann::json::parse(to_json(one))["average"].is_null());
}
