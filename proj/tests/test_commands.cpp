#include <fstream>
#include <sstream>

#include "doctest.h"
#include "fixture_data.hpp"
#include "imba_lens/commands.hpp"
#include "imba_lens/errors.hpp"
#include "json.hpp"
#include "test_helpers.hpp"

using namespace imba;
using namespace imba::cli;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

RunConfig fixture_config(const testing::FixturePaths& paths) {
    RunConfig c;
    c.manifest = paths.manifest;
    c.annotations = paths.annotations;
    return c;
}

}  // namespace

TEST_CASE("config merging") {
    SUBCASE("known keys are applied") {
        const auto c = merge_run_config({}, R"({"q": 0.05, "connectivity": 4, "loss": "focal", "gamma": 1.5,
            "reduction": "mean", "box_scaling": "nearest-pixel", "cam_order": "upsample-first",
            "format": "csv", "threads": 3, "pgm": true})");
        CHECK(c.q == 0.05);
        CHECK(c.connectivity == 4);
        CHECK(c.loss == "focal");
        CHECK(*c.gamma == 1.5);
        CHECK(c.reduction == losses::Reduction::Mean);
        CHECK(c.box_scaling == dissection::BoxScaling::NearestPixel);
        CHECK(c.cam_order == cam::Order::UpsampleThenNormalize);
        CHECK(c.format == Format::Csv);
        CHECK(c.threads == 3);
        CHECK(c.pgm);
    }
    SUBCASE("bad input is a usage error") {
        CHECK_THROWS_AS(merge_run_config({}, R"({"quantile": 0.1})"), UsageError);
        CHECK_THROWS_AS(merge_run_config({}, R"({"q": "high"})"), UsageError);
        CHECK_THROWS_AS(merge_run_config({}, R"({"format": "xml"})"), UsageError);
        CHECK_THROWS_AS(merge_run_config({}, "[1, 2]"), UsageError);
        CHECK_THROWS_AS(merge_run_config({}, "{"), UsageError);
    }
    SUBCASE("file paths resolve against the file's directory") {
        testing::TempDir dir;
        fs::create_directories(dir / "conf");
        std::ofstream(dir / "conf" / "run.json") << R"({"manifest": "data/manifest.json", "threads": 2})";
        RunConfig base;
        base.threads = 5;
        const auto c = load_run_config(dir / "conf" / "run.json", base);
        CHECK(*c.manifest == dir / "conf" / "data" / "manifest.json");
        CHECK(c.threads == 2);
        CHECK_THROWS_AS(load_run_config(dir / "missing.json"), UsageError);
    }
}

TEST_CASE("validation") {
    RunConfig c;
    c.q = 1.5;
    CHECK_THROWS_AS(validate(c), UsageError);
    c = {};
    c.connectivity = 6;
    CHECK_THROWS_AS(validate(c), UsageError);
    c = {};
    c.threads = 0;
    CHECK_THROWS_AS(validate(c), UsageError);
    c = {};
    c.manifest = "/definitely/not/here.json";
    CHECK_THROWS_AS(validate(c), UsageError);
    c = {};
    CHECK_THROWS_AS(run_metrics(c), UsageError);  // no manifest
}

TEST_CASE("loss configuration from the command line") {
    RunConfig c;
    c.loss = "focal";
    auto l = make_loss_config(c, {});
    CHECK(*l.alpha == 0.25);
    CHECK(*l.gamma == 2.0);
    c.loss = "cbfocal";
    l = make_loss_config(c, {{1, 2}});
    CHECK(*l.beta == 0.9999);
    c.alpha = 0.5;
    CHECK_THROWS_AS(make_loss_config(c, {{1, 2}}), UsageError);
    c = {};
    c.gamma = 2;
    CHECK_THROWS_AS(make_loss_config(c, {}), UsageError);
}

TEST_CASE("report commands on the handcrafted dataset") {
    testing::TempDir dir;
    const auto paths = testing::write_handcrafted_fixture(dir / "data");
    auto c = fixture_config(paths);
    c.q = 0.25;

    const auto align = nlohmann::json::parse(run_align(c));
    CHECK(align["overall"]["mean_iobb"].get<double>() == doctest::Approx(0.464229302832244).epsilon(1e-12));

    const auto concepts = nlohmann::json::parse(run_dissect(c));
    CHECK(concepts["disjoint"] == 2.5);
    CHECK(concepts["unique"] == 2.0);

    const auto metrics = nlohmann::json::parse(run_metrics(c));
    CHECK(metrics["rows"].size() == 2);
    CHECK(metrics["rows"][0]["auroc"] == 1.0);
    CHECK(metrics["rows"][1]["auroc"].is_null());  // Nodule is positive on every image

    c.loss = "wbce";
    const auto loss = nlohmann::json::parse(run_loss_report(c));
    CHECK(loss["method"] == "wbce");
    CHECK(loss["per_class"][0]["N_plus"] == 1);
    CHECK(loss["per_class"][0]["w_plus"] == 0.5);
    // Nodule has no negatives: class-balanced weighting is undefined.
    c.loss = "cbfocal";
    CHECK_THROWS_AS(run_loss_report(c), DataError);
}

TEST_CASE("cam writes one heatmap per annotated pair") {
    testing::TempDir dir;
    const auto paths = testing::write_handcrafted_fixture(dir / "data");
    auto c = fixture_config(paths);
    c.out = dir / "out";
    c.pgm = true;
    const auto index = nlohmann::json::parse(run_cam(c));
    REQUIRE(index["heatmaps"].size() == 3);
    std::size_t fmaps = 0, pgms = 0;
    for (const auto& e : fs::directory_iterator(dir / "out" / "cam")) {
        fmaps += e.path().extension() == ".fmap";
        pgms += e.path().extension() == ".pgm";
    }
    CHECK(fmaps == 3);
    CHECK(pgms == 3);
    const auto t = io::read_tensor(dir / "out" / "cam" / "img_a__Atelectasis.fmap");
    CHECK(t.dims == std::vector<std::size_t>{8, 8});

    const auto first = slurp(dir / "out" / "cam_index.json");
    const auto first_map = slurp(dir / "out" / "cam" / "img_b__Nodule.fmap");
    c.threads = 4;
    run_cam(c);
    CHECK(slurp(dir / "out" / "cam_index.json") == first);
    CHECK(slurp(dir / "out" / "cam" / "img_b__Nodule.fmap") == first_map);

    c.out.reset();
    CHECK_THROWS_AS(run_cam(c), UsageError);
}

TEST_CASE("reruns are byte-identical") {
    testing::TempDir dir;
    const auto paths = testing::write_synthetic_fixture(dir / "data");
    auto c = fixture_config(paths);
    c.q = 0.05;
    for (auto fmt : {Format::Json, Format::Csv}) {
        c.format = fmt;
        c.threads = 1;
        const auto a = run_align(c), d = run_dissect(c), m = run_metrics(c);
        c.threads = 4;
        CHECK(run_align(c) == a);
        CHECK(run_dissect(c) == d);
        CHECK(run_metrics(c) == m);
    }
}

TEST_CASE("emit writes under --out") {
    testing::TempDir dir;
    RunConfig c;
    c.out = dir / "reports";
    emit(c, "metrics", "{}\n");
    CHECK(slurp(dir / "reports" / "metrics.json") == "{}\n");
    c.format = Format::Csv;
    emit(c, "metrics", "a,b\n");
    CHECK(slurp(dir / "reports" / "metrics.csv") == "a,b\n");
}

TEST_CASE("identifier sanitising") {
    CHECK(sanitize("img 01/a.png") == "img_01_a.png");
    CHECK(sanitize("") == "_");
    CHECK(sanitize("Pleural_Thickening") == "Pleural_Thickening");
}

TEST_CASE("selftest outcome") {
    RunConfig c;
    c.trials = 20;
    const auto ok = run_selftest(c);
    CHECK(ok.passed);
    CHECK(ok.text.find("FAIL") == std::string::npos);
    c.fault = selftest::Fault::CorruptThreshold;
    const auto bad = run_selftest(c);
    CHECK_FALSE(bad.passed);
    CHECK(bad.text.find("FAIL quantile-calibration") != std::string::npos);
    c.trials = 0;
    CHECK_THROWS_AS(run_selftest(c), UsageError);
}
