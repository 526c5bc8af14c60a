#pragma once

// Subcommand implementations behind the imba-lens binary. Each returns the
// report text it produced so callers (and tests) can compare runs byte for
// byte; emit() handles writing it to --out or stdout.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "imba_lens/cam.hpp"
#include "imba_lens/dissection.hpp"
#include "imba_lens/losses.hpp"
#include "imba_lens/selftest.hpp"

namespace imba::cli {

enum class Format { Json, Csv };

struct RunConfig {
    std::optional<std::filesystem::path> manifest;
    std::optional<std::filesystem::path> annotations;
    std::optional<std::filesystem::path> head;
    std::optional<std::filesystem::path> out;

    std::string loss = "bce";
    std::optional<double> alpha;
    std::optional<double> gamma;
    std::optional<double> beta;
    losses::Reduction reduction = losses::Reduction::Sum;

    double q = 0.01;
    int connectivity = 8;
    dissection::BoxScaling box_scaling = dissection::BoxScaling::CellFootprint;

    cam::Order cam_order = cam::Order::NormalizeThenUpsample;
    bool pgm = false;

    std::size_t threads = 1;
    std::uint64_t seed = 20220901;
    std::size_t trials = 1000;
    Format format = Format::Json;
    selftest::Fault fault = selftest::Fault::None;
};

/// Reads a JSON config file on top of `base`. Keys mirror the long flag names
/// (manifest, annotations, head, out, loss, alpha, gamma, beta, reduction, q,
/// connectivity, box_scaling, cam_order, pgm, threads, seed, trials, format).
/// Relative paths in the file resolve against the file's directory.
RunConfig load_run_config(const std::filesystem::path& path, RunConfig base = {});

/// Applies `text` (JSON object) on top of `base`; unknown keys are rejected.
RunConfig merge_run_config(RunConfig base, const std::string& text);

/// Range checks plus existence of every referenced input path.
void validate(const RunConfig& c);

losses::LossConfig make_loss_config(const RunConfig& c, std::vector<losses::ClassCounts> counts);

std::string run_align(const RunConfig& c);
std::string run_dissect(const RunConfig& c);
std::string run_metrics(const RunConfig& c);
std::string run_loss_report(const RunConfig& c);

/// Writes one heatmap per (annotated image, annotated class) under
/// <out>/cam/ and returns the index JSON (also written to <out>/cam_index.json).
std::string run_cam(const RunConfig& c);

struct SelftestOutcome {
    std::string text;
    bool passed = false;
};
SelftestOutcome run_selftest(const RunConfig& c);

/// Writes `text` to <out>/<stem>.<json|csv> when --out is set, else stdout.
void emit(const RunConfig& c, const std::string& stem, const std::string& text);

/// Filesystem-safe rendering of an identifier.
std::string sanitize(std::string_view id);

}  // namespace imba::cli
