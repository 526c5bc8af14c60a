// imba-lens: CAM alignment, dissection, metrics and loss reports over
// exported model internals.
//
// Exit codes: 0 success, 1 usage/config error, 2 data error, 3 selftest failure.

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "imba_lens/commands.hpp"
#include "imba_lens/errors.hpp"
#include "json.hpp"

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitSelftest = 3;

struct Flags {
    std::optional<std::string> config, manifest, annotations, head, out;
    std::optional<std::string> loss, reduction, box_scaling, cam_order, format, fault;
    std::optional<double> alpha, gamma, beta, q;
    std::optional<int> connectivity;
    std::optional<std::size_t> threads, trials;
    std::optional<std::uint64_t> seed;
    bool pgm = false;
};

imba::cli::RunConfig resolve(const Flags& f) {
    using imba::cli::RunConfig;
    RunConfig c;
    if (const char* env = std::getenv("IMBA_LENS_THREADS"); env && *env) {
        try {
            const long n = std::stol(env);
            if (n < 1) throw std::invalid_argument("");
            c.threads = static_cast<std::size_t>(n);
        } catch (const std::exception&) {
            throw imba::UsageError("IMBA_LENS_THREADS must be a positive integer");
        }
    }
    if (f.config) c = imba::cli::load_run_config(*f.config, c);

    // Flags win over both.
    nlohmann::json overrides = nlohmann::json::object();
    const auto set = [&](const char* key, const auto& opt) {
        if (opt) overrides[key] = *opt;
    };
    set("manifest", f.manifest);
    set("annotations", f.annotations);
    set("head", f.head);
    set("out", f.out);
    set("loss", f.loss);
    set("reduction", f.reduction);
    set("box_scaling", f.box_scaling);
    set("cam_order", f.cam_order);
    set("format", f.format);
    set("alpha", f.alpha);
    set("gamma", f.gamma);
    set("beta", f.beta);
    set("q", f.q);
    set("connectivity", f.connectivity);
    set("threads", f.threads);
    set("trials", f.trials);
    set("seed", f.seed);
    if (f.pgm) overrides["pgm"] = true;
    c = imba::cli::merge_run_config(c, overrides.dump());

    if (f.fault) {
        if (*f.fault != "threshold") throw imba::UsageError("--inject-fault accepts only 'threshold'");
        c.fault = imba::selftest::Fault::CorruptThreshold;
    }
    return c;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Post-hoc analysis of cost-sensitive classifiers: CAM alignment, concept dissection, metrics"};
    app.require_subcommand(1);
    app.fallthrough();

    Flags f;
    app.add_option("--config", f.config, "JSON config file (flags override it)");
    app.add_option("--manifest", f.manifest, "Dataset manifest JSON");
    app.add_option("--annotations", f.annotations, "Bounding-box CSV (image_id,label,x,y,w,h)");
    app.add_option("--head", f.head, "Head weights tensor (classes x channels)");
    app.add_option("--out", f.out, "Output directory (reports go to stdout when omitted)");
    app.add_option("--q", f.q, "Top-activation quantile for dissection thresholds");
    app.add_option("--connectivity", f.connectivity, "Component adjacency, 4 or 8");
    app.add_option("--threads", f.threads, "Worker threads (default: $IMBA_LENS_THREADS or 1)");
    app.add_option("--seed", f.seed, "Seed for selftest draws");
    app.add_option("--format", f.format, "Report format, json or csv");
    app.add_option("--loss", f.loss, "bce | wbce | focal | cbfocal");
    app.add_option("--alpha", f.alpha, "Focal alpha (default 0.25)");
    app.add_option("--gamma", f.gamma, "Focal / CB-Focal gamma (default 2.0)");
    app.add_option("--beta", f.beta, "CB-Focal beta (default 0.9999)");
    app.add_option("--reduction", f.reduction, "Loss reduction over samples, sum or mean");
    app.add_option("--box-scaling", f.box_scaling, "footprint | nearest-pixel");
    app.add_option("--cam-order", f.cam_order, "normalize-first | upsample-first");
    app.add_flag("--pgm", f.pgm, "Also write 8-bit PGM renderings of heatmaps");
    app.add_option("--trials", f.trials, "Random trials per selftest suite");
    app.add_option("--inject-fault", f.fault)->group("");  // hidden: exercises the selftest failure path

    auto* cam = app.add_subcommand("cam", "Write normalised CAM heatmaps for annotated (image, class) pairs");
    auto* align = app.add_subcommand("align", "Soft IoBB / IoR of CAMs against annotation boxes");
    auto* dissect = app.add_subcommand("dissect", "Count box-overlapping thresholded activation components");
    auto* metrics = app.add_subcommand("metrics", "AUROC, AP and mean positive probability per class");
    auto* loss = app.add_subcommand("loss-report", "Per-class loss weights and values over the manifest logits");
    auto* selftest = app.add_subcommand("selftest", "Run the randomized oracle suites");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitUsage;
    }

    try {
        const auto c = resolve(f);
        if (cam->parsed()) {
            const auto index = imba::cli::run_cam(c);
            std::cout << index;
        } else if (align->parsed()) {
            imba::cli::emit(c, "alignment", imba::cli::run_align(c));
        } else if (dissect->parsed()) {
            imba::cli::emit(c, "concepts", imba::cli::run_dissect(c));
        } else if (metrics->parsed()) {
            imba::cli::emit(c, "metrics", imba::cli::run_metrics(c));
        } else if (loss->parsed()) {
            imba::cli::emit(c, "loss_report", imba::cli::run_loss_report(c));
        } else if (selftest->parsed()) {
            const auto outcome = imba::cli::run_selftest(c);
            std::cout << outcome.text;
            return outcome.passed ? 0 : kExitSelftest;
        }
    } catch (const imba::UsageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const imba::DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return kExitData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitData;
    }
    return 0;
}
