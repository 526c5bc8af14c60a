#include "imba_lens/commands.hpp"

#include <fstream>
#include <iostream>
#include <sstream>

#include "imba_lens/alignment.hpp"
#include "imba_lens/errors.hpp"
#include "imba_lens/metrics.hpp"
#include "imba_lens/parallel.hpp"
#include "imba_lens/tensor_io.hpp"
#include "json.hpp"

namespace imba::cli {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

fs::path require(const std::optional<fs::path>& p, const char* flag) {
    if (!p) throw UsageError(std::string("missing required --") + flag);
    return *p;
}

io::Manifest manifest_for(const RunConfig& c) {
    io::Manifest m = io::load_manifest(require(c.manifest, "manifest"));
    if (c.head) {
        m.head = *c.head;
        m.head_bias.reset();
    }
    return m;
}

dissection::DissectionConfig dissection_config(const RunConfig& c) {
    dissection::DissectionConfig d;
    d.q = c.q;
    d.connectivity = dissection::parse_connectivity(c.connectivity);
    d.scaling = c.box_scaling;
    d.threads = c.threads;
    d.validate();
    return d;
}

void write_bytes(const fs::path& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("write failed for '" + path.string() + "'");
}

template <typename T>
T get_as(const json& v, const std::string& key) {
    try {
        return v.get<T>();
    } catch (const json::exception&) {
        throw UsageError("config key '" + key + "' has the wrong type");
    }
}

}  // namespace

RunConfig merge_run_config(RunConfig c, const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw UsageError(std::string("config: invalid JSON: ") + e.what());
    }
    if (!j.is_object()) throw UsageError("config must be a JSON object");
    for (const auto& [key, v] : j.items()) {
        const auto str = [&] { return get_as<std::string>(v, key); };
        if (key == "manifest") c.manifest = str();
        else if (key == "annotations") c.annotations = str();
        else if (key == "head") c.head = str();
        else if (key == "out") c.out = str();
        else if (key == "loss") c.loss = str();
        else if (key == "alpha") c.alpha = get_as<double>(v, key);
        else if (key == "gamma") c.gamma = get_as<double>(v, key);
        else if (key == "beta") c.beta = get_as<double>(v, key);
        else if (key == "reduction") {
            const auto r = str();
            if (r != "sum" && r != "mean") throw UsageError("reduction must be sum or mean");
            c.reduction = r == "sum" ? losses::Reduction::Sum : losses::Reduction::Mean;
        } else if (key == "q") c.q = get_as<double>(v, key);
        else if (key == "connectivity") c.connectivity = get_as<int>(v, key);
        else if (key == "box_scaling") {
            const auto s = str();
            if (s == "footprint") c.box_scaling = dissection::BoxScaling::CellFootprint;
            else if (s == "nearest-pixel") c.box_scaling = dissection::BoxScaling::NearestPixel;
            else throw UsageError("box_scaling must be footprint or nearest-pixel");
        } else if (key == "cam_order") {
            const auto s = str();
            if (s == "normalize-first") c.cam_order = cam::Order::NormalizeThenUpsample;
            else if (s == "upsample-first") c.cam_order = cam::Order::UpsampleThenNormalize;
            else throw UsageError("cam_order must be normalize-first or upsample-first");
        } else if (key == "pgm") c.pgm = get_as<bool>(v, key);
        else if (key == "threads") c.threads = get_as<std::size_t>(v, key);
        else if (key == "seed") c.seed = get_as<std::uint64_t>(v, key);
        else if (key == "trials") c.trials = get_as<std::size_t>(v, key);
        else if (key == "format") {
            const auto s = str();
            if (s != "json" && s != "csv") throw UsageError("format must be json or csv");
            c.format = s == "json" ? Format::Json : Format::Csv;
        } else {
            throw UsageError("unknown config key '" + key + "'");
        }
    }
    return c;
}

RunConfig load_run_config(const fs::path& path, RunConfig base) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open config '" + path.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    // Relative paths in the file resolve against the file's directory.
    const RunConfig before = base;
    RunConfig c = merge_run_config(std::move(base), ss.str());
    const auto dir = path.parent_path();
    const std::pair<std::optional<fs::path>*, const std::optional<fs::path>*> paths[] = {
        {&c.manifest, &before.manifest}, {&c.annotations, &before.annotations},
        {&c.head, &before.head}, {&c.out, &before.out}};
    for (auto [now, was] : paths) {
        if (*now && *now != *was && (*now)->is_relative()) *now = dir / **now;
    }
    return c;
}

void validate(const RunConfig& c) {
    if (!(c.q > 0.0 && c.q < 1.0)) throw UsageError("--q must lie in (0, 1)");
    if (c.threads < 1) throw UsageError("--threads must be >= 1");
    (void)dissection::parse_connectivity(c.connectivity);
    (void)losses::parse_method(c.loss);
    for (const auto* p : {&c.manifest, &c.annotations, &c.head}) {
        if (*p && !fs::exists(**p)) throw UsageError("path does not exist: " + (*p)->string());
    }
}

losses::LossConfig make_loss_config(const RunConfig& c, std::vector<losses::ClassCounts> counts) {
    losses::LossConfig l;
    l.method = losses::parse_method(c.loss);
    l.class_counts = std::move(counts);
    switch (l.method) {
        case losses::Method::BCE:
        case losses::Method::WBCE:
            if (c.alpha || c.gamma || c.beta) {
                throw UsageError(std::string(losses::to_string(l.method)) + " takes no hyper-parameters");
            }
            break;
        case losses::Method::Focal:
            if (c.beta) throw UsageError("focal does not take beta");
            l.alpha = c.alpha.value_or(0.25);
            l.gamma = c.gamma.value_or(2.0);
            break;
        case losses::Method::CBFocal:
            if (c.alpha) throw UsageError("cbfocal does not take alpha");
            l.beta = c.beta.value_or(0.9999);
            l.gamma = c.gamma.value_or(2.0);
            break;
    }
    l.validate();
    return l;
}

std::string run_align(const RunConfig& c) {
    validate(c);
    const auto m = manifest_for(c);
    const auto ann = io::load_annotations(require(c.annotations, "annotations"), m);
    const auto head = cam::load_head(m);
    const auto report = alignment::aggregate_alignment(m, ann, head, {c.cam_order, c.threads});
    return c.format == Format::Json ? alignment::to_json(report) : alignment::to_csv(report);
}

std::string run_dissect(const RunConfig& c) {
    validate(c);
    const auto cfg = dissection_config(c);
    const auto m = io::load_manifest(require(c.manifest, "manifest"));
    const auto ann = io::load_annotations(require(c.annotations, "annotations"), m);
    const auto thresholds = dissection::channel_thresholds(m, cfg);
    const auto report = dissection::concept_report(m, ann, thresholds, cfg);
    return c.format == Format::Json ? dissection::to_json(report) : dissection::to_csv(report);
}

std::string run_metrics(const RunConfig& c) {
    validate(c);
    const auto m = io::load_manifest(require(c.manifest, "manifest"));
    const auto report = metrics::evaluate_manifest(m, c.threads);
    return c.format == Format::Json ? metrics::to_json(report) : metrics::to_csv(report);
}

std::string run_loss_report(const RunConfig& c) {
    validate(c);
    const auto m = io::load_manifest(require(c.manifest, "manifest"));
    const std::size_t M = m.num_classes();
    const std::size_t N = m.entries.size();
    if (N == 0) throw DataError("manifest has no entries");

    std::vector<losses::ClassCounts> counts(M);
    std::vector<double> logits;
    std::vector<std::uint8_t> labels;
    logits.reserve(N * M);
    labels.reserve(N * M);
    for (const auto& e : m.entries) {
        const auto z = io::load_logits(m, e);
        for (std::size_t k = 0; k < M; ++k) {
            logits.push_back(static_cast<double>(z[k]));
            labels.push_back(e.labels[k]);
            (e.labels[k] ? counts[k].positives : counts[k].negatives) += 1;
        }
    }
    const auto config = make_loss_config(c, counts);

    std::vector<double> per_class;
    std::vector<losses::Weights> weights(M);
    try {
        per_class = losses::loss_per_class(losses::SampleBatch::from_logits(N, M, logits, labels), config, c.reduction);
        for (std::size_t k = 0; k < M; ++k) weights[k] = losses::class_weights(config, k, 0.5);
    } catch (const UsageError& e) {
        throw DataError(std::string("loss report: ") + e.what());
    }

    if (c.format == Format::Csv) {
        std::ostringstream out;
        out.precision(17);
        out << "class,N_plus,N_minus,w_plus,w_minus,loss_value\n";
        for (std::size_t k = 0; k < M; ++k) {
            out << m.class_names[k] << ',' << counts[k].positives << ',' << counts[k].negatives << ','
                << weights[k].w_plus << ',' << weights[k].w_minus << ',' << per_class[k] << '\n';
        }
        return out.str();
    }
    ordered_json j;
    j["method"] = losses::to_string(config.method);
    ordered_json hp = ordered_json::object();
    if (config.alpha) hp["alpha"] = *config.alpha;
    if (config.gamma) hp["gamma"] = *config.gamma;
    if (config.beta) hp["beta"] = *config.beta;
    j["hyper_params"] = hp;
    j["reduction"] = c.reduction == losses::Reduction::Sum ? "sum" : "mean";
    j["per_class"] = ordered_json::array();
    for (std::size_t k = 0; k < M; ++k) {
        j["per_class"].push_back({{"class", m.class_names[k]},
                                  {"N_plus", counts[k].positives},
                                  {"N_minus", counts[k].negatives},
                                  {"w_plus", weights[k].w_plus},
                                  {"w_minus", weights[k].w_minus},
                                  {"loss_value", per_class[k]}});
    }
    return j.dump(2) + "\n";
}

std::string sanitize(std::string_view id) {
    std::string out;
    for (char ch : id) {
        const bool ok = (ch >= 'a' && ch <= 'z') || (ch >= 'A' && ch <= 'Z') || (ch >= '0' && ch <= '9') ||
                        ch == '-' || ch == '_' || ch == '.';
        out.push_back(ok ? ch : '_');
    }
    return out.empty() ? "_" : out;
}

std::string run_cam(const RunConfig& c) {
    validate(c);
    const auto out_dir = require(c.out, "out");
    const auto m = manifest_for(c);
    const auto ann = io::load_annotations(require(c.annotations, "annotations"), m);
    if (ann.empty()) throw DataError("annotation file lists no boxes for manifest images");
    const auto head = cam::load_head(m);
    fs::create_directories(out_dir / "cam");

    struct Item {
        std::string image_id;
        std::string class_name;
        std::string tensor;
        std::string pgm;
    };
    std::vector<const io::ManifestEntry*> images;
    for (const auto& e : m.entries) {
        if (const auto* b = ann.find(e.image_id); b && !b->empty()) images.push_back(&e);
    }
    if (images.empty()) throw DataError("no annotated images in the manifest");

    std::vector<std::vector<Item>> items(images.size());
    parallel_for(images.size(), c.threads, [&](std::size_t i) {
        const auto& e = *images[i];
        std::vector<bool> wanted(m.num_classes(), false);
        for (const auto& b : *ann.find(e.image_id)) wanted[*m.class_index(b.label)] = true;
        const auto features = io::load_features(m, e);
        for (std::size_t cls = 0; cls < wanted.size(); ++cls) {
            if (!wanted[cls]) continue;
            const auto heat = cam::image_heatmap(features, head, cls, m.image_height, m.image_width, c.cam_order);
            const std::string stem = sanitize(e.image_id) + "__" + sanitize(m.class_names[cls]);
            Item item{e.image_id, m.class_names[cls], "cam/" + stem + ".fmap", ""};
            io::write_tensor(cam::to_tensor(heat), out_dir / item.tensor);
            if (c.pgm) {
                item.pgm = "cam/" + stem + ".pgm";
                const auto bytes = cam::render_pgm(heat);
                write_bytes(out_dir / item.pgm, std::string(bytes.begin(), bytes.end()));
            }
            items[i].push_back(std::move(item));
        }
    });

    ordered_json j;
    j["order"] = c.cam_order == cam::Order::NormalizeThenUpsample ? "normalize-first" : "upsample-first";
    j["height"] = m.image_height;
    j["width"] = m.image_width;
    j["heatmaps"] = ordered_json::array();
    for (const auto& per_image : items) {
        for (const auto& it : per_image) {
            ordered_json row{{"image_id", it.image_id}, {"class", it.class_name}, {"tensor", it.tensor}};
            if (!it.pgm.empty()) row["pgm"] = it.pgm;
            j["heatmaps"].push_back(row);
        }
    }
    const std::string text = j.dump(2) + "\n";
    write_bytes(out_dir / "cam_index.json", text);
    return text;
}

SelftestOutcome run_selftest(const RunConfig& c) {
    if (c.trials < 1) throw UsageError("--trials must be >= 1");
    selftest::Options o;
    o.seed = c.seed;
    o.trials = c.trials;
    o.fault = c.fault;
    const auto results = selftest::run_all(o);
    SelftestOutcome outcome;
    outcome.passed = true;
    std::ostringstream out;
    out.precision(3);
    for (const auto& r : results) {
        out << (r.passed ? "PASS " : "FAIL ") << r.name << "  worst=" << std::scientific << r.worst
            << "  tol=" << r.tolerance << std::defaultfloat;
        if (!r.detail.empty()) out << "  (" << r.detail << ")";
        out << '\n';
        outcome.passed = outcome.passed && r.passed;
    }
    out << (outcome.passed ? "selftest: all suites passed" : "selftest: FAILED") << " (seed " << c.seed << ", trials "
        << c.trials << ")\n";
    outcome.text = out.str();
    return outcome;
}

void emit(const RunConfig& c, const std::string& stem, const std::string& text) {
    if (!c.out) {
        std::cout << text;
        return;
    }
    fs::create_directories(*c.out);
    write_bytes(*c.out / (stem + (c.format == Format::Json ? ".json" : ".csv")), text);
}

}  // namespace imba::cli
