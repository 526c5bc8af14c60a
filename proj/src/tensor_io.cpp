#include "imba_lens/tensor_io.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <fstream>
#include <iterator>
#include <limits>
#include <cmath>
#include <sstream>

#include "imba_lens/errors.hpp"
#include "json.hpp"

namespace imba::io {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::byte kMagic[4] = {std::byte{'F'}, std::byte{'M'}, std::byte{'A'}, std::byte{'P'}};

void put_u32(std::vector<std::byte>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::byte>((v >> (8 * i)) & 0xffu));
}

std::uint32_t get_u32(std::span<const std::byte> b, std::size_t off) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::to_integer<std::uint32_t>(b[off + i]) << (8 * i);
    return v;
}

fs::path resolve(const fs::path& base, const fs::path& p) {
    return p.is_absolute() ? p : base / p;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

std::vector<std::string_view> split_csv(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        if (comma == std::string_view::npos) {
            out.push_back(trim(line.substr(start)));
            break;
        }
        out.push_back(trim(line.substr(start, comma - start)));
        start = comma + 1;
    }
    return out;
}

double parse_number(std::string_view field, std::size_t line_no, std::string_view column) {
    double v = 0;
    const auto* end = field.data() + field.size();
    auto [ptr, ec] = std::from_chars(field.data(), end, v);
    if (field.empty() || ec != std::errc{} || ptr != end || !std::isfinite(v)) {
        throw DataError("annotations line " + std::to_string(line_no) + ": column '" +
                        std::string(column) + "' is not a number: '" + std::string(field) + "'");
    }
    return v;
}

std::size_t positive_size(const json& j, std::string_view what) {
    if (!j.is_number_integer() || j.get<long long>() < 1) {
        throw DataError("manifest: '" + std::string(what) + "' must be a positive integer");
    }
    return j.get<std::size_t>();
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> d, std::vector<float> values)
    : dims(std::move(d)), data(std::move(values)) {}

Tensor Tensor::zeros(std::vector<std::size_t> d) {
    const std::size_t n = element_count(d);
    return Tensor(std::move(d), std::vector<float>(n, 0.0f));
}

std::size_t element_count(std::span<const std::size_t> dims) {
    std::size_t n = 1;
    for (auto d : dims) {
        if (d != 0 && n > std::numeric_limits<std::size_t>::max() / d) {
            throw DataError("tensor extent product overflows");
        }
        n *= d;
    }
    return n;
}

std::vector<std::byte> encode_tensor(const Tensor& t) {
    if (t.dims.empty() || t.dims.size() > kMaxRank) {
        throw DataError("tensor rank must be in [1, 4], got " + std::to_string(t.dims.size()));
    }
    for (auto d : t.dims) {
        if (d == 0) throw DataError("tensor extents must be >= 1");
        if (d > std::numeric_limits<std::uint32_t>::max()) {
            throw DataError("tensor extent " + std::to_string(d) + " overflows u32");
        }
    }
    const std::size_t n = element_count(t.dims);
    if (n != t.data.size()) {
        throw DataError("tensor holds " + std::to_string(t.data.size()) + " values but dims imply " +
                        std::to_string(n));
    }

    std::vector<std::byte> out(std::begin(kMagic), std::end(kMagic));
    out.reserve(kHeaderBytes + 4 * t.dims.size() + 4 * n);
    out.push_back(std::byte{kTensorVersion});
    out.push_back(std::byte{kDtypeF32});
    out.push_back(static_cast<std::byte>(t.dims.size()));
    out.push_back(std::byte{0});
    for (auto d : t.dims) put_u32(out, static_cast<std::uint32_t>(d));
    for (float v : t.data) put_u32(out, std::bit_cast<std::uint32_t>(v));
    return out;
}

Tensor decode_tensor(std::span<const std::byte> bytes, std::string_view source) {
    const std::string src(source);
    if (bytes.size() < kHeaderBytes || !std::equal(std::begin(kMagic), std::end(kMagic), bytes.begin())) {
        throw DataError(src + ": not an FMAP tensor (bad magic)");
    }
    const auto version = std::to_integer<std::uint8_t>(bytes[4]);
    const auto dtype = std::to_integer<std::uint8_t>(bytes[5]);
    const auto ndim = std::to_integer<std::uint8_t>(bytes[6]);
    if (version != kTensorVersion) {
        throw DataError(src + ": unsupported FMAP version " + std::to_string(version));
    }
    if (dtype != kDtypeF32) {
        throw DataError(src + ": unsupported dtype code " + std::to_string(dtype));
    }
    if (ndim < 1 || ndim > kMaxRank) {
        throw DataError(src + ": rank " + std::to_string(ndim) + " outside [1, 4]");
    }
    const std::size_t dims_end = kHeaderBytes + 4u * ndim;
    if (bytes.size() < dims_end) throw DataError(src + ": truncated extents");

    std::vector<std::size_t> dims(ndim);
    for (std::size_t i = 0; i < ndim; ++i) {
        dims[i] = get_u32(bytes, kHeaderBytes + 4 * i);
        if (dims[i] == 0) throw DataError(src + ": zero extent");
    }
    const std::size_t n = element_count(dims);
    if (n > (std::numeric_limits<std::size_t>::max() - dims_end) / 4) {
        throw DataError(src + ": declared payload too large");
    }
    const std::size_t expected = dims_end + 4 * n;
    if (bytes.size() != expected) {
        throw DataError(src + ": data section is " + std::to_string(bytes.size() - dims_end) +
                        " bytes, header declares " + std::to_string(4 * n));
    }

    std::vector<float> data(n);
    for (std::size_t i = 0; i < n; ++i) data[i] = std::bit_cast<float>(get_u32(bytes, dims_end + 4 * i));
    return Tensor(std::move(dims), std::move(data));
}

void write_tensor(const Tensor& t, const fs::path& path) {
    const auto bytes = encode_tensor(t);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("write failed for '" + path.string() + "'");
}

Tensor read_tensor(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open tensor '" + path.string() + "'");
    std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_tensor(std::as_bytes(std::span<const char>(raw)), path.string());
}

// ---------------------------------------------------------------------------

std::optional<std::size_t> Manifest::class_index(std::string_view name) const {
    for (std::size_t i = 0; i < class_names.size(); ++i) {
        if (class_names[i] == name) return i;
    }
    return std::nullopt;
}

const ManifestEntry* Manifest::find(std::string_view image_id) const {
    for (const auto& e : entries) {
        if (e.image_id == image_id) return &e;
    }
    return nullptr;
}

Manifest parse_manifest(std::string_view json_text, const fs::path& base_dir) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw DataError(std::string("manifest: invalid JSON: ") + e.what());
    }
    if (!j.is_object()) throw DataError("manifest: top level must be an object");

    Manifest m;
    try {
        const auto& shape = j.at("layer_shape");
        if (!shape.is_array() || shape.size() != 3) {
            throw DataError("manifest: 'layer_shape' must be [C, H, W]");
        }
        m.layer = {positive_size(shape[0], "layer_shape[0]"), positive_size(shape[1], "layer_shape[1]"),
                   positive_size(shape[2], "layer_shape[2]")};
        m.image_width = positive_size(j.at("image_width"), "image_width");
        m.image_height = positive_size(j.at("image_height"), "image_height");
        m.class_names = j.at("class_names").get<std::vector<std::string>>();
        if (m.class_names.empty()) throw DataError("manifest: 'class_names' must be nonempty");
        for (std::size_t i = 0; i < m.class_names.size(); ++i) {
            for (std::size_t k = 0; k < i; ++k) {
                if (m.class_names[i] == m.class_names[k]) {
                    throw DataError("manifest: duplicate class name '" + m.class_names[i] + "'");
                }
            }
        }
        if (j.contains("head")) m.head = resolve(base_dir, j.at("head").get<std::string>());
        if (j.contains("head_bias")) m.head_bias = resolve(base_dir, j.at("head_bias").get<std::string>());

        for (const auto& je : j.at("entries")) {
            ManifestEntry e;
            e.image_id = je.at("image_id").get<std::string>();
            e.features = resolve(base_dir, je.at("features").get<std::string>());
            e.logits = resolve(base_dir, je.at("logits").get<std::string>());
            for (const auto& l : je.at("labels")) {
                if (!l.is_number_integer() || (l.get<int>() != 0 && l.get<int>() != 1)) {
                    throw DataError("manifest: labels for '" + e.image_id + "' must be 0/1");
                }
                e.labels.push_back(static_cast<std::uint8_t>(l.get<int>()));
            }
            if (e.labels.size() != m.class_names.size()) {
                throw DataError("manifest: '" + e.image_id + "' has " + std::to_string(e.labels.size()) +
                                " labels, expected " + std::to_string(m.class_names.size()));
            }
            if (m.find(e.image_id)) throw DataError("manifest: duplicate image_id '" + e.image_id + "'");
            m.entries.push_back(std::move(e));
        }
    } catch (const json::exception& e) {
        throw DataError(std::string("manifest: ") + e.what());
    }
    return m;
}

Manifest load_manifest(const fs::path& path, bool check_tensors) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open manifest '" + path.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    Manifest m = parse_manifest(ss.str(), path.parent_path());
    if (check_tensors) {
        for (const auto& e : m.entries) {
            (void)load_features(m, e);
            (void)load_logits(m, e);
        }
    }
    return m;
}

void write_manifest(const Manifest& m, const fs::path& path) {
    json j;
    j["layer_shape"] = {m.layer.channels, m.layer.height, m.layer.width};
    j["image_width"] = m.image_width;
    j["image_height"] = m.image_height;
    j["class_names"] = m.class_names;
    if (m.head) j["head"] = m.head->generic_string();
    if (m.head_bias) j["head_bias"] = m.head_bias->generic_string();
    j["entries"] = json::array();
    for (const auto& e : m.entries) {
        std::vector<int> labels(e.labels.begin(), e.labels.end());
        j["entries"].push_back({{"image_id", e.image_id},
                                {"features", e.features.generic_string()},
                                {"logits", e.logits.generic_string()},
                                {"labels", labels}});
    }
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
    out << j.dump(2) << '\n';
}

FeatureMapStack load_features(const Manifest& m, const ManifestEntry& e) {
    Tensor t = read_tensor(e.features);
    const std::vector<std::size_t> want{m.layer.channels, m.layer.height, m.layer.width};
    if (t.dims != want) {
        throw DataError("features for '" + e.image_id + "' do not match layer_shape");
    }
    FeatureMapStack s;
    s.image_id = e.image_id;
    s.channels = m.layer.channels;
    s.height = m.layer.height;
    s.width = m.layer.width;
    s.values = std::move(t.data);
    return s;
}

std::vector<float> load_logits(const Manifest& m, const ManifestEntry& e) {
    Tensor t = read_tensor(e.logits);
    if (t.dims != std::vector<std::size_t>{m.num_classes()}) {
        throw DataError("logits for '" + e.image_id + "' must have shape [" +
                        std::to_string(m.num_classes()) + "]");
    }
    return std::move(t.data);
}

// ---------------------------------------------------------------------------

const std::vector<Box>* AnnotationSet::find(std::string_view image_id) const {
    const auto it = boxes.find(image_id);
    return it == boxes.end() ? nullptr : &it->second;
}

AnnotationSet parse_annotations(std::istream& in, const Manifest& m) {
    std::string line;
    std::size_t line_no = 0;
    bool have_header = false;
    while (!have_header && std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        std::string_view header = trim(line);
        if (header.size() >= 3 && header.substr(0, 3) == "\xEF\xBB\xBF") header.remove_prefix(3);
        std::string joined;
        for (auto f : split_csv(header)) {
            if (!joined.empty()) joined += ',';
            joined += f;
        }
        if (joined != kAnnotationHeader) {
            throw DataError("annotations: expected header '" + std::string(kAnnotationHeader) + "'");
        }
        have_header = true;
    }
    if (!have_header) throw DataError("annotations: missing header row");

    const double img_w = static_cast<double>(m.image_width);
    const double img_h = static_cast<double>(m.image_height);
    AnnotationSet set;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto f = split_csv(line);
        if (f.size() != 6) {
            throw DataError("annotations line " + std::to_string(line_no) + ": expected 6 columns, got " +
                            std::to_string(f.size()));
        }
        Box b;
        b.label = std::string(f[1]);
        b.x = parse_number(f[2], line_no, "x");
        b.y = parse_number(f[3], line_no, "y");
        b.w = parse_number(f[4], line_no, "w");
        b.h = parse_number(f[5], line_no, "h");
        if (!(b.w > 0) || !(b.h > 0)) {
            throw DataError("annotations line " + std::to_string(line_no) + ": box width and height must be > 0");
        }
        if (!m.class_index(b.label)) {
            throw DataError("annotations line " + std::to_string(line_no) + ": label '" + b.label +
                            "' is not a manifest class");
        }
        const std::string image_id(f[0]);
        if (!m.find(image_id)) continue;

        const double x0 = std::clamp(b.x, 0.0, img_w);
        const double y0 = std::clamp(b.y, 0.0, img_h);
        const double x1 = std::clamp(b.x + b.w, 0.0, img_w);
        const double y1 = std::clamp(b.y + b.h, 0.0, img_h);
        if (!(x1 > x0) || !(y1 > y0)) {
            throw DataError("annotations line " + std::to_string(line_no) + ": box lies outside the image");
        }
        b.x = x0;
        b.y = y0;
        b.w = x1 - x0;
        b.h = y1 - y0;
        set.boxes[image_id].push_back(std::move(b));
    }
    return set;
}

AnnotationSet load_annotations(const fs::path& path, const Manifest& m) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open annotations '" + path.string() + "'");
    return parse_annotations(in, m);
}

}  // namespace imba::io
