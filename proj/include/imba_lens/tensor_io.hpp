#pragma once

// Interchange formats shared with the exporter: FMAP tensor files, the JSON
// dataset manifest, and the bounding-box annotation CSV.
//
// Tensor file layout (all integers little-endian):
//   bytes 0-3  magic "FMAP"
//   byte  4    version (1)
//   byte  5    dtype code (1 = f32)
//   byte  6    ndim, 1..4
//   byte  7    reserved, 0
//   ndim x u32 extents
//   row-major f32 payload

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace imba::io {

inline constexpr std::uint8_t kTensorVersion = 1;
inline constexpr std::uint8_t kDtypeF32 = 1;
inline constexpr std::size_t kMaxRank = 4;
inline constexpr std::size_t kHeaderBytes = 8;

/// Dense row-major f32 array.
struct Tensor {
    std::vector<std::size_t> dims;
    std::vector<float> data;

    Tensor() = default;
    Tensor(std::vector<std::size_t> d, std::vector<float> values);

    static Tensor zeros(std::vector<std::size_t> d);

    std::size_t rank() const { return dims.size(); }
    std::size_t size() const { return data.size(); }
};

/// Product of extents; throws DataError on overflow.
std::size_t element_count(std::span<const std::size_t> dims);

std::vector<std::byte> encode_tensor(const Tensor& t);
Tensor decode_tensor(std::span<const std::byte> bytes, std::string_view source = "<memory>");

void write_tensor(const Tensor& t, const std::filesystem::path& path);
Tensor read_tensor(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Manifest

struct LayerShape {
    std::size_t channels = 0;
    std::size_t height = 0;
    std::size_t width = 0;

    friend bool operator==(const LayerShape&, const LayerShape&) = default;
};

struct ManifestEntry {
    std::string image_id;
    std::filesystem::path features;  // tensor (C, H, W)
    std::filesystem::path logits;    // tensor (M)
    std::vector<std::uint8_t> labels;
};

struct Manifest {
    LayerShape layer;
    std::size_t image_width = 0;
    std::size_t image_height = 0;
    std::vector<std::string> class_names;
    std::vector<ManifestEntry> entries;
    std::optional<std::filesystem::path> head;       // tensor (M, C)
    std::optional<std::filesystem::path> head_bias;  // tensor (M)

    std::size_t num_classes() const { return class_names.size(); }
    std::optional<std::size_t> class_index(std::string_view name) const;
    const ManifestEntry* find(std::string_view image_id) const;
};

/// Loads and validates a manifest. Relative tensor paths resolve against the
/// manifest's directory. With `check_tensors`, every referenced tensor is read
/// and its shape compared against the declared layer shape / class count.
Manifest load_manifest(const std::filesystem::path& path, bool check_tensors = true);

/// Parses manifest JSON text; relative paths resolve against `base_dir`.
Manifest parse_manifest(std::string_view json_text, const std::filesystem::path& base_dir);

/// Writes a manifest as JSON. Paths are written as stored.
void write_manifest(const Manifest& m, const std::filesystem::path& path);

/// Activations of the analysed layer for one image.
struct FeatureMapStack {
    std::string image_id;
    std::size_t channels = 0;
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<float> values;  // C*H*W row-major

    std::size_t plane_size() const { return height * width; }
    std::span<const float> channel(std::size_t c) const {
        return std::span<const float>(values).subspan(c * plane_size(), plane_size());
    }
    float at(std::size_t c, std::size_t y, std::size_t x) const {
        return values[(c * height + y) * width + x];
    }
};

FeatureMapStack load_features(const Manifest& m, const ManifestEntry& e);
std::vector<float> load_logits(const Manifest& m, const ManifestEntry& e);

// ---------------------------------------------------------------------------
// Annotations

/// Axis-aligned box in image pixels, origin top-left.
struct Box {
    std::string label;
    double x = 0;
    double y = 0;
    double w = 0;
    double h = 0;
};

struct AnnotationSet {
    /// image_id -> boxes, in file order per image.
    std::map<std::string, std::vector<Box>, std::less<>> boxes;

    bool empty() const { return boxes.empty(); }
    std::size_t image_count() const { return boxes.size(); }
    const std::vector<Box>* find(std::string_view image_id) const;
};

inline constexpr std::string_view kAnnotationHeader = "image_id,label,x,y,w,h";

/// Parses annotation CSV. Boxes are clipped to the manifest's image bounds;
/// rows for images absent from the manifest are skipped.
AnnotationSet parse_annotations(std::istream& in, const Manifest& m);
AnnotationSet load_annotations(const std::filesystem::path& path, const Manifest& m);

}  // namespace imba::io
