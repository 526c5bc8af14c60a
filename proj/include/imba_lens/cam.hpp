#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "imba_lens/tensor_io.hpp"

namespace imba::cam {

/// Row-major single-channel map.
struct Map2D {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<double> values;

    Map2D() = default;
    Map2D(std::size_t h, std::size_t w, double fill = 0.0) : height(h), width(w), values(h * w, fill) {}
    Map2D(std::size_t h, std::size_t w, std::vector<double> v);

    double& operator()(std::size_t y, std::size_t x) { return values[y * width + x]; }
    double operator()(std::size_t y, std::size_t x) const { return values[y * width + x]; }
    std::size_t size() const { return values.size(); }
};

enum class Resolution { FeatureGrid, ImagePixels };

/// Map with every value in [0, 1].
struct Heatmap {
    Map2D map;
    Resolution resolution = Resolution::FeatureGrid;

    std::size_t height() const { return map.height; }
    std::size_t width() const { return map.width; }
};

/// Linear classifier over globally pooled channels: logits = W * pool(A) + b.
struct HeadWeights {
    std::size_t classes = 0;
    std::size_t channels = 0;
    std::vector<double> weights;  // classes x channels
    std::vector<double> bias;     // empty or `classes`

    std::span<const double> row(std::size_t cls) const {
        return std::span<const double>(weights).subspan(cls * channels, channels);
    }
};

/// Builds head weights from a (M, C) tensor and an optional (M) bias tensor.
HeadWeights head_from_tensors(const io::Tensor& weights, const io::Tensor* bias = nullptr);
HeadWeights load_head(const io::Manifest& m);

/// Weighted channel sum before rectification: sum_c head[cls, c] * A[c].
Map2D cam_linear(const io::FeatureMapStack& features, const HeadWeights& head, std::size_t class_index);

/// max(0, cam_linear(...)).
Map2D compute_cam(const io::FeatureMapStack& features, const HeadWeights& head, std::size_t class_index);

/// Min-max normalisation to [0, 1]; a constant map becomes all zeros.
Heatmap normalize_map(const Map2D& raw, Resolution resolution = Resolution::FeatureGrid);

/// Bilinear resampling with half-pixel centres: output pixel i samples the
/// source at (i + 0.5) * src / dst - 0.5, clamped to the source extent.
Map2D upsample_bilinear(const Map2D& src, std::size_t target_h, std::size_t target_w);
Heatmap upsample_bilinear(const Heatmap& src, std::size_t target_h, std::size_t target_w);

enum class Order { NormalizeThenUpsample, UpsampleThenNormalize };

/// CAM for one class at image resolution, normalised.
Heatmap image_heatmap(const io::FeatureMapStack& features, const HeadWeights& head, std::size_t class_index,
                      std::size_t image_h, std::size_t image_w, Order order = Order::NormalizeThenUpsample);

/// Heatmap as an (H, W) f32 tensor.
io::Tensor to_tensor(const Heatmap& h);

/// Binary 8-bit PGM (P5) rendering, value v -> round(255 v).
std::vector<unsigned char> render_pgm(const Heatmap& h);

}  // namespace imba::cam
