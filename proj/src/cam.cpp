#include "imba_lens/cam.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <tuple>

#include "imba_lens/errors.hpp"

namespace imba::cam {

Map2D::Map2D(std::size_t h, std::size_t w, std::vector<double> v) : height(h), width(w), values(std::move(v)) {
    if (values.size() != h * w) throw DataError("map values do not match its extent");
}

HeadWeights head_from_tensors(const io::Tensor& weights, const io::Tensor* bias) {
    if (weights.rank() != 2) throw DataError("head weights must be a (classes, channels) tensor");
    HeadWeights head;
    head.classes = weights.dims[0];
    head.channels = weights.dims[1];
    head.weights.assign(weights.data.begin(), weights.data.end());
    if (bias) {
        if (bias->dims != std::vector<std::size_t>{head.classes}) {
            throw DataError("head bias must have shape [" + std::to_string(head.classes) + "]");
        }
        head.bias.assign(bias->data.begin(), bias->data.end());
    }
    return head;
}

HeadWeights load_head(const io::Manifest& m) {
    if (!m.head) throw UsageError("no head weights given (manifest 'head' or --head)");
    const auto w = io::read_tensor(*m.head);
    HeadWeights head;
    if (m.head_bias) {
        const auto b = io::read_tensor(*m.head_bias);
        head = head_from_tensors(w, &b);
    } else {
        head = head_from_tensors(w);
    }
    if (head.classes != m.num_classes() || head.channels != m.layer.channels) {
        throw DataError("head weights shape (" + std::to_string(head.classes) + ", " + std::to_string(head.channels) +
                        ") does not match manifest (" + std::to_string(m.num_classes()) + ", " +
                        std::to_string(m.layer.channels) + ")");
    }
    return head;
}

Map2D cam_linear(const io::FeatureMapStack& features, const HeadWeights& head, std::size_t class_index) {
    if (class_index >= head.classes) throw DataError("class index out of range for head weights");
    if (features.channels != head.channels) throw DataError("feature channels do not match head weights");
    if (features.values.size() != features.channels * features.plane_size()) {
        throw DataError("feature stack size does not match its extent");
    }
    Map2D out(features.height, features.width);
    const auto w = head.row(class_index);
    for (std::size_t c = 0; c < features.channels; ++c) {
        const double wc = w[c];
        const auto plane = features.channel(c);
        for (std::size_t i = 0; i < plane.size(); ++i) out.values[i] += wc * static_cast<double>(plane[i]);
    }
    return out;
}

Map2D compute_cam(const io::FeatureMapStack& features, const HeadWeights& head, std::size_t class_index) {
    Map2D m = cam_linear(features, head, class_index);
    for (auto& v : m.values) v = std::max(0.0, v);
    return m;
}

Heatmap normalize_map(const Map2D& raw, Resolution resolution) {
    Heatmap h{Map2D(raw.height, raw.width), resolution};
    if (raw.values.empty()) return h;
    const auto [lo_it, hi_it] = std::minmax_element(raw.values.begin(), raw.values.end());
    const double lo = *lo_it;
    const double range = *hi_it - lo;
    if (!(range > 0)) return h;
    for (std::size_t i = 0; i < raw.values.size(); ++i) {
        h.map.values[i] = std::clamp((raw.values[i] - lo) / range, 0.0, 1.0);
    }
    return h;
}

Map2D upsample_bilinear(const Map2D& src, std::size_t target_h, std::size_t target_w) {
    if (src.height == 0 || src.width == 0) throw DataError("cannot upsample an empty map");
    if (target_h < src.height || target_w < src.width) {
        throw DataError("upsample target " + std::to_string(target_h) + "x" + std::to_string(target_w) +
                        " is smaller than source " + std::to_string(src.height) + "x" + std::to_string(src.width));
    }
    const auto axis = [](std::size_t i, std::size_t src_n, std::size_t dst_n) {
        double s = (static_cast<double>(i) + 0.5) * static_cast<double>(src_n) / static_cast<double>(dst_n) - 0.5;
        s = std::clamp(s, 0.0, static_cast<double>(src_n - 1));
        const auto i0 = static_cast<std::size_t>(std::floor(s));
        const std::size_t i1 = std::min(i0 + 1, src_n - 1);
        return std::tuple{i0, i1, s - static_cast<double>(i0)};
    };

    Map2D out(target_h, target_w);
    for (std::size_t y = 0; y < target_h; ++y) {
        const auto [y0, y1, fy] = axis(y, src.height, target_h);
        for (std::size_t x = 0; x < target_w; ++x) {
            const auto [x0, x1, fx] = axis(x, src.width, target_w);
            const double top = (1 - fx) * src(y0, x0) + fx * src(y0, x1);
            const double bottom = (1 - fx) * src(y1, x0) + fx * src(y1, x1);
            out(y, x) = (1 - fy) * top + fy * bottom;
        }
    }
    return out;
}

Heatmap upsample_bilinear(const Heatmap& src, std::size_t target_h, std::size_t target_w) {
    Heatmap h{upsample_bilinear(src.map, target_h, target_w), Resolution::ImagePixels};
    for (auto& v : h.map.values) v = std::clamp(v, 0.0, 1.0);
    return h;
}

Heatmap image_heatmap(const io::FeatureMapStack& features, const HeadWeights& head, std::size_t class_index,
                      std::size_t image_h, std::size_t image_w, Order order) {
    const Map2D raw = compute_cam(features, head, class_index);
    if (order == Order::NormalizeThenUpsample) {
        return upsample_bilinear(normalize_map(raw), image_h, image_w);
    }
    return normalize_map(upsample_bilinear(raw, image_h, image_w), Resolution::ImagePixels);
}

io::Tensor to_tensor(const Heatmap& h) {
    std::vector<float> data(h.map.values.begin(), h.map.values.end());
    return io::Tensor({h.height(), h.width()}, std::move(data));
}

std::vector<unsigned char> render_pgm(const Heatmap& h) {
    const std::string header = "P5\n" + std::to_string(h.width()) + " " + std::to_string(h.height()) + "\n255\n";
    std::vector<unsigned char> out(header.begin(), header.end());
    out.reserve(out.size() + h.map.size());
    for (double v : h.map.values) {
        out.push_back(static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)));
    }
    return out;
}

}  // namespace imba::cam
