#include "axunet/gradcam.hpp"

#include <cstdint>
#include <fstream>

namespace axunet {

namespace {

// piecewise linear green -> yellow -> orange -> red
void heat_color(float t, float& r, float& g, float& b) {
    b = 0.0f;
    if (t < 1.0f / 3.0f) {
        r = 3.0f * t;
        g = 1.0f;
    } else if (t < 2.0f / 3.0f) {
        r = 1.0f;
        g = 1.0f - 1.5f * (t - 1.0f / 3.0f);
    } else {
        r = 1.0f;
        g = 0.5f - 1.5f * (t - 2.0f / 3.0f);
    }
    g = std::max(g, 0.0f);
}

}  // namespace

Tensor<float> overlay(const Tensor<float>& image3, const Tensor<float>& heatmap) {
    if (image3.ndim() != 3 || image3.dim(0) != 3 || heatmap.ndim() != 2 ||
        heatmap.dim(0) != image3.dim(1) || heatmap.dim(1) != image3.dim(2))
        throw ShapeError("overlay: image " + shape_str(image3.shape()) + " and heatmap " +
                         shape_str(heatmap.shape()) + " do not align");
    const std::int64_t plane = heatmap.size();
    const auto img = image3.data();
    const auto heat = heatmap.data();
    std::vector<float> rgb(static_cast<std::size_t>(3 * plane));
    constexpr float kAlpha = 0.4f;
    for (std::int64_t i = 0; i < plane; ++i) {
        const float gray = std::clamp(img[i], 0.0f, 1.0f);  // first channel is the base
        const float h = std::clamp(heat[i], 0.0f, 1.0f);
        float r, g, b;
        heat_color(h, r, g, b);
        const float a = kAlpha * h;
        rgb[i] = (1.0f - a) * gray + a * r;
        rgb[plane + i] = (1.0f - a) * gray + a * g;
        rgb[2 * plane + i] = (1.0f - a) * gray + a * b;
    }
    return Tensor<float>::from_data({3, image3.dim(1), image3.dim(2)}, std::move(rgb));
}

void write_ppm(const std::filesystem::path& path, const Tensor<float>& rgb) {
    if (rgb.ndim() != 3 || rgb.dim(0) != 3)
        throw ShapeError("write_ppm: expected [3,H,W], got " + shape_str(rgb.shape()));
    const std::int64_t h = rgb.dim(1), w = rgb.dim(2), plane = h * w;
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("write_ppm: cannot open " + path.string());
    out << "P6\n" << w << " " << h << "\n255\n";
    const auto d = rgb.data();
    std::vector<std::uint8_t> row(static_cast<std::size_t>(3 * w));
    for (std::int64_t y = 0; y < h; ++y) {
        for (std::int64_t x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c)
                row[x * 3 + c] = static_cast<std::uint8_t>(
                    std::lround(255.0f * std::clamp(d[c * plane + y * w + x], 0.0f, 1.0f)));
        out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
    }
    if (!out) throw DataError("write_ppm: short write to " + path.string());
}

}  // namespace axunet
