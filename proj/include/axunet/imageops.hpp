#pragma once

// Plane-level raster helpers shared by preprocessing, augmentation and the
// heatmap path. All samplers use half-pixel centers; out-of-range reads clamp
// for resizing and return zero for affine warps.

#include <cmath>
#include <cstdint>
#include <vector>

namespace axunet::imageops {

template <typename T>
std::vector<T> resize_bilinear(const T* src, std::int64_t h, std::int64_t w, std::int64_t oh,
                               std::int64_t ow) {
    std::vector<T> out(static_cast<std::size_t>(oh * ow));
    const double sy = static_cast<double>(h) / static_cast<double>(oh);
    const double sx = static_cast<double>(w) / static_cast<double>(ow);
    for (std::int64_t r = 0; r < oh; ++r) {
        const double fy = (static_cast<double>(r) + 0.5) * sy - 0.5;
        const std::int64_t y0 = static_cast<std::int64_t>(std::floor(fy));
        const double wy = fy - static_cast<double>(y0);
        for (std::int64_t c = 0; c < ow; ++c) {
            const double fx = (static_cast<double>(c) + 0.5) * sx - 0.5;
            const std::int64_t x0 = static_cast<std::int64_t>(std::floor(fx));
            const double wx = fx - static_cast<double>(x0);
            auto at = [&](std::int64_t y, std::int64_t x) {
                y = std::min(std::max<std::int64_t>(y, 0), h - 1);
                x = std::min(std::max<std::int64_t>(x, 0), w - 1);
                return static_cast<double>(src[y * w + x]);
            };
            const double top = at(y0, x0) * (1.0 - wx) + at(y0, x0 + 1) * wx;
            const double bot = at(y0 + 1, x0) * (1.0 - wx) + at(y0 + 1, x0 + 1) * wx;
            out[r * ow + c] = static_cast<T>(top * (1.0 - wy) + bot * wy);
        }
    }
    return out;
}

template <typename T>
std::vector<T> resize_nearest(const T* src, std::int64_t h, std::int64_t w, std::int64_t oh,
                              std::int64_t ow) {
    std::vector<T> out(static_cast<std::size_t>(oh * ow));
    const double sy = static_cast<double>(h) / static_cast<double>(oh);
    const double sx = static_cast<double>(w) / static_cast<double>(ow);
    for (std::int64_t r = 0; r < oh; ++r) {
        std::int64_t y = static_cast<std::int64_t>(std::floor((r + 0.5) * sy));
        y = std::min(std::max<std::int64_t>(y, 0), h - 1);
        for (std::int64_t c = 0; c < ow; ++c) {
            std::int64_t x = static_cast<std::int64_t>(std::floor((c + 0.5) * sx));
            x = std::min(std::max<std::int64_t>(x, 0), w - 1);
            out[r * ow + c] = src[y * w + x];
        }
    }
    return out;
}

// Inverse-mapped rotate/scale about the plane center followed by a pixel
// shift. Source reads outside the plane come back as zero.
template <typename T>
std::vector<T> warp_affine(const T* src, std::int64_t h, std::int64_t w, double angle_deg,
                           double scale_factor, double shift_x, double shift_y, bool bilinear) {
    std::vector<T> out(static_cast<std::size_t>(h * w), T(0));
    const double rad = angle_deg * 3.14159265358979323846 / 180.0;
    const double ca = std::cos(rad), sa = std::sin(rad);
    const double cy = (static_cast<double>(h) - 1.0) / 2.0;
    const double cx = (static_cast<double>(w) - 1.0) / 2.0;
    const double inv_s = 1.0 / scale_factor;
    for (std::int64_t r = 0; r < h; ++r)
        for (std::int64_t c = 0; c < w; ++c) {
            const double dy = static_cast<double>(r) - cy - shift_y;
            const double dx = static_cast<double>(c) - cx - shift_x;
            const double sy = inv_s * (-sa * dx + ca * dy) + cy;
            const double sx = inv_s * (ca * dx + sa * dy) + cx;
            if (bilinear) {
                const std::int64_t y0 = static_cast<std::int64_t>(std::floor(sy));
                const std::int64_t x0 = static_cast<std::int64_t>(std::floor(sx));
                const double wy = sy - static_cast<double>(y0);
                const double wx = sx - static_cast<double>(x0);
                auto at = [&](std::int64_t y, std::int64_t x) {
                    if (y < 0 || y >= h || x < 0 || x >= w) return 0.0;
                    return static_cast<double>(src[y * w + x]);
                };
                const double top = at(y0, x0) * (1.0 - wx) + at(y0, x0 + 1) * wx;
                const double bot = at(y0 + 1, x0) * (1.0 - wx) + at(y0 + 1, x0 + 1) * wx;
                out[r * w + c] = static_cast<T>(top * (1.0 - wy) + bot * wy);
            } else {
                const std::int64_t y = static_cast<std::int64_t>(std::llround(sy));
                const std::int64_t x = static_cast<std::int64_t>(std::llround(sx));
                if (y >= 0 && y < h && x >= 0 && x < w) out[r * w + c] = src[y * w + x];
            }
        }
    return out;
}

// k quarter-turns counterclockwise on a square plane
template <typename T>
std::vector<T> rotate90(const T* src, std::int64_t n, int k) {
    std::vector<T> out(static_cast<std::size_t>(n * n));
    k = ((k % 4) + 4) % 4;
    for (std::int64_t r = 0; r < n; ++r)
        for (std::int64_t c = 0; c < n; ++c) {
            std::int64_t sr = r, sc = c;
            switch (k) {
                case 1: sr = c; sc = n - 1 - r; break;
                case 2: sr = n - 1 - r; sc = n - 1 - c; break;
                case 3: sr = n - 1 - c; sc = r; break;
                default: break;
            }
            out[r * n + c] = src[sr * n + sc];
        }
    return out;
}

template <typename T>
std::vector<T> flip_horizontal(const T* src, std::int64_t h, std::int64_t w) {
    std::vector<T> out(static_cast<std::size_t>(h * w));
    for (std::int64_t r = 0; r < h; ++r)
        for (std::int64_t c = 0; c < w; ++c) out[r * w + c] = src[r * w + (w - 1 - c)];
    return out;
}

template <typename T>
std::vector<T> flip_vertical(const T* src, std::int64_t h, std::int64_t w) {
    std::vector<T> out(static_cast<std::size_t>(h * w));
    for (std::int64_t r = 0; r < h; ++r)
        for (std::int64_t c = 0; c < w; ++c) out[r * w + c] = src[(h - 1 - r) * w + c];
    return out;
}

}  // namespace axunet::imageops
