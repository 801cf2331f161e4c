#include "axunet/synth.hpp"

#include <cmath>

#include "axunet/axtn.hpp"
#include "axunet/errors.hpp"
#include "axunet/rng.hpp"

namespace axunet {

namespace {

struct Ellipsoid {
    double cy, cx, cz;  // center (row, col, depth)
    double ay, ax, az;  // semi-axes

    double rho(double y, double x, double z) const {
        const double dy = (y - cy) / ay, dx = (x - cx) / ax, dz = (z - cz) / az;
        return std::sqrt(dy * dy + dx * dx + dz * dz);
    }
};

// low-frequency multiplicative wobble for the tumor boundary
struct BoundaryNoise {
    double a1, w1y, w1x, w1z, p1;
    double a2, w2y, w2x, w2z, p2;

    double operator()(double y, double x, double z) const {
        return a1 * std::sin(w1y * y + p1) * std::sin(w1x * x + p1) * std::sin(w1z * z + p1) +
               a2 * std::sin(w2y * y + p2) * std::cos(w2x * x + p2) * std::sin(w2z * z + p2);
    }
};

// intensity levels per channel (t1ce, t2, flair) and tissue class
// classes: 0 brain, 1 PE, 2 NCR, 3 ET
constexpr double kLevels[3][4] = {
    {0.35, 0.45, 0.55, 0.95},  // t1ce: enhancing tumor lights up
    {0.30, 0.80, 0.65, 0.50},  // t2: edema lights up
    {0.25, 0.85, 0.75, 0.70},  // flair: whole tumor lights up
};

}  // namespace

std::vector<SynthCaseStats> synth_generate(const std::filesystem::path& out_root,
                                           const SynthOptions& opts) {
    if (opts.cases < 1) throw ConfigError("synth: need at least one case");
    for (const auto d : opts.dims)
        if (d < 16) throw DataError("synth: dims must be >= 16 per axis for the nested shells");
    std::filesystem::create_directories(out_root);

    const std::int64_t H = opts.dims[0], W = opts.dims[1], D = opts.dims[2];
    std::vector<SynthCaseStats> stats;
    stats.reserve(static_cast<std::size_t>(opts.cases));

    for (std::int64_t ci = 0; ci < opts.cases; ++ci) {
        Rng rng(derive_seed(opts.seed, "case", static_cast<std::uint64_t>(ci)));
        char name[32];
        std::snprintf(name, sizeof(name), "case_%04lld", static_cast<long long>(ci));
        const auto dir = out_root / name;
        std::filesystem::create_directories(dir);

        Ellipsoid brain{
            H / 2.0 + rng.uniform(-0.02, 0.02) * H, W / 2.0 + rng.uniform(-0.02, 0.02) * W,
            D / 2.0 + rng.uniform(-0.02, 0.02) * D, 0.40 * H * rng.uniform(0.95, 1.05),
            0.42 * W * rng.uniform(0.95, 1.05),     0.44 * D * rng.uniform(0.95, 1.05)};
        const double spread = rng.uniform(0.16, 0.22);
        Ellipsoid tumor{brain.cy + rng.uniform(-0.08, 0.08) * H,
                        brain.cx + rng.uniform(-0.08, 0.08) * W,
                        brain.cz + rng.uniform(-0.06, 0.06) * D,
                        spread * H * rng.uniform(0.9, 1.1),
                        spread * W * rng.uniform(0.9, 1.1),
                        spread * D * rng.uniform(0.9, 1.1)};
        BoundaryNoise noise{rng.uniform(0.03, 0.06), rng.uniform(0.15, 0.45),
                            rng.uniform(0.15, 0.45), rng.uniform(0.15, 0.45),
                            rng.uniform(0.0, 6.28),  rng.uniform(0.02, 0.04),
                            rng.uniform(0.3, 0.8),   rng.uniform(0.3, 0.8),
                            rng.uniform(0.3, 0.8),   rng.uniform(0.0, 6.28)};
        double jitter[3][4];
        for (int ch = 0; ch < 3; ++ch)
            for (int cl = 0; cl < 4; ++cl)
                jitter[ch][cl] = kLevels[ch][cl] + rng.uniform(-0.02, 0.02);

        const std::size_t voxels = static_cast<std::size_t>(H * W * D);
        std::vector<float> seq[3];
        for (auto& s : seq) s.assign(voxels, 0.0f);
        std::vector<float> labels(voxels, 0.0f);

        SynthCaseStats cs;
        cs.case_id = name;
        std::int64_t central_tumor = 0;
        const std::int64_t zc = D / 2;

        for (std::int64_t y = 0; y < H; ++y)
            for (std::int64_t x = 0; x < W; ++x)
                for (std::int64_t z = 0; z < D; ++z) {
                    const std::size_t idx = static_cast<std::size_t>((y * W + x) * D + z);
                    if (brain.rho(y, x, z) > 1.0) continue;
                    const double r = tumor.rho(y, x, z) + noise(y, x, z);
                    int cls = 0;
                    float label = 0.0f;
                    if (r < 0.45) {
                        cls = 3;
                        label = 4.0f;
                    } else if (r < 0.72) {
                        cls = 2;
                        label = 1.0f;
                    } else if (r < 1.0) {
                        cls = 1;
                        label = 2.0f;
                    }
                    labels[idx] = label;
                    if (label != 0.0f) {
                        ++cs.tumor_voxels;
                        if (z == zc) ++central_tumor;
                    }
                    const double shade =
                        0.9 + 0.2 * (static_cast<double>(y + x) / static_cast<double>(H + W));
                    for (int ch = 0; ch < 3; ++ch) {
                        const double v = jitter[ch][cls] * shade + rng.normal(0.0, 0.015);
                        seq[ch][idx] = static_cast<float>(std::max(v, 0.02));
                    }
                }
        cs.central_slice_tumor_fraction =
            static_cast<double>(central_tumor) / static_cast<double>(H * W);

        const Shape vol_shape{H, W, D};
        axtn::save<float>(dir / "t1ce.axtn", vol_shape, seq[0]);
        axtn::save<float>(dir / "t2.axtn", vol_shape, seq[1]);
        axtn::save<float>(dir / "flair.axtn", vol_shape, seq[2]);
        axtn::save<float>(dir / "seg.axtn", vol_shape, labels);
        stats.push_back(std::move(cs));
    }
    return stats;
}

}  // namespace axunet
