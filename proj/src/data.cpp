#include "axunet/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "axunet/axtn.hpp"
#include "axunet/imageops.hpp"
#include "axunet/rng.hpp"
#include "json.hpp"

namespace axunet {

namespace {

constexpr const char* kSequenceNames[3] = {"t1ce", "t2", "flair"};

void require_volume(const VolumeSample& v) {
    if (v.channels.ndim() != 4 || v.channels.dim(0) != 3)
        throw ShapeError("volume " + v.case_id + ": channels must be [3,H,W,D], got " +
                         shape_str(v.channels.shape()));
    if (v.labels.ndim() != 3 || v.labels.dim(0) != v.channels.dim(1) ||
        v.labels.dim(1) != v.channels.dim(2) || v.labels.dim(2) != v.channels.dim(3))
        throw ShapeError("volume " + v.case_id + ": labels " + shape_str(v.labels.shape()) +
                         " do not match channels " + shape_str(v.channels.shape()));
}

std::vector<float> plane_from_volume(std::span<const float> vol, std::int64_t H, std::int64_t W,
                                     std::int64_t D, std::int64_t k) {
    std::vector<float> out(static_cast<std::size_t>(H * W));
    for (std::int64_t r = 0; r < H; ++r)
        for (std::int64_t c = 0; c < W; ++c) out[r * W + c] = vol[(r * W + c) * D + k];
    return out;
}

}  // namespace

Tensor<float> channel_slice(const VolumeSample& v, int channel, std::int64_t k) {
    require_volume(v);
    const std::int64_t H = v.channels.dim(1), W = v.channels.dim(2), D = v.channels.dim(3);
    if (channel < 0 || channel >= 3 || k < 0 || k >= D)
        throw ShapeError("channel_slice: channel " + std::to_string(channel) + " slice " +
                         std::to_string(k) + " outside volume " + shape_str(v.channels.shape()));
    auto span = v.channels.data().subspan(static_cast<std::size_t>(channel * H * W * D));
    return Tensor<float>::from_data({H, W}, plane_from_volume(span, H, W, D, k));
}

Tensor<float> label_slice(const VolumeSample& v, std::int64_t k) {
    require_volume(v);
    const std::int64_t H = v.labels.dim(0), W = v.labels.dim(1), D = v.labels.dim(2);
    if (k < 0 || k >= D)
        throw ShapeError("label_slice: slice " + std::to_string(k) + " outside depth " +
                         std::to_string(D));
    return Tensor<float>::from_data({H, W}, plane_from_volume(v.labels.data(), H, W, D, k));
}

std::vector<std::int64_t> select_slices(const VolumeSample& v, double threshold) {
    require_volume(v);
    if (threshold < 0.0 || threshold > 1.0)
        throw ConfigError("select_slices: threshold must lie in [0,1]");
    const std::int64_t H = v.labels.dim(0), W = v.labels.dim(1), D = v.labels.dim(2);
    const auto ld = v.labels.data();
    std::vector<std::int64_t> kept;
    for (std::int64_t k = 0; k < D; ++k) {
        std::int64_t tumor = 0;
        for (std::int64_t rc = 0; rc < H * W; ++rc)
            if (ld[rc * D + k] != 0.0f) ++tumor;
        if (static_cast<double>(tumor) / static_cast<double>(H * W) >= threshold) kept.push_back(k);
    }
    return kept;
}

VolumeSample crop_to_brain(const VolumeSample& v,
                           std::optional<std::array<std::int64_t, 2>> fixed) {
    require_volume(v);
    const std::int64_t H = v.channels.dim(1), W = v.channels.dim(2), D = v.channels.dim(3);
    const auto cd = v.channels.data();

    std::vector<std::int64_t> slices = v.meta.retained_slices;
    if (slices.empty()) {
        slices.resize(static_cast<std::size_t>(D));
        for (std::int64_t k = 0; k < D; ++k) slices[k] = k;
    }

    std::int64_t r0 = H, r1 = -1, c0 = W, c1 = -1;
    for (int ch = 0; ch < 3; ++ch)
        for (std::int64_t r = 0; r < H; ++r)
            for (std::int64_t c = 0; c < W; ++c) {
                const std::size_t base = static_cast<std::size_t>(((ch * H + r) * W + c) * D);
                for (const auto k : slices)
                    if (cd[base + k] != 0.0f) {
                        r0 = std::min(r0, r);
                        r1 = std::max(r1, r);
                        c0 = std::min(c0, c);
                        c1 = std::max(c1, c);
                        break;
                    }
            }
    if (r1 < 0) throw DataError("crop_to_brain: no brain voxels in " + v.case_id);

    std::int64_t out_h = r1 - r0 + 1, out_w = c1 - c0 + 1;
    if (fixed) {
        // center the target window on the tight box
        const std::int64_t fh = (*fixed)[0], fw = (*fixed)[1];
        if (fh < 1 || fw < 1) throw ConfigError("crop_to_brain: fixed dims must be positive");
        r0 = r0 + (out_h - fh) / 2;
        c0 = c0 + (out_w - fw) / 2;
        out_h = fh;
        out_w = fw;
    }

    VolumeSample out;
    out.case_id = v.case_id;
    out.meta = v.meta;
    out.meta.crop = CropRect{r0, c0, out_h, out_w};

    std::vector<float> ch_data(static_cast<std::size_t>(3 * out_h * out_w * D), 0.0f);
    std::vector<float> lb_data(static_cast<std::size_t>(out_h * out_w * D), 0.0f);
    const auto ld = v.labels.data();
    for (std::int64_t r = 0; r < out_h; ++r) {
        const std::int64_t sr = r0 + r;
        if (sr < 0 || sr >= H) continue;
        for (std::int64_t c = 0; c < out_w; ++c) {
            const std::int64_t sc = c0 + c;
            if (sc < 0 || sc >= W) continue;
            for (int ch = 0; ch < 3; ++ch)
                std::copy_n(cd.data() + ((ch * H + sr) * W + sc) * D, D,
                            ch_data.data() + ((ch * out_h + r) * out_w + c) * D);
            std::copy_n(ld.data() + (sr * W + sc) * D, D,
                        lb_data.data() + (r * out_w + c) * D);
        }
    }
    out.channels = Tensor<float>::from_data({3, out_h, out_w, D}, std::move(ch_data));
    out.labels = Tensor<float>::from_data({out_h, out_w, D}, std::move(lb_data));
    return out;
}

Tensor<float> minmax_normalize(const Tensor<float>& plane) {
    const auto d = plane.data();
    float lo = d[0], hi = d[0];
    for (const float v : d) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    std::vector<float> out(d.size(), 0.0f);
    if (hi > lo) {
        const float range = hi - lo;
        for (std::size_t i = 0; i < d.size(); ++i) out[i] = (d[i] - lo) / range;
    }
    return Tensor<float>::from_data(plane.shape(), std::move(out));
}

RegionMask compose_regions(const Tensor<float>& labels_plane) {
    const auto d = labels_plane.data();
    std::vector<float> wt(d.size()), tc(d.size()), et(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) {
        const float l = d[i];
        if (l != 0.0f && l != 1.0f && l != 2.0f && l != 4.0f)
            throw DataError("compose_regions: unknown label value " + std::to_string(l));
        et[i] = (l == 4.0f) ? 1.0f : 0.0f;
        tc[i] = (l == 1.0f || l == 4.0f) ? 1.0f : 0.0f;
        wt[i] = (l == 1.0f || l == 2.0f || l == 4.0f) ? 1.0f : 0.0f;
    }
    RegionMask m;
    m.wt = Tensor<float>::from_data(labels_plane.shape(), std::move(wt));
    m.tc = Tensor<float>::from_data(labels_plane.shape(), std::move(tc));
    m.et = Tensor<float>::from_data(labels_plane.shape(), std::move(et));
    return m;
}

namespace {

void check_mask_nesting(std::span<const float> m, std::int64_t plane) {
    for (std::int64_t i = 0; i < plane; ++i) {
        const float wt = m[i], tc = m[plane + i], et = m[2 * plane + i];
        if (et > tc || tc > wt)
            throw DataError("mask nesting violated: et <= tc <= wt must hold per pixel");
    }
}

}  // namespace

SlicePair resize_pair(const Tensor<float>& image3, const Tensor<float>& mask3,
                      std::int64_t out_size) {
    if (image3.ndim() != 3 || image3.dim(0) != 3 || mask3.shape() != image3.shape())
        throw ShapeError("resize_pair: expected matching [3,H,W] image and mask, got " +
                         shape_str(image3.shape()) + " and " + shape_str(mask3.shape()));
    const std::int64_t h = image3.dim(1), w = image3.dim(2);
    std::vector<float> img(static_cast<std::size_t>(3 * out_size * out_size));
    std::vector<float> msk(img.size());
    for (int c = 0; c < 3; ++c) {
        auto ri = imageops::resize_bilinear(image3.data().data() + c * h * w, h, w, out_size,
                                            out_size);
        auto rm = imageops::resize_nearest(mask3.data().data() + c * h * w, h, w, out_size,
                                           out_size);
        std::copy(ri.begin(), ri.end(), img.begin() + c * out_size * out_size);
        std::copy(rm.begin(), rm.end(), msk.begin() + c * out_size * out_size);
    }
    check_mask_nesting(msk, out_size * out_size);
    SlicePair out;
    out.image = Tensor<float>::from_data({3, out_size, out_size}, std::move(img));
    out.mask = Tensor<float>::from_data({3, out_size, out_size}, std::move(msk));
    return out;
}

SlicePair augment(const SlicePair& pair, std::uint64_t seed) {
    if (pair.image.ndim() != 3 || pair.image.dim(1) != pair.image.dim(2) ||
        pair.mask.shape() != pair.image.shape())
        throw ShapeError("augment: expected square [3,S,S] image/mask pair");
    const std::int64_t s = pair.image.dim(1);
    const std::int64_t plane = s * s;
    Rng rng(seed);

    std::array<std::vector<float>, 3> img, msk;
    for (int c = 0; c < 3; ++c) {
        img[c].assign(pair.image.data().begin() + c * plane,
                      pair.image.data().begin() + (c + 1) * plane);
        msk[c].assign(pair.mask.data().begin() + c * plane,
                      pair.mask.data().begin() + (c + 1) * plane);
    }

    if (rng.bernoulli(0.5)) {
        const int k = static_cast<int>(rng.below(4));
        for (int c = 0; c < 3; ++c) {
            img[c] = imageops::rotate90(img[c].data(), s, k);
            msk[c] = imageops::rotate90(msk[c].data(), s, k);
        }
    }
    if (rng.bernoulli(0.5))
        for (int c = 0; c < 3; ++c) {
            img[c] = imageops::flip_horizontal(img[c].data(), s, s);
            msk[c] = imageops::flip_horizontal(msk[c].data(), s, s);
        }
    if (rng.bernoulli(0.5))
        for (int c = 0; c < 3; ++c) {
            img[c] = imageops::flip_vertical(img[c].data(), s, s);
            msk[c] = imageops::flip_vertical(msk[c].data(), s, s);
        }
    if (rng.bernoulli(0.5)) {
        const double shift_x = rng.uniform(-0.0625, 0.0625) * static_cast<double>(s);
        const double shift_y = rng.uniform(-0.0625, 0.0625) * static_cast<double>(s);
        const double sc = 1.0 + rng.uniform(-0.1, 0.1);
        const double angle = rng.uniform(-45.0, 45.0);
        for (int c = 0; c < 3; ++c) {
            img[c] = imageops::warp_affine(img[c].data(), s, s, angle, sc, shift_x, shift_y, true);
            msk[c] = imageops::warp_affine(msk[c].data(), s, s, angle, sc, shift_x, shift_y, false);
        }
    }

    std::vector<float> img_out(static_cast<std::size_t>(3 * plane));
    std::vector<float> msk_out(img_out.size());
    for (int c = 0; c < 3; ++c) {
        std::copy(img[c].begin(), img[c].end(), img_out.begin() + c * plane);
        std::copy(msk[c].begin(), msk[c].end(), msk_out.begin() + c * plane);
    }
    SlicePair out;
    out.image = Tensor<float>::from_data(pair.image.shape(), std::move(img_out));
    out.mask = Tensor<float>::from_data(pair.mask.shape(), std::move(msk_out));
    return out;
}

SplitResult split_cases(std::vector<std::string> case_ids, std::array<double, 3> fractions,
                        std::uint64_t seed) {
    const double total = fractions[0] + fractions[1] + fractions[2];
    if (std::abs(total - 1.0) > 1e-9)
        throw ConfigError("split_cases: fractions sum to " + std::to_string(total) + ", not 1");
    Rng rng(derive_seed(seed, "split"));
    rng.shuffle(case_ids);
    const std::int64_t n = static_cast<std::int64_t>(case_ids.size());
    const std::int64_t n_train = static_cast<std::int64_t>(std::floor(fractions[0] * n));
    const std::int64_t n_val = static_cast<std::int64_t>(std::floor(fractions[1] * n));
    SplitResult out;
    out.train.assign(case_ids.begin(), case_ids.begin() + n_train);
    out.val.assign(case_ids.begin() + n_train, case_ids.begin() + n_train + n_val);
    out.test.assign(case_ids.begin() + n_train + n_val, case_ids.end());
    return out;
}

std::vector<std::string> list_cases(const std::filesystem::path& root) {
    if (!std::filesystem::is_directory(root))
        throw DataError("dataset root " + root.string() + " is not a directory");
    std::vector<std::string> ids;
    for (const auto& entry : std::filesystem::directory_iterator(root)) {
        if (!entry.is_directory()) continue;
        if (std::filesystem::exists(entry.path() / "seg.axtn"))
            ids.push_back(entry.path().filename().string());
    }
    std::sort(ids.begin(), ids.end());
    return ids;
}

VolumeSample load_volume(const std::filesystem::path& root, const std::string& case_id) {
    const auto dir = root / case_id;
    std::vector<std::string> missing;
    for (const char* seq : {"t1ce", "t2", "flair", "seg"})
        if (!std::filesystem::exists(dir / (std::string(seq) + ".axtn")))
            missing.push_back(seq);
    if (!missing.empty()) {
        std::string what = "case " + case_id + " is missing sequences:";
        for (const auto& m : missing) what += " " + m;
        throw DataError(what);
    }

    VolumeSample v;
    v.case_id = case_id;
    Tensor<float> seqs[3];
    for (int i = 0; i < 3; ++i) {
        seqs[i] = axtn::load<float>(dir / (std::string(kSequenceNames[i]) + ".axtn"));
        if (seqs[i].ndim() != 3)
            throw DataError("case " + case_id + ": " + kSequenceNames[i] + " must be 3-d, got " +
                            shape_str(seqs[i].shape()));
        if (i > 0 && seqs[i].shape() != seqs[0].shape())
            throw DataError("case " + case_id + ": sequence shapes disagree");
    }
    const auto& s = seqs[0].shape();
    std::vector<float> stacked;
    stacked.reserve(static_cast<std::size_t>(3 * numel(s)));
    for (int i = 0; i < 3; ++i)
        stacked.insert(stacked.end(), seqs[i].data().begin(), seqs[i].data().end());
    v.channels = Tensor<float>::from_data({3, s[0], s[1], s[2]}, std::move(stacked));
    v.labels = axtn::load<float>(dir / "seg.axtn");
    require_volume(v);
    for (const float l : v.labels.data())
        if (l != 0.0f && l != 1.0f && l != 2.0f && l != 4.0f)
            throw DataError("case " + case_id + ": unknown label value " + std::to_string(l));
    return v;
}

void write_split_manifest(const std::filesystem::path& path, const SplitResult& split) {
    nlohmann::json j;
    j["train"] = split.train;
    j["val"] = split.val;
    j["test"] = split.test;
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot write split manifest " + path.string());
    out << j.dump(2) << "\n";
}

SplitResult read_split_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read split manifest " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("split manifest " + path.string() + ": " + e.what());
    }
    SplitResult out;
    out.train = j.at("train").get<std::vector<std::string>>();
    out.val = j.at("val").get<std::vector<std::string>>();
    out.test = j.at("test").get<std::vector<std::string>>();
    return out;
}

namespace {

void process_case(const std::filesystem::path& root, const std::string& case_id,
                  const PreprocessOptions& opts, const std::filesystem::path& cache,
                  std::int64_t& slices_out, std::ostream* log) {
    auto v = load_volume(root, case_id);
    v.meta.retained_slices = select_slices(v, opts.tumor_threshold);
    if (v.meta.retained_slices.empty()) {
        if (log) *log << "  " << case_id << ": 0 slices kept\n";
        return;
    }
    const auto cropped = crop_to_brain(v, opts.fixed_crop);
    for (const auto k : cropped.meta.retained_slices) {
        const std::int64_t h = cropped.channels.dim(1), w = cropped.channels.dim(2);
        std::vector<float> img(static_cast<std::size_t>(3 * h * w));
        for (int c = 0; c < 3; ++c) {
            auto plane = minmax_normalize(channel_slice(cropped, c, k));
            std::copy(plane.data().begin(), plane.data().end(), img.begin() + c * h * w);
        }
        const auto regions = compose_regions(label_slice(cropped, k));
        std::vector<float> msk(img.size());
        std::copy(regions.wt.data().begin(), regions.wt.data().end(), msk.begin());
        std::copy(regions.tc.data().begin(), regions.tc.data().end(), msk.begin() + h * w);
        std::copy(regions.et.data().begin(), regions.et.data().end(), msk.begin() + 2 * h * w);

        const auto pair =
            resize_pair(Tensor<float>::from_data({3, h, w}, std::move(img)),
                        Tensor<float>::from_data({3, h, w}, std::move(msk)), opts.resize);
        const std::string stem = case_id + "_" + std::to_string(k);
        axtn::save(cache / (stem + "_img.axtn"), pair.image);
        axtn::save(cache / (stem + "_msk.axtn"), pair.mask);
        ++slices_out;
    }
    if (log)
        *log << "  " << case_id << ": " << cropped.meta.retained_slices.size()
             << " slices kept, crop " << cropped.meta.crop.height << "x"
             << cropped.meta.crop.width << "\n";
}

}  // namespace

PartitionCounts preprocess_dataset(const std::filesystem::path& root, const SplitResult& split,
                                   const PreprocessOptions& opts, std::ostream* log) {
    const auto cache = root / "slices";
    std::filesystem::create_directories(cache);
    PartitionCounts counts;
    struct Part {
        const std::vector<std::string>* ids;
        std::int64_t* count;
        const char* name;
    };
    const Part parts[3] = {{&split.train, &counts.train, "train"},
                           {&split.val, &counts.val, "val"},
                           {&split.test, &counts.test, "test"}};
    for (const auto& part : parts) {
        if (log) *log << part.name << ":\n";
        for (const auto& id : *part.ids) process_case(root, id, opts, cache, *part.count, log);
    }
    return counts;
}

std::vector<SliceSample> load_slices(const std::filesystem::path& root,
                                     const std::vector<std::string>& case_ids) {
    const auto cache = root / "slices";
    if (!std::filesystem::is_directory(cache))
        throw DataError("slice cache " + cache.string() + " does not exist; run preprocess first");
    std::set<std::string> wanted(case_ids.begin(), case_ids.end());
    std::vector<SliceSample> out;
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(cache)) {
        const auto name = entry.path().filename().string();
        if (name.size() > 9 && name.substr(name.size() - 9) == "_img.axtn")
            files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& img_path : files) {
        const auto name = img_path.filename().string();
        const std::string stem = name.substr(0, name.size() - 9);
        const auto us = stem.rfind('_');
        if (us == std::string::npos) continue;
        const std::string case_id = stem.substr(0, us);
        if (!wanted.count(case_id)) continue;
        SliceSample s;
        s.case_id = case_id;
        s.slice_index = std::stoll(stem.substr(us + 1));
        s.image = axtn::load<float>(img_path);
        s.mask = axtn::load<float>(img_path.parent_path() / (stem + "_msk.axtn"));
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace axunet
