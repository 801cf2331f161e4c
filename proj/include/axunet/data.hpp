#pragma once

// Volume I/O and the preprocessing pipeline: slice selection by tumor
// fraction, brain-box cropping, per-slice min-max normalization, region mask
// composition (WT/TC/ET from raw labels {0,1,2,4}), resizing, paired
// augmentation and the case-level dataset split.
//
// On-disk layout:
//   <root>/<case_id>/{t1ce,t2,flair,seg}.axtn     3-d [H,W,D] f32 volumes
//   <root>/slices/<case>_<k>_{img,msk}.axtn       3x S x S slice cache
//   <root>/split.json                             case ids per partition

#include <array>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "axunet/tensor.hpp"

namespace axunet {

struct CropRect {
    std::int64_t row0 = 0, col0 = 0, height = 0, width = 0;
};

struct VolumeMeta {
    CropRect crop;
    std::vector<std::int64_t> retained_slices;
};

struct VolumeSample {
    std::string case_id;
    Tensor<float> channels;  // [3,H,W,D]: T1CE, T2, FLAIR
    Tensor<float> labels;    // [H,W,D], integer values {0,1,2,4} stored as f32
    VolumeMeta meta;
};

// Binary planes with the nesting ET <= TC <= WT (holds for data-derived
// masks; model predictions are thresholded independently per channel).
struct RegionMask {
    Tensor<float> wt, tc, et;  // [H,W] each
};

struct SlicePair {
    Tensor<float> image;  // [3,S,S] in [0,1]
    Tensor<float> mask;   // [3,S,S] binary, channels WT, TC, ET
};

struct SliceSample {
    std::string case_id;
    std::int64_t slice_index = 0;
    Tensor<float> image, mask;
};

struct SplitResult {
    std::vector<std::string> train, val, test;
};

// --- volume helpers ---------------------------------------------------------

Tensor<float> channel_slice(const VolumeSample& v, int channel, std::int64_t k);  // [H,W]
Tensor<float> label_slice(const VolumeSample& v, std::int64_t k);                 // [H,W]

// --- preprocessing operations ----------------------------------------------

// Keep slice k iff count(labels[:,:,k] != 0) / (H*W) >= threshold.
std::vector<std::int64_t> select_slices(const VolumeSample& v, double threshold = 0.007);

// Tight bounding box over nonzero voxels of any channel across the retained
// slices (all slices when none are marked). With fixed dims the box is
// centered and zero-padded/cropped to them. The rect lands in meta.crop.
VolumeSample crop_to_brain(const VolumeSample& v,
                           std::optional<std::array<std::int64_t, 2>> fixed = std::nullopt);

// (x - min) / (max - min) per plane; a constant plane maps to zeros.
Tensor<float> minmax_normalize(const Tensor<float>& plane);

// et = (l==4); tc = (l==1)|(l==4); wt = (l==1)|(l==2)|(l==4)
RegionMask compose_regions(const Tensor<float>& labels_plane);

// Bilinear for the image channels, nearest for masks; nesting re-asserted.
SlicePair resize_pair(const Tensor<float>& image3, const Tensor<float>& mask3,
                      std::int64_t out_size);

// rotate90 (p=0.5, k uniform), hflip (p=0.5), vflip (p=0.5), then
// shift-scale-rotate (p=0.5; shift +-6.25%, scale +-10%, rotate +-45 deg).
// The same geometric transform hits image (bilinear) and mask (nearest).
SlicePair augment(const SlicePair& pair, std::uint64_t seed);

// Seeded shuffle, then partition by case: floor(f*n) for train and val, the
// remainder to test. Fractions must sum to 1 within 1e-9.
SplitResult split_cases(std::vector<std::string> case_ids,
                        std::array<double, 3> fractions = {0.8, 0.1, 0.1},
                        std::uint64_t seed = 0);

// --- dataset I/O -------------------------------------------------------------

std::vector<std::string> list_cases(const std::filesystem::path& root);
VolumeSample load_volume(const std::filesystem::path& root, const std::string& case_id);

void write_split_manifest(const std::filesystem::path& path, const SplitResult& split);
SplitResult read_split_manifest(const std::filesystem::path& path);

struct PreprocessOptions {
    double tumor_threshold = 0.007;
    std::optional<std::array<std::int64_t, 2>> fixed_crop;
    std::int64_t resize = 224;
};

struct PartitionCounts {
    std::int64_t train = 0, val = 0, test = 0;
};

// Runs the full pipeline for every case in the split and writes the slice
// cache under <root>/slices. Returns kept-slice counts per partition.
PartitionCounts preprocess_dataset(const std::filesystem::path& root, const SplitResult& split,
                                   const PreprocessOptions& opts, std::ostream* log = nullptr);

std::vector<SliceSample> load_slices(const std::filesystem::path& root,
                                     const std::vector<std::string>& case_ids);

}  // namespace axunet
