#pragma once

// Synthetic dataset generator for desk-scale runs: an ellipsoidal brain with
// nested noisy tumor shells labeled PE(2) > NCR(1) > ET(4), and per-channel
// intensity contrasts chosen so each region is recoverable from local
// intensities. Writes the dataset layout consumed by the preprocessing
// pipeline.

#include <array>
#include <filesystem>
#include <string>
#include <vector>

namespace axunet {

struct SynthOptions {
    std::int64_t cases = 4;
    std::array<std::int64_t, 3> dims{240, 240, 155};  // H, W, D
    std::uint64_t seed = 0;
};

struct SynthCaseStats {
    std::string case_id;
    std::int64_t tumor_voxels = 0;
    double central_slice_tumor_fraction = 0.0;
};

std::vector<SynthCaseStats> synth_generate(const std::filesystem::path& out_root,
                                           const SynthOptions& opts);

}  // namespace axunet
