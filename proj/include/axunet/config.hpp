#pragma once

// Run configuration: one JSON document with data/model/train/io sections.
// Unknown keys are rejected; every key has a documented default (see README).

#include <array>
#include <filesystem>
#include <optional>
#include <string>

#include "axunet/model.hpp"
#include "json.hpp"

namespace axunet {

struct DataSection {
    std::filesystem::path root = "dataset";
    std::optional<std::array<std::int64_t, 2>> fixed_crop;  // unset: tight per-volume box
    double tumor_threshold = 0.007;
    std::int64_t resize = 224;
};

struct TrainSection {
    double lr0 = 1e-4;
    int epochs = 40;
    int batch_size = 8;  // desk-scale default; 64 is the full-scale setting
    std::uint64_t seed = 0;
    bool augment = true;
    double smooth_eps = 1e-6;
};

struct IoSection {
    std::filesystem::path checkpoint_dir = "checkpoints";
    std::filesystem::path report_path = "report.json";
};

struct RunConfig {
    DataSection data;
    ModelConfig model;
    TrainSection train;
    IoSection io;

    static RunConfig from_json(const nlohmann::json& j);
    static RunConfig from_file(const std::filesystem::path& path);
    nlohmann::json to_json() const;
    void validate() const;
};

}  // namespace axunet
