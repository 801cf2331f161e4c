#include "axunet/config.hpp"

#include <fstream>
#include <set>

namespace axunet {

namespace {

using nlohmann::json;

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
    if (!j.is_object()) throw ConfigError("config: section \"" + where + "\" must be an object");
    for (const auto& [key, value] : j.items())
        if (!known.count(key))
            throw ConfigError("config: unknown key \"" + key + "\" in section \"" + where + "\"");
}

template <typename T>
void read_into(const json& j, const char* key, T& out) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError("config: key \"" + std::string(key) + "\" has the wrong type");
    }
}

}  // namespace

RunConfig RunConfig::from_json(const json& j) {
    reject_unknown(j, {"data", "model", "train", "io"}, "<top>");
    RunConfig cfg;
    if (j.contains("data")) {
        const auto& d = j.at("data");
        reject_unknown(d, {"root", "fixed_crop", "tumor_threshold", "resize"}, "data");
        std::string root = cfg.data.root.string();
        read_into(d, "root", root);
        cfg.data.root = root;
        if (d.contains("fixed_crop")) {
            if (!d.at("fixed_crop").is_array() || d.at("fixed_crop").size() != 2)
                throw ConfigError("config: data.fixed_crop must be [height, width]");
            cfg.data.fixed_crop = {{d.at("fixed_crop")[0].get<std::int64_t>(),
                                    d.at("fixed_crop")[1].get<std::int64_t>()}};
        }
        read_into(d, "tumor_threshold", cfg.data.tumor_threshold);
        read_into(d, "resize", cfg.data.resize);
    }
    if (j.contains("model")) {
        const auto& m = j.at("model");
        reject_unknown(m,
                       {"width_multiplier", "middle_repeats", "attention_reduction",
                        "combine_mode", "attention_enabled"},
                       "model");
        read_into(m, "width_multiplier", cfg.model.width_multiplier);
        read_into(m, "middle_repeats", cfg.model.middle_repeats);
        read_into(m, "attention_reduction", cfg.model.attention_reduction);
        read_into(m, "combine_mode", cfg.model.combine_mode);
        read_into(m, "attention_enabled", cfg.model.attention_enabled);
    }
    if (j.contains("train")) {
        const auto& t = j.at("train");
        reject_unknown(t, {"lr0", "epochs", "batch_size", "seed", "augment", "smooth_eps"},
                       "train");
        read_into(t, "lr0", cfg.train.lr0);
        read_into(t, "epochs", cfg.train.epochs);
        read_into(t, "batch_size", cfg.train.batch_size);
        read_into(t, "seed", cfg.train.seed);
        read_into(t, "augment", cfg.train.augment);
        read_into(t, "smooth_eps", cfg.train.smooth_eps);
    }
    if (j.contains("io")) {
        const auto& io = j.at("io");
        reject_unknown(io, {"checkpoint_dir", "report_path"}, "io");
        std::string ckpt = cfg.io.checkpoint_dir.string(), report = cfg.io.report_path.string();
        read_into(io, "checkpoint_dir", ckpt);
        read_into(io, "report_path", report);
        cfg.io.checkpoint_dir = ckpt;
        cfg.io.report_path = report;
    }
    // the model consumes slices at the preprocessing resolution
    cfg.model.input_size = cfg.data.resize;
    cfg.validate();
    return cfg;
}

RunConfig RunConfig::from_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError("config: " + path.string() + " is not valid JSON: " + e.what());
    }
    return from_json(j);
}

json RunConfig::to_json() const {
    json j;
    j["data"]["root"] = data.root.string();
    if (data.fixed_crop)
        j["data"]["fixed_crop"] = {(*data.fixed_crop)[0], (*data.fixed_crop)[1]};
    j["data"]["tumor_threshold"] = data.tumor_threshold;
    j["data"]["resize"] = data.resize;
    j["model"]["width_multiplier"] = model.width_multiplier;
    j["model"]["middle_repeats"] = model.middle_repeats;
    j["model"]["attention_reduction"] = model.attention_reduction;
    j["model"]["combine_mode"] = model.combine_mode;
    j["model"]["attention_enabled"] = model.attention_enabled;
    j["train"]["lr0"] = train.lr0;
    j["train"]["epochs"] = train.epochs;
    j["train"]["batch_size"] = train.batch_size;
    j["train"]["seed"] = train.seed;
    j["train"]["augment"] = train.augment;
    j["train"]["smooth_eps"] = train.smooth_eps;
    j["io"]["checkpoint_dir"] = io.checkpoint_dir.string();
    j["io"]["report_path"] = io.report_path.string();
    return j;
}

void RunConfig::validate() const {
    model.validate();
    if (train.lr0 <= 0.0) throw ConfigError("config: train.lr0 must be > 0");
    if (train.epochs < 1) throw ConfigError("config: train.epochs must be >= 1");
    if (train.batch_size < 1) throw ConfigError("config: train.batch_size must be >= 1");
    if (train.smooth_eps <= 0.0) throw ConfigError("config: train.smooth_eps must be > 0");
    if (data.tumor_threshold < 0.0 || data.tumor_threshold > 1.0)
        throw ConfigError("config: data.tumor_threshold must lie in [0,1]");
    if (data.resize < 32 || data.resize % 32 != 0)
        throw ConfigError("config: data.resize must be a positive multiple of 32");
}

}  // namespace axunet
