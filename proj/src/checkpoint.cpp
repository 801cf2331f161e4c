#include "axunet/checkpoint.hpp"

#include <fstream>

#include "axunet/axtn.hpp"

namespace axunet {

namespace {

using nlohmann::json;

json read_manifest(const std::filesystem::path& dir) {
    std::ifstream in(dir / "manifest.json");
    if (!in) throw DataError("checkpoint: cannot open " + (dir / "manifest.json").string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw DataError("checkpoint: bad manifest in " + dir.string() + ": " + e.what());
    }
    return j;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& dir, AXUNet<float>& model,
                     const AdamState<float>* opt, const RunConfig& run_config, int epoch,
                     double best_val_dice) {
    std::filesystem::create_directories(dir / "params");
    if (opt) std::filesystem::create_directories(dir / "optim");

    auto params = model.named_parameters();
    json manifest;
    manifest["format"] = 1;
    manifest["run_config"] = run_config.to_json();
    manifest["epoch"] = epoch;
    manifest["best_val_dice"] = best_val_dice;
    std::vector<std::string> names;
    names.reserve(params.size());
    for (const auto& p : params) names.push_back(p.name);
    manifest["params"] = names;
    manifest["adam"] = opt ? json{{"step", opt->step_count}} : json(nullptr);

    std::ofstream out(dir / "manifest.json", std::ios::trunc);
    if (!out) throw DataError("checkpoint: cannot write " + (dir / "manifest.json").string());
    out << manifest.dump(2) << "\n";
    out.close();

    for (std::size_t i = 0; i < params.size(); ++i) {
        axtn::save<float>(dir / "params" / (params[i].name + ".axtn"), params[i].tensor->shape(),
                          params[i].tensor->data());
        if (opt) {
            const Shape& s = params[i].tensor->shape();
            axtn::save<float>(dir / "optim" / (params[i].name + ".m.axtn"), s, opt->m[i]);
            axtn::save<float>(dir / "optim" / (params[i].name + ".v.axtn"), s, opt->v[i]);
        }
    }
}

CheckpointMeta read_checkpoint_meta(const std::filesystem::path& dir) {
    const json manifest = read_manifest(dir);
    CheckpointMeta meta;
    try {
        if (manifest.at("format").get<int>() != 1)
            throw DataError("checkpoint: unsupported manifest format in " + dir.string());
        meta.run_config = RunConfig::from_json(manifest.at("run_config"));
        meta.epoch = manifest.at("epoch").get<int>();
        meta.best_val_dice = manifest.at("best_val_dice").get<double>();
        meta.has_optimizer = !manifest.at("adam").is_null();
    } catch (const json::exception& e) {
        throw DataError("checkpoint: manifest in " + dir.string() + " is incomplete: " + e.what());
    }
    return meta;
}

void load_checkpoint_into(const std::filesystem::path& dir, AXUNet<float>& model,
                          AdamState<float>* opt) {
    const json manifest = read_manifest(dir);
    const auto names = manifest.at("params").get<std::vector<std::string>>();
    auto params = model.named_parameters();
    if (names.size() != params.size())
        throw ConfigError("checkpoint: architecture mismatch, manifest lists " +
                          std::to_string(names.size()) + " parameters but the model has " +
                          std::to_string(params.size()));
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i].name != names[i])
            throw ConfigError("checkpoint: architecture mismatch at parameter " +
                              std::to_string(i) + ": manifest says \"" + names[i] +
                              "\", model has \"" + params[i].name + "\"");
        auto t = axtn::load<float>(dir / "params" / (names[i] + ".axtn"));
        if (t.shape() != params[i].tensor->shape())
            throw ConfigError("checkpoint: shape mismatch for " + names[i] + ": file " +
                              shape_str(t.shape()) + ", model " +
                              shape_str(params[i].tensor->shape()));
        auto& dst = params[i].tensor->leaf_data();
        std::copy(t.data().begin(), t.data().end(), dst.begin());
    }
    if (opt) {
        if (manifest.at("adam").is_null())
            throw DataError("checkpoint: no optimizer state in " + dir.string());
        opt->init(params);
        opt->step_count = manifest.at("adam").at("step").get<std::int64_t>();
        for (std::size_t i = 0; i < params.size(); ++i) {
            auto m = axtn::load<float>(dir / "optim" / (names[i] + ".m.axtn"));
            auto v = axtn::load<float>(dir / "optim" / (names[i] + ".v.axtn"));
            std::copy(m.data().begin(), m.data().end(), opt->m[i].begin());
            std::copy(v.data().begin(), v.data().end(), opt->v[i].begin());
        }
    }
}

std::pair<AXUNet<float>, CheckpointMeta> load_checkpoint(const std::filesystem::path& dir) {
    CheckpointMeta meta = read_checkpoint_meta(dir);
    AXUNet<float> model(meta.run_config.model, meta.run_config.train.seed);
    load_checkpoint_into(dir, model);
    return {std::move(model), std::move(meta)};
}

}  // namespace axunet
