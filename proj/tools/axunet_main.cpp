// axunet command-line tool: synth, preprocess, train, eval, predict, gradcam.
//
// Exit codes: 0 ok, 2 bad arguments/config, 3 data error, 4 numeric failure.
// Errors print a single machine-parsable line to stderr: "E<code>: message".

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "axunet/axtn.hpp"
#include "axunet/config.hpp"
#include "axunet/gradcam.hpp"
#include "axunet/synth.hpp"
#include "axunet/train.hpp"

namespace fs = std::filesystem;

namespace {

struct SynthArgs {
    std::string out;
    std::int64_t cases = 4;
    std::string dims = "240x240x155";
    std::uint64_t seed = 0;
    bool force = false;
};

std::array<std::int64_t, 3> parse_dims(const std::string& spec) {
    std::array<std::int64_t, 3> dims{};
    char sep1 = 0, sep2 = 0;
    std::istringstream in(spec);
    if (!(in >> dims[0] >> sep1 >> dims[1] >> sep2 >> dims[2]) || sep1 != 'x' || sep2 != 'x' ||
        !in.eof())
        throw axunet::ConfigError("dims must look like 240x240x155, got \"" + spec + "\"");
    return dims;
}

int region_index(const std::string& name) {
    if (name == "wt") return 0;
    if (name == "tc") return 1;
    if (name == "et") return 2;
    throw axunet::ConfigError("region must be wt, tc or et, got \"" + name + "\"");
}

const std::vector<std::string>& split_part(const axunet::SplitResult& split,
                                           const std::string& name) {
    if (name == "train") return split.train;
    if (name == "val") return split.val;
    if (name == "test") return split.test;
    throw axunet::ConfigError("split must be train, val or test, got \"" + name + "\"");
}

int run_synth(const SynthArgs& args) {
    const fs::path out(args.out);
    if (fs::exists(out) && !fs::is_empty(out) && !args.force)
        throw axunet::DataError("output directory " + out.string() +
                                " is not empty; pass --force to overwrite");
    axunet::SynthOptions opts;
    opts.cases = args.cases;
    opts.dims = parse_dims(args.dims);
    opts.seed = args.seed;
    const auto stats = axunet::synth_generate(out, opts);
    for (const auto& cs : stats)
        std::printf("%s  tumor_voxels %lld  central_slice_tumor_fraction %.5f\n",
                    cs.case_id.c_str(), static_cast<long long>(cs.tumor_voxels),
                    cs.central_slice_tumor_fraction);
    std::printf("wrote %zu cases to %s\n", stats.size(), out.string().c_str());
    return 0;
}

int run_preprocess(const std::string& config_path) {
    const auto cfg = axunet::RunConfig::from_file(config_path);
    const auto ids = axunet::list_cases(cfg.data.root);
    if (ids.empty())
        throw axunet::DataError("no cases found under " + cfg.data.root.string());
    const auto split = axunet::split_cases(ids, {0.8, 0.1, 0.1}, cfg.train.seed);
    axunet::write_split_manifest(cfg.data.root / "split.json", split);

    axunet::PreprocessOptions opts;
    opts.tumor_threshold = cfg.data.tumor_threshold;
    opts.fixed_crop = cfg.data.fixed_crop;
    opts.resize = cfg.data.resize;
    const auto counts = axunet::preprocess_dataset(cfg.data.root, split, opts, &std::cout);
    std::printf("slices: train %lld, val %lld, test %lld\n",
                static_cast<long long>(counts.train), static_cast<long long>(counts.val),
                static_cast<long long>(counts.test));
    return 0;
}

int run_train(const std::string& config_path) {
    const auto cfg = axunet::RunConfig::from_file(config_path);
    const auto split = axunet::read_split_manifest(cfg.data.root / "split.json");
    const auto train_set = axunet::load_slices(cfg.data.root, split.train);
    const auto val_set = axunet::load_slices(cfg.data.root, split.val);
    axunet::AXUNet<float> model(cfg.model, cfg.train.seed);
    const auto result = axunet::train(model, train_set, val_set, cfg, &std::cout);
    std::printf("best val_dice %.4f at epoch %d; checkpoint in %s\n", result.best_val_dice,
                result.best_epoch, cfg.io.checkpoint_dir.string().c_str());
    return 0;
}

int run_eval(const std::string& checkpoint, const std::string& split_name,
             const std::string& out_override) {
    auto [model, meta] = axunet::load_checkpoint(checkpoint);
    const auto& cfg = meta.run_config;
    const auto split = axunet::read_split_manifest(cfg.data.root / "split.json");
    const auto samples = axunet::load_slices(cfg.data.root, split_part(split, split_name));
    const auto report = axunet::evaluate(model, samples);
    std::cout << axunet::report_table(report);
    const fs::path out = out_override.empty() ? cfg.io.report_path : fs::path(out_override);
    std::ofstream json_out(out, std::ios::trunc);
    if (!json_out) throw axunet::DataError("cannot write report to " + out.string());
    json_out << axunet::report_to_json(report).dump(2) << "\n";
    std::printf("report written to %s\n", out.string().c_str());
    return 0;
}

int run_predict(const std::string& checkpoint, const std::string& input, const std::string& out,
                double threshold) {
    auto [model, meta] = axunet::load_checkpoint(checkpoint);
    auto img = axunet::axtn::load<float>(input);
    if (img.ndim() != 3 || img.dim(0) != 3)
        throw axunet::DataError("predict: input must be a [3,S,S] slice, got " +
                                axunet::shape_str(img.shape()));
    axunet::NoGradGuard ng;
    auto batch = axunet::reshape(img, {1, 3, img.dim(1), img.dim(2)});
    auto mask = axunet::predict_mask_tensor(model.forward(batch), threshold);
    auto flat = axunet::reshape(mask, {3, img.dim(1), img.dim(2)});
    axunet::axtn::save(out, flat);
    const auto md = flat.data();
    const std::int64_t plane = img.dim(1) * img.dim(2);
    const char* names[3] = {"wt", "tc", "et"};
    for (int c = 0; c < 3; ++c) {
        std::int64_t fg = 0;
        for (std::int64_t i = 0; i < plane; ++i) fg += md[c * plane + i] != 0.0f;
        std::printf("%s foreground pixels: %lld\n", names[c], static_cast<long long>(fg));
    }
    std::printf("mask written to %s\n", out.c_str());
    return 0;
}

int run_gradcam(const std::string& checkpoint, const std::string& input,
                const std::string& layer, const std::string& region, const std::string& out) {
    auto [model, meta] = axunet::load_checkpoint(checkpoint);
    auto img = axunet::axtn::load<float>(input);
    if (img.ndim() != 3 || img.dim(0) != 3)
        throw axunet::DataError("gradcam: input must be a [3,S,S] slice, got " +
                                axunet::shape_str(img.shape()));
    axunet::GradCamRequest req;
    req.layer = layer;
    req.region = region_index(region);
    auto batch = axunet::reshape(img, {1, 3, img.dim(1), img.dim(2)});
    const auto heat = axunet::gradcam(model, batch, req);
    axunet::write_ppm(out, axunet::overlay(img, heat));
    std::printf("overlay written to %s\n", out.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"AXUNet segmentation toolkit"};
    app.require_subcommand(1);

    SynthArgs synth_args;
    auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
    synth->add_option("--out", synth_args.out, "output dataset directory")->required();
    synth->add_option("--cases", synth_args.cases, "number of cases")
        ->check(CLI::PositiveNumber);
    synth->add_option("--dims", synth_args.dims, "volume dims HxWxD (default 240x240x155)");
    synth->add_option("--seed", synth_args.seed, "generator seed");
    synth->add_flag("--force", synth_args.force, "overwrite a non-empty output directory");

    std::string config_path;
    auto* preprocess = app.add_subcommand("preprocess", "split cases and build the slice cache");
    preprocess->add_option("--config", config_path, "run configuration JSON")->required();

    std::string train_config;
    auto* train = app.add_subcommand("train", "train a model from the slice cache");
    train->add_option("--config", train_config, "run configuration JSON")->required();

    std::string eval_ckpt, eval_split = "test", eval_out;
    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a split");
    eval->add_option("--checkpoint", eval_ckpt, "checkpoint directory")->required();
    eval->add_option("--split", eval_split, "train, val or test (default test)");
    eval->add_option("--out", eval_out, "report JSON path (default from the checkpoint config)");

    std::string pred_ckpt, pred_in, pred_out;
    double pred_threshold = 0.5;
    auto* predict = app.add_subcommand("predict", "predict region masks for one slice");
    predict->add_option("--checkpoint", pred_ckpt, "checkpoint directory")->required();
    predict->add_option("--input", pred_in, "input image slice (.axtn, [3,S,S])")->required();
    predict->add_option("--out", pred_out, "output mask (.axtn, [3,S,S])")->required();
    predict->add_option("--threshold", pred_threshold, "sigmoid threshold (default 0.5)");

    std::string cam_ckpt, cam_in, cam_layer = "head", cam_region = "wt", cam_out;
    auto* cam = app.add_subcommand("gradcam", "write a Grad-CAM overlay for one slice");
    cam->add_option("--checkpoint", cam_ckpt, "checkpoint directory")->required();
    cam->add_option("--input", cam_in, "input image slice (.axtn, [3,S,S])")->required();
    cam->add_option("--layer", cam_layer, "traced layer (default head)");
    cam->add_option("--region", cam_region, "wt, tc or et (default wt)");
    cam->add_option("--out", cam_out, "output overlay (.ppm)")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        std::cerr << "E2: " << e.what() << "\n";
        return 2;
    }

    try {
        if (synth->parsed()) return run_synth(synth_args);
        if (preprocess->parsed()) return run_preprocess(config_path);
        if (train->parsed()) return run_train(train_config);
        if (eval->parsed()) return run_eval(eval_ckpt, eval_split, eval_out);
        if (predict->parsed()) return run_predict(pred_ckpt, pred_in, pred_out, pred_threshold);
        if (cam->parsed()) return run_gradcam(cam_ckpt, cam_in, cam_layer, cam_region, cam_out);
    } catch (const axunet::ConfigError& e) {
        std::cerr << "E2: " << e.what() << "\n";
        return 2;
    } catch (const axunet::DataError& e) {
        std::cerr << "E3: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "E4: " << e.what() << "\n";
        return 4;
    }
    return 0;
}
