#include "axunet/train.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "axunet/losses.hpp"

namespace axunet {

namespace {

// stacks samples [first, last) into one [B,3,S,S] batch, augmenting when a
// seed stream is provided
Tensor<float> stack_images(const std::vector<SliceSample>& set,
                           const std::vector<std::size_t>& order, std::size_t first,
                           std::size_t last, bool augmented, std::uint64_t base_seed,
                           std::int64_t epoch, Tensor<float>* masks_out) {
    const auto& shape = set[order[first]].image.shape();
    const std::int64_t plane = shape[1] * shape[2];
    const std::int64_t b = static_cast<std::int64_t>(last - first);
    std::vector<float> img(static_cast<std::size_t>(b * 3 * plane));
    std::vector<float> msk(img.size());
    for (std::size_t i = first; i < last; ++i) {
        const auto& s = set[order[i]];
        const float* im;
        const float* mk;
        SlicePair aug;
        if (augmented) {
            SlicePair in;
            in.image = s.image;
            in.mask = s.mask;
            aug = augment(in, derive_seed(base_seed, "augment",
                                          static_cast<std::uint64_t>(epoch) * 1000003ull +
                                              static_cast<std::uint64_t>(order[i])));
            im = aug.image.data().data();
            mk = aug.mask.data().data();
        } else {
            im = s.image.data().data();
            mk = s.mask.data().data();
        }
        std::copy_n(im, 3 * plane, img.data() + (i - first) * 3 * plane);
        std::copy_n(mk, 3 * plane, msk.data() + (i - first) * 3 * plane);
    }
    *masks_out = Tensor<float>::from_data({b, 3, shape[1], shape[2]}, std::move(msk));
    return Tensor<float>::from_data({b, 3, shape[1], shape[2]}, std::move(img));
}

struct RegionTally {
    double inter = 0.0, pred = 0.0, gt = 0.0;

    double dice() const {
        if (pred + gt == 0.0) return 1.0;
        return 2.0 * inter / (pred + gt);
    }
};

}  // namespace

EvalReport evaluate(const AXUNet<float>& model, const std::vector<SliceSample>& samples) {
    if (samples.empty()) throw DataError("evaluate: empty sample set");
    NoGradGuard ng;

    std::map<std::string, std::array<RegionTally, 3>> cases;  // ordered by case id
    for (const auto& s : samples) {
        auto batch = reshape(s.image, {1, 3, s.image.dim(1), s.image.dim(2)});
        auto pred = predict_mask_tensor(model.forward(batch), 0.5);
        auto& tally = cases[s.case_id];
        const std::int64_t plane = s.image.dim(1) * s.image.dim(2);
        const auto pd = pred.data();
        const auto gd = s.mask.data();
        for (int c = 0; c < 3; ++c)
            for (std::int64_t i = 0; i < plane; ++i) {
                const float p = pd[c * plane + i], g = gd[c * plane + i];
                tally[c].inter += p * g;
                tally[c].pred += p;
                tally[c].gt += g;
            }
    }

    EvalReport report;
    for (const auto& [case_id, tally] : cases) {
        CaseScore cs;
        cs.case_id = case_id;
        cs.scores.wt = tally[0].dice();
        cs.scores.tc = tally[1].dice();
        cs.scores.et = tally[2].dice();
        report.per_case.push_back(std::move(cs));
    }
    const double n = static_cast<double>(report.per_case.size());
    for (const auto& cs : report.per_case) {
        report.aggregate.wt += cs.scores.wt / n;
        report.aggregate.tc += cs.scores.tc / n;
        report.aggregate.et += cs.scores.et / n;
    }
    return report;
}

nlohmann::json report_to_json(const EvalReport& report) {
    nlohmann::json j;
    j["per_case"] = nlohmann::json::array();
    for (const auto& cs : report.per_case)
        j["per_case"].push_back({{"case_id", cs.case_id},
                                 {"wt", cs.scores.wt},
                                 {"tc", cs.scores.tc},
                                 {"et", cs.scores.et},
                                 {"mean", cs.scores.mean()}});
    j["aggregate"] = {{"wt", report.aggregate.wt},
                      {"tc", report.aggregate.tc},
                      {"et", report.aggregate.et},
                      {"mean", report.mean_dice()}};
    return j;
}

std::string report_table(const EvalReport& report) {
    std::ostringstream out;
    char line[128];
    out << "case                     WT      TC      ET    mean\n";
    auto row = [&](const std::string& name, const RegionScores& s) {
        std::snprintf(line, sizeof(line), "%-20s %7.2f %7.2f %7.2f %7.2f\n", name.c_str(),
                      100.0 * s.wt, 100.0 * s.tc, 100.0 * s.et, 100.0 * s.mean());
        out << line;
    };
    for (const auto& cs : report.per_case) row(cs.case_id, cs.scores);
    row("aggregate", report.aggregate);
    return out.str();
}

TrainResult train(AXUNet<float>& model, const std::vector<SliceSample>& train_set,
                  const std::vector<SliceSample>& val_set, const RunConfig& cfg,
                  std::ostream* log) {
    if (train_set.empty()) throw DataError("train: empty training set");
    if (val_set.empty()) throw DataError("train: empty validation set");

    auto params = model.named_parameters();
    AdamState<float> adam;
    adam.init(params);
    Rng shuffle_rng(derive_seed(cfg.train.seed, "shuffle"));

    std::vector<std::size_t> order(train_set.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    TrainResult result;
    const std::size_t bs = static_cast<std::size_t>(cfg.train.batch_size);
    for (int epoch = 0; epoch < cfg.train.epochs; ++epoch) {
        const double lr = cosine_lr(epoch, cfg.train.lr0, cfg.train.epochs);
        shuffle_rng.shuffle(order);
        double epoch_loss = 0.0;
        std::size_t batches = 0;
        for (std::size_t first = 0; first < order.size(); first += bs, ++batches) {
            const std::size_t last = std::min(first + bs, order.size());
            Tensor<float> masks;
            auto images = stack_images(train_set, order, first, last, cfg.train.augment,
                                       cfg.train.seed, epoch, &masks);
            zero_gradients(params);
            try {
                auto loss = bce_dice_loss(model.forward(images), masks, cfg.train.smooth_eps);
                epoch_loss += static_cast<double>(loss.item());
                loss.backward();
            } catch (const NumericError& e) {
                throw NumericError("training aborted at epoch " + std::to_string(epoch) +
                                   ", batch " + std::to_string(batches) + ": " + e.what());
            }
            adam_step(params, adam, lr);
        }
        epoch_loss /= static_cast<double>(batches);

        const double val_dice = evaluate(model, val_set).mean_dice();
        result.epoch_losses.push_back(epoch_loss);
        result.val_dices.push_back(val_dice);
        if (log) {
            char line[160];
            std::snprintf(line, sizeof(line),
                          "epoch %3d  lr %.3e  train_loss %.5f  val_dice %.4f\n", epoch, lr,
                          epoch_loss, val_dice);
            *log << line << std::flush;
        }
        if (val_dice > result.best_val_dice || result.best_epoch < 0) {
            result.best_val_dice = val_dice;
            result.best_epoch = epoch;
            save_checkpoint(cfg.io.checkpoint_dir, model, &adam, cfg, epoch, val_dice);
        }
    }
    return result;
}

}  // namespace axunet
