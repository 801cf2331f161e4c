#pragma once

// Training driver (Adam + cosine annealing, best-on-validation checkpointing)
// and case-level Dice evaluation.

#include <ostream>
#include <string>
#include <vector>

#include "axunet/checkpoint.hpp"
#include "axunet/data.hpp"

namespace axunet {

struct RegionScores {
    double wt = 0.0, tc = 0.0, et = 0.0;
    double mean() const { return (wt + tc + et) / 3.0; }
};

struct CaseScore {
    std::string case_id;
    RegionScores scores;
};

// Per-case Dice (voxels pooled within a case), averaged over cases per
// region; the mean is the arithmetic mean of the three region scores.
struct EvalReport {
    std::vector<CaseScore> per_case;
    RegionScores aggregate;
    double mean_dice() const { return aggregate.mean(); }
};

EvalReport evaluate(const AXUNet<float>& model, const std::vector<SliceSample>& samples);

nlohmann::json report_to_json(const EvalReport& report);
std::string report_table(const EvalReport& report);  // scores x100, one row per case

struct TrainResult {
    double best_val_dice = 0.0;
    int best_epoch = -1;
    std::vector<double> epoch_losses;  // mean train loss per epoch
    std::vector<double> val_dices;     // mean validation Dice per epoch
};

// Shuffled minibatches, BCE-Dice objective, Adam step per batch with the
// epoch's cosine learning rate; persists a checkpoint whenever the mean
// validation Dice improves. Deterministic given (seed, config, dataset).
TrainResult train(AXUNet<float>& model, const std::vector<SliceSample>& train_set,
                  const std::vector<SliceSample>& val_set, const RunConfig& cfg,
                  std::ostream* log = nullptr);

}  // namespace axunet
