#pragma once

// Checkpoint directory:
//   manifest.json          run config, epoch, best validation Dice, the
//                          ordered parameter name list and optimizer step
//   params/<name>.axtn     one f32 tensor per dotted parameter path
//   optim/<name>.{m,v}.axtn  Adam moments, when saved with an optimizer
// Round trips are bit-exact.

#include <filesystem>
#include <utility>

#include "axunet/config.hpp"
#include "axunet/optim.hpp"

namespace axunet {

struct CheckpointMeta {
    RunConfig run_config;
    int epoch = 0;
    double best_val_dice = 0.0;
    bool has_optimizer = false;
};

void save_checkpoint(const std::filesystem::path& dir, AXUNet<float>& model,
                     const AdamState<float>* opt, const RunConfig& run_config, int epoch,
                     double best_val_dice);

CheckpointMeta read_checkpoint_meta(const std::filesystem::path& dir);

// Loads parameters (and optimizer state when requested and present) into a
// model whose architecture must match the manifest.
void load_checkpoint_into(const std::filesystem::path& dir, AXUNet<float>& model,
                          AdamState<float>* opt = nullptr);

// Builds the model from the manifest's config, then loads.
std::pair<AXUNet<float>, CheckpointMeta> load_checkpoint(const std::filesystem::path& dir);

}  // namespace axunet
