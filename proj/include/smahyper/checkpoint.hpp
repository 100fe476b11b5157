// Binary checkpoint: magic, format version, a JSON header (config snapshot,
// training progress, parameter names and shapes), then raw little-endian
// doubles for every parameter followed by the Adam moments.

#pragma once

#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "smahyper/config.hpp"
#include "smahyper/nn.hpp"
#include "smahyper/optimizer.hpp"

namespace smahyper {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct TrainingProgress {
    std::size_t epoch = 0;  // epochs completed
    std::uint64_t step = 0;
    double best_val_rmse = std::numeric_limits<double>::infinity();
    std::size_t best_epoch = 0;
    std::size_t epochs_since_improvement = 0;
    bool stopped_early = false;
};

struct Checkpoint {
    ExperimentConfig config;
    TrainingProgress progress;
    std::map<std::string, std::size_t> data_dims;  // regions, met_width, ... at training time
    std::vector<std::string> names;
    std::vector<Tensor> params;
    AdamState adam;
};

Checkpoint capture_checkpoint(const ExperimentConfig& cfg, const TrainingProgress& progress,
                              const nn::ParameterStore& store, const AdamState& adam);
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// Copies checkpoint parameters into `store`. Names and shapes must match;
// a mismatch raises DataError naming the parameter and axis.
void restore_parameters(const Checkpoint& ckpt, nn::ParameterStore& store);

}  // namespace smahyper
