// Training loop, split evaluation, prediction and artifact export.

#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "smahyper/checkpoint.hpp"
#include "smahyper/evaluation.hpp"
#include "smahyper/model.hpp"

namespace smahyper {

inline constexpr const char* kMetricsHeader = "step,epoch,mse,contrastive,l2,total,val_rmse";

struct StepRecord {
    std::uint64_t step = 0;
    std::size_t epoch = 0;
    double mse = 0.0, contrastive = 0.0, l2 = 0.0, total = 0.0;
};

struct EpochRecord {
    std::uint64_t step = 0;  // global step at the end of the epoch
    std::size_t epoch = 0;
    double mse = 0.0, contrastive = 0.0, l2 = 0.0, total = 0.0;  // means over the epoch's steps
    double val_rmse = 0.0;
    double seconds = 0.0;
};

struct TrainOptions {
    std::string resume_from;  // checkpoint path, empty for a fresh run
    bool write_files = true;  // metrics.csv, config.json, last.ckpt, best.ckpt under output_dir
    bool verbose = false;
    std::size_t max_steps = 0;  // stop after this many optimizer steps in total; 0 = no cap
    // Called after every forward pass, before the update.
    std::function<void(std::uint64_t step, const ForwardResult&)> on_step;
};

struct TrainResult {
    TrainingProgress progress;
    std::vector<StepRecord> steps;
    std::vector<EpochRecord> epochs;
    std::unique_ptr<SmaHyperModel> model;  // parameters after the last step
    AdamState adam;
    std::vector<Tensor> best_params;  // snapshot at the best validation epoch of this run
};

// Copies the best-validation snapshot into the result's model, if any.
void restore_best(TrainResult& result);

// Keeps freed blocks in the heap instead of returning them to the kernel;
// the training loop reallocates the same large buffers every step.
void tune_allocator();

std::map<std::string, std::size_t> data_dims(const PreparedData& data);
std::unique_ptr<SmaHyperModel> build_model(const ExperimentConfig& cfg, const PreparedData& data);

TrainResult train(const ExperimentConfig& cfg, const PreparedData& data, const TrainOptions& opts = {});

// Loads a checkpoint into a fresh model after checking it against the data.
std::unique_ptr<SmaHyperModel> load_model(const Checkpoint& ckpt, const PreparedData& data);

enum class Split { train, val, test };
Split parse_split(const std::string& name);
const char* split_name(Split s);
const std::vector<SampleWindow>& split_windows(const PreparedData& data, Split s);

// Normalized-space predictions stacked as [W, N, tau].
Tensor predict_windows(const SmaHyperModel& model, const std::vector<SampleWindow>& windows,
                       std::size_t batch_size);
// Raw-scale targets for the same windows, read from the unnormalized risk tensor.
Tensor raw_targets(const PreparedData& data, const std::vector<SampleWindow>& windows, std::size_t horizon);
Tensor persistence_predictions(const PreparedData& data, const std::vector<SampleWindow>& windows,
                               std::size_t horizon);

struct SplitEvaluation {
    EvalReport report;
    Tensor actual, predicted;  // raw scale, [W, N, tau]
};

SplitEvaluation evaluate_model(const SmaHyperModel& model, const PreparedData& data, const ExperimentConfig& cfg,
                               Split split);
SplitEvaluation evaluate_persistence(const PreparedData& data, const ExperimentConfig& cfg, Split split);

void write_predictions_csv(const std::string& path, const PreparedData& data,
                           const std::vector<SampleWindow>& windows, const Tensor& actual, const Tensor& predicted);

// Graph triplets, hypergraph triplets, hyperedge top members, test-split
// predictions and metrics under `dir`. Returns the files written.
std::vector<std::string> export_artifacts(const SmaHyperModel& model, const PreparedData& data,
                                          const ExperimentConfig& cfg, const std::string& dir);

inline constexpr std::size_t kTopMembers = 5;

}  // namespace smahyper
