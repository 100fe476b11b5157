// Experiment configuration: a JSON document validated field by field, with
// SMAHYPER_<KEY> environment overrides (key upper-cased).

#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "smahyper/graph_construction.hpp"

namespace smahyper {

struct ExperimentConfig {
    std::string manifest;    // dataset manifest
    std::string output_dir = "runs/default";
    int interval_hours = 0;  // 0: take it from the manifest

    std::size_t input_steps = 12;
    std::size_t horizon = 6;
    std::size_t embed_dim = 32;
    std::size_t heads = 8;
    std::size_t layers = 2;
    std::size_t k = 40;
    double hyperedge_ratio = 0.1;
    std::size_t k_members = 40;
    double lambda1 = 0.1;
    double lambda2 = 0.001;
    double temperature = 1.0;
    double learning_rate = 0.001;
    std::size_t batch_size = 8;
    double train_ratio = 0.8;
    double val_ratio = 0.1;
    std::size_t max_epochs = 500;
    std::size_t patience = 25;
    std::uint64_t seed = 0;
    double grad_clip = 5.0;  // global norm; 0 disables clipping
    double recall_k_fraction = 0.2;

    bool use_pkde = true;
    bool use_contrastive = true;
    bool use_hypergraph = true;
    bool use_attention_fusion = true;
    bool use_poi = true;
    bool use_road = true;
    bool dynamic_temporal_view = true;
    TopkAxis topk_axis = TopkAxis::column;

    // Throws UsageError naming the offending field.
    void validate() const;
};

std::string to_json_string(const ExperimentConfig& cfg);
ExperimentConfig config_from_json_string(const std::string& text);

// Reads a JSON file, applies environment overrides, validates.
ExperimentConfig load_config(const std::string& path);
void save_config(const ExperimentConfig& cfg, const std::string& path);

// Applies overrides such as {"EMBED_DIM": "16"} to `cfg`. Exposed separately
// from the process environment for testing.
void apply_overrides(ExperimentConfig& cfg, const std::map<std::string, std::string>& overrides);
std::map<std::string, std::string> environment_overrides();

}  // namespace smahyper
