// Small synthetic datasets and configs for model-level tests.

#pragma once

#include <filesystem>
#include <string>

#include "smahyper/config.hpp"
#include "smahyper/data_core.hpp"
#include "smahyper/ingestion.hpp"
#include "smahyper/model.hpp"

namespace testsupport {

// Fresh, empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / ("smahyper_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

inline smahyper::ExperimentConfig small_config(const std::filesystem::path& manifest,
                                               const std::filesystem::path& out) {
    smahyper::ExperimentConfig cfg;
    cfg.manifest = manifest.string();
    cfg.output_dir = out.string();
    cfg.input_steps = 6;
    cfg.horizon = 2;
    cfg.embed_dim = 8;
    cfg.heads = 2;
    cfg.k = 3;
    cfg.k_members = 3;
    cfg.batch_size = 8;
    cfg.max_epochs = 2;
    cfg.patience = 0;
    cfg.seed = 3;
    return cfg;
}

// Writes a synthetic city to `dir` and returns the path of its manifest.
inline std::filesystem::path synthetic_manifest(const std::filesystem::path& dir, std::size_t regions,
                                                std::size_t steps, std::size_t hotspots, std::uint64_t seed) {
    smahyper::write_synthetic_city(smahyper::generate_synthetic_city(regions, steps, hotspots, seed), dir);
    return dir / "dataset.manifest";
}

inline smahyper::PreparedData prepared(const smahyper::ExperimentConfig& cfg) {
    return smahyper::prepare_data(smahyper::load_dataset(cfg.manifest), cfg);
}

}  // namespace testsupport
