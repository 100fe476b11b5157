// CSV loaders that align accidents, adjacency, urban features, weather and
// holidays onto one region index and one time axis.
//
// File layouts (UTF-8, header row mandatory):
//   regions.csv     region_id
//   accidents.csv   region_id,timestamp,severity     severity in 1..3 or slight|serious|fatal
//   adjacency.csv   region_a,region_b                one undirected edge per row
//   poi.csv         region_id,<numeric columns...>
//   road.csv        region_id,<numeric columns...>
//   weather.csv     timestamp,<numeric columns...>   hourly or coarser
//   holidays.csv    date
//
// `dataset.manifest` is the single entry point; see parse_manifest().

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "smahyper/data_core.hpp"
#include "smahyper/tensor.hpp"

namespace smahyper {

struct RegionCatalog {
    std::vector<std::string> region_ids;
    std::map<std::string, std::size_t> index_of;
    Tensor adjacency;  // [N, N] binary, symmetric, zero diagonal

    std::size_t size() const { return region_ids.size(); }
};

RegionCatalog make_catalog(std::vector<std::string> region_ids);
RegionCatalog load_regions(const std::filesystem::path& path);

struct TimeAxis {
    std::int64_t origin = 0;  // epoch seconds
    int interval_hours = 24;
    std::size_t n_steps = 0;

    std::int64_t interval_seconds() const { return std::int64_t{interval_hours} * 3600; }
    std::int64_t step_start(std::size_t t) const {
        return origin + static_cast<std::int64_t>(t) * interval_seconds();
    }
};

struct RowIssue {
    std::size_t line = 0;
    std::string reason;
};

struct AccidentLoad {
    std::vector<AccidentEvent> events;
    std::vector<std::string> unknown_regions;  // distinct, in order of appearance
    std::vector<RowIssue> rejected;            // unknown region, before origin, past axis end
};

AccidentLoad load_accidents(const std::filesystem::path& path, const RegionCatalog& catalog,
                            const TimeAxis& axis);

struct AdjacencyLoad {
    RegionCatalog catalog;
    std::vector<RowIssue> warnings;  // self-loops
};

AdjacencyLoad load_adjacency(const std::filesystem::path& path, const RegionCatalog& catalog);

struct FeatureBlock {
    Tensor raw;           // [N, d] after imputation, before standardization
    Tensor standardized;  // [N, d]
    std::vector<std::string> columns;
    std::vector<double> mean, stddev;  // stddev 0 marks a variance-floored column
    std::vector<std::string> imputed_regions;
};

struct UrbanFeatures {
    FeatureBlock poi;
    FeatureBlock road;
};

inline constexpr double kVarianceFloor = 1e-8;

FeatureBlock load_feature_block(const std::filesystem::path& path, const RegionCatalog& catalog);
UrbanFeatures load_urban_features(const std::filesystem::path& poi_path,
                                  const std::filesystem::path& road_path,
                                  const RegionCatalog& catalog);

struct ExternalLoad {
    ExternalFeatures features;      // standardized meteorology, calendar encoding
    Tensor meteorology_bins;        // [T_total, d_M] interval means before standardization
    std::vector<double> met_mean, met_std;
    std::size_t filled_hours = 0;   // forward- or back-filled hourly slots
    std::vector<std::int64_t> holiday_days;  // days since epoch
};

// Calendar layout: 7 one-hot weekday slots (Monday first), holiday flag,
// weekend flag, and for 12-hour intervals a trailing afternoon flag.
std::size_t calendar_width(int interval_hours);

ExternalLoad build_external_features(const std::filesystem::path& weather_path,
                                     const std::filesystem::path& holiday_path,
                                     const RegionCatalog& catalog, const TimeAxis& axis);

struct Manifest {
    std::filesystem::path base_dir;
    std::map<std::string, std::string> entries;

    std::string get(const std::string& key) const;
    std::filesystem::path path(const std::string& key) const;
};

// key = value lines; '#' starts a comment. Required keys: regions, accidents,
// adjacency, poi, road, weather, holidays, time_origin, interval_hours,
// n_regions, n_steps. Relative paths resolve against the manifest's directory.
Manifest parse_manifest(const std::filesystem::path& path);

struct Dataset {
    RegionCatalog catalog;
    TimeAxis axis;
    AccidentLoad accidents;
    RiskTensor risk;
    UrbanFeatures urban;
    ExternalLoad externals;
    std::vector<RowIssue> adjacency_warnings;
};

Dataset load_dataset(const std::filesystem::path& manifest_path);

// Writes every source file plus the manifest. Loading the result reproduces
// the same tensors (weather is written at interval resolution).
void write_dataset(const Dataset& data, const std::filesystem::path& dir);

// Writes the synthetic fixture in the same layout.
void write_synthetic_city(const SyntheticCity& city, const std::filesystem::path& dir);

}  // namespace smahyper
