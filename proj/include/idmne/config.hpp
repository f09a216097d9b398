#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "idmne/data.hpp"
#include "idmne/trainer.hpp"

namespace idmne {

enum class GeneratorKind { blobs, two_moons, csv };

struct DataConfig {
    GeneratorKind generator = GeneratorKind::blobs;
    std::uint64_t seed = 7;
    std::size_t n_source = 2000;
    std::size_t n_target = 2000;
    // blobs
    std::size_t k = 5;
    std::size_t d_in = 8;
    double shift_magnitude = 2.0;
    double target_scale = 1.0;
    double class_sep = 1.0;
    // two_moons
    double rotation_deg = 30.0;
    double noise_sigma = 0.1;
    // csv
    std::string csv_path;
    // few-shot split
    std::size_t shots_per_class = 3;
    std::uint64_t shot_seed = 11;
    double eval_fraction = 0.25;
};

struct RunConfig {
    std::string out_dir = "out";
    std::size_t trials = 1;
    std::vector<std::uint64_t> trial_seeds;  // empty: train.seed + 0..trials-1
};

struct ExperimentConfig {
    TrainConfig train;
    DataConfig data;
    RunConfig run;
};

// Flat `section.key = value` text file; '#' starts a comment. Unknown keys
// are errors, as are duplicate keys.
std::map<std::string, std::string> parse_config_file(const std::string& path);

ExperimentConfig resolve_config(const std::map<std::string, std::string>& kv);
ExperimentConfig load_experiment_config(const std::string& path);

// Canonical serialization: every key, sorted, including defaulted ones.
std::string serialize_config(const ExperimentConfig& cfg);
std::uint64_t config_hash(const ExperimentConfig& cfg);

// Instantiates source/target datasets and the few-shot split.
TrainDatasets build_datasets(const DataConfig& cfg);

std::vector<std::uint64_t> effective_trial_seeds(const ExperimentConfig& cfg);

}  // namespace idmne
