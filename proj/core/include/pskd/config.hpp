#pragma once

#include <optional>
#include <string>
#include <vector>

#include "pskd/data.hpp"
#include "pskd/training.hpp"

namespace pskd {

// One JSON file describes a whole experiment. Parsing is strict: an
// unknown key anywhere is a validation error, so a typo in a loss flag
// cannot silently invalidate a run.
struct ExperimentConfig {
    // dataset block: synthetic generation or file ingestion.
    std::optional<GenConfig> synthetic;
    std::optional<std::string> data_path;  // data.jsonl
    std::optional<std::string> meta_path;  // meta.json
    double train_fraction = 0.5;
    std::uint64_t split_seed = 1;

    ModelConfig model;
    Schedule schedule;  // loss block folded into schedule.weights/options

    std::string output_dir = "runs/out";
    std::vector<std::uint64_t> seeds{1};

    void validate() const;
};

ExperimentConfig parse_config_file(const std::string& path);
ExperimentConfig parse_config_text(const std::string& text, const std::string& origin);

// The resolved copy captures every effective default; a run directory
// holding it is self-describing.
std::string resolved_config_json(const ExperimentConfig& cfg);

// Dataset per the config: generated or ingested, split, normalized.
// Returns the dataset and the normalization stats that were applied.
std::pair<Dataset, NormStats> prepare_dataset(const ExperimentConfig& cfg);

}  // namespace pskd
