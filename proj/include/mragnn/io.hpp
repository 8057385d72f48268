#pragma once

#include "mragnn/evaluation.hpp"
#include "mragnn/model.hpp"
#include "mragnn/synthetic.hpp"
#include "mragnn/training.hpp"

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

namespace mragnn {

inline constexpr int kCheckpointFormatVersion = 1;

struct DataConfig {
    /// Impressions per identity used for training; the rest are held out.
    std::size_t train_impressions = 3;

    friend bool operator==(const DataConfig&, const DataConfig&) = default;
};

/// Everything a train/eval/sweep run needs besides the data itself.
struct RunConfig {
    ModelConfig model;
    TrainConfig train;
    DataConfig data;

    void validate() const;
    friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

/// Parses and validates a run config document. Unknown keys are rejected;
/// absent keys keep their defaults.
RunConfig parse_run_config(const std::string& text);
std::string dump_run_config(const RunConfig& config);
RunConfig load_run_config(const std::filesystem::path& path);

DatasetSpec parse_dataset_spec(const std::string& text);
std::string dump_dataset_spec(const DatasetSpec& spec);
DatasetSpec load_dataset_spec(const std::filesystem::path& path);

/// One {identity_id, impression_id, minutiae:[[x,y,d],...]} object per line.
std::string dataset_to_jsonl(const Dataset& data);
Dataset dataset_from_jsonl(const std::string& text);
void write_dataset(const std::filesystem::path& path, const Dataset& data);
Dataset read_dataset(const std::filesystem::path& path);

struct Checkpoint {
    RunConfig config;
    TrainState state;
};

std::string checkpoint_to_json(const RunConfig& config, const TrainState& state);
/// Rejects other format versions and parameter sets that do not match the config.
Checkpoint checkpoint_from_json(const std::string& text);
void save_checkpoint(const std::filesystem::path& path, const RunConfig& config, const TrainState& state);
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::string metrics_to_json(const Metrics& metrics);
void write_metrics(const std::filesystem::path& path, const Metrics& metrics);

std::string epoch_log_to_jsonl(const std::vector<EpochRecord>& log);
void write_epoch_log(const std::filesystem::path& path, const std::vector<EpochRecord>& log);

std::string read_text(const std::filesystem::path& path);
/// Writes to a sibling temporary file, then renames it over `path`.
void write_text_atomic(const std::filesystem::path& path, const std::string& content);

} // namespace mragnn
