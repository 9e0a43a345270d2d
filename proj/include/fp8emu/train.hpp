#pragma once

#include <string>
#include <utility>
#include <vector>

#include "fp8emu/config.hpp"

namespace fp8emu::nn {

/// Files written by every completed run (plus a checkpoint/ subdirectory).
struct RunArtifacts {
    std::string dir;
    std::string config_path;     // config.txt, canonical snapshot
    std::string steps_path;      // steps.csv
    std::string eval_path;       // eval.csv
    std::string range_path;      // range_report.txt
    std::string events_path;     // scale_events.csv
    TrainResult result;
};

/// Runs one experiment and writes its artifacts under `dir` (created if
/// needed). The config snapshot is written before training starts.
RunArtifacts run_experiment_at(const ExperimentConfig& cfg, const std::string& dir);

/// Same, with the directory taken from cfg.output_dir, or the
/// FP8EMU_OUTPUT_DIR environment variable when set.
RunArtifacts run_experiment(const ExperimentConfig& cfg);

const std::vector<std::string>& sweep_preset_names();

/// The (name, config) pairs a sweep preset expands to. Throws ConfigError for
/// an unknown preset. Runs within a preset share seeds, so they are paired.
std::vector<std::pair<std::string, ExperimentConfig>>
sweep_runs(const std::string& preset);

struct SweepResult {
    std::string dir;
    std::vector<std::pair<std::string, RunArtifacts>> runs;
    std::string comparison_path; // comparison.csv
    bool any_diverged = false;
};

/// Executes a preset's runs (sequentially, or one thread per run when
/// parallel is set; runs are fully isolated so results are identical either
/// way) into per-run subdirectories, then writes a comparison CSV.
SweepResult run_sweep(const std::string& preset, bool parallel = false);

void write_text_file(const std::string& path, const std::string& content);

} // namespace fp8emu::nn
