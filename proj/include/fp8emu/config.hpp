#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "fp8emu/float_format.hpp"
#include "fp8emu/loss_scaling.hpp"
#include "fp8emu/model.hpp"
#include "fp8emu/nn.hpp"

namespace fp8emu::nn {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Flat key=value experiment description with [section] headers. Every field
/// has a default, so the empty string parses to a runnable config; unknown
/// sections or keys are rejected. See config_snapshot() for the canonical
/// serialization (which parses back to an identical struct).
struct ExperimentConfig {
    // [model]
    std::string model_preset = "rings-mlp"; // rings-mlp | deep-mlp | convnet

    // [data] synthetic generators, or file-backed datasets
    std::string dataset = "rings"; // rings | blobs | bars | csv | idx
    std::int64_t train_samples = 1024;
    std::int64_t val_samples = 256;
    double noise = 0.05;
    std::uint64_t data_seed = 7;
    std::string train_path;        // csv: one file per split; idx: image file
    std::string val_path;
    std::string train_labels_path; // idx only
    std::string val_labels_path;

    // [train]
    std::int64_t epochs = 20;
    std::int64_t batch_size = 32;
    double learning_rate = 0.05;
    double momentum = 0.9;
    std::uint64_t seed = 1;
    std::int64_t divergence_limit = 50;

    // [quant]
    bool quant_enabled = true;
    RoundingMode rounding = RoundingMode::NearestEven;
    std::uint64_t quant_seed = 81;
    bool saturate = false;

    // [regularizer]
    std::string reg_kind = "none"; // none | l2 | dropout
    double lambda = 1e-4;
    double drop_p = 0.1;

    // [scaler]
    std::string scaler_kind = "constant"; // constant | dynamic-backoff
    double scale = 1.0;
    double backoff_factor = 0.5;
    double growth_factor = 2.0;
    std::int64_t growth_interval = 2000;
    std::string min_threshold_schedule; // "iter:value,iter:value", ascending

    // [output]
    std::string output_dir = "runs/out";

    bool operator==(const ExperimentConfig&) const = default;
};

/// Parses config text. Throws ConfigError (with a line number) on unknown
/// sections/keys, malformed values, or failed validation.
ExperimentConfig parse_config_text(const std::string& text);

/// Reads and parses a config file. Throws IoError if unreadable.
ExperimentConfig load_config(const std::string& path);

/// Canonical serialization: every key in a fixed order under its section
/// header. parse_config_text(config_snapshot(c)) == c, and snapshotting the
/// result again is byte-identical.
std::string config_snapshot(const ExperimentConfig& cfg);

/// "40:8192,150:32768" -> {{40, 8192}, {150, 32768}}. Empty input -> empty.
std::vector<std::pair<std::int64_t, double>>
parse_threshold_schedule(const std::string& text);

RoundingMode parse_rounding_mode(const std::string& name);

/// Shortest decimal form that parses back to exactly the same double.
std::string format_double(double v);

// Materialization into the training types. Validation beyond syntax (for
// example an unknown model preset) throws ConfigError.
Regularizer make_regularizer(const ExperimentConfig& cfg);
TrainOptions make_train_options(const ExperimentConfig& cfg);
LossScaler::Options make_scaler_options(const ExperimentConfig& cfg);

/// Builds or loads the train/val datasets. Generator datasets are derived
/// from data_seed; file-backed datasets throw IoError when missing.
std::pair<Dataset, Dataset> make_datasets(const ExperimentConfig& cfg);

} // namespace fp8emu::nn
