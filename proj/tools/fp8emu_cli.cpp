// fp8emu: experiment front end.
//
// Exit codes: 0 success, 2 training diverged, 64 bad configuration or usage,
// 74 I/O failure, 70 internal error.
#include <cmath>
#include <cstdio>
#include <string>

#include "CLI11.hpp"
#include "fp8emu/tensor_io.hpp"
#include "fp8emu/train.hpp"

namespace {

constexpr int kExitDiverged = 2;
constexpr int kExitConfig = 64;
constexpr int kExitIo = 74;
constexpr int kExitInternal = 70;

using fp8emu::IoError;
using fp8emu::QuantConfig;
using fp8emu::QuantizedTensor;
using fp8emu::Tensor;
using namespace fp8emu::nn;

bool ends_with(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() &&
           s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

void print_run_summary(const std::string& name, const RunArtifacts& art) {
    const TrainResult& res = art.result;
    if (res.diverged) {
        std::printf("%s: diverged after %lld iterations (artifacts in %s)\n",
                    name.c_str(), static_cast<long long>(res.total_iterations),
                    art.dir.c_str());
        return;
    }
    if (!res.evals.empty()) {
        const EvalRow& last = res.evals.back();
        std::printf("%s: %lld iterations, train loss %.4f, val accuracy %.4f "
                    "(artifacts in %s)\n",
                    name.c_str(), static_cast<long long>(res.total_iterations),
                    last.train_loss, last.val_accuracy, art.dir.c_str());
    }
}

int cmd_train(const std::string& config_path) {
    const ExperimentConfig cfg = load_config(config_path);
    const RunArtifacts art = run_experiment(cfg);
    print_run_summary("train", art);
    return art.result.diverged ? kExitDiverged : 0;
}

int cmd_quantize(const std::string& in_path, const std::string& out_path,
                 const std::string& mode, std::uint64_t seed, bool saturate) {
    Tensor t;
    if (ends_with(in_path, ".csv")) {
        t = fp8emu::load_tensor_csv(in_path);
    } else {
        if (fp8emu::peek_tensor_dtype(in_path) != fp8emu::TensorDtype::Fp32)
            throw IoError(in_path + ": expected an FP32 tensor file "
                                    "(already-quantized inputs are not accepted)");
        t = fp8emu::load_tensor_fp32(in_path);
    }

    QuantConfig cfg;
    cfg.mode = parse_rounding_mode(mode);
    cfg.seed = seed ? seed : 1;
    cfg.saturate_on_overflow = saturate;
    const QuantizedTensor q = fp8emu::quantize(t, fp8emu::kFp8, cfg);
    fp8emu::save_tensor(out_path, q);

    const Tensor back = fp8emu::dequantize(q);
    double mean_err = 0.0, max_err = 0.0;
    for (std::int64_t i = 0; i < t.numel(); ++i) {
        const double err = std::abs(static_cast<double>(back.at(i)) - t.at(i));
        mean_err += err;
        max_err = std::max(max_err, err);
    }
    if (t.numel() > 0) mean_err /= static_cast<double>(t.numel());

    std::printf("elements %lld\n", static_cast<long long>(q.numel()));
    std::printf("overflow_count %lld\n", static_cast<long long>(q.overflow_count));
    std::printf("underflow_count %lld\n", static_cast<long long>(q.underflow_count));
    std::printf("mean_abs_error %.9g\n", mean_err);
    std::printf("max_abs_error %.9g\n", max_err);
    return 0;
}

int cmd_sweep(const std::string& preset, bool parallel) {
    const SweepResult sweep = run_sweep(preset, parallel);
    for (const auto& [name, art] : sweep.runs) print_run_summary(name, art);
    std::printf("comparison written to %s\n", sweep.comparison_path.c_str());
    return sweep.any_diverged ? kExitDiverged : 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"FP8 (1-5-2) mixed-precision training emulator"};
    app.require_subcommand(1);

    app.add_subcommand("range-report",
                       "Print the FP32/FP16/FP8 dynamic range table");

    auto* train_cmd = app.add_subcommand("train", "Run one training experiment");
    std::string config_path;
    train_cmd->add_option("config", config_path, "Experiment config file")
        ->required();

    auto* quant_cmd =
        app.add_subcommand("quantize", "Quantize an FP32 tensor file to FP8");
    std::string in_path, out_path, mode = "nearest-even";
    std::uint64_t seed = 1;
    bool saturate = false;
    quant_cmd->add_option("input", in_path, "Input tensor (.fp8t or .csv)")
        ->required();
    quant_cmd->add_option("output", out_path, "Output FP8 tensor file")
        ->required();
    quant_cmd->add_option("--mode", mode,
                          "Rounding: nearest-even, stochastic, or truncate");
    quant_cmd->add_option("--seed", seed, "Stochastic rounding seed");
    quant_cmd->add_flag("--saturate", saturate,
                        "Clamp overflow to the max finite value instead of infinity");

    auto* sweep_cmd = app.add_subcommand("sweep", "Run a multi-run preset");
    std::string preset;
    bool parallel = false;
    std::string preset_help = "Preset:";
    for (const std::string& n : sweep_preset_names()) preset_help += " " + n;
    sweep_cmd->add_option("preset", preset, preset_help)->required();
    sweep_cmd->add_flag("--parallel", parallel,
                        "Run the preset's experiments on separate threads");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    try {
        if (app.got_subcommand("range-report")) {
            std::fputs(fp8emu::range_report().c_str(), stdout);
            return 0;
        }
        if (app.got_subcommand("train")) return cmd_train(config_path);
        if (app.got_subcommand("quantize"))
            return cmd_quantize(in_path, out_path, mode, seed, saturate);
        if (app.got_subcommand("sweep")) return cmd_sweep(preset, parallel);
        return kExitConfig;
    } catch (const IoError& e) {
        std::fprintf(stderr, "fp8emu: %s\n", e.what());
        return kExitIo;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "fp8emu: %s\n", e.what());
        return kExitConfig;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "fp8emu: %s\n", e.what());
        return kExitConfig;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "fp8emu: internal error: %s\n", e.what());
        return kExitInternal;
    }
}
