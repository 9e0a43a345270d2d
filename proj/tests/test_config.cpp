#include <string>
#include <vector>

#include "doctest.h"
#include "fp8emu/config.hpp"
#include "fp8emu/tensor_io.hpp"

using namespace fp8emu;
using namespace fp8emu::nn;

TEST_CASE("empty text parses to the defaults") {
    const ExperimentConfig cfg = parse_config_text("");
    CHECK(cfg == ExperimentConfig{});
    CHECK(cfg.model_preset == "rings-mlp");
    CHECK(cfg.epochs == 20);
    CHECK(cfg.scale == 1.0);
}

TEST_CASE("sections and keys are parsed with comments and whitespace") {
    const char* text =
        "# experiment\n"
        "[model]\n"
        "preset = deep-mlp\n"
        "\n"
        "[train]\n"
        "epochs = 30   \n"
        "learning_rate = 0.08\n"
        "; semicolon comments too\n"
        "[scaler]\n"
        "kind = dynamic-backoff\n"
        "scale = 32768\n"
        "min_threshold_schedule = 40:8192, 150:32768\n"
        "[quant]\n"
        "rounding = stochastic\n"
        "saturate = true\n";
    const ExperimentConfig cfg = parse_config_text(text);
    CHECK(cfg.model_preset == "deep-mlp");
    CHECK(cfg.epochs == 30);
    CHECK(cfg.learning_rate == 0.08);
    CHECK(cfg.scaler_kind == "dynamic-backoff");
    CHECK(cfg.scale == 32768.0);
    CHECK(cfg.min_threshold_schedule == "40:8192,150:32768"); // normalized
    CHECK(cfg.rounding == RoundingMode::Stochastic);
    CHECK(cfg.saturate == true);
}

TEST_CASE("errors carry line numbers") {
    auto message_of = [](const char* text) -> std::string {
        try {
            parse_config_text(text);
        } catch (const ConfigError& e) {
            return e.what();
        }
        return "";
    };
    CHECK(message_of("[model]\npreset = deep-mlp\n[nope]\n").find("line 3") !=
          std::string::npos);
    CHECK(message_of("[train]\nepochs = 10\nwarmup = 5\n").find("line 3") !=
          std::string::npos);
    CHECK(message_of("[train]\nepochs = banana\n").find("line 2") != std::string::npos);
    CHECK(message_of("epochs = 5\n").find("line 1") != std::string::npos); // no section
    CHECK(message_of("[train]\nepochs 5\n").find("line 2") != std::string::npos);
}

TEST_CASE("validation rejects out-of-range values") {
    CHECK_THROWS_AS(parse_config_text("[model]\npreset = resnet\n"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("[train]\nepochs = 0\n"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("[train]\nbatch_size = -1\n"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("[train]\nlearning_rate = 0\n"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("[train]\nmomentum = 1.5\n"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("[quant]\nrounding = up\n"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("[quant]\nseed = 0\n"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("[regularizer]\nkind = l1\n"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("[regularizer]\nkind = dropout\np = 1\n"),
                    ConfigError);
    CHECK_THROWS_AS(parse_config_text("[scaler]\nkind = adaptive\n"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("[scaler]\nscale = -8\n"), ConfigError);
    CHECK_THROWS_AS(
        parse_config_text("[scaler]\nkind = dynamic-backoff\nbackoff_factor = 1\n"),
        ConfigError);
    CHECK_THROWS_AS(parse_config_text("[data]\ndataset = imagenet\n"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("[data]\ndataset = csv\n"), ConfigError); // no paths
    CHECK_THROWS_AS(parse_config_text("[data]\ntrain_samples = 0\n"), ConfigError);
}

TEST_CASE("threshold schedule parsing") {
    CHECK(parse_threshold_schedule("").empty());
    const auto sched = parse_threshold_schedule("40:8192,150:32768");
    REQUIRE(sched.size() == 2);
    CHECK(sched[0] == std::pair<std::int64_t, double>{40, 8192.0});
    CHECK(sched[1] == std::pair<std::int64_t, double>{150, 32768.0});
    CHECK(parse_threshold_schedule(" 40 : 8192 ").size() == 1);
    CHECK_THROWS_AS(parse_threshold_schedule("40:8192,40:16384"), ConfigError);
    CHECK_THROWS_AS(parse_threshold_schedule("150:8,40:16"), ConfigError);
    CHECK_THROWS_AS(parse_threshold_schedule("40"), ConfigError);
    CHECK_THROWS_AS(parse_threshold_schedule("40:-1"), ConfigError);
    CHECK_THROWS_AS(parse_threshold_schedule("x:1"), ConfigError);
}

TEST_CASE("snapshot round trips and is canonical") {
    ExperimentConfig cfg;
    cfg.model_preset = "deep-mlp";
    cfg.dataset = "blobs";
    cfg.noise = 0.125;
    cfg.epochs = 17;
    cfg.learning_rate = 0.03;
    cfg.rounding = RoundingMode::Stochastic;
    cfg.reg_kind = "l2";
    cfg.lambda = 2.5e-4;
    cfg.scaler_kind = "dynamic-backoff";
    cfg.scale = 32768.0;
    cfg.min_threshold_schedule = "40:8192,150:32768";
    cfg.output_dir = "runs/abc";

    const std::string snap = config_snapshot(cfg);
    const ExperimentConfig back = parse_config_text(snap);
    CHECK(back == cfg);
    CHECK(config_snapshot(back) == snap);

    // Defaults round trip too (empty paths serialize as bare keys).
    const std::string dsnap = config_snapshot(ExperimentConfig{});
    CHECK(parse_config_text(dsnap) == ExperimentConfig{});
    CHECK(config_snapshot(parse_config_text(dsnap)) == dsnap);
    CHECK(dsnap.find("[model]") != std::string::npos);
    CHECK(dsnap.find("[output]") != std::string::npos);
}

TEST_CASE("format_double emits shortest round-trip forms") {
    CHECK(format_double(1.0) == "1");
    CHECK(format_double(0.05) == "0.05");
    CHECK(format_double(32768.0) == "32768");
    CHECK(format_double(2.5e-4) == "0.00025");
    const double v = 0.1 + 0.2;
    CHECK(std::stod(format_double(v)) == v);
}

TEST_CASE("materialization wires the training types") {
    ExperimentConfig cfg;
    cfg.reg_kind = "l2";
    cfg.lambda = 3e-4;
    cfg.scaler_kind = "dynamic-backoff";
    cfg.scale = 4096.0;
    cfg.min_threshold_schedule = "40:8192";
    cfg.rounding = RoundingMode::Stochastic;
    cfg.quant_seed = 17;
    cfg.quant_enabled = true;

    const Regularizer reg = make_regularizer(cfg);
    CHECK(reg.kind == Regularizer::Kind::L2);
    CHECK(reg.lambda == 3e-4);

    const TrainOptions opts = make_train_options(cfg);
    CHECK(opts.epochs == cfg.epochs);
    CHECK(opts.quant.mode == RoundingMode::Stochastic);
    CHECK(opts.quant.seed == 17);
    CHECK(opts.scaler.kind == LossScaler::Kind::DynamicBackoff);
    CHECK(opts.scaler.scale == 4096.0);
    REQUIRE(opts.scaler.min_threshold_schedule.size() == 1);
    CHECK(opts.scaler.min_threshold_schedule[0].first == 40);

    cfg.dataset = "rings";
    cfg.train_samples = 64;
    cfg.val_samples = 32;
    const auto [train_set, val_set] = make_datasets(cfg);
    CHECK(train_set.size() == 64);
    CHECK(val_set.size() == 32);
    CHECK(train_set.x.data != val_set.x.data); // validation split is distinct
}

TEST_CASE("rounding mode names parse") {
    CHECK(parse_rounding_mode("nearest-even") == RoundingMode::NearestEven);
    CHECK(parse_rounding_mode("stochastic") == RoundingMode::Stochastic);
    CHECK(parse_rounding_mode("truncate") == RoundingMode::TruncateTowardZero);
    CHECK_THROWS_AS(parse_rounding_mode("round-up"), ConfigError);
}

TEST_CASE("load_config reports missing files as io errors") {
    CHECK_THROWS_AS(load_config("/nonexistent/fp8emu.cfg"), IoError);
}
