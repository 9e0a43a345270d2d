#include "fp8emu/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "fp8emu/lfsr.hpp"
#include "fp8emu/tensor_io.hpp"

namespace fp8emu::nn {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

[[noreturn]] void fail(int line, const std::string& msg) {
    throw ConfigError("config line " + std::to_string(line) + ": " + msg);
}

std::int64_t parse_i64(const std::string& v, int line, const std::string& key) {
    std::int64_t out = 0;
    const char* first = v.data();
    const char* last = v.data() + v.size();
    auto [p, ec] = std::from_chars(first, last, out);
    if (ec != std::errc{} || p != last)
        fail(line, "expected an integer for " + key + ", got '" + v + "'");
    return out;
}

std::uint64_t parse_u64(const std::string& v, int line, const std::string& key) {
    std::uint64_t out = 0;
    const char* first = v.data();
    const char* last = v.data() + v.size();
    auto [p, ec] = std::from_chars(first, last, out);
    if (ec != std::errc{} || p != last)
        fail(line, "expected an unsigned integer for " + key + ", got '" + v + "'");
    return out;
}

double parse_f64(const std::string& v, int line, const std::string& key) {
    double out = 0;
    const char* first = v.data();
    const char* last = v.data() + v.size();
    auto [p, ec] = std::from_chars(first, last, out);
    if (ec != std::errc{} || p != last)
        fail(line, "expected a number for " + key + ", got '" + v + "'");
    return out;
}

bool parse_bool(const std::string& v, int line, const std::string& key) {
    if (v == "true") return true;
    if (v == "false") return false;
    fail(line, "expected true or false for " + key + ", got '" + v + "'");
}

bool one_of(const std::string& v, std::initializer_list<const char*> names) {
    for (const char* n : names)
        if (v == n) return true;
    return false;
}

void set_key(ExperimentConfig& c, const std::string& section,
             const std::string& key, const std::string& v, int line) {
    const std::string full = section + "." + key;
    if (full == "model.preset") c.model_preset = v;
    else if (full == "data.dataset") c.dataset = v;
    else if (full == "data.train_samples") c.train_samples = parse_i64(v, line, full);
    else if (full == "data.val_samples") c.val_samples = parse_i64(v, line, full);
    else if (full == "data.noise") c.noise = parse_f64(v, line, full);
    else if (full == "data.seed") c.data_seed = parse_u64(v, line, full);
    else if (full == "data.train_path") c.train_path = v;
    else if (full == "data.val_path") c.val_path = v;
    else if (full == "data.train_labels_path") c.train_labels_path = v;
    else if (full == "data.val_labels_path") c.val_labels_path = v;
    else if (full == "train.epochs") c.epochs = parse_i64(v, line, full);
    else if (full == "train.batch_size") c.batch_size = parse_i64(v, line, full);
    else if (full == "train.learning_rate") c.learning_rate = parse_f64(v, line, full);
    else if (full == "train.momentum") c.momentum = parse_f64(v, line, full);
    else if (full == "train.seed") c.seed = parse_u64(v, line, full);
    else if (full == "train.divergence_limit") c.divergence_limit = parse_i64(v, line, full);
    else if (full == "quant.enabled") c.quant_enabled = parse_bool(v, line, full);
    else if (full == "quant.rounding") {
        if (!one_of(v, {"nearest-even", "stochastic", "truncate"}))
            fail(line, "unknown rounding mode '" + v + "'");
        c.rounding = parse_rounding_mode(v);
    }
    else if (full == "quant.seed") c.quant_seed = parse_u64(v, line, full);
    else if (full == "quant.saturate") c.saturate = parse_bool(v, line, full);
    else if (full == "regularizer.kind") c.reg_kind = v;
    else if (full == "regularizer.lambda") c.lambda = parse_f64(v, line, full);
    else if (full == "regularizer.p") c.drop_p = parse_f64(v, line, full);
    else if (full == "scaler.kind") c.scaler_kind = v;
    else if (full == "scaler.scale") c.scale = parse_f64(v, line, full);
    else if (full == "scaler.backoff_factor") c.backoff_factor = parse_f64(v, line, full);
    else if (full == "scaler.growth_factor") c.growth_factor = parse_f64(v, line, full);
    else if (full == "scaler.growth_interval") c.growth_interval = parse_i64(v, line, full);
    else if (full == "scaler.min_threshold_schedule") c.min_threshold_schedule = v;
    else if (full == "output.dir") c.output_dir = v;
    else fail(line, "unknown key '" + full + "'");
}

const std::vector<std::string>& known_sections() {
    static const std::vector<std::string> s = {
        "model", "data", "train", "quant", "regularizer", "scaler", "output"};
    return s;
}

std::string serialize_schedule(
    const std::vector<std::pair<std::int64_t, double>>& sched) {
    std::string out;
    for (std::size_t i = 0; i < sched.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(sched[i].first) + ":" + format_double(sched[i].second);
    }
    return out;
}

void check(bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
}

void validate_config(ExperimentConfig& c) {
    check(std::find(model_preset_names().begin(), model_preset_names().end(),
                    c.model_preset) != model_preset_names().end(),
          "model.preset: unknown preset '" + c.model_preset + "'");
    check(one_of(c.dataset, {"rings", "blobs", "bars", "csv", "idx"}),
          "data.dataset: unknown dataset '" + c.dataset + "'");
    check(c.train_samples > 0, "data.train_samples must be positive");
    check(c.val_samples > 0, "data.val_samples must be positive");
    check(c.noise >= 0.0, "data.noise must be nonnegative");
    check(c.epochs > 0, "train.epochs must be positive");
    check(c.batch_size > 0, "train.batch_size must be positive");
    check(c.learning_rate > 0.0, "train.learning_rate must be positive");
    check(c.momentum >= 0.0 && c.momentum < 1.0, "train.momentum must be in [0, 1)");
    check(c.divergence_limit > 0, "train.divergence_limit must be positive");
    check(c.quant_seed != 0, "quant.seed must be nonzero");
    check(one_of(c.reg_kind, {"none", "l2", "dropout"}),
          "regularizer.kind: unknown kind '" + c.reg_kind + "'");
    check(c.lambda >= 0.0, "regularizer.lambda must be nonnegative");
    check(c.drop_p >= 0.0 && c.drop_p < 1.0, "regularizer.p must be in [0, 1)");
    check(one_of(c.scaler_kind, {"constant", "dynamic-backoff"}),
          "scaler.kind: unknown kind '" + c.scaler_kind + "'");
    check(c.scale > 0.0 && std::isfinite(c.scale), "scaler.scale must be positive");
    check(c.backoff_factor > 0.0 && c.backoff_factor < 1.0,
          "scaler.backoff_factor must be in (0, 1)");
    check(c.growth_factor > 1.0, "scaler.growth_factor must exceed 1");
    check(c.growth_interval > 0, "scaler.growth_interval must be positive");
    // Normalizes spacing, so the snapshot is canonical.
    c.min_threshold_schedule =
        serialize_schedule(parse_threshold_schedule(c.min_threshold_schedule));
    if (c.dataset == "csv")
        check(!c.train_path.empty() && !c.val_path.empty(),
              "data.train_path and data.val_path are required for csv datasets");
    if (c.dataset == "idx")
        check(!c.train_path.empty() && !c.train_labels_path.empty() &&
                  !c.val_path.empty() && !c.val_labels_path.empty(),
              "idx datasets require train/val image and label paths");
}

} // namespace

std::string format_double(double v) {
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    return std::string(buf, p);
}

RoundingMode parse_rounding_mode(const std::string& name) {
    if (name == "nearest-even") return RoundingMode::NearestEven;
    if (name == "stochastic") return RoundingMode::Stochastic;
    if (name == "truncate") return RoundingMode::TruncateTowardZero;
    throw ConfigError("unknown rounding mode '" + name + "'");
}

std::vector<std::pair<std::int64_t, double>>
parse_threshold_schedule(const std::string& text) {
    std::vector<std::pair<std::int64_t, double>> out;
    const std::string t = trim(text);
    if (t.empty()) return out;
    std::stringstream ss(t);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        const std::size_t colon = item.find(':');
        if (colon == std::string::npos)
            throw ConfigError("schedule entry '" + item + "' is not iter:value");
        const std::string it_s = trim(item.substr(0, colon));
        const std::string val_s = trim(item.substr(colon + 1));
        std::int64_t iter = 0;
        double val = 0;
        {
            auto [p, ec] =
                std::from_chars(it_s.data(), it_s.data() + it_s.size(), iter);
            if (ec != std::errc{} || p != it_s.data() + it_s.size())
                throw ConfigError("schedule iteration '" + it_s + "' is not an integer");
        }
        {
            auto [p, ec] =
                std::from_chars(val_s.data(), val_s.data() + val_s.size(), val);
            if (ec != std::errc{} || p != val_s.data() + val_s.size())
                throw ConfigError("schedule value '" + val_s + "' is not a number");
        }
        if (iter < 0) throw ConfigError("schedule iterations must be nonnegative");
        if (!(val > 0.0) || !std::isfinite(val))
            throw ConfigError("schedule values must be positive");
        if (!out.empty() && iter <= out.back().first)
            throw ConfigError("schedule iterations must be strictly increasing");
        out.emplace_back(iter, val);
    }
    return out;
}

ExperimentConfig parse_config_text(const std::string& text) {
    ExperimentConfig cfg;
    std::string section;
    std::stringstream ss(text);
    std::string raw;
    int line = 0;
    while (std::getline(ss, raw)) {
        ++line;
        const std::string s = trim(raw);
        if (s.empty() || s[0] == '#' || s[0] == ';') continue;
        if (s.front() == '[') {
            if (s.back() != ']') fail(line, "unterminated section header");
            section = trim(s.substr(1, s.size() - 2));
            if (std::find(known_sections().begin(), known_sections().end(),
                          section) == known_sections().end())
                fail(line, "unknown section '[" + section + "]'");
            continue;
        }
        const std::size_t eq = s.find('=');
        if (eq == std::string::npos) fail(line, "expected key = value");
        if (section.empty()) fail(line, "key outside any [section]");
        const std::string key = trim(s.substr(0, eq));
        const std::string value = trim(s.substr(eq + 1));
        if (key.empty()) fail(line, "empty key");
        set_key(cfg, section, key, value, line);
    }
    validate_config(cfg);
    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError(path + ": cannot open config file");
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_config_text(ss.str());
}

std::string config_snapshot(const ExperimentConfig& cfg) {
    std::string out;
    const auto kv = [&out](const char* key, const std::string& value) {
        out += key;
        out += " =";
        if (!value.empty()) {
            out += " ";
            out += value;
        }
        out += "\n";
    };
    out += "[model]\n";
    kv("preset", cfg.model_preset);
    out += "\n[data]\n";
    kv("dataset", cfg.dataset);
    kv("train_samples", std::to_string(cfg.train_samples));
    kv("val_samples", std::to_string(cfg.val_samples));
    kv("noise", format_double(cfg.noise));
    kv("seed", std::to_string(cfg.data_seed));
    kv("train_path", cfg.train_path);
    kv("val_path", cfg.val_path);
    kv("train_labels_path", cfg.train_labels_path);
    kv("val_labels_path", cfg.val_labels_path);
    out += "\n[train]\n";
    kv("epochs", std::to_string(cfg.epochs));
    kv("batch_size", std::to_string(cfg.batch_size));
    kv("learning_rate", format_double(cfg.learning_rate));
    kv("momentum", format_double(cfg.momentum));
    kv("seed", std::to_string(cfg.seed));
    kv("divergence_limit", std::to_string(cfg.divergence_limit));
    out += "\n[quant]\n";
    kv("enabled", cfg.quant_enabled ? "true" : "false");
    kv("rounding", to_string(cfg.rounding));
    kv("seed", std::to_string(cfg.quant_seed));
    kv("saturate", cfg.saturate ? "true" : "false");
    out += "\n[regularizer]\n";
    kv("kind", cfg.reg_kind);
    kv("lambda", format_double(cfg.lambda));
    kv("p", format_double(cfg.drop_p));
    out += "\n[scaler]\n";
    kv("kind", cfg.scaler_kind);
    kv("scale", format_double(cfg.scale));
    kv("backoff_factor", format_double(cfg.backoff_factor));
    kv("growth_factor", format_double(cfg.growth_factor));
    kv("growth_interval", std::to_string(cfg.growth_interval));
    kv("min_threshold_schedule", cfg.min_threshold_schedule);
    out += "\n[output]\n";
    kv("dir", cfg.output_dir);
    return out;
}

Regularizer make_regularizer(const ExperimentConfig& cfg) {
    Regularizer reg;
    if (cfg.reg_kind == "l2") {
        reg.kind = Regularizer::Kind::L2;
        reg.lambda = cfg.lambda;
    } else if (cfg.reg_kind == "dropout") {
        reg.kind = Regularizer::Kind::Dropout;
        reg.p = cfg.drop_p;
    } else {
        reg.kind = Regularizer::Kind::None;
    }
    return reg;
}

TrainOptions make_train_options(const ExperimentConfig& cfg) {
    TrainOptions opts;
    opts.epochs = cfg.epochs;
    opts.batch_size = cfg.batch_size;
    opts.learning_rate = cfg.learning_rate;
    opts.momentum = cfg.momentum;
    opts.seed = cfg.seed;
    opts.divergence_limit = cfg.divergence_limit;
    opts.quant.enabled = cfg.quant_enabled;
    opts.quant.mode = cfg.rounding;
    opts.quant.seed = cfg.quant_seed;
    opts.quant.saturate = cfg.saturate;
    opts.scaler = make_scaler_options(cfg);
    return opts;
}

LossScaler::Options make_scaler_options(const ExperimentConfig& cfg) {
    LossScaler::Options opts;
    opts.kind = cfg.scaler_kind == "dynamic-backoff" ? LossScaler::Kind::DynamicBackoff
                                                     : LossScaler::Kind::Constant;
    opts.scale = cfg.scale;
    opts.backoff_factor = cfg.backoff_factor;
    opts.growth_factor = cfg.growth_factor;
    opts.growth_interval = cfg.growth_interval;
    opts.min_threshold_schedule = parse_threshold_schedule(cfg.min_threshold_schedule);
    return opts;
}

std::pair<Dataset, Dataset> make_datasets(const ExperimentConfig& cfg) {
    if (cfg.dataset == "csv")
        return {load_csv_dataset(cfg.train_path), load_csv_dataset(cfg.val_path)};
    if (cfg.dataset == "idx")
        return {load_idx(cfg.train_path, cfg.train_labels_path),
                load_idx(cfg.val_path, cfg.val_labels_path)};
    Dataset (*gen)(std::int64_t, double, std::uint64_t) = nullptr;
    if (cfg.dataset == "rings") gen = make_rings;
    else if (cfg.dataset == "blobs") gen = make_blobs;
    else gen = make_bars;
    return {gen(cfg.train_samples, cfg.noise, cfg.data_seed),
            gen(cfg.val_samples, cfg.noise, mix_seed(cfg.data_seed, 0xA1))};
}

} // namespace fp8emu::nn
