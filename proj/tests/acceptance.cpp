// Acceptance gate: one pass/fail line per shipping criterion, nonzero exit if
// any fails. Invoke as `fp8emu_acceptance <path-to-cli-binary>`.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <string>
#include <vector>

#include "fp8emu/config.hpp"
#include "fp8emu/float_format.hpp"
#include "fp8emu/kernels.hpp"
#include "fp8emu/lfsr.hpp"
#include "fp8emu/nn.hpp"
#include "fp8emu/rand.hpp"
#include "fp8emu/tensor.hpp"
#include "fp8emu/train.hpp"

using namespace fp8emu;
using namespace fp8emu::nn;

namespace {

std::string g_cli;
std::filesystem::path g_work;

std::string fmt(const char* pattern, double a, double b = 0.0, double c = 0.0) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), pattern, a, b, c);
    return buf;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in.good()) return "<unreadable: " + path + ">";
    return std::string(std::istreambuf_iterator<char>(in),
                       std::istreambuf_iterator<char>());
}

// ---------------------------------------------------------------------------
// 1. range report landmark values

std::string check_range_report() {
    if (g_cli.empty()) return "no CLI binary path given";
    const std::string cmd = "\"" + g_cli + "\" range-report 2>&1";
    std::FILE* pipe = popen(cmd.c_str(), "r");
    if (!pipe) return "cannot launch " + g_cli;
    std::string out;
    char buf[512];
    while (std::fgets(buf, sizeof(buf), pipe)) out += buf;
    if (pclose(pipe) != 0) return "range-report exited nonzero";
    for (const char* needle :
         {"57344", "6.10e-5", "1.52e-5",                // 8-bit row
          "3.40e+38", "1.17e-38", "1.40e-45", "65504"}) // 32- and 16-bit rows
        if (out.find(needle) == std::string::npos)
            return std::string("missing value ") + needle + " in:\n" + out;
    return "";
}

// ---------------------------------------------------------------------------
// 2. nearest-even codec against the exhaustive oracle

std::string check_codec_oracle() {
    // Round trips: every code survives every mode (NaN collapses to the
    // canonical code).
    LfsrStream rng(0xACE1);
    for (std::uint32_t code = 0; code < 256; ++code) {
        const double v = decode(code, kFp8);
        for (RoundingMode mode : {RoundingMode::NearestEven, RoundingMode::Stochastic,
                                  RoundingMode::TruncateTowardZero}) {
            const EncodeResult r = encode(v, kFp8, mode, &rng);
            const std::uint32_t expect = std::isnan(v) ? kFp8.nan_code() : code;
            if (r.code != expect)
                return fmt("code %.0f re-encodes to %.0f under mode %.0f",
                           double(code), double(r.code), double(int(mode)));
        }
    }

    // Positive grid of finite codes, ascending by construction.
    std::vector<double> grid_v;
    std::vector<std::uint32_t> grid_c;
    for (std::uint32_t code = 0; code <= kFp8.max_normal_code(); ++code) {
        grid_v.push_back(decode(code, kFp8));
        grid_c.push_back(code);
    }
    const double overflow_boundary = kFp8.max_normal(); // strictly above overflows

    const auto oracle = [&](double x) -> std::uint32_t {
        const auto it = std::lower_bound(grid_v.begin(), grid_v.end(), x);
        std::size_t hi = std::size_t(it - grid_v.begin());
        if (hi == grid_v.size()) return grid_c.back();
        if (hi == 0) return grid_c.front();
        const double d_lo = x - grid_v[hi - 1], d_hi = grid_v[hi] - x;
        if (d_lo < d_hi) return grid_c[hi - 1];
        if (d_hi < d_lo) return grid_c[hi];
        return (grid_c[hi - 1] & 1u) == 0 ? grid_c[hi - 1] : grid_c[hi];
    };

    Rand rand{0xC0DEC};
    std::int64_t mismatches = 0;
    const auto check_one = [&](double x) {
        const std::uint32_t sign = std::signbit(x) ? kFp8.sign_mask() : 0;
        const EncodeResult r = encode(x, kFp8, RoundingMode::NearestEven);
        const double ax = std::fabs(x);
        if (ax > overflow_boundary) {
            if (!r.overflowed || r.code != (kFp8.inf_code() | sign)) ++mismatches;
        } else if (r.overflowed || r.code != (oracle(ax) | sign)) {
            ++mismatches;
        }
    };
    for (int i = 0; i < 1000000; ++i)
        check_one((rand.uniform() * 2.0 - 1.0) * 70000.0);
    for (int i = 0; i < 1000000; ++i) {
        const double mag = std::exp2(-20.0 + 38.0 * rand.uniform());
        check_one(rand.uniform() < 0.5 ? mag : -mag);
    }
    if (mismatches > 0) return fmt("%.0f oracle mismatches", double(mismatches));
    return "";
}

// ---------------------------------------------------------------------------
// 3. stochastic rounding unbiasedness

std::string check_stochastic_unbiasedness() {
    Rand rand{0x57C};
    const int kDraws = 100000;
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) {
        // Log-uniform magnitudes spanning deep subnormal to large normal.
        const double x = std::exp2(-17.0 + 32.0 * rand.uniform()) *
                         (rand.uniform() < 0.5 ? 1.0 : -1.0);
        LfsrStream rng = LfsrStream::split(0xBEA7, std::uint64_t(i));
        double sum = 0.0;
        for (int d = 0; d < kDraws; ++d)
            sum += decode(encode(x, kFp8, RoundingMode::Stochastic, &rng).code, kFp8);
        const double mean = sum / kDraws;
        const double bound = 3.0 * (ulp(x, kFp8) / 2.0) / std::sqrt(double(kDraws));
        const double err = std::fabs(mean - x);
        worst = std::max(worst, err / bound);
        if (err > bound)
            return fmt("input %.6g: |mean - x| = %.3g exceeds %.3g", x, err, bound);
    }
    return "";
}

// ---------------------------------------------------------------------------
// 4. LFSR full period

std::string check_lfsr_period() {
    LfsrStream reg(0xACE1, 1);
    const std::uint16_t start = reg.state();
    std::uint64_t steps = 0;
    do {
        reg.next_bits();
        ++steps;
        if (steps > LfsrStream::kPeriod) break;
    } while (reg.state() != start);
    if (steps != LfsrStream::kPeriod)
        return fmt("cycle length %.0f, want %.0f", double(steps),
                   double(LfsrStream::kPeriod));
    return "";
}

// ---------------------------------------------------------------------------
// 5. quantized kernels against the scalar reference

bool bitwise_equal(const Tensor& a, const Tensor& b) {
    if (a.shape != b.shape) return false;
    return std::memcmp(a.data.data(), b.data.data(),
                       a.data.size() * sizeof(float)) == 0;
}

Tensor random_tensor(std::vector<std::int64_t> shape, Rand& rand) {
    Tensor t(std::move(shape));
    for (float& v : t.data) v = float((rand.uniform() * 2.0 - 1.0) * 4.0);
    return t;
}

std::string check_kernel_oracle() {
    Rand rand{0x6E3};
    QuantConfig qc;
    for (int trial = 0; trial < 100; ++trial) {
        const auto dim = [&] { return 1 + std::int64_t(rand.uniform() * 16.0); };
        const std::int64_t m = dim(), k = dim(), n = dim();
        const QuantizedTensor a = quantize(random_tensor({m, k}, rand), kFp8, qc);
        const QuantizedTensor b = quantize(random_tensor({k, n}, rand), kFp8, qc);
        const Tensor got = gemm_fp8(a, b);
        Tensor want({m, n});
        for (std::int64_t i = 0; i < m; ++i)
            for (std::int64_t j = 0; j < n; ++j) {
                float acc = 0.0f;
                for (std::int64_t kk = 0; kk < k; ++kk)
                    acc += decode_to_float(a.code_at(i * k + kk), kFp8) *
                           decode_to_float(b.code_at(kk * n + j), kFp8);
                want.at(i * n + j) = acc;
            }
        if (!bitwise_equal(got, want))
            return fmt("gemm trial %.0f differs from the scalar reference",
                       double(trial));
    }
    for (int trial = 0; trial < 100; ++trial) {
        const auto pick = [&](std::int64_t lo, std::int64_t hi) {
            return lo + std::int64_t(rand.uniform() * double(hi - lo + 1));
        };
        ConvGeometry geom{pick(1, 2), pick(0, 1)};
        const std::int64_t n = pick(1, 3), c = pick(1, 3), f = pick(1, 3);
        const std::int64_t kh = pick(1, 3), kw = pick(1, 3);
        const std::int64_t h = std::max<std::int64_t>(kh, pick(2, 10));
        const std::int64_t w = std::max<std::int64_t>(kw, pick(2, 10));
        const std::int64_t oh = conv_out_dim(h, kh, geom.stride, geom.pad);
        const std::int64_t ow = conv_out_dim(w, kw, geom.stride, geom.pad);
        if (oh < 1 || ow < 1) continue;
        const QuantizedTensor x = quantize(random_tensor({n, c, h, w}, rand), kFp8, qc);
        const QuantizedTensor kern =
            quantize(random_tensor({f, c, kh, kw}, rand), kFp8, qc);
        const Tensor direct = conv2d_fp8(x, kern, geom);
        if (!bitwise_equal(direct, conv2d_fp8_im2col(x, kern, geom)))
            return fmt("conv trial %.0f: direct and im2col paths differ", double(trial));
        Tensor want({n, f, oh, ow});
        for (std::int64_t ni = 0; ni < n; ++ni)
            for (std::int64_t fi = 0; fi < f; ++fi)
                for (std::int64_t oi = 0; oi < oh; ++oi)
                    for (std::int64_t oj = 0; oj < ow; ++oj) {
                        float acc = 0.0f;
                        for (std::int64_t ci = 0; ci < c; ++ci)
                            for (std::int64_t ki = 0; ki < kh; ++ki)
                                for (std::int64_t kj = 0; kj < kw; ++kj) {
                                    const std::int64_t ii = oi * geom.stride + ki - geom.pad;
                                    const std::int64_t jj = oj * geom.stride + kj - geom.pad;
                                    float xv = 0.0f;
                                    if (ii >= 0 && ii < h && jj >= 0 && jj < w)
                                        xv = decode_to_float(
                                            x.code_at(((ni * c + ci) * h + ii) * w + jj),
                                            kFp8);
                                    acc += xv * decode_to_float(
                                                    kern.code_at(((fi * c + ci) * kh + ki) * kw + kj),
                                                    kFp8);
                                }
                        want.at(((ni * f + fi) * oh + oi) * ow + oj) = acc;
                    }
        if (!bitwise_equal(direct, want))
            return fmt("conv trial %.0f differs from the scalar reference", double(trial));
    }
    return "";
}

// ---------------------------------------------------------------------------
// 6. loss-scale state machine

std::string check_scaler_state_machine() {
    LossScaler::Options o;
    o.kind = LossScaler::Kind::DynamicBackoff;
    o.scale = 65536.0;
    o.growth_interval = 100;
    o.min_threshold_schedule = {{40, 8192.0}, {150, 32768.0}};
    LossScaler s(o);
    if (s.min_threshold(0) != 1.0 || s.min_threshold(39) != 1.0)
        return "threshold before the first schedule step is not 1";
    if (s.min_threshold(40) != 8192.0 || s.min_threshold(149) != 8192.0)
        return "threshold from step 40 is not 8192";
    if (s.min_threshold(150) != 32768.0 || s.min_threshold(1000) != 32768.0)
        return "threshold from step 150 is not 32768";

    if (s.step(false, 10).scale_after != 32768.0) return "back-off did not halve";
    if (s.step(false, 10).scale_after != 16384.0) return "back-off did not halve";
    for (int i = 0; i < 10; ++i)
        if (s.step(false, 50).scale_after < 8192.0)
            return "scale fell below the active threshold";
    if (s.scale() != 8192.0) return "repeated back-off did not clamp at 8192";
    for (int i = 0; i < 99; ++i)
        if (s.step(true, 100).action != ScaleAction::None) // floor still 8192 here
            return "premature growth";
    // The 100th clean step doubles the scale; crossing into the step-150
    // regime afterwards lifts it the rest of the way to the new floor.
    if (s.step(true, 100).action != ScaleAction::Growth || s.scale() != 16384.0)
        return "growth after the configured interval did not double the scale";
    if (s.step(true, 151).action != ScaleAction::ClampedToMin || s.scale() != 32768.0)
        return "the raised floor was not honored on a clean step";

    // Overflow steps must leave the parameters untouched; a finite step of the
    // same loop must move them.
    const ModelSpec spec = make_model("rings-mlp", Regularizer{});
    const Dataset ds = make_rings(64, 0.05, 7);
    TrainOptions opts;
    opts.epochs = 1;
    opts.batch_size = 32;
    opts.seed = 5;
    opts.quant.seed = 81;
    opts.scaler.kind = LossScaler::Kind::Constant;
    opts.scaler.scale = 1e30; // every FP16 error code overflows
    Network frozen(spec, opts);
    std::vector<std::vector<std::uint16_t>> before;
    for (const auto& lp : frozen.params()) before.push_back(lp.w.master);
    LossScaler huge(opts.scaler);
    const TrainResult res = train(frozen, ds, ds, huge, opts);
    for (const StepReport& sr : res.steps)
        if (sr.grad_overflow_count <= 0) return "expected overflow on every step";
    for (std::size_t i = 0; i < before.size(); ++i)
        if (frozen.params()[i].w.master != before[i])
            return "an overflow step changed the weights";

    opts.scaler.scale = 1024.0;
    Network moving(spec, opts);
    LossScaler sane(opts.scaler);
    train(moving, ds, ds, sane, opts);
    bool changed = false;
    for (std::size_t i = 0; i < before.size(); ++i)
        if (moving.params()[i].w.master != before[i]) changed = true;
    if (!changed) return "a finite step left the weights untouched";
    return "";
}

// ---------------------------------------------------------------------------
// 7. gradient check

std::string check_gradients() {
    const struct {
        const char* preset;
        Dataset batch;
    } cases[] = {
        {"rings-mlp", make_rings(8, 0.1, 3)},
        {"deep-mlp", make_rings(6, 0.1, 4)},
        {"convnet", make_bars(4, 0.05, 5)},
    };
    for (const auto& c : cases) {
        const double dev =
            gradient_check(make_model(c.preset, Regularizer{}), c.batch, 11);
        if (!(dev <= 1e-5))
            return std::string(c.preset) + fmt(": max relative deviation %.3g", dev);
    }
    return "";
}

// ---------------------------------------------------------------------------
// 8. loss scaling rescues gradient underflow

struct RunSummary {
    double mean_underflow = 0.0;
    double final_train_loss = 0.0;
    double final_val_accuracy = 0.0;
    bool diverged = false;
};

RunSummary summarize(const RunArtifacts& art) {
    RunSummary s;
    for (const StepReport& sr : art.result.steps)
        s.mean_underflow += sr.grad_underflow_fraction;
    if (!art.result.steps.empty())
        s.mean_underflow /= double(art.result.steps.size());
    if (!art.result.evals.empty()) {
        s.final_train_loss = art.result.evals.back().train_loss;
        s.final_val_accuracy = art.result.evals.back().val_accuracy;
    }
    s.diverged = art.result.diverged;
    return s;
}

RunSummary run_into(const ExperimentConfig& cfg, const std::string& name) {
    return summarize(run_experiment_at(cfg, (g_work / name).string()));
}

std::string check_underflow_mechanism() {
    ExperimentConfig tiny, large, fp32;
    bool found_tiny = false, found_large = false, found_fp32 = false;
    for (const auto& [name, cfg] : sweep_runs("lossscale-sweep")) {
        if (name == "scale1") tiny = cfg, found_tiny = true;
        if (name == "scale10000") large = cfg, found_large = true;
        if (name == "fp32") fp32 = cfg, found_fp32 = true;
    }
    if (!found_tiny || !found_large || !found_fp32)
        return "loss-scale sweep preset is missing its paired runs";

    const RunSummary s1 = run_into(tiny, "underflow_scale1");
    const RunSummary s2 = run_into(large, "underflow_scale10000");
    const RunSummary s3 = run_into(fp32, "underflow_fp32");
    if (s1.diverged || s2.diverged || s3.diverged) return "a paired run diverged";
    if (!(s1.mean_underflow > s2.mean_underflow))
        return fmt("underflow fraction %.4f (scale 1) vs %.4f (scale 10000)",
                   s1.mean_underflow, s2.mean_underflow);
    if (!(s1.final_train_loss > s2.final_train_loss))
        return fmt("final loss %.4f (scale 1) vs %.4f (scale 10000)",
                   s1.final_train_loss, s2.final_train_loss);
    const double rel =
        (s2.final_train_loss - s3.final_train_loss) / s3.final_train_loss;
    if (!(rel <= 0.10))
        return fmt("scaled run %.4f vs fp32 %.4f: off by %.1f%%",
                   s2.final_train_loss, s3.final_train_loss, rel * 100.0);
    return "";
}

// ---------------------------------------------------------------------------
// 9. stochastic rounding + L2 parity with fp32

std::string check_training_parity() {
    ExperimentConfig base;
    bool found = false;
    for (const auto& [name, cfg] : sweep_runs("rounding-ablation"))
        if (name == "stochastic-l2") base = cfg, found = true;
    if (!found) return "rounding ablation preset is missing stochastic-l2";

    for (const std::uint64_t seed : {1ull, 2ull, 3ull}) {
        ExperimentConfig q = base;
        q.seed = seed;
        ExperimentConfig f = q;
        f.quant_enabled = false;
        const RunSummary sq = run_into(q, "parity_fp8_seed" + std::to_string(seed));
        const RunSummary sf = run_into(f, "parity_fp32_seed" + std::to_string(seed));
        if (sq.diverged || sf.diverged)
            return "seed " + std::to_string(seed) + " diverged";
        if (sq.final_val_accuracy + 0.02 < sf.final_val_accuracy)
            return "seed " + std::to_string(seed) +
                   fmt(": accuracy %.4f vs fp32 %.4f", sq.final_val_accuracy,
                       sf.final_val_accuracy);
    }
    return "";
}

// ---------------------------------------------------------------------------
// 10. determinism

std::string check_determinism() {
    ExperimentConfig cfg;
    for (const auto& [name, c] : sweep_runs("rounding-ablation"))
        if (name == "stochastic-l2") cfg = c;
    const RunArtifacts a = run_experiment_at(cfg, (g_work / "det_a").string());
    const RunArtifacts b = run_experiment_at(cfg, (g_work / "det_b").string());
    for (const auto& [pa, pb] :
         {std::pair{a.steps_path, b.steps_path}, {a.eval_path, b.eval_path},
          {a.events_path, b.events_path}, {a.config_path, b.config_path}}) {
        if (slurp(pa) != slurp(pb))
            return std::filesystem::path(pa).filename().string() + " differs between runs";
    }
    return "";
}

} // namespace

int main(int argc, char** argv) {
    if (argc > 1) g_cli = argv[1];
    g_work = std::filesystem::temp_directory_path() / "fp8emu_acceptance";
    std::filesystem::remove_all(g_work);
    std::filesystem::create_directories(g_work);

    const struct {
        const char* name;
        std::function<std::string()> run;
        double budget_s;
    } criteria[] = {
        {"range report landmark values", check_range_report, 1.0},
        {"nearest-even codec matches the exhaustive oracle", check_codec_oracle, 30.0},
        {"stochastic rounding is unbiased", check_stochastic_unbiasedness, 60.0},
        {"lfsr attains its full period", check_lfsr_period, 10.0},
        {"quantized kernels match the scalar reference bitwise", check_kernel_oracle, 60.0},
        {"loss-scale state machine follows the schedule", check_scaler_state_machine, 60.0},
        {"analytic gradients match finite differences", check_gradients, 60.0},
        {"loss scaling rescues fp8 gradient underflow", check_underflow_mechanism, 300.0},
        {"stochastic rounding with l2 reaches fp32 parity", check_training_parity, 600.0},
        {"identical configs produce identical logs", check_determinism, 120.0},
    };

    int failures = 0;
    for (const auto& c : criteria) {
        const auto t0 = std::chrono::steady_clock::now();
        std::string reason;
        try {
            reason = c.run();
        } catch (const std::exception& e) {
            reason = std::string("exception: ") + e.what();
        }
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (reason.empty() && secs > c.budget_s)
            reason = fmt("took %.1f s, budget %.0f s", secs, c.budget_s);
        if (reason.empty()) {
            std::printf("PASS  %-55s (%.1fs)\n", c.name, secs);
        } else {
            std::printf("FAIL  %-55s (%.1fs): %s\n", c.name, secs, reason.c_str());
            ++failures;
        }
        std::fflush(stdout);
    }
    if (failures == 0) {
        std::printf("all %d criteria passed\n", int(std::size(criteria)));
        return 0;
    }
    std::printf("%d of %d criteria failed\n", failures, int(std::size(criteria)));
    return 1;
}
