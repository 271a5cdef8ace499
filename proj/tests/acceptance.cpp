// Acceptance suite: runs every acceptance criterion at its stated tolerance
// and prints one pass/fail line per criterion.

#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "rpf/core/parallel.hpp"
#include "rpf/imaging/imaging.hpp"
#include "rpf/loss/losses.hpp"
#include "rpf/metrics/metrics.hpp"
#include "rpf/net/checkpoint.hpp"
#include "rpf/reference/reference.hpp"
#include "rpf/train/trainer.hpp"
#include "test_util.hpp"

using namespace rpf;
namespace fs = std::filesystem;
using core::Rng;
using core::Tensor;
using nn::Variable;
using testutil::grad_max_err;
using testutil::max_abs_diff;
using testutil::numeric_gradient;
using testutil::random_tensor;

namespace {

struct Failure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void require(bool cond, const std::string& msg) {
    if (!cond) throw Failure(msg);
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.3g", v);
    return buf;
}

double now_seconds() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

fs::path scratch_dir() {
    static fs::path dir = [] {
        fs::path p = fs::temp_directory_path() / ("rpf_acceptance_" + std::to_string(::getpid()));
        fs::remove_all(p);
        fs::create_directories(p);
        return p;
    }();
    return dir;
}

// ---------------------------------------------------------------- criterion 1

void criterion_convolution_theorem() {
    Rng rng(101);
    const double t0 = now_seconds();
    const Tensor x = random_tensor({16, 16}, rng, -1.0, 1.0);
    const Tensor kernel = random_tensor({16, 16}, rng, -1.0, 1.0);
    const core::ComplexPlane mask = core::fft2(kernel);
    const Tensor via_fft = imaging::apply_spectral_mask(x, mask);
    const Tensor direct = ref::circular_convolve(x, kernel);
    const double diff = max_abs_diff(via_fft, direct);
    const double elapsed = now_seconds() - t0;
    require(diff < 1e-5, "max abs diff " + fmt(diff) + " >= 1e-5");
    require(elapsed < 1.0, "took " + fmt(elapsed) + " s >= 1 s");
}

// ---------------------------------------------------------------- criterion 2

void criterion_fft_round_trip() {
    Rng rng(102);
    for (const auto& [h, w] : {std::pair{8, 8}, std::pair{33, 17}, std::pair{64, 64},
                               std::pair{100, 100}, std::pair{255, 193}, std::pair{256, 256}}) {
        const Tensor x = random_tensor({h, w}, rng);
        const Tensor back = core::ifft2_real(core::fft2(x));
        const double err = max_abs_diff(x, back);
        require(err < 1e-6, "round-trip error " + fmt(err) + " at " +
                                std::to_string(h) + "x" + std::to_string(w));
    }
}

// ---------------------------------------------------------------- criterion 3

void criterion_gradient_checks() {
    const double t0 = now_seconds();
    Rng rng(103);
    const Tensor ir = random_tensor({8, 8}, rng);
    const Tensor vis = random_tensor({8, 8}, rng);
    loss::LossConfig cfg;
    const loss::MaskSet masks = loss::make_masks(ir, vis, cfg);

    auto check_loss = [&](const char* name, const Tensor& x0,
                          const std::function<Variable(const Variable&)>& build,
                          const std::function<double(const Tensor&)>& value) {
        Variable v(x0.reshaped({1, 1, 8, 8}), true);
        build(v).backward();
        const Tensor analytic = v.grad().reshaped({8, 8});
        const Tensor numeric = numeric_gradient(value, x0, 1e-6);
        const double err = grad_max_err(analytic, numeric);
        require(err < 1e-4, std::string(name) + " gradient error " + fmt(err));
    };

    const Tensor m0 = random_tensor({8, 8}, rng, -0.9, 0.9);
    check_loss("l_grad", m0,
               [&](const Variable& v) { return loss::loss_grad(v, ir, vis, cfg); },
               [&](const Tensor& t) { return loss::loss_grad_value(t, ir, vis, cfg.lambda1); });
    check_loss("l_reg", m0, [&](const Variable& v) { return loss::loss_reg(v, ir); },
               [&](const Tensor& t) { return loss::loss_reg_value(t, ir); });

    const Tensor f0 = random_tensor({8, 8}, rng);
    check_loss("l_c", f0,
               [&](const Variable& v) { return loss::loss_contrastive(v, ir, vis, masks, cfg); },
               [&](const Tensor& t) {
                   return loss::loss_contrastive_value(t, ir, vis, masks.weight,
                                                       masks.weight_complement, cfg.eps);
               });
    check_loss("l_s", f0, [&](const Variable& v) { return loss::loss_s(v, ir, vis, cfg); },
               [&](const Tensor& t) {
                   Variable v = Variable::constant(t.reshaped({1, 1, 8, 8}));
                   return loss::loss_s(v, ir, vis, cfg).value()[0];
               });

    // full model readout at the shipped width and depth
    net::ModelConfig mcfg;  // N=3, C=32
    net::RpfNet model(mcfg);
    Rng init_rng(104);
    model.init(init_rng);
    const Tensor probe = random_tensor({1, 1, 8, 8}, rng, -1.0, 1.0);
    auto model_readout = [&](const Tensor& irt, const Tensor& vist, Tensor* g_ir, Tensor* g_vis) {
        const bool with_grad = g_ir != nullptr;
        Variable vir(irt.reshaped({1, 1, 8, 8}), with_grad);
        Variable vvis(vist.reshaped({1, 1, 8, 8}), with_grad);
        net::ForwardResult r = model.forward(vir, vvis, net::RunMode::Train);
        Variable lossv = nn::sum(nn::mul(r.fused_y, Variable::constant(probe)));
        if (with_grad) {
            lossv.backward();
            *g_ir = vir.grad().reshaped({8, 8});
            *g_vis = vvis.grad().reshaped({8, 8});
        }
        return lossv.value()[0];
    };
    Tensor g_ir, g_vis;
    model_readout(ir, vis, &g_ir, &g_vis);
    const Tensor n_ir = numeric_gradient(
        [&](const Tensor& t) { return model_readout(t, vis, nullptr, nullptr); }, ir, 1e-6);
    const Tensor n_vis = numeric_gradient(
        [&](const Tensor& t) { return model_readout(ir, t, nullptr, nullptr); }, vis, 1e-6);
    const double err_ir = grad_max_err(g_ir, n_ir);
    const double err_vis = grad_max_err(g_vis, n_vis);
    require(err_ir < 1e-4, "model gradient wrt ir: error " + fmt(err_ir));
    require(err_vis < 1e-4, "model gradient wrt vis: error " + fmt(err_vis));

    const double elapsed = now_seconds() - t0;
    require(elapsed < 30.0, "gradient checks took " + fmt(elapsed) + " s >= 30 s");
}

// ---------------------------------------------------------------- criterion 4

void criterion_loss_oracles() {
    Rng rng(105);
    loss::LossConfig cfg;
    for (int trial = 0; trial < 10; ++trial) {
        const Tensor m = random_tensor({8, 8}, rng, -1.0, 1.0);
        const Tensor f = random_tensor({8, 8}, rng);
        const Tensor ir = random_tensor({8, 8}, rng);
        const Tensor vis = random_tensor({8, 8}, rng);

        const double dg =
            std::fabs(loss::loss_grad_value(m, ir, vis, cfg.lambda1) -
                      ref::loss_grad_loop(m, ir, vis, cfg.lambda1));
        require(dg < 1e-10, "l_grad oracle diff " + fmt(dg));

        const double dr = std::fabs(loss::loss_reg_value(m, ir) - ref::loss_reg_loop(m, ir));
        require(dr < 1e-10, "l_reg oracle diff " + fmt(dr));

        const auto [w, wc] = imaging::adaptive_weight(ir, imaging::compute_residual(ir, vis));
        const auto [rw, rwc] = ref::adaptive_weight_loop(ir, imaging::compute_residual(ir, vis).m);
        require(max_abs_diff(w, rw) == 0.0 && max_abs_diff(wc, rwc) == 0.0,
                "adaptive weight differs from the loop oracle");

        const double dc = std::fabs(loss::loss_contrastive_value(f, ir, vis, w, wc, cfg.eps) -
                                    ref::loss_contrastive_loop(f, ir, vis, w, wc, cfg.eps));
        require(dc < 1e-10, "l_c oracle diff " + fmt(dc));
    }
}

// ---------------------------------------------------------------- criterion 5

void criterion_ror_tables() {
    const std::vector<std::vector<double>> stage_sweep = {
        {7.459, 6.581, 10.68, 0.640, 1.728, 0.668},
        {7.434, 6.235, 10.69, 0.642, 1.736, 0.675},
        {7.415, 6.150, 10.76, 0.642, 1.734, 0.660},
        {7.379, 6.121, 10.45, 0.645, 1.727, 0.662},
        {7.369, 5.958, 10.77, 0.634, 1.685, 0.636},
    };
    const std::vector<double> got1 = metrics::ror_rank(stage_sweep);
    require(got1 == std::vector<double>{2, 1, 3, 4, 5},
            "stage sweep RoR mismatch: got {" + fmt(got1[0]) + "," + fmt(got1[1]) + "," +
                fmt(got1[2]) + "," + fmt(got1[3]) + "," + fmt(got1[4]) + "}");

    const std::vector<std::vector<double>> tradeoff_sweep = {
        {7.432, 6.199, 10.77, 0.640, 1.734, 0.676},
        {7.410, 5.931, 10.54, 0.637, 1.747, 0.668},
        {7.434, 6.235, 10.69, 0.642, 1.736, 0.675},
        {7.355, 5.920, 10.33, 0.634, 1.732, 0.634},
        {7.383, 5.623, 10.52, 0.640, 1.720, 0.627},
    };
    const std::vector<double> got2 = metrics::ror_rank(tradeoff_sweep);
    require(got2 == std::vector<double>{2, 3, 1, 5, 4}, "trade-off sweep RoR mismatch");
}

// ---------------------------------------------------------------- criterion 6

void criterion_ssim_sanity() {
    Rng rng(106);
    const Tensor x = random_tensor({16, 16}, rng);
    const Tensor y = random_tensor({16, 16}, rng);
    const double self_err = std::fabs(loss::ssim_value(x, x) - 1.0);
    require(self_err < 1e-6, "ssim(x,x) off by " + fmt(self_err));
    const double sym = std::fabs(loss::ssim_value(x, y) - loss::ssim_value(y, x));
    require(sym < 1e-10, "ssim asymmetry " + fmt(sym));
    const double c1 = 0.24, c2 = 0.81, k1sq = 1e-4;
    const double expect = (2 * c1 * c2 + k1sq) / (c1 * c1 + c2 * c2 + k1sq);
    const double got = loss::ssim_value(Tensor::full({12, 12}, c1), Tensor::full({12, 12}, c2));
    require(std::fabs(got - expect) < 1e-8,
            "constant-plane ssim " + fmt(got) + " vs closed form " + fmt(expect));
}

// ---------------------------------------------------------------- criterion 7

void criterion_mask_invariants() {
    Rng rng(107);
    auto check_pair = [&](const Tensor& ir, const Tensor& vis) {
        const Tensor tex = imaging::texture_mask(vis);
        const Tensor thr = imaging::thermal_mask(ir);
        const auto [w, wc] = imaging::adaptive_weight(ir, imaging::compute_residual(ir, vis));
        for (int64_t i = 0; i < ir.numel(); ++i) {
            require(tex[i] == 0.0 || tex[i] == 1.0, "texture mask not binary");
            require(thr[i] == 0.0 || thr[i] == 1.0, "thermal mask not binary");
            require(w[i] == 0.0 || w[i] == 1.0, "adaptive weight not binary");
            require(w[i] + wc[i] == 1.0, "w + complement != 1");
        }
    };
    for (int trial = 0; trial < 100; ++trial) {
        const int h = 4 + rng.uniform_int(0, 12), w = 4 + rng.uniform_int(0, 12);
        check_pair(random_tensor({h, w}, rng), random_tensor({h, w}, rng));
    }
    // degenerate inputs: constants must give all-zero texture/thermal masks
    const std::vector<double> levels = {0.0, 0.25, 0.5, 0.75, 1.0};
    for (double level : levels) {
        const Tensor c = Tensor::full({8, 8}, level);
        require(max_abs_diff(imaging::thermal_mask(c), Tensor({8, 8})) == 0.0,
                "thermal mask of a constant image is not empty");
        require(max_abs_diff(imaging::texture_mask(c), Tensor({8, 8})) == 0.0,
                "texture mask of a constant image is not empty");
        check_pair(c, c);
    }
}

// ---------------------------------------------------------------- criterion 8

void criterion_smoke_training() {
    // the 300 s budget assumes four cores; prorate when fewer are available
    const int cores = std::min(4, core::num_threads());
    const double budget = 300.0 * 4.0 / cores;
    const double t0 = now_seconds();
    train::TrainConfig cfg;
    cfg.model.stages = 3;
    cfg.model.channels = 32;
    cfg.batch = 4;
    cfg.crop = 64;
    cfg.epochs = 1000;  // bounded by max_steps
    cfg.max_steps = 200;
    cfg.seed = 42;
    cfg.synthetic = true;
    cfg.synthetic_count = 8;
    cfg.synthetic_size = 64;
    cfg.threads = std::min(4, core::num_threads());

    const fs::path out = scratch_dir() / "smoke";
    train::Trainer trainer(cfg);
    const train::TrainResult result = trainer.train(out.string());
    require(!result.aborted, "training aborted: " + result.abort_reason);
    require(result.history.size() == 200, "expected 200 steps");

    double first10 = 0.0, last10 = 0.0;
    for (int i = 0; i < 10; ++i) {
        first10 += result.history[static_cast<size_t>(i)].l_total / 10.0;
        last10 += result.history[result.history.size() - 10 + i].l_total / 10.0;
    }
    const double drop = (first10 - last10) / std::fabs(first10);
    require(drop >= 0.2, "loss dropped " + fmt(drop * 100.0) + "% < 20% (start " + fmt(first10) +
                             ", end " + fmt(last10) + ")");

    // fused outputs stay strictly inside (0,1)
    train::SyntheticDataset data(cfg.synthetic_count, 64, 64, cfg.seed);
    for (size_t i = 0; i < data.size(); ++i) {
        const net::FusedOutput fused = trainer.model().fuse(data.load(i));
        for (int64_t p = 0; p < fused.fused_y.numel(); ++p)
            require(fused.fused_y[p] > 0.0 && fused.fused_y[p] < 1.0,
                    "fused output left (0,1)");
    }
    const double elapsed = now_seconds() - t0;
    require(elapsed < budget, "smoke training took " + fmt(elapsed) + " s >= " + fmt(budget) +
                                  " s (" + std::to_string(cores) + " core budget)");
    std::printf("         (smoke training on %d core(s): %.0f s, loss %.3f -> %.3f, -%.0f%%)\n",
                cores, elapsed, first10, last10, drop * 100.0);
}

// ---------------------------------------------------------------- criterion 9

void criterion_metric_oracles() {
    require(metrics::entropy(Tensor::full({16, 16}, 0.3)) == 0.0, "EN(constant) != 0");
    Tensor binary({16, 16});
    for (int64_t i = 0; i < 128; ++i) binary[i] = 1.0;
    require(std::fabs(metrics::entropy(binary) - 1.0) < 1e-12, "EN(50/50) != 1 bit");
    require(metrics::spatial_frequency(Tensor::full({8, 8}, 0.4)) == 0.0, "SF(constant) != 0");
    require(metrics::std_dev(Tensor::full({8, 8}, 0.4)) == 0.0, "SD(constant) != 0");

    Rng rng(109);
    const Tensor x = random_tensor({24, 24}, rng);
    require(std::fabs(metrics::correlation_cc(x, x, x) - 1.0) < 1e-12, "CC(x,x,x) != 1");
    const double vif_self = metrics::vif(x, x);
    require(std::fabs(vif_self - 1.0) < 1e-6, "vif(x,x) = " + fmt(vif_self));

    const Tensor img = random_tensor({24, 20}, rng);
    const metrics::PsdReport rep = metrics::psd_analyze(img);
    double total = 0.0;
    for (int64_t i = 0; i < rep.psd2d.numel(); ++i) total += rep.psd2d[i];
    double mu = 0.0;
    for (int64_t i = 0; i < img.numel(); ++i) mu += img[i];
    mu /= static_cast<double>(img.numel());
    double var = 0.0;
    for (int64_t i = 0; i < img.numel(); ++i) var += (img[i] - mu) * (img[i] - mu);
    var /= static_cast<double>(img.numel());
    const double rel = std::fabs(total - var * static_cast<double>(img.numel())) /
                       (var * static_cast<double>(img.numel()));
    require(rel < 1e-6, "PSD Parseval relative error " + fmt(rel));
}

// --------------------------------------------------------------- criterion 10

void criterion_determinism() {
    train::TrainConfig cfg;
    cfg.model.stages = 1;
    cfg.model.channels = 8;
    cfg.batch = 2;
    cfg.crop = 32;
    cfg.epochs = 2;
    cfg.seed = 7;
    cfg.synthetic = true;
    cfg.synthetic_count = 4;
    cfg.synthetic_size = 32;

    const fs::path out_a = scratch_dir() / "det_a", out_b = scratch_dir() / "det_b";
    train::Trainer a(cfg), b(cfg);
    a.train(out_a.string());
    b.train(out_b.string());
    require(slurp(out_a / "loss_log.csv") == slurp(out_b / "loss_log.csv"),
            "seeded loss CSVs differ");

    // cmd_fuse byte-idempotence through the CLI
    const std::string ckpt = (out_a / "last.ckpt").string();
    const fs::path fuse1 = scratch_dir() / "fuse1", fuse2 = scratch_dir() / "fuse2";
    const std::string args =
        " --checkpoint " + ckpt +
        " --set data.synthetic=true --set data.synthetic_count=4 --set data.synthetic_size=32"
        " --seed 7 >/dev/null 2>&1";
    const std::string bin = RPF_CLI_BIN;
    require(std::system((bin + " fuse --out " + fuse1.string() + args).c_str()) == 0,
            "first fuse run failed");
    require(std::system((bin + " fuse --out " + fuse2.string() + args).c_str()) == 0,
            "second fuse run failed");
    for (int i = 0; i < 4; ++i) {
        char name[40];
        std::snprintf(name, sizeof(name), "synthetic_%04d.png", i);
        require(!slurp(fuse1 / name).empty(), std::string("missing fused output ") + name);
        require(slurp(fuse1 / name) == slurp(fuse2 / name),
                std::string("fused output differs between runs: ") + name);
    }
}

// --------------------------------------------------------------- criterion 11

void criterion_ablation_harness() {
    const fs::path out = scratch_dir() / "ablate";
    std::string cases;
    for (const auto& c : train::ablation_case_names()) cases += " " + c;
    const std::string bin = RPF_CLI_BIN;
    const std::string cmd =
        bin + " ablate --out " + out.string() + " --cases" + cases +
        " --set data.synthetic=true --set data.synthetic_count=4 --set data.synthetic_size=32"
        " --set train.crop=32 --set train.batch=2 --set train.epochs=1 --set train.max_steps=2"
        " --set model.channels=8 --set model.stages=2 --seed 3 >/dev/null 2>&1";
    require(std::system(cmd.c_str()) == 0, "ablate command failed");

    const std::string csv = slurp(out / "ablation.csv");
    require(!csv.empty(), "ablation.csv missing");
    std::istringstream is(csv);
    std::string line;
    std::getline(is, line);
    require(line == "case,EN,SF,SD,CC,SCD,VIF,RoR", "unexpected header: " + line);
    int rows = 0;
    std::vector<std::string> seen;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        ++rows;
        std::istringstream ls(line);
        std::string field;
        std::getline(ls, field, ',');
        seen.push_back(field);
        int numeric_fields = 0;
        while (std::getline(ls, field, ',')) {
            require(std::isfinite(std::stod(field)), "non-finite metric in row " + line);
            ++numeric_fields;
        }
        require(numeric_fields == 7, "expected 6 metrics + RoR in row " + line);
    }
    require(rows == 9, "expected baseline + 8 cases, got " + std::to_string(rows) + " rows");
    for (const auto& name : train::ablation_case_names())
        require(std::find(seen.begin(), seen.end(), name) != seen.end(),
                "missing ablation row " + name);
}

struct Criterion {
    int id;
    const char* title;
    std::function<void()> run;
};

}  // namespace

int main() {
    const std::vector<Criterion> criteria = {
        {1, "convolution theorem: spectral path equals circular convolution",
         criterion_convolution_theorem},
        {2, "fft round-trip identity up to 256x256", criterion_fft_round_trip},
        {3, "analytic gradients match finite differences", criterion_gradient_checks},
        {4, "losses match the scalar-loop oracles", criterion_loss_oracles},
        {5, "rank-of-ranks reproduces both published sweeps", criterion_ror_tables},
        {6, "ssim sanity: self-similarity, symmetry, closed form", criterion_ssim_sanity},
        {7, "mask invariants over random and degenerate inputs", criterion_mask_invariants},
        {8, "smoke training reduces the total loss by >= 20%", criterion_smoke_training},
        {9, "metric oracles and the PSD Parseval identity", criterion_metric_oracles},
        {10, "seeded training and fuse outputs are deterministic", criterion_determinism},
        {11, "all eight ablation cases run end to end", criterion_ablation_harness},
    };

    int failures = 0;
    for (const auto& c : criteria) {
        try {
            c.run();
            std::printf("[PASS] %2d. %s\n", c.id, c.title);
        } catch (const std::exception& e) {
            std::printf("[FAIL] %2d. %s: %s\n", c.id, c.title, e.what());
            ++failures;
        }
        std::fflush(stdout);
    }
    if (failures == 0)
        std::printf("all %zu acceptance criteria passed\n", criteria.size());
    else
        std::printf("%d of %zu acceptance criteria failed\n", failures, criteria.size());
    return failures == 0 ? 0 : 1;
}
