// Prints one PASS/FAIL line per acceptance criterion; exit status 1 if any fail.

#include "biomoe/cli.hpp"
#include "biomoe/error.hpp"
#include "biomoe/fft.hpp"
#include "biomoe/fusion.hpp"
#include "biomoe/kernels.hpp"
#include "biomoe/model.hpp"
#include "biomoe/representations.hpp"
#include "biomoe/rng.hpp"
#include "biomoe/signal.hpp"
#include "biomoe/train.hpp"
#include "test_util.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

using namespace biomoe;
using namespace biomoe::oracle;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;

    void require(bool ok, const std::string& what)
    {
        if (!ok) {
            pass = false;
            if (!detail.empty())
                detail += "; ";
            detail += what;
        }
    }
};

std::string fmt(const char* f, double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Signal sine(double freq, std::size_t n = 1000, double fs = 100.0)
{
    Signal s{.samples = std::vector<double>(n), .sample_rate_hz = fs, .modality = Modality::bvp};
    for (std::size_t i = 0; i < n; ++i)
        s.samples[i] = std::sin(2.0 * std::numbers::pi * freq * static_cast<double>(i) / fs);
    return s;
}

double rms(const std::vector<double>& x, std::size_t trim)
{
    double acc = 0.0;
    for (std::size_t i = trim; i < x.size() - trim; ++i)
        acc += x[i] * x[i];
    return std::sqrt(acc / static_cast<double>(x.size() - 2 * trim));
}

std::vector<double> ln_ref(std::span<const float> row, const Tensor& gamma, const Tensor& beta)
{
    double mean = 0.0, var = 0.0;
    for (float v : row)
        mean += v;
    mean /= static_cast<double>(row.size());
    for (float v : row)
        var += (v - mean) * (v - mean);
    var /= static_cast<double>(row.size());
    std::vector<double> out(row.size());
    for (std::size_t i = 0; i < row.size(); ++i)
        out[i] = (row[i] - mean) / std::sqrt(var + 1e-6) * gamma[i] + beta[i];
    return out;
}

Image random_image(Rng& rng)
{
    Image img = Image::model_canvas();
    for (auto& p : img.pixels)
        p = static_cast<std::uint8_t>(rng.below(256));
    return img;
}

// ---------------------------------------------------------------------------

Outcome budget()
{
    Outcome o;
    const ModelConfig cfg;
    const ParamCounts p = count_params(cfg);
    const FlopCounts f = count_flops(cfg);
    auto within = [](double got, double target, double tol) { return std::abs(got / target - 1.0) <= tol; };
    o.require(within(p.total, kParamTarget.total, 0.10), "total params " + std::to_string(p.total));
    o.require(within(p.enc1, kParamTarget.enc1, 0.15), "enc1 params " + std::to_string(p.enc1));
    o.require(within(p.enc2, kParamTarget.enc2, 0.15), "enc2 params " + std::to_string(p.enc2));
    o.require(within(f.total, kFlopTarget.total, 0.15), "total flops " + std::to_string(f.total));
    o.require(within(f.enc1, kFlopTarget.enc1, 0.20), "enc1 flops " + std::to_string(f.enc1));
    o.require(within(f.enc2, kFlopTarget.enc2, 0.20), "enc2 flops " + std::to_string(f.enc2));
    o.require(init_random(cfg, 0).element_count() == p.total, "closed-form count differs from manifest");

    std::ostringstream out, err;
    const auto t0 = std::chrono::steady_clock::now();
    const int code = cli::run({"audit", "--format", "csv"}, out, err);
    const double dt = seconds_since(t0);
    o.require(code == 0, "audit exit " + std::to_string(code));
    // every row with a target must report yes twice
    std::istringstream rows(out.str());
    std::size_t yes = 0;
    for (std::string row; std::getline(rows, row);)
        for (std::size_t at = row.find(",yes"); at != std::string::npos; at = row.find(",yes", at + 1))
            ++yes;
    o.require(yes == 6 && out.str().find(",no") == std::string::npos, "audit reports a part out of tolerance");
    o.require(dt < 1.0, "audit took " + fmt("%.3f s", dt));
    if (o.pass)
        o.detail = "params " + fmt("%.3fM", p.total / 1e6) + ", flops " + fmt("%.3fG", f.total / 1e9) + ", audit " +
                   fmt("%.3f s", dt);
    return o;
}

Outcome shape_contract()
{
    Outcome o;
    const ModelConfig cfg;
    constexpr std::size_t kWeightSets = 10, kImagesPerSet = 100;
    std::size_t bad = 0, passes = 0;
    const auto t0 = std::chrono::steady_clock::now();
    for (std::size_t s = 0; s < kWeightSets; ++s) {
        const WeightStore w = init_random(cfg, 1000 + s);
        Rng rng(s);
        for (std::size_t i = 0; i < kImagesPerSet; ++i, ++passes) {
            const ModelOutput out = model_forward(random_image(rng), w, cfg);
            if (out.z1.dims() != Shape{96} || out.z2.dims() != Shape{96} || out.fused.dims() != Shape{192})
                ++bad;
            else
                for (const Tensor* t : {&out.z1, &out.z2, &out.fused, &out.probs})
                    if (std::any_of(t->data().begin(), t->data().end(), [](float v) { return !std::isfinite(v); })) {
                        ++bad;
                        break;
                    }
        }
    }
    const double dt = seconds_since(t0);
    o.require(bad == 0, std::to_string(bad) + " passes with wrong shape or non-finite values");
    o.require(dt < 120.0, "took " + fmt("%.1f s", dt));
    if (o.pass)
        o.detail = std::to_string(passes) + " passes, 96/96/192, all finite, " + fmt("%.1f s", dt);
    return o;
}

Outcome kernel_oracles()
{
    Outcome o;
    constexpr std::uint32_t kInstances = 50;
    double fft_err = 0, dw_err = 0, att_err = 0, wf_err = 0, gate_err = 0;
    for (std::uint32_t i = 0; i < kInstances; ++i) {
        // FFT: sizes cycle through powers of two, mixed radix and Bluestein extents
        const std::size_t h = 1 + (i * 7) % 13, w = 2 + (i * 5) % 11, d = 1 + i % 3;
        const Tensor x = random_tensor({h, w, d}, i);
        const ComplexTensor c = fft2(x);
        std::vector<std::complex<double>> in(x.size());
        for (std::size_t k = 0; k < x.size(); ++k)
            in[k] = x[k];
        const auto want = naive_dft2(in, h, w, d);
        double num = 0, den = 0;
        for (std::size_t k = 0; k < want.size(); ++k) {
            num += std::norm(std::complex<double>(c.re()[k], c.im()[k]) - want[k]);
            den += std::norm(want[k]);
        }
        fft_err = std::max(fft_err, std::sqrt(num / den));

        const Tensor img = random_tensor({4 + i % 5, 3 + i % 7, 1 + i % 4}, 100 + i);
        const Tensor kern = random_tensor({3, 3, img.dim(2)}, 200 + i), bias = random_tensor({img.dim(2)}, 300 + i);
        const std::size_t stride = 1 + i % 2;
        dw_err = std::max(dw_err, max_abs_diff(depthwise_conv2d(img, kern, bias, {.stride = stride, .padding = 1}),
                                               naive_depthwise(img, kern, bias, stride, 1)));

        const std::size_t n = 2 + i % 9, dm = 2 + i % 6;
        const Tensor tokens = random_tensor({n, dm}, 400 + i);
        const Tensor wq = random_tensor({dm, dm}, 500 + i), wk = random_tensor({dm, dm}, 600 + i),
                     wv = random_tensor({dm, dm}, 700 + i);
        att_err = std::max(att_err, max_abs_diff(attention(tokens, wq, wk, wv), naive_attention(tokens, wq, wk, wv)));

        // single waterfall head with an identity Q smoothing kernel is plain attention + projection
        const std::size_t gh = 2 + i % 3, gw = 2 + i % 4;
        const Tensor grid = random_tensor({gh, gw, dm}, 800 + i);
        Tensor qk({3, 3, dm});
        for (std::size_t ch = 0; ch < dm; ++ch)
            qk.at({1, 1, ch}) = 1.0f;
        const Tensor qb({dm}), wp = random_tensor({dm, dm}, 900 + i), bp = random_tensor({dm}, 950 + i);
        const WaterfallParams wf{{{wq, wk, wv, qk, qb}}, wp, bp};
        const Tensor plain = linear(attention(grid.reshaped({gh * gw, dm}), wq, wk, wv), wp, bp).reshaped(grid.dims());
        wf_err = std::max(wf_err, max_abs_diff(waterfall_attention(grid, wf), plain));

        // gated fusion against a scripted LN -> gate -> ELU/HardTanh -> product -> LN
        const Tensor z1 = random_tensor({96}, 1000 + i), z2 = random_tensor({96}, 1100 + i);
        const Tensor g1 = random_tensor({96}, 1200 + i, 0.5f, 1.5f), b1 = random_tensor({96}, 1300 + i);
        const Tensor g2 = random_tensor({96}, 1400 + i, 0.5f, 1.5f), b2 = random_tensor({96}, 1500 + i);
        const Tensor go = random_tensor({192}, 1600 + i, 0.5f, 1.5f), bo = random_tensor({192}, 1700 + i);
        const Tensor gate = random_tensor({192, 192}, 1800 + i, -0.2f, 0.2f);
        const FusionParams fp{{g1, b1}, {g2, b2}, gate, {go, bo}};
        auto cat = ln_ref(z1.data(), g1, b1);
        const auto h2 = ln_ref(z2.data(), g2, b2);
        cat.insert(cat.end(), h2.begin(), h2.end());
        Tensor gated({192});
        for (std::size_t r = 0; r < 192; ++r) {
            double acc = 0.0;
            for (std::size_t k = 0; k < 192; ++k)
                acc += gate.at({r, k}) * cat[k];
            const double elu = acc > 0 ? acc : std::expm1(acc);
            gated[r] = static_cast<float>(std::clamp(elu, -1.0, 1.0) * cat[r]);
        }
        const auto want_fused = ln_ref(gated.data(), go, bo);
        const Tensor got = gated_fuse(z1, z2, fp);
        for (std::size_t r = 0; r < 192; ++r)
            gate_err = std::max(gate_err, std::abs(got[r] - want_fused[r]));
    }
    o.require(fft_err < 1e-5, "fft rel " + fmt("%.2e", fft_err));
    o.require(dw_err < 1e-6, "depthwise " + fmt("%.2e", dw_err));
    o.require(att_err < 1e-5, "attention " + fmt("%.2e", att_err));
    o.require(wf_err < 1e-6, "waterfall " + fmt("%.2e", wf_err));
    o.require(gate_err < 1e-6, "gated fusion " + fmt("%.2e", gate_err));
    if (o.pass)
        o.detail = std::to_string(kInstances) + " instances each; max err fft " + fmt("%.1e", fft_err) + ", dw " +
                   fmt("%.1e", dw_err) + ", attn " + fmt("%.1e", att_err) + ", waterfall " + fmt("%.1e", wf_err) +
                   ", gate " + fmt("%.1e", gate_err);
    return o;
}

Outcome signal_suite()
{
    Outcome o;
    const FilterSpec bvp = default_filter(Modality::bvp);
    const Signal lo = sine(0.8), hi = sine(10.0);
    const double pass_ratio = rms(apply_filter(lo, bvp).samples, 100) / rms(lo.samples, 100);
    const double stop_ratio = rms(apply_filter(hi, bvp).samples, 100) / rms(hi.samples, 100);
    o.require(pass_ratio >= 0.9, "0.8 Hz ratio " + fmt("%.4f", pass_ratio));
    o.require(stop_ratio <= 0.1, "10 Hz ratio " + fmt("%.4f", stop_ratio));

    Rng rng(5);
    Signal noise{.samples = std::vector<double>(517), .sample_rate_hz = 100.0, .modality = Modality::resp};
    for (auto& v : noise.samples)
        v = rng.normal();
    const Tensor r = recurrence_matrix(noise);
    bool symmetric = true;
    for (std::size_t i = 0; i < r.dim(0); ++i) {
        symmetric &= r.at({i, i}) == 0.0f;
        for (std::size_t j = 0; j < i; ++j)
            symmetric &= r.at({i, j}) == r.at({j, i});
    }
    o.require(symmetric, "recurrence not exactly symmetric with zero diagonal");

    const Signal one = sine(1.0, 2000);
    const Tensor sc = cwt_scalogram(one);
    const auto freqs = cwt_center_frequencies(100.0);
    std::size_t best = 0;
    for (std::size_t k = 1; k < sc.dim(0); ++k)
        if (sc.at({k, 1000}) > sc.at({best, 1000}))
            best = k;
    const double step = std::log(freqs[0] / freqs[1]);
    const bool ridge_ok = std::abs(std::log(freqs[best])) <= step + 1e-12;
    o.require(ridge_ok, "scalogram ridge at " + fmt("%.4f Hz", freqs[best]));

    const ComplexTensor st = stft(sine(5.0));
    bool bin_ok = true;
    for (std::size_t f = 0; f < st.dim(0); ++f) {
        std::size_t arg = 0;
        double top = -1.0;
        for (std::size_t b = 0; b < st.dim(1); ++b) {
            const double m = std::hypot(st.re().at({f, b}), st.im().at({f, b}));
            if (m > top) {
                top = m;
                arg = b;
            }
        }
        bin_ok &= arg == 13;
    }
    o.require(bin_ok, "5 Hz STFT peak not at bin 13 in every frame");
    if (o.pass)
        o.detail = "pass " + fmt("%.4f", pass_ratio) + ", stop " + fmt("%.4f", stop_ratio) + ", ridge " +
                   fmt("%.4f Hz", freqs[best]) + ", STFT bin 13";
    return o;
}

Outcome training_math()
{
    Outcome o;
    const std::vector<double> L{2.0}, w{-0.693147};
    const auto r = multitask_loss(L, w);
    o.require(std::abs(r.value - 0.306853) < 5e-7, "loss " + fmt("%.7f", r.value));

    Rng rng(11);
    double worst = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> ls(3), ws(3);
        for (int i = 0; i < 3; ++i) {
            ls[i] = rng.uniform(0.05, 3.0);
            ws[i] = rng.uniform(-2.0, 2.0);
        }
        const auto g = multitask_loss(ls, ws).grad;
        for (std::size_t i = 0; i < 3; ++i) {
            const double h = 1e-5;
            auto wp = ws, wm = ws;
            wp[i] += h;
            wm[i] -= h;
            const double fd = (multitask_loss(ls, wp).value - multitask_loss(ls, wm).value) / (2 * h);
            worst = std::max(worst, std::abs(g[i] - fd) / std::max(std::abs(fd), 1e-12));
        }
    }
    o.require(worst < 1e-5, "gradient rel " + fmt("%.2e", worst));

    const ScheduleConfig cfg = ScheduleConfig::for_steps(1000);
    const double T = static_cast<double>(cfg.total_steps);
    o.require(dropout_rate(0, cfg) == cfg.p_start && dropout_rate(T, cfg) == cfg.p_end, "dropout endpoints");
    o.require(smoothing_eps(0, cfg) == cfg.eps_start && smoothing_eps(T, cfg) == cfg.eps_end, "smoothing endpoints");

    ScheduleConfig lr = cfg;
    lr.lr_floor = 1e-5;
    double jump = 0.0;
    for (double join : {static_cast<double>(lr.warmup), T - static_cast<double>(lr.cooldown)})
        jump = std::max(jump, std::abs(cosine_lr(join - 1e-9, lr) - cosine_lr(join + 1e-9, lr)));
    o.require(jump < 1e-9 * lr.base_lr, "lr jump " + fmt("%.2e", jump));

    const auto m = macro_metrics(ConfusionMatrix(2, {1, 1, 0, 2}));
    auto six = [](double v) { return fmt("%.6f", v); };
    o.require(six(m.accuracy) == "0.750000" && six(m.precision) == "0.833333" && six(m.f1) == "0.733333",
              "metrics " + six(m.accuracy) + "/" + six(m.precision) + "/" + six(m.f1));
    if (o.pass)
        o.detail = "loss " + fmt("%.6f", r.value) + ", grad rel " + fmt("%.1e", worst) + ", lr jump " +
                   fmt("%.1e", jump) + ", metrics " + six(m.accuracy) + "/" + six(m.precision) + "/" + six(m.f1);
    return o;
}

std::map<std::string, std::string> snapshot(const fs::path& dir)
{
    std::map<std::string, std::string> files;
    for (const auto& e : fs::recursive_directory_iterator(dir))
        if (e.is_regular_file()) {
            std::ifstream in(e.path(), std::ios::binary);
            files[fs::relative(e.path(), dir).string()] = {std::istreambuf_iterator<char>(in), {}};
        }
    return files;
}

Outcome determinism()
{
    Outcome o;
    const fs::path root = fs::temp_directory_path() / "biomoe_acceptance";
    fs::remove_all(root);
    fs::create_directories(root / "in" / "preds");
    {
        std::ofstream csv(root / "in" / "bvp.csv");
        Rng rng(2);
        for (int i = 0; i < 1200; ++i)
            csv << std::sin(2.0 * std::numbers::pi * 1.2 * i / 100.0) + 0.1 * rng.normal() << "\n";
        std::ofstream(root / "in" / "labels.csv") << "id,label\na,0\nb,1\nc,2\nd,1\n";
        std::ofstream(root / "in" / "preds" / "a.txt") << "0\n";
        std::ofstream(root / "in" / "preds" / "b.txt") << "0.2,0.5,0.3\n";
        std::ofstream(root / "in" / "preds" / "c.txt") << "Low Pain\n";
        std::ofstream(root / "in" / "preds" / "d.txt") << "1\n";
    }
    const std::string in = (root / "in").string(), out = (root / "out").string();
    const std::string png = out + "/bvp_scalogram.png";
    const std::vector<std::vector<std::string>> commands = {
        {"render", in + "/bvp.csv", "--modality", "BVP", "--fs", "100", "--out", out},
        {"embed", png, "--init", "random", "--seed", "9", "--per-encoder"},
        {"embed", in + "/bvp.csv", "--modality", "BVP", "--fs", "100", "--init", "random", "--seed", "9"},
        {"init-weights", "--seed", "9", "--out", out + "/w.tbme"},
        {"embed", png, out + "/bvp_waveform.png", "--fuse", "CONCAT", "--weights", out + "/w.tbme", "--out", out + "/e.txt"},
        {"audit"},
        {"audit", "--format", "csv", "--layers"},
        {"eval", "--pred-dir", in + "/preds", "--labels", in + "/labels.csv", "--per-class"},
        {"schedule", "--steps", "500", "--out", out + "/schedule.csv"},
        {"augment", png, "--seed", "9", "--index", "3", "--epoch", "2", "--out", out + "/aug.png"},
        {"config"},
    };

    std::vector<std::pair<std::string, std::map<std::string, std::string>>> runs[2];
    for (int pass = 0; pass < 2; ++pass) {
        fs::remove_all(out);
        fs::create_directories(out);
        for (const auto& cmd : commands) {
            std::ostringstream so, se;
            const int code = cli::run(cmd, so, se);
            if (code != 0) {
                o.require(false, cmd[0] + " exit " + std::to_string(code) + ": " + se.str());
                fs::remove_all(root);
                return o;
            }
            runs[pass].push_back({so.str(), snapshot(out)});
        }
    }
    std::size_t files = 0;
    for (std::size_t i = 0; i < commands.size(); ++i) {
        const std::string& name = commands[i][0];
        o.require(runs[0][i].first == runs[1][i].first, name + " stdout differs");
        o.require(runs[0][i].second == runs[1][i].second, name + " output files differ");
        files = runs[0][i].second.size();
    }
    fs::remove_all(root);
    if (o.pass)
        o.detail = std::to_string(commands.size()) + " commands run twice, stdout and " + std::to_string(files) +
                   " files byte-identical";
    return o;
}

Outcome fusion_arithmetic()
{
    Outcome o;
    auto embeddings = [](std::size_t n) {
        std::vector<Tensor> e;
        for (std::size_t i = 0; i < n; ++i)
            e.push_back(random_tensor({192}, static_cast<std::uint32_t>(i)));
        return e;
    };
    const FusionPlan best = plan_best_multimodal(), scal = plan_all_scalograms();
    best.validate();
    scal.validate();
    const Tensor b = fuse(embeddings(best.inputs.size()), best.method);
    const Tensor s = fuse(embeddings(scal.inputs.size()), FusionMethod::concat);
    const Tensor a6 = fuse(embeddings(6), FusionMethod::add), a2 = fuse(embeddings(2), FusionMethod::add);
    o.require(best.method == FusionMethod::concat && b.dims() == Shape{1152}, "best plan width " + std::to_string(b.size()));
    o.require(s.dims() == Shape{768}, "all-scalogram width " + std::to_string(s.size()));
    o.require(a6.dims() == Shape{192} && a2.dims() == Shape{192}, "ADD width changed");
    const auto parts = embeddings(6);
    bool order = true;
    for (std::size_t i = 0; i < 6; ++i)
        for (std::size_t k = 0; k < 192; ++k)
            order &= b[i * 192 + k] == parts[i][k];
    o.require(order, "CONCAT does not preserve input order");
    if (o.pass)
        o.detail = "best plan " + std::to_string(b.size()) + "-d, all scalograms " + std::to_string(s.size()) +
                   "-d, ADD 192-d";
    return o;
}

}  // namespace

int main(int argc, char** argv)
{
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"budget-reproduction", budget},   {"shape-contract", shape_contract}, {"kernel-oracles", kernel_oracles},
        {"signal-suite", signal_suite},    {"training-math", training_math},   {"determinism", determinism},
        {"fusion-arithmetic", fusion_arithmetic},
    };
    const std::string only = argc > 1 ? argv[1] : "";
    int failed = 0;
    for (const auto& [name, check] : criteria) {
        if (!only.empty() && only != name)
            continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = check();
        } catch (const std::exception& e) {
            o.pass = false;
            o.detail = std::string("exception: ") + e.what();
        }
        failed += o.pass ? 0 : 1;
        std::printf("%s %-20s %s [%.2f s]\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str(),
                    seconds_since(t0));
        std::fflush(stdout);
    }
    return failed == 0 ? 0 : 1;
}
