// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any FAIL.
//
//   acceptance --cli PATH --work DIR [--only NAME]...
//
// The A/B criterion trains the default configuration under DIR/ab_run and
// resumes from stages already recorded in DIR/ab_run/timings.txt when the
// stored config hash matches.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>

#include "CLI11.hpp"
#include "block_cases.hpp"
#include "geometry_oracles.hpp"
#include "gradcheck.hpp"
#include "metric_oracles.hpp"
#include "mvc/diffusion.hpp"
#include "mvc/errors.hpp"
#include "mvc/ops.hpp"
#include "mvc/pipeline.hpp"
#include "mvc/tensor_io.hpp"
#include "mvc/unet.hpp"
#include "op_cases.hpp"

using namespace mvc;
using namespace mvc::testing;
namespace fs = std::filesystem;

namespace {

// Pinned tolerances and limits.
constexpr double kGradTol = 1e-4;
constexpr int kGradSeeds = 20;
constexpr double kGradSeconds = 300.0;
constexpr double kRoundtripTol = 1e-9;
constexpr double kLinearityTol = 1e-9;
constexpr double kGeometrySeconds = 60.0;
constexpr double kZeroInitTol = 1e-12;
constexpr double kAttentionSumTol = 1e-6;
constexpr int kAttentionFixtures = 100;
constexpr double kDdimTol = 1e-5;
constexpr double kMetricTol = 1e-9;
constexpr double kPsnrFixture = 6.0206;
constexpr double kPsnrFixtureTol = 5e-5;
constexpr double kReprojectionReduction = 0.10;
constexpr double kPsnrGain = 0.5;
constexpr double kBudgetSeconds = 7200.0;
constexpr double kSmokeSeconds = 600.0;
constexpr double kDeg = M_PI / 180.0;

class Stopwatch {
public:
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string num(double v) {
    std::ostringstream s;
    s << std::setprecision(4) << v;
    return s.str();
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) return INFINITY;
    double m = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

CameraPose random_pose(Rng& rng, int64_t extent, double radius = 3.0) {
    return CameraPose::orbit(rng.uniform(0.0, 2.0 * M_PI), rng.uniform(-30.0, 30.0) * kDeg, radius,
                             1.2 * static_cast<double>(extent), extent, extent);
}

Outcome gradients() {
    Stopwatch sw;
    double worst = 0.0;
    std::string worst_name;
    int checks = 0;
    auto note = [&](const std::string& name, const GradCheckResult& r) {
        ++checks;
        if (!(r.max_rel_error <= worst)) {
            worst = r.max_rel_error;
            worst_name = name;
        }
    };
    for (uint64_t seed = 0; seed < kGradSeeds; ++seed) {
        for (const OpCase& c : op_cases(seed)) note(c.name, grad_check(c.f, c.inputs, seed));
        note("block", block_grad_check(seed));
        Rng rng(300 + seed);
        const CameraPose pose = random_pose(rng, 6, 2.5);
        const ViewGeometry g = make_view_geometry(pose, GridSpec{4, 1.0}, FrustumSpec{3}, 6, 6);
        note("unproject+warp", grad_check(
                                   [&g, seed](const std::vector<Tensor>& in) {
                                       WorldVolume v = unproject_features(in[0], g);
                                       return random_projection(warp_to_frustum(v, g).features, seed);
                                   },
                                   {rng.normal_tensor({2, 6, 6})}, seed));
    }
    const double t = sw.seconds();
    return {worst <= kGradTol && t <= kGradSeconds,
            std::to_string(checks) + " checks over " + std::to_string(kGradSeeds) + " seeds, max rel " + num(worst) +
                " (" + worst_name + ", tol " + num(kGradTol) + "), " + num(t) + " s (limit " + num(kGradSeconds) +
                " s)"};
}

Outcome geometry() {
    Stopwatch sw;
    Rng rng(12);
    double roundtrip = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        const CameraPose pose = random_pose(rng, 32, rng.uniform(2.0, 6.0));
        const Vec3 p(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
        const Projection q = project(p, pose);
        if (!q.valid) return {false, "cube point projected invalid"};
        roundtrip = std::max(roundtrip, (unproject(q.u, q.v, q.depth, pose) - p).cwiseAbs().maxCoeff());
    }

    double linearity = 0.0;
    const GridSpec grid{8, 1.0};
    for (int trial = 0; trial < 10; ++trial) {
        const ViewGeometry g = make_view_geometry(random_pose(rng, 12), grid, FrustumSpec{4}, 12, 12);
        const Tensor x = rng.normal_tensor({3, 12, 12}), y = rng.normal_tensor({3, 12, 12});
        const double a = rng.uniform(-2, 2), b = rng.uniform(-2, 2);
        const WorldVolume fx = unproject_features(x, g), fy = unproject_features(y, g);
        const WorldVolume fxy = unproject_features(add(scale(x, a), scale(y, b)), g);
        // Only the lifted channels; the camera-parameter channels are constant.
        for (int64_t i = 0; i < 3 * 512; ++i)
            linearity = std::max(linearity, std::abs(fxy.features[i] - (a * fx.features[i] + b * fy.features[i])));
        const Tensor vx = rng.normal_tensor({3, 8, 8, 8}), vy = rng.normal_tensor({3, 8, 8, 8});
        const FrustumVolume wx = warp_to_frustum({vx, fx.mask}, g, false), wy = warp_to_frustum({vy, fx.mask}, g, false);
        const FrustumVolume wxy = warp_to_frustum({add(scale(vx, a), scale(vy, b)), fx.mask}, g, false);
        linearity = std::max(linearity, max_abs_diff(wxy.features, add(scale(wx.features, a), scale(wy.features, b))));
    }

    // Two views of one R = 8 grid, three pixels each.
    int64_t lit = 0, bad = 0;
    Rng prng(17);
    for (int view = 0; view < 2; ++view) {
        const CameraPose pose = random_pose(prng, 16);
        for (int k = 0; k < 3; ++k) {
            const Reachability r = pixel_reachability(pose, grid, 5 + 2 * k, 9 - k);
            lit += r.lit;
            bad += r.lit_outside_mask + r.lit_too_far + r.missed;
        }
    }
    const double t = sw.seconds();
    const bool pass = roundtrip <= kRoundtripTol && linearity <= kLinearityTol && bad == 0 && lit > 0 &&
                      t <= kGeometrySeconds;
    return {pass, "roundtrip " + num(roundtrip) + " (tol " + num(kRoundtripTol) + "), linearity " + num(linearity) +
                      " (tol " + num(kLinearityTol) + "), reachability " + std::to_string(bad) + " mismatches over " +
                      std::to_string(lit) + " lit voxels, " + num(t) + " s (limit " + num(kGeometrySeconds) + " s)"};
}

Outcome zero_init() {
    double residual = 0.0;
    Rng rng(31);
    for (int trial = 0; trial < 5; ++trial) {
        BlockFixture f = make_fixture(rng, 3, 6, 8, 8, 4);
        const BlockParams p = init_block(small_config(6), rng);
        NoGradGuard ng;
        for (const Tensor& r : block_forward_all(f.features, f.geometry, p))
            for (int64_t i = 0; i < r.numel(); ++i) residual = std::max(residual, std::abs(r[i]));
    }

    // Full-size denoiser of the default configuration, 4 views.
    const RunConfig c = default_config();
    const int64_t extent = c.latent_extent();
    double diff = 0.0;
    for (uint64_t seed = 0; seed < 2; ++seed) {
        Rng r(50 + seed);
        const UNetParams unet = init_unet(c.unet, r);
        const BlockStack blocks = init_blocks(c.unet, c.blocks, r);
        std::vector<CameraPose> poses;
        for (int v = 0; v < 4; ++v)
            poses.push_back(CameraPose::orbit(r.uniform(0.0, 2.0 * M_PI), r.uniform(0.0, 30.0) * kDeg, c.data.radius,
                                              c.data.focal_scale * static_cast<double>(extent), extent, extent));
        const Tensor ref = r.normal_tensor({c.unet.latent_channels, extent, extent});
        std::vector<Tensor> x;
        std::vector<Conditioning> cond;
        for (size_t v = 0; v < poses.size(); ++v) {
            x.push_back(r.normal_tensor({c.unet.latent_channels, extent, extent}));
            cond.push_back(make_conditioning(ref, poses[0], poses[v]));
        }
        const LayerGeometry geo = make_layer_geometry(poses, c.grid, c.frustum, extent, c.blocks.n_freq);
        NoGradGuard ng;
        const int64_t t = 1 + static_cast<int64_t>(r.uniform(0.0, 999.0));
        const auto plain = unet_forward_multi(x, cond, t, unet, nullptr, nullptr);
        const auto with = unet_forward_multi(x, cond, t, unet, &blocks, &geo);
        for (size_t v = 0; v < plain.size(); ++v) diff = std::max(diff, max_abs_diff(plain[v], with[v]));
    }
    return {residual == 0.0 && diff <= kZeroInitTol,
            "fresh residual max " + num(residual) + " (exact 0 required), denoiser with vs without blocks " + num(diff) +
                " (tol " + num(kZeroInitTol) + ")"};
}

Outcome attention_rows() {
    DistributionCheck d;
    Rng rng(77);
    for (int i = 0; i < kAttentionFixtures; ++i) check_block_attention(rng, 2 + i % 3, d);
    return {d.violations == 0 && d.worst_sum <= kAttentionSumTol && d.rows > 0,
            std::to_string(kAttentionFixtures) + " fixtures, " + std::to_string(d.rows) + " rows, max |sum - 1| " +
                num(d.worst_sum) + " (tol " + num(kAttentionSumTol) + "), " + std::to_string(d.violations) +
                " negative or masked weights"};
}

Outcome ddim() {
    const NoiseSchedule s = make_schedule();
    double worst = 0.0;
    for (uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng(40 + seed);
        std::vector<Tensor> x0, x_T;
        for (int v = 0; v < 3; ++v) {
            x0.push_back(rng.normal_tensor({12, 16, 16}));
            x_T.push_back(q_sample(x0.back(), s.steps, rng.normal_tensor({12, 16, 16}), s));
        }
        // Knows x0 and returns the exact noise of x_t.
        auto oracle = [&x0, &s](std::span<const Tensor> x_t, int64_t t) {
            const double ab = s.alpha_bar_at(t);
            std::vector<Tensor> out;
            for (size_t v = 0; v < x_t.size(); ++v)
                out.push_back(scale(sub(x_t[v], scale(x0[v], std::sqrt(ab))), 1.0 / std::sqrt(1.0 - ab)));
            return out;
        };
        NoGradGuard ng;
        const auto out = ddim_sample(x_T, oracle, s, 50);
        for (size_t v = 0; v < x0.size(); ++v) worst = std::max(worst, max_abs_diff(out[v], x0[v]));
    }
    return {worst <= kDdimTol, "50 steps, 10 seeds x 3 views, max |x0_hat - x0| " + num(worst) + " (tol " +
                                   num(kDdimTol) + ")"};
}

Outcome metrics() {
    Rng rng(2);
    long double worst = 0.0L;
    for (int trial = 0; trial < 10; ++trial) {
        const Tensor x = smooth_image(rng, 64);
        const Tensor y = add_noise(x, 0.05 * (trial + 1), rng);
        worst = std::max(worst, std::abs(static_cast<long double>(ssim(x, y)) -
                                         naive_terms(naive_luma(x), naive_luma(y), 64, 64, 11).ssim));
        worst = std::max(worst, std::abs(static_cast<long double>(ms_ssim(x, y)) - naive_ms_ssim(x, y)));
    }
    const Tensor zero(Shape{3, 8, 8}, 0.0), half(Shape{3, 8, 8}, 0.5);
    const double p = psnr(zero, half);
    const Tensor a = smooth_image(rng, 64);
    const bool sentinels = std::isinf(psnr(a, a)) && psnr(a, a) > 0.0 && ssim(a, a) == 1.0 && ms_ssim(a, a) == 1.0;
    const bool pass = worst <= kMetricTol && std::abs(p - kPsnrFixture) <= kPsnrFixtureTol && sentinels;
    return {pass, "ssim/ms-ssim vs naive oracle " + num(static_cast<double>(worst)) + " (tol " + num(kMetricTol) +
                      "), psnr fixture " + num(p) + " dB (want " + num(kPsnrFixture) + "), identical-image sentinels " +
                      (sentinels ? "ok" : "wrong")};
}

// Relative path -> bytes for every file under `dir`.
std::map<std::string, std::string> snapshot(const fs::path& dir) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(dir))
        if (e.is_regular_file()) out[fs::relative(e.path(), dir).string()] = read_file(e.path());
    return out;
}

std::vector<std::string> differing(std::map<std::string, std::string> a, std::map<std::string, std::string> b,
                                   const std::string& skip = "") {
    a.erase(skip);
    b.erase(skip);
    std::vector<std::string> out;
    for (const auto& [k, v] : a)
        if (!b.count(k) || b[k] != v) out.push_back(k);
    for (const auto& [k, v] : b)
        if (!a.count(k)) out.push_back(k);
    return out;
}

int run_cli(const std::string& cli, const std::string& args, const fs::path& log) {
    const std::string cmd = "\"" + cli + "\" " + args + " > \"" + log.string() + "\" 2>&1";
    const int status = std::system(cmd.c_str());
    if (status == -1) return -1;
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

struct SmokeRuns {
    bool ran = false;
    int exit_a = -1, exit_b = -1, exit_c = -1;
    double seconds_a = 0.0;
    fs::path a, b, c;
};

// Three CLI smoke pipelines: two identical, one with the view schedule flipped.
SmokeRuns& smoke_runs(const std::string& cli, const fs::path& work) {
    static SmokeRuns s;
    if (s.ran) return s;
    s.ran = true;
    s.a = work / "smoke_a";
    s.b = work / "smoke_b";
    s.c = work / "smoke_c";
    for (const fs::path& p : {s.a, s.b, s.c}) fs::remove_all(p);
    fs::create_directories(work);
    {
        Stopwatch sw;
        s.exit_a = run_cli(cli, "--smoke --seed 0 --out \"" + s.a.string() + "\"", work / "smoke_a.log");
        s.seconds_a = sw.seconds();
    }
    s.exit_b = run_cli(cli, "--smoke --seed 0 --out \"" + s.b.string() + "\"", work / "smoke_b.log");
    const fs::path flipped = work / "smoke_flipped.txt";
    write_file(flipped, std::string("sample.concurrent = ") + (smoke_config().sample.concurrent ? "false" : "true") + "\n");
    s.exit_c = run_cli(cli, "--smoke --seed 0 --config \"" + flipped.string() + "\" --out \"" + s.c.string() + "\"",
                       work / "smoke_c.log");
    return s;
}

Outcome determinism(const std::string& cli, const fs::path& work) {
    const SmokeRuns& s = smoke_runs(cli, work);
    if (s.exit_a != 0 || s.exit_b != 0 || s.exit_c != 0)
        return {false, "smoke runs exited " + std::to_string(s.exit_a) + "/" + std::to_string(s.exit_b) + "/" +
                           std::to_string(s.exit_c)};
    const auto a = snapshot(s.a);
    const auto same = differing(a, snapshot(s.b));
    const auto sched = differing(a, snapshot(s.c), "config.txt");
    std::string detail = std::to_string(a.size()) + " files (data, checkpoints, samples, eval) over 2 runs: " +
                         std::to_string(same.size()) + " differ; concurrent vs sequential: " +
                         std::to_string(sched.size()) + " differ";
    if (!same.empty()) detail += " [" + same.front() + "]";
    if (!sched.empty()) detail += " [" + sched.front() + "]";
    return {same.empty() && sched.empty() && a.size() > 0, detail};
}

Outcome smoke(const std::string& cli, const fs::path& work) {
    const SmokeRuns& s = smoke_runs(cli, work);
    const bool report = fs::exists(s.a / "eval" / "report.txt");
    return {s.exit_a == 0 && report && s.seconds_a <= kSmokeSeconds,
            "exit " + std::to_string(s.exit_a) + ", report " + (report ? "written" : "missing") + ", " +
                num(s.seconds_a) + " s (limit " + num(kSmokeSeconds) + " s)"};
}

std::map<std::string, double> read_timings(const fs::path& path) {
    std::map<std::string, double> out;
    std::ifstream in(path);
    std::string stage;
    double seconds = 0.0;
    while (in >> stage >> seconds) out[stage] = seconds;
    return out;
}

Outcome ab(const fs::path& work) {
    const RunConfig c = default_config();
    const RunPaths run{work / "ab_run"};
    const std::string hash = config_hash(c);
    const fs::path timings_path = run.root / "timings.txt";
    if (fs::exists(run.config()) && read_file(run.config()) != "# config_hash " + hash + "\n" + format_config(c))
        fs::remove_all(run.root);
    fs::create_directories(run.root);
    write_file(run.config(), "# config_hash " + hash + "\n" + format_config(c));
    auto timings = read_timings(timings_path);
    constexpr uint64_t seed = 0;

    auto stage = [&](const std::string& name, const std::function<void()>& body) {
        if (timings.count(name)) {
            std::cout << "  [ab] " << name << ": reusing (" << num(timings[name]) << " s)" << std::endl;
            return;
        }
        std::cout << "  [ab] " << name << "..." << std::endl;
        Stopwatch sw;
        body();
        timings[name] = sw.seconds();
        std::ofstream out(timings_path, std::ios::app);
        out << name << " " << std::setprecision(17) << timings[name] << "\n";
    };
    std::ostream& log = std::cout;
    stage("gen-data", [&] { run_gen_data(c, seed, run.data(), log); });
    const Dataset data = read_dataset(run.data());
    stage("train-backbone", [&] { run_train_backbone(c, data, seed, run.backbone(), log); });
    stage("train-blocks", [&] { run_train_blocks(c, data, run.backbone(), seed, run.blocks(), log); });
    stage("sample-backbone", [&] { run_sample(c, data, run.backbone(), "", seed, run.samples("backbone"), log); });
    stage("sample-blocks", [&] { run_sample(c, data, run.backbone(), run.blocks(), seed, run.samples("blocks"), log); });
    Stopwatch ev;
    const EvalReport report = run_eval(c, data, run, log);
    const double total = std::accumulate(timings.begin(), timings.end(), ev.seconds(),
                                         [](double acc, const auto& kv) { return acc + kv.second; });

    const VariantReport *base = nullptr, *blocks = nullptr;
    for (const VariantReport& v : report.variants) (v.variant == "blocks" ? blocks : base) = &v;
    if (!base || !blocks) return {false, "eval is missing a variant"};
    const double reduction = (base->reprojection - blocks->reprojection) / base->reprojection;
    const double gain = blocks->mean.psnr - base->mean.psnr;

    // Informational: backbone loss over the first 200 steps.
    std::string loss_note;
    std::istringstream losses(read_file(run.backbone() / "loss.txt"));
    std::string line;
    std::getline(losses, line);
    std::vector<double> l;
    int64_t step = 0;
    double value = 0.0;
    while (losses >> step >> value) l.push_back(value);
    if (l.size() >= 200) {
        const double head = std::accumulate(l.begin(), l.begin() + 20, 0.0) / 20.0;
        const double tail = std::accumulate(l.begin() + 180, l.begin() + 200, 0.0) / 20.0;
        loss_note = "; info: backbone loss steps 1-20 " + num(head) + " -> 181-200 " + num(tail) + " (" +
                    num(100.0 * (head - tail) / head) + "% lower)";
    }
    return {reduction >= kReprojectionReduction && gain >= kPsnrGain && total <= kBudgetSeconds,
            "reprojection " + num(base->reprojection) + " -> " + num(blocks->reprojection) + " (" +
                num(100.0 * reduction) + "% lower, need " + num(100.0 * kReprojectionReduction) + "%), psnr " +
                num(base->mean.psnr) + " -> " + num(blocks->mean.psnr) + " dB (" + num(gain) + " dB, need " +
                num(kPsnrGain) + "), " + std::to_string(blocks->objects.size()) + " objects, " + num(total) +
                " s (limit " + num(kBudgetSeconds) + " s)" + loss_note};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"acceptance gate"};
    std::string cli, work = "acceptance_work";
    std::vector<std::string> only;
    app.add_option("--cli", cli, "path of the mvcons binary")->required();
    app.add_option("--work", work, "scratch directory");
    app.add_option("--only", only, "run only the named criteria");
    CLI11_PARSE(app, argc, argv);

    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"gradients", gradients},
        {"geometry", geometry},
        {"zero-init", zero_init},
        {"attention", attention_rows},
        {"ddim", ddim},
        {"determinism", [&] { return determinism(cli, work); }},
        {"ab", [&] { return ab(work); }},
        {"metrics", metrics},
        {"smoke", [&] { return smoke(cli, work); }},
    };
    int failed = 0;
    for (const auto& [name, check] : criteria) {
        if (!only.empty() && std::find(only.begin(), only.end(), name) == only.end()) continue;
        Outcome o;
        try {
            o = check();
        } catch (const std::exception& e) {
            o = {false, std::string("threw: ") + e.what()};
        }
        failed += o.pass ? 0 : 1;
        std::cout << (o.pass ? "PASS " : "FAIL ") << std::left << std::setw(12) << name << o.detail << std::endl;
    }
    std::cout << (failed ? std::to_string(failed) + " criteria failed" : std::string("all criteria passed")) << std::endl;
    return failed ? 1 : 0;
}
