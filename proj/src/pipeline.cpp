#include "mvc/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>
#include <sstream>

#include "mvc/errors.hpp"
#include "mvc/ops.hpp"
#include "mvc/optim.hpp"
#include "mvc/tensor_io.hpp"

namespace mvc {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Sub-stream ids of the run seed.
constexpr uint64_t kBackboneInit = 0xB1, kBackboneSteps = 0xB2, kBlockInit = 0xC1, kBlockSteps = 0xC2;

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string short_fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

std::string view_stem(int64_t v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "view_%02lld", static_cast<long long>(v));
    return buf;
}

NoiseSchedule schedule_of(const RunConfig& c) {
    return make_schedule(c.schedule.timesteps, c.schedule.beta_min, c.schedule.beta_max);
}

UNetConfig unet_config(const RunConfig& c) {
    UNetConfig u = c.unet;
    u.timesteps = c.schedule.timesteps;
    if (c.velocity_head) u.alpha_bar = schedule_of(c).alpha_bar;
    return u;
}

class Stopwatch {
public:
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

void ensure_dir(const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

// Gradients of `params`, rescaled to global norm <= clip (clip 0 = off).
std::vector<std::vector<double>> clipped_grads(const std::vector<Tensor>& params, double clip, double* norm_out) {
    std::vector<std::vector<double>> grads;
    long double sq = 0.0L;
    for (const Tensor& p : params) {
        grads.push_back(p.grad());
        for (double g : grads.back()) sq += static_cast<long double>(g) * g;
    }
    const double norm = static_cast<double>(std::sqrt(sq));
    if (!std::isfinite(norm)) throw NonFiniteError("gradient norm", 0);
    if (clip > 0.0 && norm > clip) {
        const double s = clip / norm;
        for (auto& g : grads)
            for (double& x : g) x *= s;
    }
    if (norm_out) *norm_out = norm;
    return grads;
}

void check_loss(const Tensor& loss, int64_t step) {
    if (!std::isfinite(loss.item())) {
        throw NonFiniteError("training loss at step " + std::to_string(step), loss.node_id());
    }
}

void write_loss_log(const std::filesystem::path& dir, const std::vector<double>& losses) {
    std::string text = "step loss\n";
    for (size_t i = 0; i < losses.size(); ++i) text += std::to_string(i) + " " + fmt(losses[i]) + "\n";
    write_file(dir / "loss.txt", text);
}

CheckpointManifest manifest_for(const RunConfig& config, const std::string& kind, int64_t step, uint64_t seed,
                                const ParamList& params, bool frozen) {
    CheckpointManifest m;
    m.header["config_hash"] = config_hash(config);
    m.header["kind"] = kind;
    m.header["step"] = std::to_string(step);
    m.header["seed"] = std::to_string(seed);
    for (const auto& p : params) m.frozen[p.name] = frozen;
    return m;
}

void check_manifest(const RunConfig& config, const CheckpointManifest& m, const std::string& kind,
                    const std::filesystem::path& dir) {
    const auto k = m.header.find("kind");
    if (k == m.header.end() || k->second != kind) throw IoError(dir.string() + " is not a " + kind + " checkpoint");
    const auto h = m.header.find("config_hash");
    const std::string want = config_hash(config);
    if (h == m.header.end() || h->second != want) {
        throw HashMismatchError(dir.string() + ": checkpoint config hash " + (h == m.header.end() ? "?" : h->second) +
                                " does not match the run config " + want);
    }
}

void check_data(const RunConfig& config, const Dataset& data) {
    const std::string hash = config_hash(config);
    if (data.config_hash != hash) {
        throw HashMismatchError("dataset config hash " + data.config_hash + " does not match the run config " + hash);
    }
}

const ObjectRecord& find_object(const Dataset& data, const std::string& name) {
    for (const ObjectRecord& o : data.objects) {
        if (o.name == name) return o;
    }
    throw IoError("object '" + name + "' is not in the dataset");
}

std::vector<int64_t> sample_views(const RunConfig& c) {
    std::vector<int64_t> v;
    const int64_t stride = c.data.views / c.sample.views;
    for (int64_t i = 0; i < c.sample.views; ++i) v.push_back(i * stride);
    return v;
}

Tensor clamp01(const Tensor& t) {
    std::vector<double> v(t.values().begin(), t.values().end());
    for (double& x : v) x = std::clamp(x, 0.0, 1.0);
    return Tensor(t.shape(), std::move(v));
}

// Binary PPM strip of all views, 8 bits per channel.
std::string ppm_strip(const std::vector<Tensor>& images) {
    const int64_t h = images[0].dim(1), w = images[0].dim(2), n = static_cast<int64_t>(images.size());
    std::string out = "P6\n" + std::to_string(w * n) + " " + std::to_string(h) + "\n255\n";
    for (int64_t r = 0; r < h; ++r)
        for (int64_t i = 0; i < n; ++i)
            for (int64_t c = 0; c < w; ++c)
                for (int64_t ch = 0; ch < 3; ++ch) {
                    const double v = images[static_cast<size_t>(i)].at({ch, r, c});
                    out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0))));
                }
    return out;
}

ViewScores average(const std::vector<ViewScores>& s) {
    ViewScores m;
    for (const ViewScores& v : s) {
        m.psnr += v.psnr;
        m.ssim += v.ssim;
        m.ms_ssim += v.ms_ssim;
    }
    const auto n = static_cast<double>(s.size());
    m.psnr /= n;
    m.ssim /= n;
    m.ms_ssim /= n;
    return m;
}

}  // namespace

Dataset run_gen_data(const RunConfig& config, uint64_t seed, const std::filesystem::path& dir, std::ostream& log) {
    Stopwatch sw;
    Dataset ds = make_dataset(config.data, seed, config_hash(config));
    write_dataset(dir, ds);
    log << "gen-data: " << ds.split("train").size() << " train + " << ds.split("eval").size() << " eval objects, "
        << config.data.views << " views of " << config.data.image_size << "x" << config.data.image_size << ", hash "
        << ds.config_hash << " (" << short_fmt(sw.seconds()) << " s)" << std::endl;
    return ds;
}

std::vector<std::vector<Tensor>> encode_views(const std::vector<const ObjectRecord*>& objects) {
    std::vector<std::vector<Tensor>> out;
    for (const ObjectRecord* o : objects) {
        std::vector<Tensor> views;
        for (const Tensor& img : o->images) views.push_back(latent_encode(img));
        out.push_back(std::move(views));
    }
    return out;
}

TrainLog run_train_backbone(const RunConfig& config, const Dataset& data, uint64_t seed,
                            const std::filesystem::path& out, std::ostream& log) {
    check_data(config, data);
    const auto objects = data.split("train");
    if (objects.empty()) throw ValueError("the dataset has no training objects");
    const auto latents = encode_views(objects);
    const NoiseSchedule schedule = schedule_of(config);
    Rng init(Rng(seed).fork(kBackboneInit));
    UNetParams params = init_unet(unet_config(config), init);
    const ParamList named = params.named();
    std::vector<Tensor> tensors = tensors_of(named);
    AdamWConfig opt;
    opt.lr = config.train.backbone_lr;
    opt.weight_decay = config.train.weight_decay;
    OptimizerState state = make_optimizer_state(tensors, opt);
    const Rng steps(Rng(seed).fork(kBackboneSteps));
    const int64_t views = config.data.views;
    ensure_dir(out);
    log << "train backbone: " << parameter_count(named) << " parameters, " << config.train.backbone_steps
        << " steps of " << config.train.backbone_batch << " views\n";

    TrainLog result;
    Stopwatch sw;
    for (int64_t step = 0; step < config.train.backbone_steps; ++step) {
        Rng rng = steps.fork(static_cast<uint64_t>(step));
        Tensor loss;
        for (int64_t b = 0; b < config.train.backbone_batch; ++b) {
            const auto o = static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(objects.size()) - 1));
            const int64_t ref = rng.uniform_int(0, views - 1);
            int64_t tgt = rng.uniform_int(0, views - 2);
            if (tgt >= ref) ++tgt;
            const int64_t t = rng.uniform_int(1, schedule.steps);
            const Tensor& x0 = latents[o][static_cast<size_t>(tgt)];
            const Tensor eps = rng.normal_tensor(x0.shape());
            const Conditioning cond = make_conditioning(latents[o][static_cast<size_t>(ref)],
                                                        objects[o]->poses[static_cast<size_t>(ref)],
                                                        objects[o]->poses[static_cast<size_t>(tgt)]);
            const Tensor item = mse(unet_forward(q_sample(x0, t, eps, schedule), cond, t, params), eps);
            loss = loss.defined() ? add(loss, item) : item;
        }
        loss = scale(loss, 1.0 / static_cast<double>(config.train.backbone_batch));
        check_loss(loss, step);
        backward(loss);
        double norm = 0.0;
        const auto grads = clipped_grads(tensors, config.train.grad_clip, &norm);
        adamw_step(tensors, grads, state);
        zero_grads(named);
        result.losses.push_back(loss.item());
        if ((step + 1) % config.train.log_every == 0 || step + 1 == config.train.backbone_steps) {
            const auto from = result.losses.size() - std::min<size_t>(result.losses.size(), config.train.log_every);
            const double avg = std::accumulate(result.losses.begin() + static_cast<std::ptrdiff_t>(from),
                                               result.losses.end(), 0.0) /
                               static_cast<double>(result.losses.size() - from);
            log << "  step " << step + 1 << " loss " << short_fmt(avg) << " grad " << short_fmt(norm) << " ("
                << short_fmt(sw.seconds()) << " s)" << std::endl;
        }
        if ((step + 1) % config.train.checkpoint_every == 0) {
            save_checkpoint(out, named, manifest_for(config, "backbone", step + 1, seed, named, false));
            write_loss_log(out, result.losses);
        }
    }
    save_checkpoint(out, named, manifest_for(config, "backbone", config.train.backbone_steps, seed, named, false));
    write_loss_log(out, result.losses);
    return result;
}

UNetParams load_backbone(const RunConfig& config, const std::filesystem::path& dir) {
    check_manifest(config, read_checkpoint_manifest(dir), "backbone", dir);
    Rng dummy(0);
    UNetParams p = init_unet(unet_config(config), dummy);
    load_checkpoint(dir, p.named());
    return p;
}

BlockStack load_blocks(const RunConfig& config, const std::filesystem::path& dir) {
    check_manifest(config, read_checkpoint_manifest(dir), "blocks", dir);
    Rng dummy(0);
    BlockStack b = init_blocks(unet_config(config), config.blocks, dummy);
    load_checkpoint(dir, b.named());
    return b;
}

ViewBatch draw_view_batch(const RunConfig& config, const std::vector<const ObjectRecord*>& objects, Rng& rng) {
    ViewBatch b;
    b.object = objects[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(objects.size()) - 1))];
    const int64_t views = config.data.views;
    std::vector<int64_t> order(static_cast<size_t>(views));
    std::iota(order.begin(), order.end(), 0);
    for (int64_t i = 0; i < config.train.train_views; ++i) {
        const int64_t j = rng.uniform_int(i, views - 1);
        std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(j)]);
        b.views.push_back(order[static_cast<size_t>(i)]);
    }
    b.reference = rng.uniform_int(0, views - 1);
    b.t = rng.uniform_int(1, config.schedule.timesteps);
    const Shape shape{12, config.latent_extent(), config.latent_extent()};
    for (size_t v = 0; v < b.views.size(); ++v) b.eps.push_back(rng.normal_tensor(shape));
    return b;
}

TrainLog run_train_blocks(const RunConfig& config, const Dataset& data, const std::filesystem::path& backbone_dir,
                          uint64_t seed, const std::filesystem::path& out, std::ostream& log) {
    check_data(config, data);
    const auto objects = data.split("train");
    if (objects.empty()) throw ValueError("the dataset has no training objects");
    UNetParams backbone = load_backbone(config, backbone_dir);
    backbone.freeze(true);
    const auto latents = encode_views(objects);
    const NoiseSchedule schedule = schedule_of(config);
    Rng init(Rng(seed).fork(kBlockInit));
    BlockStack blocks = init_blocks(unet_config(config), config.blocks, init);
    const ParamList named = blocks.named();
    std::vector<Tensor> tensors = tensors_of(named);
    AdamWConfig opt;
    opt.lr = config.train.block_lr;
    opt.weight_decay = config.train.weight_decay;
    OptimizerState state = make_optimizer_state(tensors, opt);
    const Rng steps(Rng(seed).fork(kBlockSteps));
    ensure_dir(out);
    log << "train blocks: " << parameter_count(named) << " parameters (backbone frozen, "
        << parameter_count(backbone.named()) << "), " << config.train.block_steps << " steps of "
        << config.train.train_views << " views, grid " << config.grid.resolution << ", depth "
        << config.frustum.depth_samples << "\n";

    std::map<const ObjectRecord*, size_t> index;
    for (size_t i = 0; i < objects.size(); ++i) index[objects[i]] = i;
    TrainLog result;
    Stopwatch sw;
    for (int64_t step = 0; step < config.train.block_steps; ++step) {
        Rng rng = steps.fork(static_cast<uint64_t>(step));
        const ViewBatch b = draw_view_batch(config, objects, rng);
        const auto& lat = latents[index[b.object]];
        std::vector<Tensor> x0;
        std::vector<Conditioning> cond;
        std::vector<CameraPose> poses;
        for (int64_t v : b.views) {
            x0.push_back(lat[static_cast<size_t>(v)]);
            poses.push_back(b.object->poses[static_cast<size_t>(v)]);
            cond.push_back(make_conditioning(lat[static_cast<size_t>(b.reference)],
                                             b.object->poses[static_cast<size_t>(b.reference)], poses.back()));
        }
        const LayerGeometry geometry =
            make_layer_geometry(poses, config.grid, config.frustum, config.latent_extent(), config.blocks.n_freq);
        const Tensor loss = multiview_loss(x0, cond, b.eps, b.t, schedule, backbone, &blocks, &geometry);
        check_loss(loss, step);
        backward(loss);
        double norm = 0.0;
        const auto grads = clipped_grads(tensors, config.train.grad_clip, &norm);
        adamw_step(tensors, grads, state);
        zero_grads(named);
        result.losses.push_back(loss.item());
        if ((step + 1) % config.train.log_every == 0 || step + 1 == config.train.block_steps) {
            const auto from = result.losses.size() - std::min<size_t>(result.losses.size(), config.train.log_every);
            const double avg = std::accumulate(result.losses.begin() + static_cast<std::ptrdiff_t>(from),
                                               result.losses.end(), 0.0) /
                               static_cast<double>(result.losses.size() - from);
            log << "  step " << step + 1 << " loss " << short_fmt(avg) << " grad " << short_fmt(norm) << " ("
                << short_fmt(sw.seconds()) << " s)" << std::endl;
        }
        if ((step + 1) % config.train.checkpoint_every == 0) {
            save_checkpoint(out, named, manifest_for(config, "blocks", step + 1, seed, named, false));
            write_loss_log(out, result.losses);
        }
    }
    save_checkpoint(out, named, manifest_for(config, "blocks", config.train.block_steps, seed, named, false));
    write_loss_log(out, result.losses);
    return result;
}

void run_sample(const RunConfig& config, const Dataset& data, const std::filesystem::path& backbone_dir,
                const std::filesystem::path& blocks_dir, uint64_t seed, const std::filesystem::path& out,
                std::ostream& log) {
    const std::string hash = config_hash(config);
    check_data(config, data);
    const UNetParams backbone = load_backbone(config, backbone_dir);
    const bool with_blocks = !blocks_dir.empty();
    BlockStack blocks;
    if (with_blocks) blocks = load_blocks(config, blocks_dir);
    const NoiseSchedule schedule = schedule_of(config);
    auto objects = data.split("eval");
    if (config.sample.objects > 0 && static_cast<size_t>(config.sample.objects) < objects.size()) {
        objects.resize(static_cast<size_t>(config.sample.objects));
    }
    const std::vector<int64_t> views = sample_views(config);
    const std::string variant = with_blocks ? "blocks" : "backbone";
    ensure_dir(out);
    log << "sample (" << variant << "): " << objects.size() << " objects x " << views.size() << " views, "
        << config.sample.steps << " DDIM steps\n";

    std::string manifest = "mvcons-samples 1\nvariant=" + variant + "\nconfig_hash=" + hash +
                           "\nseed=" + std::to_string(seed) + "\nsteps=" + std::to_string(config.sample.steps) + "\n";
    Stopwatch sw;
    for (size_t i = 0; i < objects.size(); ++i) {
        const ObjectRecord& o = *objects[i];
        const auto ref = static_cast<size_t>(config.sample.reference_view);
        SampleRequest req;
        req.reference_latent = latent_encode(o.images[ref]);
        req.reference_pose = o.poses[ref];
        for (int64_t v : views) req.poses.push_back(o.poses[static_cast<size_t>(v)]);
        req.steps = config.sample.steps;
        req.seed = Rng::derive_seed(seed, i);
        req.concurrent = config.sample.concurrent;
        LayerGeometry geometry;
        if (with_blocks) {
            geometry = make_layer_geometry(req.poses, config.grid, config.frustum, config.latent_extent(),
                                           config.blocks.n_freq);
        }
        const auto latents =
            sample_multiview(req, schedule, backbone, with_blocks ? &blocks : nullptr, with_blocks ? &geometry : nullptr);
        const auto od = out / o.name;
        ensure_dir(od);
        std::vector<Tensor> images;
        std::string list;
        for (size_t k = 0; k < views.size(); ++k) {
            images.push_back(clamp01(latent_decode(latents[k])));
            const std::string stem = view_stem(views[k]);
            write_tensor(od / (stem + ".latent.mvt"), latents[k]);
            write_tensor(od / (stem + ".image.mvt"), images.back());
            list += (k ? "," : "") + std::to_string(views[k]);
        }
        write_file(od / "poses.txt", format_pose_table(req.poses));
        write_file(od / "strip.ppm", ppm_strip(images));
        manifest += "object " + o.name + " " + std::to_string(ref) + " " + list + "\n";
        log << "  " << o.name << " done (" << short_fmt(sw.seconds()) << " s)" << std::endl;
    }
    write_file(out / "manifest.txt", manifest);
}

SampleSet read_samples(const std::filesystem::path& dir) {
    std::istringstream in(read_file(dir / "manifest.txt"));
    std::string line;
    if (!std::getline(in, line) || line != "mvcons-samples 1") throw IoError(dir.string() + ": not a sample manifest");
    SampleSet s;
    while (std::getline(in, line)) {
        if (line.rfind("object ", 0) == 0) {
            std::istringstream ls(line.substr(7));
            std::string name, list;
            int64_t ref = 0;
            if (!(ls >> name >> ref >> list)) throw IoError("malformed sample line: " + line);
            std::vector<int64_t> views;
            std::stringstream vs(list);
            std::string item;
            while (std::getline(vs, item, ',')) views.push_back(std::stoll(item));
            std::vector<Tensor> images;
            for (int64_t v : views) images.push_back(read_tensor(dir / name / (view_stem(v) + ".image.mvt")));
            s.views[name] = views;
            s.images[name] = std::move(images);
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        const std::string key = line.substr(0, eq), value = line.substr(eq + 1);
        if (key == "variant") s.variant = value;
        if (key == "config_hash") s.config_hash = value;
        if (key == "seed") s.seed = std::stoull(value);
    }
    return s;
}

ObjectScores score_object(const ObjectRecord& gt, const std::vector<int64_t>& views,
                          const std::vector<Tensor>& generated, double tau) {
    if (views.size() != generated.size()) throw ShapeError("one view index per generated image");
    ObjectScores s;
    s.name = gt.name;
    s.elevation_deg = gt.elevation * 180.0 / kPi;
    s.views = views;
    std::vector<Tensor> depths;
    std::vector<CameraPose> poses;
    for (size_t k = 0; k < views.size(); ++k) {
        const auto v = static_cast<size_t>(views[k]);
        const Tensor& truth = gt.images.at(v);
        s.per_view.push_back({psnr(generated[k], truth), ssim(generated[k], truth), ms_ssim(generated[k], truth)});
        depths.push_back(gt.depths.at(v));
        poses.push_back(gt.poses.at(v));
    }
    s.mean = average(s.per_view);
    s.reprojection = reprojection_consistency(generated, depths, poses, tau);
    return s;
}

EvalReport run_eval(const RunConfig& config, const Dataset& data, const RunPaths& run, std::ostream& log) {
    const std::string hash = config_hash(config);
    check_data(config, data);
    EvalReport report;
    for (const std::string variant : {"backbone", "blocks"}) {
        const auto dir = run.samples(variant);
        if (!std::filesystem::exists(dir / "manifest.txt")) continue;
        const SampleSet set = read_samples(dir);
        if (set.config_hash != hash) {
            throw HashMismatchError(dir.string() + ": sample config hash " + set.config_hash +
                                    " does not match the run config " + hash);
        }
        VariantReport vr;
        vr.variant = variant;
        std::vector<ViewScores> means;
        for (const auto& [name, views] : set.views) {
            vr.objects.push_back(score_object(find_object(data, name), views, set.images.at(name), config.tau));
            means.push_back(vr.objects.back().mean);
            vr.reprojection += vr.objects.back().reprojection.rmse;
        }
        if (vr.objects.empty()) throw IoError(dir.string() + ": no generated objects");
        vr.mean = average(means);
        vr.reprojection /= static_cast<double>(vr.objects.size());
        log << "eval " << variant << ": psnr " << short_fmt(vr.mean.psnr) << " ssim " << short_fmt(vr.mean.ssim)
            << " ms-ssim " << short_fmt(vr.mean.ms_ssim) << " reprojection " << short_fmt(vr.reprojection) << "\n";
        report.variants.push_back(std::move(vr));
    }
    if (report.variants.empty()) throw IoError("no samples found under " + (run.root / "samples").string());

    ensure_dir(run.eval());
    std::string text = "config_hash = " + hash + "\n";
    std::string records = "variant\tobject\televation_deg\tkind\tview\tpsnr\tssim\tms_ssim\treprojection_rmse\tsamples\tpairs_used\tpairs_skipped\n";
    for (const VariantReport& vr : report.variants) {
        const std::string p = vr.variant + ".";
        text += p + "objects = " + std::to_string(vr.objects.size()) + "\n";
        text += p + "psnr = " + fmt(vr.mean.psnr) + "\n";
        text += p + "ssim = " + fmt(vr.mean.ssim) + "\n";
        text += p + "ms_ssim = " + fmt(vr.mean.ms_ssim) + "\n";
        text += p + "reprojection_rmse = " + fmt(vr.reprojection) + "\n";
        std::map<double, std::vector<const ObjectScores*>> by_elevation;
        for (const ObjectScores& o : vr.objects) by_elevation[std::round(o.elevation_deg * 1e6) / 1e6].push_back(&o);
        for (const auto& [el, list] : by_elevation) {
            std::vector<ViewScores> m;
            double rep = 0.0;
            for (const ObjectScores* o : list) {
                m.push_back(o->mean);
                rep += o->reprojection.rmse;
            }
            const ViewScores a = average(m);
            const std::string q = p + "elevation_" + short_fmt(el) + ".";
            text += q + "objects = " + std::to_string(list.size()) + "\n";
            text += q + "psnr = " + fmt(a.psnr) + "\n";
            text += q + "ssim = " + fmt(a.ssim) + "\n";
            text += q + "ms_ssim = " + fmt(a.ms_ssim) + "\n";
            text += q + "reprojection_rmse = " + fmt(rep / static_cast<double>(list.size())) + "\n";
        }
        for (const ObjectScores& o : vr.objects) {
            const std::string head = vr.variant + "\t" + o.name + "\t" + short_fmt(o.elevation_deg) + "\t";
            for (size_t k = 0; k < o.views.size(); ++k) {
                records += head + "view\t" + std::to_string(o.views[k]) + "\t" + fmt(o.per_view[k].psnr) + "\t" +
                           fmt(o.per_view[k].ssim) + "\t" + fmt(o.per_view[k].ms_ssim) + "\t\t\t\t\n";
            }
            records += head + "object\t\t" + fmt(o.mean.psnr) + "\t" + fmt(o.mean.ssim) + "\t" + fmt(o.mean.ms_ssim) + "\t" +
                       fmt(o.reprojection.rmse) + "\t" + std::to_string(o.reprojection.samples) + "\t" +
                       std::to_string(o.reprojection.pairs_used) + "\t" + std::to_string(o.reprojection.pairs_skipped) + "\n";
        }
    }
    if (report.variants.size() == 2) {
        const VariantReport& a = report.variants[0];
        const VariantReport& b = report.variants[1];
        text += "delta.psnr = " + fmt(b.mean.psnr - a.mean.psnr) + "\n";
        text += "delta.ssim = " + fmt(b.mean.ssim - a.mean.ssim) + "\n";
        text += "delta.ms_ssim = " + fmt(b.mean.ms_ssim - a.mean.ms_ssim) + "\n";
        text += "delta.reprojection_rmse = " + fmt(b.reprojection - a.reprojection) + "\n";
        text += "delta.reprojection_relative = " + fmt((a.reprojection - b.reprojection) / a.reprojection) + "\n";
        std::string deltas = "object\televation_deg\tpsnr_backbone\tpsnr_blocks\tdelta_psnr\treprojection_backbone\treprojection_blocks\tdelta_reprojection\n";
        for (const ObjectScores& ob : b.objects) {
            for (const ObjectScores& oa : a.objects) {
                if (oa.name != ob.name) continue;
                deltas += ob.name + "\t" + short_fmt(ob.elevation_deg) + "\t" + fmt(oa.mean.psnr) + "\t" + fmt(ob.mean.psnr) +
                          "\t" + fmt(ob.mean.psnr - oa.mean.psnr) + "\t" + fmt(oa.reprojection.rmse) + "\t" +
                          fmt(ob.reprojection.rmse) + "\t" + fmt(ob.reprojection.rmse - oa.reprojection.rmse) + "\n";
            }
        }
        write_file(run.eval() / "deltas.tsv", deltas);
    }
    write_file(run.eval() / "report.txt", text);
    write_file(run.eval() / "records.tsv", records);
    return report;
}

}  // namespace mvc
