// mvcons: dataset generation, two-stage training, sampling and evaluation.
//
//   mvcons gen-data --out RUN [--config PATH] [--seed N] [--smoke]
//   mvcons train --stage backbone|blocks --out RUN [--checkpoint DIR]
//   mvcons sample --stage backbone|blocks --out RUN [--checkpoint DIR]
//   mvcons eval --out RUN
//   mvcons --smoke --out RUN          whole pipeline on the smoke config
//
// Exit codes: 0 ok, 1 internal, 2 usage/config, 3 I/O, 4 non-finite value,
// 5 config-hash mismatch, 6 shape/value error.

#include <filesystem>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "mvc/errors.hpp"
#include "mvc/pipeline.hpp"
#include "mvc/tensor_io.hpp"

namespace fs = std::filesystem;
using namespace mvc;

namespace {

enum Exit { kOk = 0, kInternal = 1, kUsage = 2, kIo = 3, kNonFinite = 4, kHash = 5, kShape = 6 };

struct Options {
    std::string config;
    uint64_t seed = 0;
    std::string out = "mvcons-run";
    std::string stage;
    std::string checkpoint;
    bool smoke = false;
};

// --config wins; otherwise the run's own config.txt (written by gen-data);
// otherwise the built-in default (or smoke) config.
RunConfig resolve_config(const Options& o, const RunPaths& run, bool use_run_config = true) {
    const RunConfig base = o.smoke ? smoke_config() : default_config();
    if (!o.config.empty()) return load_config(o.config, base);
    if (use_run_config && fs::exists(run.config())) return load_config(run.config(), base);
    return base;
}

void save_config(const RunConfig& c, const RunPaths& run) {
    fs::create_directories(run.root);
    write_file(run.config(), "# config_hash " + config_hash(c) + "\n" + format_config(c));
}

Dataset open_data(const RunPaths& run) {
    if (!fs::exists(run.data() / "manifest.txt")) {
        throw IoError("no dataset under " + run.data().string() + "; run gen-data first");
    }
    return read_dataset(run.data());
}

void require_stage(const Options& o) {
    if (o.stage != "backbone" && o.stage != "blocks") {
        throw ConfigError("--stage must be 'backbone' or 'blocks', got '" + o.stage + "'");
    }
}

void cmd_gen_data(const Options& o, const RunPaths& run) {
    const RunConfig c = resolve_config(o, run, false);
    save_config(c, run);
    run_gen_data(c, o.seed, run.data(), std::cout);
}

void cmd_train(const Options& o, const RunPaths& run) {
    require_stage(o);
    const RunConfig c = resolve_config(o, run);
    const Dataset data = open_data(run);
    if (o.stage == "backbone") {
        run_train_backbone(c, data, o.seed, o.checkpoint.empty() ? run.backbone() : fs::path(o.checkpoint), std::cout);
    } else {
        const fs::path backbone = o.checkpoint.empty() ? run.backbone() : fs::path(o.checkpoint);
        run_train_blocks(c, data, backbone, o.seed, run.blocks(), std::cout);
    }
}

void cmd_sample(const Options& o, const RunPaths& run) {
    require_stage(o);
    const RunConfig c = resolve_config(o, run);
    const Dataset data = open_data(run);
    if (o.stage == "backbone") {
        const fs::path backbone = o.checkpoint.empty() ? run.backbone() : fs::path(o.checkpoint);
        run_sample(c, data, backbone, "", o.seed, run.samples("backbone"), std::cout);
    } else {
        const fs::path blocks = o.checkpoint.empty() ? run.blocks() : fs::path(o.checkpoint);
        run_sample(c, data, run.backbone(), blocks, o.seed, run.samples("blocks"), std::cout);
    }
}

void cmd_eval(const Options& o, const RunPaths& run) {
    const RunConfig c = resolve_config(o, run);
    const Dataset data = open_data(run);
    run_eval(c, data, run, std::cout);
    std::cout << "report: " << run.eval() / "report.txt" << "\n";
}

void cmd_pipeline(Options o, const RunPaths& run) {
    cmd_gen_data(o, run);
    o.config = run.config().string();
    o.stage = "backbone";
    cmd_train(o, run);
    o.stage = "blocks";
    cmd_train(o, run);
    o.stage = "backbone";
    cmd_sample(o, run);
    o.stage = "blocks";
    cmd_sample(o, run);
    cmd_eval(o, run);
}

template <class F>
int guarded(F&& f) {
    try {
        f();
        return kOk;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kUsage;
    } catch (const IoError& e) {
        std::cerr << "i/o error: " << e.what() << "\n";
        return kIo;
    } catch (const NonFiniteError& e) {
        std::cerr << "non-finite value: " << e.what() << "\n";
        return kNonFinite;
    } catch (const HashMismatchError& e) {
        std::cerr << "config hash mismatch: " << e.what() << "\n";
        return kHash;
    } catch (const ShapeError& e) {
        std::cerr << "shape error: " << e.what() << "\n";
        return kShape;
    } catch (const ValueError& e) {
        std::cerr << "value error: " << e.what() << "\n";
        return kShape;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "i/o error: " << e.what() << "\n";
        return kIo;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kInternal;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multi-view consistent diffusion on synthetic scenes"};
    app.fallthrough();
    Options o;
    app.add_option("--config", o.config, "run configuration file");
    app.add_option("--seed", o.seed, "seed of the stage");
    app.add_option("--out", o.out, "run directory")->capture_default_str();
    app.add_option("--stage", o.stage, "backbone or blocks");
    app.add_option("--checkpoint", o.checkpoint, "checkpoint directory overriding the run layout");
    app.add_flag("--smoke", o.smoke, "use the smoke configuration; alone, run the whole pipeline");

    auto* gen = app.add_subcommand("gen-data", "render the synthetic dataset");
    auto* train = app.add_subcommand("train", "train the backbone or the blocks");
    auto* sample = app.add_subcommand("sample", "generate views of the evaluation objects");
    auto* eval = app.add_subcommand("eval", "score generated views against ground truth");
    app.require_subcommand(0, 1);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }

    const RunPaths run{fs::path(o.out)};
    if (*gen) return guarded([&] { cmd_gen_data(o, run); });
    if (*train) return guarded([&] { cmd_train(o, run); });
    if (*sample) return guarded([&] { cmd_sample(o, run); });
    if (*eval) return guarded([&] { cmd_eval(o, run); });
    if (o.smoke) return guarded([&] { cmd_pipeline(o, run); });
    std::cerr << app.help();
    return kUsage;
}
