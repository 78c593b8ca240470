#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <filesystem>
#include <iostream>
#include <sstream>

#include "mvc/config.hpp"
#include "mvc/diffusion.hpp"
#include "mvc/errors.hpp"
#include "mvc/metrics.hpp"
#include "mvc/ops.hpp"
#include "mvc/pipeline.hpp"
#include "mvc/synth.hpp"
#include "mvc/tensor_io.hpp"

namespace py = pybind11;
using namespace mvc;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a) {
    Shape shape(a.shape(), a.shape() + a.ndim());
    if (shape.empty()) shape = {1};
    return Tensor(shape, std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_array(const Tensor& t) {
    Array out(std::vector<py::ssize_t>(t.shape().begin(), t.shape().end()));
    std::copy(t.values().begin(), t.values().end(), out.mutable_data());
    return out;
}

std::vector<Tensor> to_tensors(const std::vector<Array>& list) {
    std::vector<Tensor> out;
    for (const Array& a : list) out.push_back(to_tensor(a));
    return out;
}

RunConfig config_from(const std::string& text, bool smoke) {
    return parse_config(text, smoke ? smoke_config() : default_config());
}

}  // namespace

PYBIND11_MODULE(_mvcons, m) {
    m.doc() = "Multi-view consistent diffusion on synthetic scenes.";

    auto error = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<ConfigError>(m, "ConfigError", error.ptr());
    py::register_exception<IoError>(m, "IoError", error.ptr());
    py::register_exception<HashMismatchError>(m, "HashMismatchError", error.ptr());
    py::register_exception<NonFiniteError>(m, "NonFiniteError", error.ptr());
    py::register_exception<ShapeError>(m, "ShapeError", error.ptr());
    py::register_exception<ValueError>(m, "InvalidValueError", error.ptr());

    py::class_<CameraPose>(m, "CameraPose")
        .def(py::init(&CameraPose::orbit), py::arg("azimuth"), py::arg("elevation"), py::arg("radius"),
             py::arg("focal"), py::arg("height"), py::arg("width"))
        .def_readonly("azimuth", &CameraPose::azimuth)
        .def_readonly("elevation", &CameraPose::elevation)
        .def_readonly("radius", &CameraPose::radius)
        .def_property_readonly("focal", [](const CameraPose& p) { return p.intrinsics.focal; })
        .def_property_readonly("height", [](const CameraPose& p) { return p.intrinsics.height; })
        .def_property_readonly("width", [](const CameraPose& p) { return p.intrinsics.width; })
        .def_property_readonly("center", [](const CameraPose& p) {
            const Vec3 c = camera_center(p);
            return std::vector<double>{c.x(), c.y(), c.z()};
        })
        .def("__repr__", [](const CameraPose& p) {
            const CameraPose one[1] = {p};
            return "CameraPose(" + format_pose_table(one) + ")";
        });

    m.def(
        "project",
        [](const std::vector<double>& x, const CameraPose& pose) {
            if (x.size() != 3) throw ShapeError("project: expected a 3-vector");
            const Projection p = project(Vec3(x[0], x[1], x[2]), pose);
            return py::make_tuple(p.u, p.v, p.depth, p.valid);
        },
        py::arg("point"), py::arg("pose"), "World point -> (u, v, depth, valid).");
    m.def(
        "unproject",
        [](double u, double v, double depth, const CameraPose& pose) {
            const Vec3 x = unproject(u, v, depth, pose);
            return std::vector<double>{x.x(), x.y(), x.z()};
        },
        py::arg("u"), py::arg("v"), py::arg("depth"), py::arg("pose"));

    py::class_<Scene>(m, "Scene")
        .def(py::init([](uint64_t seed, int64_t min_primitives, int64_t max_primitives) {
                 SceneConfig c;
                 c.min_primitives = min_primitives;
                 c.max_primitives = max_primitives;
                 return gen_scene(seed, c);
             }),
             py::arg("seed"), py::arg("min_primitives") = 1, py::arg("max_primitives") = 4)
        .def_static("parse", &parse_scene)
        .def_readonly("seed", &Scene::seed)
        .def_property_readonly("primitives", [](const Scene& s) { return s.primitives.size(); })
        .def("__str__", &format_scene);

    m.def(
        "render",
        [](const Scene& scene, const CameraPose& pose, double ambient, double headlight) {
            const RenderedView v = render_view(scene, pose, Lighting{ambient, headlight});
            return py::make_tuple(to_array(v.image), to_array(v.depth));
        },
        py::arg("scene"), py::arg("pose"), py::arg("ambient") = 0.3, py::arg("headlight") = 0.7,
        "Returns (image [3,H,W], depth [H,W]); depth is +inf on background.");

    m.def("latent_encode", [](const Array& img) { return to_array(latent_encode(to_tensor(img))); });
    m.def("latent_decode", [](const Array& z) { return to_array(latent_decode(to_tensor(z))); });

    m.def(
        "psnr", [](const Array& a, const Array& b, double peak) { return psnr(to_tensor(a), to_tensor(b), peak); },
        py::arg("a"), py::arg("b"), py::arg("peak") = 1.0);
    m.def("ssim", [](const Array& a, const Array& b) { return ssim(to_tensor(a), to_tensor(b)); });
    m.def("ms_ssim", [](const Array& a, const Array& b) { return ms_ssim(to_tensor(a), to_tensor(b)); });
    m.def(
        "reprojection_consistency",
        [](const std::vector<Array>& images, const std::vector<Array>& depths, const std::vector<CameraPose>& poses,
           double tau) {
            const ReprojectionResult r = reprojection_consistency(to_tensors(images), to_tensors(depths), poses, tau);
            py::dict d;
            d["rmse"] = r.rmse;
            d["samples"] = r.samples;
            d["pairs_used"] = r.pairs_used;
            d["pairs_skipped"] = r.pairs_skipped;
            return d;
        },
        py::arg("images"), py::arg("depths"), py::arg("poses"), py::arg("tau") = 0.01);

    m.def(
        "attention",
        [](const Array& q, const Array& k, const Array& v, const std::optional<Array>& mask, int64_t heads) {
            NoGradGuard ng;
            Tensor weights;
            const Tensor out = attention(to_tensor(q), to_tensor(k), to_tensor(v), mask ? to_tensor(*mask) : Tensor(),
                                         heads, &weights);
            return py::make_tuple(to_array(out), to_array(weights));
        },
        py::arg("q"), py::arg("k"), py::arg("v"), py::arg("key_mask") = py::none(), py::arg("heads") = 1,
        "q [B,Lq,W], k/v [B,Lk,W], key_mask [B,Lk] -> (out [B,Lq,W], weights [B,heads,Lq,Lk]).");

    py::class_<NoiseSchedule>(m, "NoiseSchedule")
        .def(py::init(&make_schedule), py::arg("steps") = 1000, py::arg("beta_min") = 1e-4, py::arg("beta_max") = 0.02)
        .def_readonly("steps", &NoiseSchedule::steps)
        .def_readonly("beta", &NoiseSchedule::beta)
        .def_readonly("alpha_bar", &NoiseSchedule::alpha_bar)
        .def("alpha_bar_at", &NoiseSchedule::alpha_bar_at);
    m.def("q_sample", [](const Array& x0, int64_t t, const Array& eps, const NoiseSchedule& s) {
        NoGradGuard ng;
        return to_array(q_sample(to_tensor(x0), t, to_tensor(eps), s));
    });
    m.def("ddim_step", [](const Array& x_t, const Array& eps_hat, int64_t t, int64_t t_prev, const NoiseSchedule& s) {
        NoGradGuard ng;
        return to_array(ddim_step(to_tensor(x_t), to_tensor(eps_hat), t, t_prev, s));
    });
    m.def("ddim_timesteps", &ddim_timesteps, py::arg("total"), py::arg("count"));

    m.def("default_config", [] { return format_config(default_config()); });
    m.def("smoke_config", [] { return format_config(smoke_config()); });
    m.def(
        "config_hash", [](const std::string& text, bool smoke) { return config_hash(config_from(text, smoke)); },
        py::arg("text") = "", py::arg("smoke") = false,
        "Hash of the config obtained by applying `text` to the default (or smoke) config.");

    // Pipeline stages; `config` is config-file text applied to the default or smoke config.
    m.def(
        "gen_data",
        [](const std::string& run, const std::string& config, bool smoke, uint64_t seed) {
            const RunConfig c = config_from(config, smoke);
            const RunPaths paths{run};
            std::filesystem::create_directories(paths.root);
            write_file(paths.config(), format_config(c));
            std::ostringstream log;
            const Dataset d = run_gen_data(c, seed, paths.data(), log);
            return d.objects.size();
        },
        py::arg("run"), py::arg("config") = "", py::arg("smoke") = false, py::arg("seed") = 0,
        py::call_guard<py::gil_scoped_release>());
    m.def(
        "train",
        [](const std::string& run, const std::string& stage, const std::string& config, bool smoke, uint64_t seed,
           bool verbose) {
            const RunConfig c = config_from(config, smoke);
            const RunPaths paths{run};
            const Dataset data = read_dataset(paths.data());
            std::ostringstream quiet;
            std::ostream& log = verbose ? std::cout : quiet;
            if (stage == "backbone") return run_train_backbone(c, data, seed, paths.backbone(), log).losses;
            if (stage == "blocks") return run_train_blocks(c, data, paths.backbone(), seed, paths.blocks(), log).losses;
            throw ConfigError("stage must be 'backbone' or 'blocks'");
        },
        py::arg("run"), py::arg("stage"), py::arg("config") = "", py::arg("smoke") = false, py::arg("seed") = 0,
        py::arg("verbose") = false, py::call_guard<py::gil_scoped_release>(), "Returns the per-step losses.");
    m.def(
        "sample",
        [](const std::string& run, const std::string& stage, const std::string& config, bool smoke, uint64_t seed) {
            const RunConfig c = config_from(config, smoke);
            const RunPaths paths{run};
            const Dataset data = read_dataset(paths.data());
            if (stage != "backbone" && stage != "blocks") throw ConfigError("stage must be 'backbone' or 'blocks'");
            std::ostringstream log;
            run_sample(c, data, paths.backbone(), stage == "blocks" ? paths.blocks() : std::filesystem::path(), seed,
                       paths.samples(stage), log);
        },
        py::arg("run"), py::arg("stage"), py::arg("config") = "", py::arg("smoke") = false, py::arg("seed") = 0,
        py::call_guard<py::gil_scoped_release>());
    m.def(
        "evaluate",
        [](const std::string& run, const std::string& config, bool smoke) {
            const RunConfig c = config_from(config, smoke);
            const RunPaths paths{run};
            std::ostringstream log;
            EvalReport r;
            {
                py::gil_scoped_release release;
                r = run_eval(c, read_dataset(paths.data()), paths, log);
            }
            py::dict out;
            for (const VariantReport& v : r.variants) {
                py::dict d;
                d["objects"] = v.objects.size();
                d["psnr"] = v.mean.psnr;
                d["ssim"] = v.mean.ssim;
                d["ms_ssim"] = v.mean.ms_ssim;
                d["reprojection_rmse"] = v.reprojection;
                out[py::str(v.variant)] = d;
            }
            return out;
        },
        py::arg("run"), py::arg("config") = "", py::arg("smoke") = false);
}
