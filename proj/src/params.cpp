#include "mvc/params.hpp"

#include <algorithm>
#include <sstream>

#include "mvc/errors.hpp"
#include "mvc/tensor_io.hpp"

namespace mvc {

std::vector<Tensor> tensors_of(const ParamList& params) {
    std::vector<Tensor> out;
    out.reserve(params.size());
    for (const auto& p : params) out.push_back(p.tensor);
    return out;
}

int64_t parameter_count(const ParamList& params) {
    int64_t n = 0;
    for (const auto& p : params) n += p.tensor.numel();
    return n;
}

void set_requires_grad(const ParamList& params, bool flag) {
    for (auto p : params) p.tensor.set_requires_grad(flag);
}

void zero_grads(const ParamList& params) {
    for (auto p : params) p.tensor.zero_grad();
}

namespace {

std::string file_name(const std::string& param) {
    std::string f = param;
    std::replace(f.begin(), f.end(), '/', '.');
    return f + ".mvt";
}

}  // namespace

void save_checkpoint(const std::filesystem::path& dir, const ParamList& params, const CheckpointManifest& manifest) {
    std::ostringstream m;
    m << "checkpoint 1\n";
    for (const auto& [k, v] : manifest.header) m << k << '=' << v << '\n';
    for (const auto& p : params) {
        const auto it = manifest.frozen.find(p.name);
        const bool frozen = it != manifest.frozen.end() && it->second;
        m << "param " << p.name << ' ' << file_name(p.name) << ' ' << shape_str(p.tensor.shape()) << ' '
          << (frozen ? 1 : 0) << '\n';
        write_tensor(dir / file_name(p.name), p.tensor);
    }
    write_file(dir / "manifest.txt", m.str());
}

CheckpointManifest read_checkpoint_manifest(const std::filesystem::path& dir) {
    std::istringstream in(read_file(dir / "manifest.txt"));
    std::string line;
    if (!std::getline(in, line) || line != "checkpoint 1") throw IoError("not a checkpoint: " + dir.string());
    CheckpointManifest m;
    while (std::getline(in, line)) {
        if (line.rfind("param ", 0) == 0) {
            std::istringstream ls(line.substr(6));
            std::string name, file, shape;
            int frozen = 0;
            ls >> name >> file >> shape >> frozen;
            m.frozen[name] = frozen != 0;
        } else if (const auto eq = line.find('='); eq != std::string::npos) {
            m.header[line.substr(0, eq)] = line.substr(eq + 1);
        }
    }
    return m;
}

CheckpointManifest load_checkpoint(const std::filesystem::path& dir, const ParamList& params) {
    CheckpointManifest m = read_checkpoint_manifest(dir);
    for (auto p : params) {
        if (!m.frozen.count(p.name)) throw IoError("checkpoint " + dir.string() + " lacks parameter " + p.name);
        const Tensor stored = read_tensor(dir / file_name(p.name));
        if (stored.shape() != p.tensor.shape()) {
            throw IoError("parameter " + p.name + " has shape " + shape_str(stored.shape()) + ", expected " +
                          shape_str(p.tensor.shape()));
        }
        auto dst = p.tensor.mutable_values();
        std::copy(stored.values().begin(), stored.values().end(), dst.begin());
    }
    return m;
}

}  // namespace mvc
