#pragma once

// Named parameter lists and the checkpoint directory format:
//
//   <dir>/manifest.txt   key=value header lines, then "param <name> <file> <shape> <frozen>"
//   <dir>/<name>.mvt     one tensor container per parameter

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "mvc/tensor.hpp"

namespace mvc {

struct NamedTensor {
    std::string name;
    Tensor tensor;  // shares storage with the owning parameter struct
};

using ParamList = std::vector<NamedTensor>;

std::vector<Tensor> tensors_of(const ParamList& params);
int64_t parameter_count(const ParamList& params);
void set_requires_grad(const ParamList& params, bool flag);
void zero_grads(const ParamList& params);

struct CheckpointManifest {
    std::map<std::string, std::string> header;  // e.g. config_hash, kind, step
    std::map<std::string, bool> frozen;
};

void save_checkpoint(const std::filesystem::path& dir, const ParamList& params, const CheckpointManifest& manifest);
// Copies stored values into `params` in place; every name must be present
// with the same shape.
CheckpointManifest load_checkpoint(const std::filesystem::path& dir, const ParamList& params);
CheckpointManifest read_checkpoint_manifest(const std::filesystem::path& dir);

}  // namespace mvc
