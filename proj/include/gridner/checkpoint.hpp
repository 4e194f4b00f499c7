#pragma once

#include <filesystem>
#include <string>

#include "gridner/model.hpp"

namespace gridner {

// Everything needed to rerun a trained model.
struct Checkpoint {
    ModelConfig config;
    LabelSet labels;
    Vocabulary vocab;  // single <unk> entry when external vectors are used
    ModelParams params;
};

// Single-file binary format: magic, version, a JSON header with the
// hyperparameters, then named little-endian fp64 parameter entries.
// Save/load round-trips bit-exactly.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace gridner
