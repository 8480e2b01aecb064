#pragma once

#include <filesystem>
#include <optional>

#include "camalign/model.hpp"

namespace camalign {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Binary checkpoint: magic, version tag, architecture config text, then
/// every parameter block by name.
void save_checkpoint(const Model& model, const std::filesystem::path& path);

/// Rebuilds the model from the embedded config. When `expected` is given the
/// embedded config must equal it.
Model load_checkpoint(const std::filesystem::path& path,
                      const std::optional<ModelConfig>& expected = std::nullopt);

}  // namespace camalign
