#pragma once

#include <filesystem>
#include <string>

#include "waveaec/checkpoint.hpp"
#include "waveaec/model.hpp"

namespace waveaec {

// Geometry sidecar lookup: "model.cfg" next to the checkpoint, falling back
// to the default configuration when none was written.
inline AecModelConfig sidecar_config_for(const std::string& checkpoint_path) {
  const auto sidecar =
      std::filesystem::path(checkpoint_path).parent_path() / "model.cfg";
  if (std::filesystem::exists(sidecar))
    return read_model_config(sidecar.string());
  return AecModelConfig{};
}

// Copies model parameters out of a checkpoint (training checkpoints also
// carry adam.* / trainer.* tensors, which are ignored here).
template <typename T>
void load_model_params(AecModelT<T>& model, const std::string& path) {
  auto ckpt = load_checkpoint<T>(path);
  for (const auto& [name, t] : model.named_parameters()) {
    auto it = ckpt.find(name);
    if (it == ckpt.end())
      throw DataError("checkpoint missing model tensor " + name + ": " + path);
    if (it->second->shape != t->shape)
      throw ShapeError("checkpoint shape mismatch for " + name + ": " + path);
    t->v = it->second->v;
  }
}

template <typename T = Real>
AecModelT<T> load_model(const std::string& checkpoint_path) {
  AecModelT<T> model(sidecar_config_for(checkpoint_path));
  load_model_params(model, checkpoint_path);
  return model;
}

}  // namespace waveaec
