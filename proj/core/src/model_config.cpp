#include <fstream>
#include <sstream>

#include "waveaec/model.hpp"

namespace waveaec {

void write_model_config(const std::string& path, const AecModelConfig& cfg) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError("cannot write model config: " + path);
  os << "version 1\n";
  os << "window_len " << cfg.window_len << "\n";
  os << "hop " << cfg.hop << "\n";
  os << "feature_dim " << cfg.feature_dim << "\n";
  os << "num_layers " << cfg.num_layers << "\n";
  os << "conv_kernel " << cfg.conv_kernel << "\n";
  os << "attn_heads " << cfg.attn_heads << "\n";
  os << "attn_left_context " << cfg.attn_left_context << "\n";
  os << "ffn_expansion " << cfg.ffn_expansion << "\n";
}

AecModelConfig read_model_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot read model config: " + path);
  AecModelConfig cfg;
  std::string key;
  long long value;
  bool version_ok = false;
  while (is >> key >> value) {
    if (key == "version") {
      if (value != 1)
        throw DataError("model config: unsupported version " +
                        std::to_string(value));
      version_ok = true;
    } else if (key == "window_len") cfg.window_len = int(value);
    else if (key == "hop") cfg.hop = int(value);
    else if (key == "feature_dim") cfg.feature_dim = int(value);
    else if (key == "num_layers") cfg.num_layers = int(value);
    else if (key == "conv_kernel") cfg.conv_kernel = int(value);
    else if (key == "attn_heads") cfg.attn_heads = int(value);
    else if (key == "attn_left_context") cfg.attn_left_context = int(value);
    else if (key == "ffn_expansion") cfg.ffn_expansion = int(value);
    else throw DataError("model config: unknown key '" + key + "' in " + path);
  }
  if (!version_ok) throw DataError("model config: missing version: " + path);
  cfg.validate();
  return cfg;
}

}  // namespace waveaec
