#include "camalign/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "camalign/config.hpp"

namespace camalign {

namespace {

constexpr char kMagic[8] = {'C', 'A', 'M', 'A', 'L', 'G', 'N', '\0'};

void write_u64(std::ostream& out, std::uint64_t v) { out.write(reinterpret_cast<const char*>(&v), sizeof v); }

std::uint64_t read_u64(std::istream& in, const std::string& what) {
  std::uint64_t v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw Error("checkpoint truncated reading " + what);
  return v;
}

void write_string(std::ostream& out, const std::string& s) {
  write_u64(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& in, const std::string& what) {
  const auto n = read_u64(in, what);
  if (n > (1u << 24)) throw Error("checkpoint corrupt: " + what + " too long");
  std::string s(n, '\0');
  if (!in.read(s.data(), static_cast<std::streamsize>(n))) throw Error("checkpoint truncated reading " + what);
  return s;
}

}  // namespace

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write checkpoint " + path.string());
  out.write(kMagic, sizeof kMagic);
  const std::uint32_t version = kCheckpointVersion;
  out.write(reinterpret_cast<const char*>(&version), sizeof version);
  write_string(out, model_config_text(model.config()));
  const auto params = model.params();
  write_u64(out, params.size());
  for (const Param* p : params) {
    write_string(out, p->name);
    write_u64(out, p->size());
    out.write(reinterpret_cast<const char*>(p->value.data()), static_cast<std::streamsize>(p->size() * sizeof(double)));
  }
  if (!out) throw Error("failed writing checkpoint " + path.string());
}

Model load_checkpoint(const std::filesystem::path& path, const std::optional<ModelConfig>& expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read checkpoint " + path.string());
  char magic[sizeof kMagic];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
    throw Error(path.string() + " is not a checkpoint");
  }
  std::uint32_t version = 0;
  if (!in.read(reinterpret_cast<char*>(&version), sizeof version)) throw Error("checkpoint truncated");
  if (version != kCheckpointVersion) {
    throw Error("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                std::to_string(kCheckpointVersion) + ")");
  }
  const ModelConfig config = model_config_from_text(read_string(in, "config"));
  if (expected && !(*expected == config)) {
    throw ConfigError("checkpoint architecture does not match the requested config");
  }
  Model model(config, 0);
  auto params = model.partition().all();
  const auto count = read_u64(in, "parameter count");
  if (count != params.size()) {
    throw Error("checkpoint has " + std::to_string(count) + " parameter blocks, model has " +
                std::to_string(params.size()));
  }
  for (Param* p : params) {
    const std::string name = read_string(in, "parameter name");
    if (name != p->name) throw Error("checkpoint block '" + name + "' where '" + p->name + "' was expected");
    const auto n = read_u64(in, name);
    if (n != p->size()) throw ShapeError("checkpoint block '" + name + "' has the wrong size");
    if (!in.read(reinterpret_cast<char*>(p->value.data()), static_cast<std::streamsize>(n * sizeof(double)))) {
      throw Error("checkpoint truncated in block '" + name + "'");
    }
  }
  return model;
}

}  // namespace camalign
