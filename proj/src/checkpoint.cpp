#include "tabncd/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>

#include "tabncd/errors.hpp"

namespace tabncd {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

namespace {

constexpr std::array<char, 8> kMagic{'T', 'N', 'C', 'D', 'C', 'K', 'P', 'T'};

void put_u32(std::ostream& out, std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); }

void put_f64s(std::ostream& out, const double* data, std::size_t n) {
  out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * sizeof(double)));
}

std::uint32_t get_u32(std::istream& in) {
  std::uint32_t v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), 4)) throw DataError("checkpoint: truncated file");
  return v;
}

void get_f64s(std::istream& in, double* data, std::size_t n) {
  if (!in.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(n * sizeof(double)))) {
    throw DataError("checkpoint: truncated file");
  }
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path,
                     const std::vector<std::pair<std::string, const DenseNet*>>& nets) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("checkpoint: cannot write " + path.string());
  out.write(kMagic.data(), kMagic.size());
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(nets.size()));
  for (const auto& [name, net] : nets) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u32(out, static_cast<std::uint32_t>(net->depth()));
    for (const auto& layer : net->layers()) {
      put_u32(out, static_cast<std::uint32_t>(layer.activation));
      put_u32(out, static_cast<std::uint32_t>(layer.out_dim()));
      put_u32(out, static_cast<std::uint32_t>(layer.in_dim()));
      put_f64s(out, layer.weight.data(), static_cast<std::size_t>(layer.weight.size()));
      put_f64s(out, layer.bias.data(), static_cast<std::size_t>(layer.bias.size()));
    }
  }
  if (!out) throw ConfigError("checkpoint: write failed for " + path.string());
}

NamedNetworks load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("checkpoint: cannot open " + path.string());
  std::array<char, 8> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kMagic) {
    throw DataError("checkpoint: bad magic in " + path.string());
  }
  if (const auto version = get_u32(in); version != kCheckpointVersion) {
    throw DataError("checkpoint: unsupported version " + std::to_string(version));
  }
  NamedNetworks nets;
  const auto count = get_u32(in);
  for (std::uint32_t n = 0; n < count; ++n) {
    std::string name(get_u32(in), '\0');
    if (!in.read(name.data(), static_cast<std::streamsize>(name.size()))) {
      throw DataError("checkpoint: truncated file");
    }
    std::vector<DenseLayer> layers(get_u32(in));
    for (auto& layer : layers) {
      const auto act = get_u32(in);
      if (act > static_cast<std::uint32_t>(Activation::softmax)) {
        throw DataError("checkpoint: bad activation code " + std::to_string(act));
      }
      layer.activation = static_cast<Activation>(act);
      const auto rows = get_u32(in);
      const auto cols = get_u32(in);
      layer.weight.resize(rows, cols);
      layer.bias.resize(rows);
      get_f64s(in, layer.weight.data(), static_cast<std::size_t>(layer.weight.size()));
      get_f64s(in, layer.bias.data(), static_cast<std::size_t>(layer.bias.size()));
    }
    nets.emplace(std::move(name), DenseNet(std::move(layers)));
  }
  return nets;
}

}  // namespace tabncd
