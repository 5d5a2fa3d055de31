#include "hoi/checkpoint.hpp"

#include <array>
#include <cstring>
#include <fstream>

#include "hoi/errors.hpp"

namespace hoi {
namespace {

constexpr std::array<char, 8> kMagic = {'H', 'O', 'I', 'C', 'K', 'P', 'T', '1'};

template <class T>
void put(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

void put_string(std::ofstream& out, const std::string& s) {
  put(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

template <class T>
T get(std::ifstream& in, const std::string& what) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw DataError("checkpoint truncated reading " + what);
  return v;
}

std::string get_string(std::ifstream& in, const std::string& what) {
  const auto n = get<std::uint32_t>(in, what);
  if (n > (1u << 20)) throw DataError("checkpoint string too long: " + what);
  std::string s(n, '\0');
  if (!in.read(s.data(), n)) throw DataError("checkpoint truncated reading " + what);
  return s;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Detector& det, const std::string& config_hash) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  out.write(kMagic.data(), kMagic.size());
  put(out, kCheckpointVersion);
  put_string(out, config_hash);
  const auto& params = det.parameters();
  put(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    put_string(out, p.name);
    put(out, static_cast<std::uint32_t>(p.shape.size()));
    for (auto d : p.shape) put(out, static_cast<std::uint64_t>(d));
    out.write(reinterpret_cast<const char*>(p.data.data()), static_cast<std::streamsize>(p.data.size() * sizeof(double)));
  }
  if (!out) throw DataError("failed writing checkpoint " + path.string());
}

CheckpointInfo load_checkpoint(const std::filesystem::path& path, Detector& det,
                               const std::optional<std::string>& expected_hash) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read checkpoint " + path.string());
  std::array<char, 8> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kMagic) throw DataError("not a checkpoint: " + path.string());
  CheckpointInfo info;
  info.version = get<std::uint32_t>(in, "version");
  if (info.version != kCheckpointVersion)
    throw DataError("unsupported checkpoint version " + std::to_string(info.version));
  info.config_hash = get_string(in, "config hash");
  if (expected_hash && *expected_hash != info.config_hash)
    throw DataError("checkpoint config hash " + info.config_hash + " does not match " + *expected_hash);
  info.n_params = get<std::uint32_t>(in, "parameter count");
  auto& params = det.parameters();
  if (info.n_params != params.size())
    throw DataError("checkpoint has " + std::to_string(info.n_params) + " parameters, model has " +
                    std::to_string(params.size()));
  // Read everything before touching the model so a bad file leaves it intact.
  std::vector<std::vector<double>> values(params.size());
  for (std::size_t k = 0; k < params.size(); ++k) {
    const std::string name = get_string(in, "parameter name");
    if (name != params[k].name) throw DataError("checkpoint parameter '" + name + "' where '" + params[k].name + "' expected");
    const auto rank = get<std::uint32_t>(in, name);
    Shape shape;
    for (std::uint32_t r = 0; r < rank; ++r) shape.push_back(get<std::uint64_t>(in, name));
    if (shape != params[k].shape)
      throw DataError("checkpoint shape " + to_string(shape) + " for '" + name + "', model has " +
                      to_string(params[k].shape));
    values[k].resize(numel(shape));
    if (!in.read(reinterpret_cast<char*>(values[k].data()), static_cast<std::streamsize>(values[k].size() * sizeof(double))))
      throw DataError("checkpoint truncated in '" + name + "'");
  }
  for (std::size_t k = 0; k < params.size(); ++k) params[k].data = std::move(values[k]);
  det.unbind();
  return info;
}

}  // namespace hoi
