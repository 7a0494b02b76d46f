#include "crossda/nn/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "crossda/error.hpp"

namespace crossda::nn {

namespace {

constexpr char kMagic[4] = {'C', 'D', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

template <typename U>
void put(std::vector<std::uint8_t>& out, U v) {
  static_assert(std::endian::native == std::endian::little, "little-endian host required");
  std::uint8_t buf[sizeof(U)];
  std::memcpy(buf, &v, sizeof(U));
  out.insert(out.end(), buf, buf + sizeof(U));
}

template <typename U>
U get(const std::vector<std::uint8_t>& in, std::size_t& pos, const std::string& path) {
  if (in.size() - pos < sizeof(U)) throw Error(Errc::corruption, "checkpoint truncated: " + path);
  U v;
  std::memcpy(&v, in.data() + pos, sizeof(U));
  pos += sizeof(U);
  return v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ParameterSet& params, const nlohmann::json& meta) {
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& p : params) {
    auto dims = p.value.shape().dims();
    tensors.push_back({{"name", p.name}, {"shape", std::vector<std::size_t>(dims.begin(), dims.end())}});
  }
  const std::string manifest = nlohmann::json{{"tensors", tensors}, {"meta", meta}}.dump();

  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  put<std::uint32_t>(out, kVersion);
  put<std::uint64_t>(out, manifest.size());
  out.insert(out.end(), manifest.begin(), manifest.end());
  for (const auto& p : params) {
    for (float v : p.value.values()) put<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
  }

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(Errc::io, "cannot open " + path.string() + " for writing");
  f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!f) throw Error(Errc::io, "write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const std::string name = path.string();
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(Errc::missing_checkpoint, "cannot open checkpoint " + name);
  std::vector<std::uint8_t> in((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

  if (in.size() < 4 || std::memcmp(in.data(), kMagic, 4) != 0) {
    throw Error(Errc::format, "not a checkpoint file: " + name);
  }
  std::size_t pos = 4;
  const auto version = get<std::uint32_t>(in, pos, name);
  if (version != kVersion) {
    throw Error(Errc::unsupported_format, "checkpoint version " + std::to_string(version) + " in " + name);
  }
  const auto manifest_len = get<std::uint64_t>(in, pos, name);
  if (in.size() - pos < manifest_len) throw Error(Errc::corruption, "checkpoint truncated: " + name);
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(in.begin() + static_cast<std::ptrdiff_t>(pos),
                                     in.begin() + static_cast<std::ptrdiff_t>(pos + manifest_len));
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::corruption, "checkpoint manifest unreadable in " + name + ": " + e.what());
  }
  pos += manifest_len;

  Checkpoint ck;
  try {
    if (manifest.contains("meta")) ck.meta = manifest.at("meta");
    for (const auto& t : manifest.at("tensors")) {
      const auto dims = t.at("shape").get<std::vector<std::size_t>>();
      if (dims.size() > Shape::kMaxRank) throw Error(Errc::corruption, "tensor rank above 4 in " + name);
      const auto i = ck.params.add(t.at("name").get<std::string>(), Shape(std::span<const std::size_t>(dims)));
      for (auto& v : ck.params[i].value.values()) v = std::bit_cast<float>(get<std::uint32_t>(in, pos, name));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::corruption, "checkpoint manifest malformed in " + name + ": " + e.what());
  }
  if (pos != in.size()) throw Error(Errc::corruption, "trailing bytes after checkpoint payload in " + name);
  return ck;
}

void assign_parameters(ParameterSet& params, const ParameterSet& from) {
  if (params.size() != from.size()) {
    throw Error(Errc::dimension, "checkpoint holds " + std::to_string(from.size()) + " tensors, expected " +
                                     std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].name != from[i].name || !(params[i].value.shape() == from[i].value.shape())) {
      throw Error(Errc::dimension, "checkpoint tensor " + from[i].name + " " + from[i].value.shape().str() +
                                       " does not match " + params[i].name + " " + params[i].value.shape().str());
    }
    params[i].value = from[i].value;
  }
}

}  // namespace crossda::nn
