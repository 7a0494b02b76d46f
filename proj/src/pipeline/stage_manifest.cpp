#include <algorithm>
#include <fstream>

#include <openssl/evp.h>

#include "crossda/error.hpp"
#include "crossda/pipeline.hpp"

namespace crossda::pipeline {

namespace fs = std::filesystem;

namespace {

class Sha256 {
 public:
  Sha256() : ctx_(EVP_MD_CTX_new()) {
    if (!ctx_ || EVP_DigestInit_ex(ctx_, EVP_sha256(), nullptr) != 1) throw Error(Errc::io, "sha256 init failed");
  }
  ~Sha256() { EVP_MD_CTX_free(ctx_); }
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  void update(const void* data, std::size_t n) {
    if (EVP_DigestUpdate(ctx_, data, n) != 1) throw Error(Errc::io, "sha256 update failed");
  }
  void update(const std::string& s) { update(s.data(), s.size()); }

  std::string hex() {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_DigestFinal_ex(ctx_, md, &len) != 1) throw Error(Errc::io, "sha256 final failed");
    static const char* digits = "0123456789abcdef";
    std::string out;
    for (unsigned i = 0; i < len; ++i) {
      out.push_back(digits[md[i] >> 4]);
      out.push_back(digits[md[i] & 15]);
    }
    return out;
  }

 private:
  EVP_MD_CTX* ctx_;
};

}  // namespace

std::string sha256_hex(std::span<const std::uint8_t> bytes) {
  Sha256 h;
  h.update(bytes.data(), bytes.size());
  return h.hex();
}

std::string sha256_file(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(Errc::io, "cannot open " + path.string());
  Sha256 h;
  std::vector<char> buf(1 << 16);
  while (f) {
    f.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    h.update(buf.data(), static_cast<std::size_t>(f.gcount()));
  }
  return h.hex();
}

std::string sha256_path(const fs::path& path) {
  if (fs::is_regular_file(path)) return sha256_file(path);
  if (!fs::is_directory(path)) throw Error(Errc::io, "no such file or directory: " + path.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(path)) {
    if (e.is_regular_file()) files.push_back(fs::relative(e.path(), path));
  }
  std::sort(files.begin(), files.end());
  Sha256 h;
  for (const auto& f : files) {
    h.update(f.generic_string() + "\n" + sha256_file(path / f) + "\n");
  }
  return h.hex();
}

nlohmann::json StageRecord::to_json() const {
  return {{"stage", stage}, {"key", key}, {"inputs", inputs}, {"outputs", outputs}, {"seed", seed}};
}

StageRecord StageRecord::from_json(const nlohmann::json& j) {
  StageRecord r;
  r.stage = j.at("stage").get<std::string>();
  r.key = j.at("key").get<std::string>();
  r.inputs = j.value("inputs", r.inputs);
  r.outputs = j.value("outputs", r.outputs);
  r.seed = j.value("seed", r.seed);
  return r;
}

StageManifest::StageManifest(fs::path path) : path_(std::move(path)) {
  std::ifstream f(path_);
  if (!f) return;
  std::string line;
  std::size_t n = 0;
  while (std::getline(f, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      records_.push_back(StageRecord::from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::corruption, path_.string() + " line " + std::to_string(n) + ": " + e.what());
    }
  }
}

const StageRecord* StageManifest::find(const std::string& stage, const std::string& key) const {
  for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
    if (it->stage == stage && it->key == key) return &*it;
  }
  return nullptr;
}

void StageManifest::append(const StageRecord& r) {
  std::ofstream f(path_, std::ios::app);
  if (!f) throw Error(Errc::io, "cannot open " + path_.string() + " for writing");
  f << r.to_json().dump() << "\n";
  if (!f) throw Error(Errc::io, "write failed: " + path_.string());
  records_.push_back(r);
}

}  // namespace crossda::pipeline
