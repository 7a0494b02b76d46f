#include "crossda/dataset.hpp"

#include <fstream>
#include <map>

#include "crossda/error.hpp"
#include "json.hpp"

namespace crossda {

std::vector<SampleRecord> read_manifest(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw Error(Errc::io, "cannot open manifest " + path.string());
  std::vector<SampleRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      SampleRecord r;
      r.image_path = j.at("image_path").get<std::string>();
      r.label_path = j.at("label_path").get<std::string>();
      r.origin = j.value("origin", std::string("original"));
      if (r.origin != "original" && r.origin != "stylized") {
        throw Error(Errc::validation, "origin must be 'original' or 'stylized'");
      }
      out.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::validation, path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void write_manifest(const std::filesystem::path& path, std::span<const SampleRecord> records) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw Error(Errc::io, "cannot open " + path.string() + " for writing");
  for (const auto& r : records) {
    f << nlohmann::json{{"image_path", r.image_path}, {"label_path", r.label_path}, {"origin", r.origin}}.dump()
      << '\n';
  }
  if (!f) throw Error(Errc::io, "write failed: " + path.string());
}

std::filesystem::path resolve(const std::filesystem::path& manifest, const std::string& p) {
  std::filesystem::path q(p);
  return q.is_absolute() ? q : manifest.parent_path() / q;
}

std::vector<SampleRecord> build_mixed_dataset(std::span<const SampleRecord> originals,
                                              std::span<const std::string> stylized_images) {
  if (originals.size() != stylized_images.size()) {
    throw Error(Errc::validation, "mixed dataset: " + std::to_string(originals.size()) + " originals but " +
                                      std::to_string(stylized_images.size()) + " stylized tiles");
  }
  std::vector<SampleRecord> out(originals.begin(), originals.end());
  for (auto& r : out) r.origin = "original";
  for (std::size_t i = 0; i < originals.size(); ++i) {
    out.push_back({stylized_images[i], originals[i].label_path, "stylized"});
  }
  validate_mixed_dataset(out);
  return out;
}

void validate_mixed_dataset(std::span<const SampleRecord> records) {
  std::vector<const SampleRecord*> originals, stylized;
  for (const auto& r : records) (r.origin == "stylized" ? stylized : originals).push_back(&r);
  if (stylized.size() > originals.size()) {
    throw Error(Errc::validation, "mixed dataset has " + std::to_string(stylized.size()) +
                                      " stylized entries for " + std::to_string(originals.size()) + " originals");
  }
  std::map<std::string, std::size_t> open;
  for (const auto* r : originals) ++open[r->label_path];
  for (std::size_t i = 0; i < stylized.size(); ++i) {
    const auto it = open.find(stylized[i]->label_path);
    if (it == open.end() || it->second == 0) {
      throw Error(Errc::validation, "stylized entry " + stylized[i]->image_path + " has no original partner with label " +
                                        stylized[i]->label_path);
    }
    --it->second;
  }
}

Raster unit_tile(const Raster& r) {
  if (r.dtype() == DType::U16) return rescale_unit(r);
  if (r.dtype() == DType::F32) return r;
  throw Error(Errc::dtype, std::string("image tiles must be U16 or F32, got ") + dtype_name(r.dtype()));
}

nn::Tensor stack_tiles(std::span<const Raster* const> tiles) {
  if (tiles.empty()) throw Error(Errc::empty_input, "no tiles to stack");
  const Raster& first = *tiles.front();
  const std::size_t per = first.samples().size();
  nn::Tensor out(nn::Shape{tiles.size(), first.bands(), first.height(), first.width()});
  for (std::size_t i = 0; i < tiles.size(); ++i) {
    const Raster& t = *tiles[i];
    if (t.bands() != first.bands() || t.width() != first.width() || t.height() != first.height()) {
      throw Error(Errc::dimension, "tiles in one batch must share shape");
    }
    std::copy(t.samples().begin(), t.samples().end(), out.data() + i * per);
  }
  return out;
}

nn::Tensor stack_tiles(std::span<const Raster> tiles) {
  std::vector<const Raster*> ptrs;
  for (const auto& t : tiles) ptrs.push_back(&t);
  return stack_tiles(std::span<const Raster* const>(ptrs));
}

Raster tile_from_tensor(const nn::Tensor& t, std::size_t n, const Raster& like) {
  const std::size_t c = t.shape()[1], h = t.shape()[2], w = t.shape()[3];
  if (h != like.height() || w != like.width()) throw Error(Errc::dimension, "tensor and tile sizes differ");
  Raster out(w, h, c, DType::F32, like.geotransform());
  std::copy(t.data() + n * c * h * w, t.data() + (n + 1) * c * h * w, out.samples().begin());
  std::copy(like.validmask().begin(), like.validmask().end(), out.validmask().begin());
  out.set_mask_explicit(like.mask_explicit());
  return out;
}

}  // namespace crossda
