#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "crossda/raster.hpp"
#include "json.hpp"

namespace crossda::labels {

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  bool operator==(const Rgb&) const = default;
};

struct SchemeEntry {
  int code = 0;
  std::string name;
  Rgb color;
  /// False for classes of the full legend that the recoding table does not
  /// list; they are kept so the registry is complete.
  bool in_table = true;
};

class LabelScheme {
 public:
  LabelScheme() = default;
  LabelScheme(std::string id, std::vector<SchemeEntry> entries);

  const std::string& id() const noexcept { return id_; }
  const std::vector<SchemeEntry>& entries() const noexcept { return entries_; }
  std::size_t size() const noexcept { return entries_.size(); }

  const SchemeEntry* find(int code) const;
  const SchemeEntry* find(std::string_view name) const;
  bool contains(int code) const { return find(code) != nullptr; }
  /// Throws Error(invalid_argument) for an unknown name.
  int code_of(std::string_view name) const;
  const std::string& name_of(int code) const;

 private:
  std::string id_;
  std::vector<SchemeEntry> entries_;
};

enum class UnknownPolicy { error, map_to_nodata };

struct RecodeMap {
  std::string from_scheme;
  std::string to_scheme;
  std::map<int, int> mapping;
  UnknownPolicy unknown_policy = UnknownPolicy::error;

  /// Totality over `from`, images inside `to`.
  void validate(const LabelScheme& from, const LabelScheme& to) const;

  static RecodeMap identity(const LabelScheme& scheme);
};

/// A note about the recoding table that the registry had to resolve.
struct SchemeConflict {
  std::string scheme_id;
  std::string name;
  std::string detail;
};

struct BuiltinSchemes {
  LabelScheme nalcms;   // 19 classes
  LabelScheme corine;   // 31 classes
  LabelScheme general;  // 8 classes
  RecodeMap nalcms_to_general;
  RecodeMap corine_to_general;
  std::vector<SchemeConflict> conflicts;

  const LabelScheme& scheme(std::string_view id) const;
  /// Map from `id` to GENERAL-8, or the identity map for GENERAL-8 itself.
  RecodeMap to_general(std::string_view id) const;
};

const BuiltinSchemes& builtin_schemes();

inline constexpr std::string_view kNalcms = "NALCMS-19";
inline constexpr std::string_view kCorine = "CORINE-31";
inline constexpr std::string_view kGeneral = "GENERAL-8";

/// {scheme_id, entries:[{code,name,color,in_table}], recode:[{from,to}]}.
/// `recode` is omitted when `map` is null.
nlohmann::json scheme_manifest(const LabelScheme& scheme, const RecodeMap* map = nullptr);
/// Every built-in scheme with its map to GENERAL-8 and the recorded conflicts.
nlohmann::json builtin_manifest();

/// Segmentation class index of a GENERAL-8 code (code - 1); nodata passes
/// through unchanged.
std::uint8_t class_index(std::uint8_t general_code) noexcept;
std::uint8_t general_code(std::uint8_t class_index) noexcept;

// --- operations ----------------------------------------------------------

/// Per-pixel application of `map`. Nodata (invalid or 255) is preserved.
Raster recode(const Raster& labels, const RecodeMap& map);

struct ClassDistribution {
  std::string scheme_id;
  /// Fraction of labelled pixels per scheme code, every code listed.
  std::map<int, double> fractions;
  std::uint64_t labelled_pixels = 0;
};

ClassDistribution class_distribution(const Raster& labels, const LabelScheme& scheme);
/// Pooled distribution over several label rasters.
ClassDistribution class_distribution(std::span<const Raster> labels, const LabelScheme& scheme);

/// Distribution pushed through a recode map: target fraction is the sum of
/// source fractions mapping to it.
ClassDistribution push_forward(const ClassDistribution& dist, const RecodeMap& map, const LabelScheme& to);

struct CrosswalkMatrix {
  std::string scheme_a;
  std::string scheme_b;
  std::map<std::pair<int, int>, std::uint64_t> counts;
  std::uint64_t total = 0;

  std::map<int, std::uint64_t> marginal_a() const;
  std::map<int, std::uint64_t> marginal_b() const;
  nlohmann::json to_json() const;
};

/// Co-occurrence counts of codes over pixels labelled in both rasters.
CrosswalkMatrix crosswalk(const Raster& labels_a, const Raster& labels_b, std::string scheme_a = {},
                          std::string scheme_b = {});

}  // namespace crossda::labels
