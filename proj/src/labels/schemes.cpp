#include <algorithm>
#include <set>
#include <string>

#include "crossda/error.hpp"
#include "crossda/labels.hpp"

namespace crossda::labels {

LabelScheme::LabelScheme(std::string id, std::vector<SchemeEntry> entries)
    : id_(std::move(id)), entries_(std::move(entries)) {
  std::set<int> codes;
  std::set<std::string> names;
  for (const auto& e : entries_) {
    if (e.code < 0 || e.code >= kLabelNodata) {
      throw Error(Errc::invalid_argument, id_ + ": code " + std::to_string(e.code) + " outside [0, 255)");
    }
    if (!codes.insert(e.code).second) throw Error(Errc::invalid_argument, id_ + ": duplicate code " + std::to_string(e.code));
    if (!names.insert(e.name).second) throw Error(Errc::invalid_argument, id_ + ": duplicate name " + e.name);
  }
}

const SchemeEntry* LabelScheme::find(int code) const {
  for (const auto& e : entries_) {
    if (e.code == code) return &e;
  }
  return nullptr;
}

const SchemeEntry* LabelScheme::find(std::string_view name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return &e;
  }
  return nullptr;
}

int LabelScheme::code_of(std::string_view name) const {
  const auto* e = find(name);
  if (!e) throw Error(Errc::invalid_argument, id_ + " has no class named '" + std::string(name) + "'");
  return e->code;
}

const std::string& LabelScheme::name_of(int code) const {
  const auto* e = find(code);
  if (!e) throw Error(Errc::invalid_argument, id_ + " has no code " + std::to_string(code));
  return e->name;
}

void RecodeMap::validate(const LabelScheme& from, const LabelScheme& to) const {
  for (const auto& e : from.entries()) {
    if (!mapping.count(e.code)) {
      throw Error(Errc::validation, from_scheme + " -> " + to_scheme + ": code " + std::to_string(e.code) + " (" +
                                        e.name + ") is not mapped");
    }
  }
  for (const auto& [src, dst] : mapping) {
    if (!from.contains(src)) {
      throw Error(Errc::validation, from_scheme + " -> " + to_scheme + ": mapped code " + std::to_string(src) +
                                        " is not in " + from.id());
    }
    if (!to.contains(dst)) {
      throw Error(Errc::validation, from_scheme + " -> " + to_scheme + ": image code " + std::to_string(dst) +
                                        " is not in " + to.id());
    }
  }
}

RecodeMap RecodeMap::identity(const LabelScheme& scheme) {
  RecodeMap m;
  m.from_scheme = scheme.id();
  m.to_scheme = scheme.id();
  for (const auto& e : scheme.entries()) m.mapping[e.code] = e.code;
  return m;
}

namespace {

struct Row {
  const char* name;
  const char* general;
  Rgb color;
  bool in_table = true;
};

LabelScheme make_scheme(std::string_view id, const std::vector<Row>& rows) {
  std::vector<SchemeEntry> entries;
  int code = 1;
  for (const auto& r : rows) entries.push_back({code++, r.name, r.color, r.in_table});
  return LabelScheme(std::string(id), std::move(entries));
}

RecodeMap make_map(const LabelScheme& from, const LabelScheme& general, const std::vector<Row>& rows) {
  RecodeMap m;
  m.from_scheme = from.id();
  m.to_scheme = general.id();
  for (std::size_t i = 0; i < rows.size(); ++i) m.mapping[from.entries()[i].code] = general.code_of(rows[i].general);
  m.validate(from, general);
  return m;
}

BuiltinSchemes build() {
  const std::vector<SchemeEntry> general_entries = {
      {1, "Forest", {0, 100, 0}},          {2, "Grassland", {170, 200, 90}},
      {3, "Wetland", {100, 160, 140}},     {4, "Cropland", {230, 175, 100}},
      {5, "Barren", {170, 170, 170}},      {6, "Settlement", {220, 30, 40}},
      {7, "Water", {70, 110, 170}},        {8, "Snow and glaciers", {250, 250, 255}},
  };

  // Full 19-class legend in its official order; the table lists 14 of them
  // and that order agrees with it.
  const std::vector<Row> nalcms_rows = {
      {"Temperate or sub-polar needleleaf forest", "Forest", {0, 61, 0}},
      {"Sub-polar taiga needleleaf forest", "Forest", {148, 156, 112}},
      {"Tropical or sub-tropical broadleaf evergreen forest", "Forest", {0, 99, 0}, false},
      {"Tropical or sub-tropical broadleaf deciduous forest", "Forest", {30, 171, 5}, false},
      {"Temperate or sub-polar broadleaf deciduous forest", "Forest", {20, 140, 61}},
      {"Mixed forest", "Forest", {92, 117, 43}},
      {"Tropical or sub-tropical shrubland", "Grassland", {179, 158, 43}, false},
      {"Temperate or sub-polar shrubland", "Grassland", {179, 138, 51}},
      {"Tropical or sub-tropical grassland", "Grassland", {232, 220, 94}, false},
      {"Temperate or sub-polar grassland", "Grassland", {225, 207, 138}},
      {"Sub-polar or polar shrubland lichen moss", "Grassland", {156, 117, 84}},
      {"Sub-polar or polar grassland lichen moss", "Grassland", {186, 212, 143}},
      {"Sub-polar or polar barren lichen moss", "Barren", {64, 138, 112}, false},
      {"Wetland", "Wetland", {107, 163, 138}},
      {"Cropland", "Cropland", {230, 174, 102}},
      {"Barren lands", "Barren", {168, 171, 174}},
      {"Urban", "Settlement", {220, 33, 38}},
      {"Water", "Water", {76, 112, 163}},
      {"Snow and ice", "Snow and glaciers", {255, 250, 255}},
  };

  const std::vector<Row> corine_rows = {
      {"Broad-leaved forest", "Forest", {128, 255, 0}},
      {"Coniferous forest", "Forest", {0, 166, 0}},
      {"Mixed forest", "Forest", {77, 255, 0}},
      {"Transitional woodland shrub", "Grassland", {166, 242, 0}},
      {"Sparsely vegetated areas", "Grassland", {204, 255, 204}},
      {"Green urban areas", "Grassland", {255, 166, 255}},
      {"Moors and heathland", "Wetland", {166, 255, 128}},
      {"Inland marshes", "Wetland", {166, 166, 255}},
      {"Peat bog", "Wetland", {77, 77, 255}},
      {"Non irrigated arable land", "Cropland", {255, 255, 168}},
      {"Pasture", "Cropland", {230, 230, 77}},
      {"Complex cultivation pattern", "Cropland", {255, 230, 77}},
      {"Land principally occupied by agriculture with significant areas of natural vegetation", "Cropland",
       {230, 204, 77}},
      {"Beaches dunes sands", "Barren", {230, 230, 230}},
      {"Bare rock", "Barren", {204, 204, 204}},
      {"Burnt areas", "Barren", {40, 40, 40}},
      {"Mineral extraction site", "Barren", {166, 0, 204}},
      {"Continuous urban fabric", "Settlement", {230, 0, 77}},
      {"Discontinuous urban fabric", "Settlement", {255, 0, 0}},
      {"Industrial or commercial units", "Settlement", {204, 77, 242}},
      {"Road and rail networks and associated lands", "Settlement", {204, 0, 0}},
      {"Port areas", "Settlement", {230, 204, 204}},
      {"Airports", "Settlement", {230, 204, 230}},
      {"Dump site", "Settlement", {166, 77, 0}},
      {"Construction site", "Settlement", {255, 77, 255}},
      {"Sport and leisure facilities", "Settlement", {255, 230, 255}},
      {"Intertidal flats", "Water", {166, 166, 230}},
      {"Water courses", "Water", {0, 204, 242}},
      {"Water bodies", "Water", {128, 242, 230}},
      {"Sea and ocean", "Water", {230, 242, 255}},
      {"Glaciers and perpetual snow", "Snow and glaciers", {166, 230, 204}},
  };

  BuiltinSchemes s;
  s.general = LabelScheme(std::string(kGeneral), general_entries);
  s.nalcms = make_scheme(kNalcms, nalcms_rows);
  s.corine = make_scheme(kCorine, corine_rows);
  s.nalcms_to_general = make_map(s.nalcms, s.general, nalcms_rows);
  s.corine_to_general = make_map(s.corine, s.general, corine_rows);
  s.conflicts = {
      {std::string(kCorine), "Beaches dunes sands",
       "listed under both Barren and Settlement in the recoding table; assigned to Barren"},
  };
  for (const auto& r : nalcms_rows) {
    if (!r.in_table) {
      s.conflicts.push_back({std::string(kNalcms), r.name,
                             std::string("not listed in the recoding table; assigned to ") + r.general});
    }
  }
  return s;
}

}  // namespace

const LabelScheme& BuiltinSchemes::scheme(std::string_view id) const {
  if (id == kNalcms) return nalcms;
  if (id == kCorine) return corine;
  if (id == kGeneral) return general;
  throw Error(Errc::invalid_argument, "unknown scheme '" + std::string(id) + "'");
}

RecodeMap BuiltinSchemes::to_general(std::string_view id) const {
  if (id == kNalcms) return nalcms_to_general;
  if (id == kCorine) return corine_to_general;
  if (id == kGeneral) return RecodeMap::identity(general);
  throw Error(Errc::invalid_argument, "unknown scheme '" + std::string(id) + "'");
}

const BuiltinSchemes& builtin_schemes() {
  static const BuiltinSchemes schemes = build();
  return schemes;
}

nlohmann::json scheme_manifest(const LabelScheme& scheme, const RecodeMap* map) {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : scheme.entries()) {
    entries.push_back({{"code", e.code},
                       {"name", e.name},
                       {"color", {e.color.r, e.color.g, e.color.b}},
                       {"in_table", e.in_table}});
  }
  nlohmann::json doc = {{"scheme_id", scheme.id()}, {"entries", entries}};
  if (map) {
    nlohmann::json recode = nlohmann::json::array();
    for (const auto& [from, to] : map->mapping) recode.push_back({{"from", from}, {"to", to}});
    doc["recode_to"] = map->to_scheme;
    doc["recode"] = recode;
  }
  return doc;
}

nlohmann::json builtin_manifest() {
  const auto& s = builtin_schemes();
  nlohmann::json conflicts = nlohmann::json::array();
  for (const auto& c : s.conflicts) conflicts.push_back({{"scheme_id", c.scheme_id}, {"name", c.name}, {"detail", c.detail}});
  return {{"schemes",
           {scheme_manifest(s.nalcms, &s.nalcms_to_general), scheme_manifest(s.corine, &s.corine_to_general),
            scheme_manifest(s.general)}},
          {"conflicts", conflicts}};
}

std::uint8_t class_index(std::uint8_t code) noexcept {
  return code == kLabelNodata ? kLabelNodata : static_cast<std::uint8_t>(code - 1);
}

std::uint8_t general_code(std::uint8_t index) noexcept {
  return index == kLabelNodata ? kLabelNodata : static_cast<std::uint8_t>(index + 1);
}

}  // namespace crossda::labels
