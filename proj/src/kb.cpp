#include "kgverify/kb.hpp"

#include <algorithm>
#include <fstream>

#include <nlohmann/json.hpp>

#include "kgverify/error.hpp"
#include "text_util.hpp"

namespace kgv {

using nlohmann::json;

std::string normalize(std::string_view text, Normalization mode) {
  if (mode == Normalization::exact) return std::string(text);
  return collapse_whitespace(utf8_lowercase(text));
}

Normalization parse_normalization(std::string_view name) {
  if (name == "lower_ws") return Normalization::lower_ws;
  if (name == "exact") return Normalization::exact;
  throw ConfigError("unknown KB normalization '" + std::string(name) + "'");
}

std::string_view to_string(Normalization mode) {
  return mode == Normalization::exact ? "exact" : "lower_ws";
}

namespace {

void union_into(std::vector<std::string>& into, const std::vector<std::string>& from) {
  for (const auto& s : from) {
    if (std::find(into.begin(), into.end(), s) == into.end()) into.push_back(s);
  }
}

}  // namespace

void KbIndex::insert(KnowledgeEntry entry) {
  std::string key = normalize(entry.term, mode_);
  auto it = entries_.find(key);
  if (it == entries_.end()) {
    KnowledgeEntry clean{std::move(entry.term), {}, {}};
    union_into(clean.definitions, entry.definitions);
    union_into(clean.semantic_types, entry.semantic_types);
    entries_.emplace(std::move(key), std::move(clean));
    return;
  }
  union_into(it->second.definitions, entry.definitions);
  union_into(it->second.semantic_types, entry.semantic_types);
}

const KnowledgeEntry* KbIndex::lookup(std::string_view span_text) const {
  auto it = entries_.find(normalize(span_text, mode_));
  return it == entries_.end() ? nullptr : &it->second;
}

double KbIndex::coverage(const std::vector<Entity>& entities) const {
  if (entities.empty()) return 0.0;
  const auto hits = std::count_if(entities.begin(), entities.end(),
                                  [&](const Entity& e) { return contains(e.surface); });
  return static_cast<double>(hits) / static_cast<double>(entities.size());
}

namespace {

std::vector<std::string> string_list(const json& obj, const char* key, const std::string& source,
                                     const std::string& where) {
  std::vector<std::string> out;
  if (!obj.contains(key)) return out;
  const json& arr = obj.at(key);
  if (!arr.is_array()) throw FormatError(source, where, std::string("'") + key + "' must be an array");
  for (const auto& v : arr) {
    if (!v.is_string() || v.get_ref<const std::string&>().empty()) {
      throw FormatError(source, where, std::string("'") + key + "' must hold non-empty strings");
    }
    out.push_back(v.get<std::string>());
  }
  return out;
}

}  // namespace

KbIndex parse_kb(std::istream& in, Normalization mode, const std::string& source) {
  KbIndex kb(mode);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const std::string where = "line " + std::to_string(lineno);
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error&) {
      throw FormatError(source, where, "invalid JSON");
    }
    if (!j.is_object() || !j.contains("term") || !j["term"].is_string()) {
      throw FormatError(source, where, "expected an object with a string 'term'");
    }
    KnowledgeEntry e;
    e.term = j["term"].get<std::string>();
    if (trim(e.term).empty()) throw FormatError(source, where, "empty term");
    e.definitions = string_list(j, "definitions", source, where);
    e.semantic_types = string_list(j, "semantic_types", source, where);
    kb.insert(std::move(e));
  }
  return kb;
}

KbIndex load_kb(const std::filesystem::path& path, Normalization mode) {
  std::ifstream in(path);
  if (!in) throw FormatError(path.string(), "open", "cannot read file");
  return parse_kb(in, mode, path.string());
}

void write_kb(std::ostream& out, const KbIndex& kb) {
  for (const auto& [key, e] : kb.entries()) {
    out << json{{"term", e.term}, {"definitions", e.definitions}, {"semantic_types", e.semantic_types}}
               .dump()
        << '\n';
  }
}

KbIndex augment_kb(const KbIndex& kb, const std::vector<Entity>& entities,
                   const DefaultSemanticTypes& default_types) {
  KbIndex out = kb;
  for (const auto& e : entities) {
    if (e.surface.empty() || out.contains(e.surface)) continue;
    KnowledgeEntry entry{e.surface, {}, {}};
    if (auto it = default_types.find(e.etype); it != default_types.end()) {
      entry.semantic_types = it->second;
    }
    out.insert(std::move(entry));
  }
  return out;
}

}  // namespace kgv
