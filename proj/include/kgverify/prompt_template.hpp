#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "kgverify/corpus.hpp"

namespace kgv {

/// Placeholder names a template may reference as {name}. `{{` and `}}`
/// produce literal braces.
inline constexpr std::array<std::string_view, 6> kPlaceholders = {
    "entity", "context", "definition", "semantic_types", "labels", "candidates_block"};

class PromptTemplate {
 public:
  /// Throws TemplateError for unknown or repeated placeholders.
  static PromptTemplate parse(std::string name, std::string text);
  static PromptTemplate load(const std::filesystem::path& path);

  const std::string& name() const { return name_; }
  const std::string& text() const { return text_; }
  const std::set<std::string>& placeholders() const { return used_; }
  bool uses(std::string_view placeholder) const { return used_.count(std::string(placeholder)) > 0; }

  /// Fills every placeholder; throws TemplateError if one has no value.
  std::string render(const std::map<std::string, std::string>& values) const;

  /// SHA-256 of the template text.
  std::string hash() const;

 private:
  struct Segment {
    bool placeholder = false;
    std::string text;
  };

  std::string name_;
  std::string text_;
  std::vector<Segment> segments_;
  std::set<std::string> used_;
};

enum class DatasetProfile { genia, bc5cdr, custom };

DatasetProfile parse_profile(std::string_view name);
std::string_view to_string(DatasetProfile profile);

enum class PromptKind { type, context, revision };

/// Built-in template for a dataset profile; nullopt for custom.
std::optional<PromptTemplate> builtin_prompt(DatasetProfile profile, PromptKind kind);

/// Label set of a built-in profile. Throws ConfigError for custom.
TypeSet profile_types(DatasetProfile profile);

}  // namespace kgv
