#include "kgverify/prompt_template.hpp"

#include <algorithm>

#include "builtin_prompts.hpp"
#include "kgverify/error.hpp"
#include "text_util.hpp"

namespace kgv {

namespace {

bool is_ident_char(char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_'; }

bool known_placeholder(std::string_view name) {
  return std::find(kPlaceholders.begin(), kPlaceholders.end(), name) != kPlaceholders.end();
}

}  // namespace

PromptTemplate PromptTemplate::parse(std::string name, std::string text) {
  PromptTemplate t;
  t.name_ = std::move(name);
  t.text_ = std::move(text);
  std::string literal;
  const std::string& s = t.text_;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const char c = s[i];
    if ((c == '{' || c == '}') && i + 1 < s.size() && s[i + 1] == c) {
      literal.push_back(c);
      ++i;
      continue;
    }
    if (c == '{') {
      std::size_t j = i + 1;
      while (j < s.size() && is_ident_char(s[j])) ++j;
      if (j > i + 1 && j < s.size() && s[j] == '}') {
        std::string ph = s.substr(i + 1, j - i - 1);
        if (!known_placeholder(ph)) {
          throw TemplateError(t.name_ + ": unknown placeholder {" + ph + "}");
        }
        if (!t.used_.insert(ph).second) {
          throw TemplateError(t.name_ + ": placeholder {" + ph + "} occurs more than once");
        }
        if (!literal.empty()) t.segments_.push_back({false, std::move(literal)});
        literal.clear();
        t.segments_.push_back({true, std::move(ph)});
        i = j;
        continue;
      }
    }
    literal.push_back(c);
  }
  if (!literal.empty()) t.segments_.push_back({false, std::move(literal)});
  return t;
}

PromptTemplate PromptTemplate::load(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_file(path.string());
  } catch (const Error&) {
    throw TemplateError("cannot read template " + path.string());
  }
  return parse(path.filename().string(), std::move(text));
}

std::string PromptTemplate::render(const std::map<std::string, std::string>& values) const {
  std::string out;
  for (const auto& seg : segments_) {
    if (!seg.placeholder) {
      out += seg.text;
      continue;
    }
    auto it = values.find(seg.text);
    if (it == values.end()) throw TemplateError(name_ + ": unresolved placeholder {" + seg.text + "}");
    out += it->second;
  }
  return out;
}

std::string PromptTemplate::hash() const { return sha256_hex(text_); }

DatasetProfile parse_profile(std::string_view name) {
  if (name == "genia") return DatasetProfile::genia;
  if (name == "bc5cdr") return DatasetProfile::bc5cdr;
  if (name == "custom") return DatasetProfile::custom;
  throw ConfigError("unknown dataset profile '" + std::string(name) + "'");
}

std::string_view to_string(DatasetProfile profile) {
  switch (profile) {
    case DatasetProfile::genia: return "genia";
    case DatasetProfile::bc5cdr: return "bc5cdr";
    case DatasetProfile::custom: return "custom";
  }
  return "custom";
}

std::optional<PromptTemplate> builtin_prompt(DatasetProfile profile, PromptKind kind) {
  if (profile == DatasetProfile::custom) return std::nullopt;
  const bool genia = profile == DatasetProfile::genia;
  switch (kind) {
    case PromptKind::type:
      return genia ? PromptTemplate::parse("genia_type.txt", std::string(prompts::kGeniaType))
                   : PromptTemplate::parse("bc5cdr_type.txt", std::string(prompts::kBc5cdrType));
    case PromptKind::context:
      return genia ? PromptTemplate::parse("genia_context.txt", std::string(prompts::kGeniaContext))
                   : PromptTemplate::parse("bc5cdr_context.txt", std::string(prompts::kBc5cdrContext));
    case PromptKind::revision:
      return genia ? PromptTemplate::parse("genia_revision.txt", std::string(prompts::kGeniaRevision))
                   : PromptTemplate::parse("bc5cdr_revision.txt", std::string(prompts::kBc5cdrRevision));
  }
  return std::nullopt;
}

TypeSet profile_types(DatasetProfile profile) {
  switch (profile) {
    case DatasetProfile::genia: return TypeSet::genia();
    case DatasetProfile::bc5cdr: return TypeSet::bc5cdr();
    case DatasetProfile::custom: break;
  }
  throw ConfigError("the custom profile needs an explicit label list");
}

}  // namespace kgv
