#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "kgverify/corpus.hpp"
#include "kgverify/kb.hpp"
#include "kgverify/llm_backend.hpp"
#include "kgverify/prompt_template.hpp"

namespace kgv {

enum class MapResolver { majority, manual_file };

MapResolver parse_map_resolver(std::string_view name);

/// Semantic type -> task label, with the (semantic type, label) counts seen
/// while building it.
struct SemanticTypeMap {
  std::map<std::string, std::string> mapping;
  std::map<std::string, std::map<std::string, std::size_t>> provenance;

  nlohmann::json to_json() const;
  /// Deterministic serialization (sorted keys, fixed indentation).
  std::string serialize() const;
};

/// Counts each gold entity's KB semantic types toward its label and keeps
/// the majority label per semantic type. Ties go to the label with more
/// total support, then the lexicographically smaller label.
SemanticTypeMap build_semantic_map(const std::vector<Entity>& train_gold, const KbIndex& kb);

/// Reads {"semantic_type": "label", ...}; throws ConfigError on labels not in
/// `types`, FormatError on malformed JSON.
SemanticTypeMap load_semantic_map(const std::filesystem::path& path, const TypeSet& types);
SemanticTypeMap parse_semantic_map(const nlohmann::json& j, const TypeSet& types,
                                   const std::string& source_name = "<map>");

/// Retypes each prediction with the label of its first mapped semantic
/// type (KB order); drops it when the surface is absent or nothing maps.
std::vector<Entity> apply_manual_mapping(const std::vector<Entity>& predicted, const KbIndex& kb,
                                         const SemanticTypeMap& map);

struct TagPair {
  std::string open;
  std::string close;
};

/// Label -> markup tags, e.g. protein -> (<P>, </P>).
struct TagScheme {
  std::map<std::string, TagPair> tag_for;

  /// Throws ConfigError when an open or close token is reused.
  void validate() const;
  bool covers(const TypeSet& types) const;

  static TagScheme genia();
  static TagScheme bc5cdr();
  /// <L1>, <L2>, ... over the labels in order.
  static TagScheme numbered(const TypeSet& types);
};

TagScheme profile_tag_scheme(DatasetProfile profile, const TypeSet& types);

/// Document tokens with the entities wrapped in tags, single-space joined.
/// Nested entities are wrapped outermost first.
std::string render_tagged_text(const Document& doc, const std::vector<Entity>& entities,
                               const TagScheme& scheme);

struct TaggedParse {
  std::vector<Entity> entities;
  std::vector<std::string> warnings;
  /// The tag-stripped text matched the reference tokens.
  bool aligned = false;
};

/// Extracts well-nested tags and aligns the stripped text to
/// `reference_tokens` character by character (whitespace ignored).
/// Unclosed, stray, or crossing tags are skipped with a warning.
TaggedParse parse_tagged_text(std::string_view text, const TagScheme& scheme, const Document& reference);

struct RevisionResult {
  std::vector<Entity> entities;
  std::vector<std::string> warnings;
  bool fell_back = false;
};

/// LLM-revision baseline for one document. `cot` appends a zero-shot
/// chain-of-thought cue. Unalignable output keeps the original predictions.
RevisionResult llm_revision(const Document& doc, const std::vector<Entity>& predicted,
                            const TagScheme& scheme, ChatBackend& backend, const PromptTemplate& tpl,
                            const std::string& model, bool cot);

}  // namespace kgv
