#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "kgverify/corpus.hpp"

namespace kgv {

enum class Normalization { lower_ws, exact };

/// lower_ws: Unicode lowercase, whitespace runs collapsed to one space,
/// trimmed. exact: identity.
std::string normalize(std::string_view text, Normalization mode);

Normalization parse_normalization(std::string_view name);
std::string_view to_string(Normalization mode);

struct KnowledgeEntry {
  std::string term;
  std::vector<std::string> definitions;
  std::vector<std::string> semantic_types;

  friend bool operator==(const KnowledgeEntry&, const KnowledgeEntry&) = default;
};

/// Dictionary-style knowledge base keyed by normalized term.
class KbIndex {
 public:
  explicit KbIndex(Normalization mode = Normalization::lower_ws) : mode_(mode) {}

  /// Adds an entry, merging with an existing one under the same key by
  /// order-preserving, deduplicated union of both lists.
  void insert(KnowledgeEntry entry);

  /// nullptr when the normalized text is not a key.
  const KnowledgeEntry* lookup(std::string_view span_text) const;
  bool contains(std::string_view span_text) const { return lookup(span_text) != nullptr; }

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  Normalization normalization() const { return mode_; }
  const std::map<std::string, KnowledgeEntry>& entries() const { return entries_; }

  /// Fraction of entity surfaces found in the index (0 for an empty list).
  double coverage(const std::vector<Entity>& entities) const;

 private:
  Normalization mode_;
  std::map<std::string, KnowledgeEntry> entries_;
};

/// JSON-lines, one {"term","definitions","semantic_types"} object per line.
KbIndex parse_kb(std::istream& in, Normalization mode, const std::string& source_name = "<kb>");
KbIndex load_kb(const std::filesystem::path& path, Normalization mode = Normalization::lower_ws);
void write_kb(std::ostream& out, const KbIndex& kb);

/// Label -> semantic types attached to entries created by augmentation.
using DefaultSemanticTypes = std::map<std::string, std::vector<std::string>>;

/// Returns a copy of `kb` with a definition-less entry for every entity
/// surface not already present. Existing entries are never touched.
KbIndex augment_kb(const KbIndex& kb, const std::vector<Entity>& entities,
                   const DefaultSemanticTypes& default_types = {});

}  // namespace kgv
