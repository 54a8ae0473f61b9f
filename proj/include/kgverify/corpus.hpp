#pragma once

#include <compare>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace kgv {

/// Inclusive token range [beg, end] inside one document.
struct TokenSpan {
  int beg = 0;
  int end = 0;

  int length() const { return end - beg + 1; }
  bool contains(int token) const { return beg <= token && token <= end; }

  auto operator<=>(const TokenSpan&) const = default;
};

/// Number of token indices shared by two spans (0 when disjoint).
int overlap_tokens(TokenSpan a, TokenSpan b);

inline bool overlaps(TokenSpan a, TokenSpan b) { return overlap_tokens(a, b) > 0; }

enum class AnnotationSource { gold, prediction, both };

struct Document {
  std::string doc_id;
  std::vector<std::string> tokens;
  AnnotationSource source = AnnotationSource::both;

  int size() const { return static_cast<int>(tokens.size()); }
  bool in_bounds(TokenSpan s) const { return 0 <= s.beg && s.beg <= s.end && s.end < size(); }

  /// Tokens joined by a single space.
  std::string text() const;
  std::string surface(TokenSpan s) const;

  friend bool operator==(const Document& a, const Document& b) {
    return a.doc_id == b.doc_id && a.tokens == b.tokens;
  }
};

/// The predefined label set plus the reserved "no type" sentinel.
class TypeSet {
 public:
  TypeSet() = default;
  /// Throws ConfigError when labels are empty, duplicated, or collide with
  /// the sentinel (case-insensitively).
  explicit TypeSet(std::vector<std::string> labels, std::string none_label = "None");

  static TypeSet genia();
  static TypeSet bc5cdr();

  const std::vector<std::string>& labels() const { return labels_; }
  const std::string& none_label() const { return none_label_; }

  bool contains(std::string_view label) const;
  bool is_none(std::string_view label) const;

  /// Case-insensitive match against labels and the sentinel; returns the
  /// canonical spelling. Underscores, hyphens and spaces are interchangeable.
  std::optional<std::string> canonical(std::string_view text) const;

 private:
  std::vector<std::string> labels_;
  std::string none_label_ = "None";
};

struct Entity {
  std::string doc_id;
  TokenSpan span;
  std::string etype;
  std::string surface;

  friend bool operator==(const Entity&, const Entity&) = default;
};

/// Canonical output order: (doc_id, beg, end, etype).
bool canonical_less(const Entity& a, const Entity& b);
bool same_annotation(const Entity& a, const Entity& b);
void sort_canonical(std::vector<Entity>& entities);

struct Corpus {
  std::map<std::string, Document> documents;
  std::vector<Entity> gold;
  std::vector<Entity> predicted;
  /// Non-fatal issues found while loading (repaired orphan I- tags, ...).
  std::vector<std::string> warnings;

  /// Throws IntegrityError for an unknown doc_id.
  const Document& document(const std::string& doc_id) const;

  void add_document(Document doc);

  /// Builds an entity with its surface filled in; throws IntegrityError when
  /// the document is unknown or the span is out of bounds.
  Entity make_entity(const std::string& doc_id, TokenSpan span, std::string etype) const;

  /// Checks every entity against the bounds invariant.
  void validate() const;

  /// Documents and entity multisets equal; entity order and warnings ignored.
  friend bool operator==(const Corpus& a, const Corpus& b);
};

enum class ConllProfile { bio };

/// Which annotation list the tag column(s) feed. `both` expects two tag
/// columns: TOKEN<TAB>GOLD<TAB>PRED.
enum class TagRole { gold, prediction, both };

Corpus parse_conll(std::istream& in, TagRole role, const std::string& source_name = "<conll>",
                   ConllProfile profile = ConllProfile::bio);
Corpus load_conll(const std::filesystem::path& path, TagRole role,
                  ConllProfile profile = ConllProfile::bio);

/// Writes BIO. Documents with overlapping entities are split into several
/// instances (`<doc_id>#2`, `#3`, ...) so that each instance is flat.
void write_conll(std::ostream& out, const Corpus& corpus, TagRole role);

Corpus corpus_from_json(const nlohmann::json& j, const std::string& source_name = "<json>");
nlohmann::json corpus_to_json(const Corpus& corpus);
Corpus load_json(const std::filesystem::path& path);
void save_json(const std::filesystem::path& path, const Corpus& corpus);

/// Loads JSON when the extension is .json, CoNLL otherwise.
Corpus load_corpus(const std::filesystem::path& path, TagRole conll_role);

/// Combines a gold-bearing and a prediction-bearing corpus over identical
/// documents. Throws IntegrityError when the documents disagree.
Corpus merge_annotations(const Corpus& gold_side, const Corpus& prediction_side);

/// Per-entity input context: the entity's whole document text.
std::string entity_context(const Corpus& corpus, const Entity& entity);

nlohmann::json entity_to_json(const Entity& e);

}  // namespace kgv
