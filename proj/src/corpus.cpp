#include "kgverify/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <tuple>

#include <nlohmann/json.hpp>

#include "kgverify/error.hpp"
#include "text_util.hpp"

namespace kgv {

using nlohmann::json;

int overlap_tokens(TokenSpan a, TokenSpan b) {
  const int lo = std::max(a.beg, b.beg);
  const int hi = std::min(a.end, b.end);
  return hi >= lo ? hi - lo + 1 : 0;
}

std::string Document::text() const { return join_tokens(tokens, 0, size() - 1); }

std::string Document::surface(TokenSpan s) const {
  if (!in_bounds(s)) {
    throw IntegrityError("span [" + std::to_string(s.beg) + "," + std::to_string(s.end) +
                         "] out of bounds for document '" + doc_id + "'");
  }
  return join_tokens(tokens, s.beg, s.end);
}

// ---------------------------------------------------------------------------
// TypeSet

namespace {

std::string label_key(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    if (c == '\\') continue;  // LaTeX-style "cell\_type"
    if (c == '-' || c == ' ') c = '_';
    out.push_back(ascii_lower(c));
  }
  return out;
}

}  // namespace

TypeSet::TypeSet(std::vector<std::string> labels, std::string none_label)
    : labels_(std::move(labels)), none_label_(std::move(none_label)) {
  if (labels_.empty()) throw ConfigError("type set must contain at least one label");
  if (none_label_.empty()) throw ConfigError("none label must be non-empty");
  std::vector<std::string> keys;
  for (const auto& l : labels_) {
    if (l.empty()) throw ConfigError("type set contains an empty label");
    keys.push_back(label_key(l));
  }
  keys.push_back(label_key(none_label_));
  std::vector<std::string> sorted = keys;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw ConfigError("type set labels must be unique and distinct from '" + none_label_ + "'");
  }
}

TypeSet TypeSet::genia() { return TypeSet({"protein", "DNA", "RNA", "cell_line", "cell_type"}); }

TypeSet TypeSet::bc5cdr() { return TypeSet({"Chemical", "Disease"}); }

bool TypeSet::contains(std::string_view label) const {
  return std::find(labels_.begin(), labels_.end(), label) != labels_.end();
}

bool TypeSet::is_none(std::string_view label) const { return label_key(label) == label_key(none_label_); }

std::optional<std::string> TypeSet::canonical(std::string_view text) const {
  const std::string key = label_key(trim(text));
  if (key.empty()) return std::nullopt;
  for (const auto& l : labels_) {
    if (label_key(l) == key) return l;
  }
  if (label_key(none_label_) == key) return none_label_;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Entity / Corpus

bool canonical_less(const Entity& a, const Entity& b) {
  return std::tie(a.doc_id, a.span.beg, a.span.end, a.etype) <
         std::tie(b.doc_id, b.span.beg, b.span.end, b.etype);
}

bool same_annotation(const Entity& a, const Entity& b) {
  return a.doc_id == b.doc_id && a.span == b.span && a.etype == b.etype;
}

void sort_canonical(std::vector<Entity>& entities) {
  std::stable_sort(entities.begin(), entities.end(), canonical_less);
}

const Document& Corpus::document(const std::string& doc_id) const {
  auto it = documents.find(doc_id);
  if (it == documents.end()) throw IntegrityError("unknown document '" + doc_id + "'");
  return it->second;
}

void Corpus::add_document(Document doc) {
  if (doc.tokens.empty()) throw IntegrityError("document '" + doc.doc_id + "' has no tokens");
  for (const auto& t : doc.tokens) {
    if (t.empty()) throw IntegrityError("document '" + doc.doc_id + "' has an empty token");
  }
  auto id = doc.doc_id;
  if (!documents.emplace(id, std::move(doc)).second) {
    throw IntegrityError("duplicate document id '" + id + "'");
  }
}

Entity Corpus::make_entity(const std::string& doc_id, TokenSpan span, std::string etype) const {
  const Document& doc = document(doc_id);
  return Entity{doc_id, span, std::move(etype), doc.surface(span)};
}

void Corpus::validate() const {
  for (const auto* list : {&gold, &predicted}) {
    for (const auto& e : *list) {
      const Document& doc = document(e.doc_id);
      if (!doc.in_bounds(e.span)) {
        throw IntegrityError("entity [" + std::to_string(e.span.beg) + "," +
                             std::to_string(e.span.end) + "] out of bounds in '" + e.doc_id + "'");
      }
    }
  }
}

bool operator==(const Corpus& a, const Corpus& b) {
  if (a.documents != b.documents) return false;
  auto sorted = [](std::vector<Entity> v) {
    sort_canonical(v);
    return v;
  };
  return sorted(a.gold) == sorted(b.gold) && sorted(a.predicted) == sorted(b.predicted);
}

std::string entity_context(const Corpus& corpus, const Entity& entity) {
  return corpus.document(entity.doc_id).text();
}

// ---------------------------------------------------------------------------
// CoNLL-BIO

namespace {

struct BioState {
  std::string open_type;
  int open_beg = -1;
};

void close_run(BioState& st, int end, const std::string& doc_id, std::vector<Entity>& out) {
  if (st.open_beg >= 0) out.push_back(Entity{doc_id, {st.open_beg, end}, st.open_type, {}});
  st.open_beg = -1;
  st.open_type.clear();
}

std::string make_doc_id(std::size_t index) {
  std::string n = std::to_string(index);
  return "doc" + std::string(n.size() < 6 ? 6 - n.size() : 0, '0') + n;
}

class ConllReader {
 public:
  ConllReader(TagRole role, std::string source) : role_(role), source_(std::move(source)) {}

  void line(std::string_view raw, std::size_t lineno) {
    std::string_view l = raw;
    if (!l.empty() && l.back() == '\r') l.remove_suffix(1);
    if (trim(l).empty()) {
      flush();
      return;
    }
    if (l.front() == '#' && l.find('\t') == std::string_view::npos) {
      constexpr std::string_view kDocId = "# doc_id = ";
      if (l.substr(0, kDocId.size()) == kDocId) {
        flush();
        pending_id_ = std::string(trim(l.substr(kDocId.size())));
      }
      return;
    }
    auto cols = split(l, '\t');
    if (cols.size() == 1 && cols[0] == "-DOCSTART-") return;
    if (!cols.empty() && cols[0].substr(0, 10) == "-DOCSTART-") {
      flush();
      return;
    }
    const std::size_t need = role_ == TagRole::both ? 3 : 2;
    if (cols.size() < need) {
      throw FormatError(source_, "line " + std::to_string(lineno),
                        "expected " + std::to_string(need) + " tab-separated columns");
    }
    if (cols[0].empty()) throw FormatError(source_, "line " + std::to_string(lineno), "empty token");
    tokens_.emplace_back(cols[0]);
    tags_[0].push_back({std::string(cols[1]), lineno});
    if (role_ == TagRole::both) tags_[1].push_back({std::string(cols[2]), lineno});
  }

  Corpus finish() {
    flush();
    return std::move(corpus_);
  }

 private:
  struct Tag {
    std::string text;
    std::size_t lineno;
  };

  void decode(const std::vector<Tag>& tags, const std::string& doc_id, std::vector<Entity>& out) {
    BioState st;
    for (int i = 0; i < static_cast<int>(tags.size()); ++i) {
      const auto& t = tags[i];
      if (t.text == "O") {
        close_run(st, i - 1, doc_id, out);
        continue;
      }
      if (t.text.size() < 3 || t.text[1] != '-' || (t.text[0] != 'B' && t.text[0] != 'I')) {
        throw FormatError(source_, "line " + std::to_string(t.lineno),
                          "malformed tag '" + t.text + "' (expected O, B-X or I-X)");
      }
      const std::string type = t.text.substr(2);
      if (t.text[0] == 'I' && st.open_beg >= 0 && st.open_type == type) continue;
      if (t.text[0] == 'I') {
        corpus_.warnings.push_back(source_ + ": line " + std::to_string(t.lineno) +
                                   ": orphan '" + t.text + "' repaired as B-" + type);
      }
      close_run(st, i - 1, doc_id, out);
      st.open_beg = i;
      st.open_type = type;
    }
    close_run(st, static_cast<int>(tags.size()) - 1, doc_id, out);
  }

  void flush() {
    if (tokens_.empty()) return;
    Document doc;
    doc.doc_id = pending_id_.empty() ? make_doc_id(count_) : pending_id_;
    doc.tokens = std::move(tokens_);
    doc.source = role_ == TagRole::gold         ? AnnotationSource::gold
                 : role_ == TagRole::prediction ? AnnotationSource::prediction
                                                : AnnotationSource::both;
    std::vector<Entity> first, second;
    decode(tags_[0], doc.doc_id, first);
    if (role_ == TagRole::both) decode(tags_[1], doc.doc_id, second);
    for (auto& e : first) e.surface = doc.surface(e.span);
    for (auto& e : second) e.surface = doc.surface(e.span);
    auto& primary = role_ == TagRole::prediction ? corpus_.predicted : corpus_.gold;
    primary.insert(primary.end(), first.begin(), first.end());
    corpus_.predicted.insert(corpus_.predicted.end(), second.begin(), second.end());
    corpus_.add_document(std::move(doc));
    ++count_;
    tokens_.clear();
    tags_[0].clear();
    tags_[1].clear();
    pending_id_.clear();
  }

  TagRole role_;
  std::string source_;
  Corpus corpus_;
  std::vector<std::string> tokens_;
  std::vector<Tag> tags_[2];
  std::string pending_id_;
  std::size_t count_ = 0;
};

// Splits a list of entities of one document into layers of pairwise
// non-overlapping entities, first-fit in canonical order.
std::vector<std::vector<Entity>> flatten_layers(std::vector<Entity> ents) {
  sort_canonical(ents);
  std::vector<std::vector<Entity>> layers;
  for (auto& e : ents) {
    bool placed = false;
    for (auto& layer : layers) {
      bool clash = std::any_of(layer.begin(), layer.end(),
                               [&](const Entity& o) { return overlaps(o.span, e.span); });
      if (!clash) {
        layer.push_back(e);
        placed = true;
        break;
      }
    }
    if (!placed) layers.push_back({e});
  }
  return layers;
}

std::vector<std::string> bio_tags(int n, const std::vector<Entity>& layer) {
  std::vector<std::string> tags(n, "O");
  for (const auto& e : layer) {
    tags[e.span.beg] = "B-" + e.etype;
    for (int i = e.span.beg + 1; i <= e.span.end; ++i) tags[i] = "I-" + e.etype;
  }
  return tags;
}

}  // namespace

Corpus parse_conll(std::istream& in, TagRole role, const std::string& source_name, ConllProfile) {
  ConllReader reader(role, source_name);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) reader.line(line, ++lineno);
  return reader.finish();
}

Corpus load_conll(const std::filesystem::path& path, TagRole role, ConllProfile profile) {
  std::ifstream in(path);
  if (!in) throw FormatError(path.string(), "open", "cannot read file");
  return parse_conll(in, role, path.string(), profile);
}

void write_conll(std::ostream& out, const Corpus& corpus, TagRole role) {
  std::map<std::string, std::vector<Entity>> gold_by_doc, pred_by_doc;
  for (const auto& e : corpus.gold) gold_by_doc[e.doc_id].push_back(e);
  for (const auto& e : corpus.predicted) pred_by_doc[e.doc_id].push_back(e);

  bool first_doc = true;
  for (const auto& [id, doc] : corpus.documents) {
    std::vector<std::vector<Entity>> cols;
    if (role != TagRole::prediction) cols.push_back(gold_by_doc[id]);
    if (role != TagRole::gold) cols.push_back(pred_by_doc[id]);
    std::vector<std::vector<std::vector<Entity>>> layered;
    std::size_t instances = 1;
    for (auto& c : cols) {
      layered.push_back(flatten_layers(c));
      instances = std::max(instances, layered.back().size());
    }
    for (std::size_t inst = 0; inst < instances; ++inst) {
      if (!first_doc) out << '\n';
      first_doc = false;
      out << "# doc_id = " << id;
      if (inst > 0) out << '#' << inst + 1;
      out << '\n';
      std::vector<std::vector<std::string>> tags;
      for (const auto& layers : layered) {
        tags.push_back(bio_tags(doc.size(), inst < layers.size() ? layers[inst] : std::vector<Entity>{}));
      }
      for (int i = 0; i < doc.size(); ++i) {
        out << doc.tokens[i];
        for (const auto& t : tags) out << '\t' << t[i];
        out << '\n';
      }
    }
  }
}

// ---------------------------------------------------------------------------
// JSON

namespace {

const json& require(const json& obj, const std::string& key, const std::string& ptr,
                    const std::string& source) {
  if (!obj.is_object() || !obj.contains(key)) {
    throw FormatError(source, ptr + "/" + key, "missing required field");
  }
  return obj.at(key);
}

std::string require_string(const json& obj, const std::string& key, const std::string& ptr,
                           const std::string& source) {
  const json& v = require(obj, key, ptr, source);
  if (!v.is_string()) throw FormatError(source, ptr + "/" + key, "expected string");
  return v.get<std::string>();
}

int require_int(const json& obj, const std::string& key, const std::string& ptr,
                const std::string& source) {
  const json& v = require(obj, key, ptr, source);
  if (!v.is_number_integer()) throw FormatError(source, ptr + "/" + key, "expected integer");
  return v.get<int>();
}

void read_entities(const json& j, const std::string& key, const std::string& source,
                   const Corpus& corpus, std::vector<Entity>& out) {
  if (!j.contains(key)) return;
  const json& arr = j.at(key);
  if (!arr.is_array()) throw FormatError(source, "/" + key, "expected array");
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const std::string ptr = "/" + key + "/" + std::to_string(i);
    const json& e = arr[i];
    if (!e.is_object()) throw FormatError(source, ptr, "expected object");
    const std::string doc_id = require_string(e, "doc_id", ptr, source);
    const TokenSpan span{require_int(e, "beg", ptr, source), require_int(e, "end", ptr, source)};
    const std::string type = require_string(e, "type", ptr, source);
    auto it = corpus.documents.find(doc_id);
    if (it == corpus.documents.end()) {
      throw FormatError(source, ptr + "/doc_id", "unknown document '" + doc_id + "'");
    }
    if (!it->second.in_bounds(span)) throw FormatError(source, ptr, "span out of bounds");
    if (type.empty()) throw FormatError(source, ptr + "/type", "empty type");
    out.push_back(Entity{doc_id, span, type, it->second.surface(span)});
  }
}

}  // namespace

Corpus corpus_from_json(const json& j, const std::string& source) {
  if (!j.is_object()) throw FormatError(source, "", "expected a JSON object");
  Corpus corpus;
  const json& docs = require(j, "documents", "", source);
  if (!docs.is_array()) throw FormatError(source, "/documents", "expected array");
  for (std::size_t i = 0; i < docs.size(); ++i) {
    const std::string ptr = "/documents/" + std::to_string(i);
    Document doc;
    doc.doc_id = require_string(docs[i], "doc_id", ptr, source);
    const json& toks = require(docs[i], "tokens", ptr, source);
    if (!toks.is_array() || toks.empty()) {
      throw FormatError(source, ptr + "/tokens", "expected non-empty array");
    }
    for (std::size_t t = 0; t < toks.size(); ++t) {
      if (!toks[t].is_string() || toks[t].get_ref<const std::string&>().empty()) {
        throw FormatError(source, ptr + "/tokens/" + std::to_string(t), "expected non-empty string");
      }
      doc.tokens.push_back(toks[t].get<std::string>());
    }
    if (corpus.documents.count(doc.doc_id)) {
      throw FormatError(source, ptr + "/doc_id", "duplicate document id '" + doc.doc_id + "'");
    }
    corpus.add_document(std::move(doc));
  }
  read_entities(j, "gold", source, corpus, corpus.gold);
  read_entities(j, "predicted", source, corpus, corpus.predicted);
  const bool has_gold = !corpus.gold.empty(), has_pred = !corpus.predicted.empty();
  for (auto& [id, doc] : corpus.documents) {
    doc.source = has_gold && !has_pred   ? AnnotationSource::gold
                 : has_pred && !has_gold ? AnnotationSource::prediction
                                         : AnnotationSource::both;
  }
  return corpus;
}

json entity_to_json(const Entity& e) {
  return json{{"doc_id", e.doc_id}, {"beg", e.span.beg}, {"end", e.span.end}, {"type", e.etype}};
}

json corpus_to_json(const Corpus& corpus) {
  json docs = json::array();
  for (const auto& [id, doc] : corpus.documents) {
    docs.push_back(json{{"doc_id", id}, {"tokens", doc.tokens}});
  }
  auto list = [](std::vector<Entity> v) {
    sort_canonical(v);
    json arr = json::array();
    for (const auto& e : v) arr.push_back(entity_to_json(e));
    return arr;
  };
  return json{{"documents", std::move(docs)}, {"gold", list(corpus.gold)},
              {"predicted", list(corpus.predicted)}};
}

Corpus load_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError(path.string(), "open", "cannot read file");
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw FormatError(path.string(), "byte " + std::to_string(e.byte), "invalid JSON");
  }
  return corpus_from_json(j, path.string());
}

void save_json(const std::filesystem::path& path, const Corpus& corpus) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << corpus_to_json(corpus).dump(1) << '\n';
}

Corpus load_corpus(const std::filesystem::path& path, TagRole conll_role) {
  if (path.extension() == ".json") return load_json(path);
  return load_conll(path, conll_role);
}

Corpus merge_annotations(const Corpus& gold_side, const Corpus& prediction_side) {
  if (gold_side.documents != prediction_side.documents) {
    throw IntegrityError("gold and prediction files do not contain the same documents");
  }
  Corpus out;
  out.documents = gold_side.documents;
  for (auto& [id, doc] : out.documents) doc.source = AnnotationSource::both;
  out.gold = gold_side.gold;
  out.predicted = prediction_side.predicted;
  out.warnings = gold_side.warnings;
  out.warnings.insert(out.warnings.end(), prediction_side.warnings.begin(),
                      prediction_side.warnings.end());
  return out;
}

}  // namespace kgv
