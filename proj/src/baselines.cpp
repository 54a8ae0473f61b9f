#include "kgverify/baselines.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <set>

#include <nlohmann/json.hpp>

#include "kgverify/error.hpp"
#include "text_util.hpp"

namespace kgv {

using json = nlohmann::json;

MapResolver parse_map_resolver(std::string_view name) {
  if (name == "majority") return MapResolver::majority;
  if (name == "manual_file") return MapResolver::manual_file;
  throw ConfigError("unknown map resolver '" + std::string(name) + "' (expected majority or manual_file)");
}

json SemanticTypeMap::to_json() const {
  json prov = json::object();
  for (const auto& [st, counts] : provenance) {
    json c = json::object();
    for (const auto& [label, n] : counts) c[label] = n;
    prov[st] = c;
  }
  return json{{"mapping", mapping}, {"provenance", prov}};
}

std::string SemanticTypeMap::serialize() const { return to_json().dump(2) + "\n"; }

SemanticTypeMap build_semantic_map(const std::vector<Entity>& train_gold, const KbIndex& kb) {
  SemanticTypeMap out;
  std::map<std::string, std::size_t> support;
  for (const auto& e : train_gold) {
    const KnowledgeEntry* entry = kb.lookup(e.surface);
    if (!entry) continue;
    for (const auto& st : entry->semantic_types) {
      ++out.provenance[st][e.etype];
      ++support[e.etype];
    }
  }
  for (const auto& [st, counts] : out.provenance) {
    const std::string* best = nullptr;
    std::size_t best_n = 0;
    for (const auto& [label, n] : counts) {
      // std::map order makes the lexicographic tie-break implicit.
      if (!best || n > best_n || (n == best_n && support[label] > support[*best])) {
        best = &label;
        best_n = n;
      }
    }
    out.mapping[st] = *best;
  }
  return out;
}

SemanticTypeMap parse_semantic_map(const json& j, const TypeSet& types, const std::string& source_name) {
  if (!j.is_object()) throw FormatError(source_name, "/", "semantic type map must be a JSON object");
  SemanticTypeMap out;
  for (const auto& [st, label] : j.items()) {
    if (!label.is_string()) throw FormatError(source_name, "/" + st, "label must be a string");
    auto canon = types.canonical(label.get<std::string>());
    if (!canon || types.is_none(*canon)) {
      throw ConfigError(source_name + ": semantic type '" + st + "' maps to unknown label '" +
                        label.get<std::string>() + "'");
    }
    out.mapping[st] = *canon;
  }
  return out;
}

SemanticTypeMap load_semantic_map(const std::filesystem::path& path, const TypeSet& types) {
  std::ifstream in(path);
  if (!in) throw FormatError(path.string(), "-", "cannot open file");
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw FormatError(path.string(), "byte " + std::to_string(e.byte), e.what());
  }
  return parse_semantic_map(j, types, path.string());
}

std::vector<Entity> apply_manual_mapping(const std::vector<Entity>& predicted, const KbIndex& kb,
                                         const SemanticTypeMap& map) {
  std::vector<Entity> out;
  for (const auto& p : predicted) {
    const KnowledgeEntry* entry = kb.lookup(p.surface);
    if (!entry) continue;
    for (const auto& st : entry->semantic_types) {
      auto it = map.mapping.find(st);
      if (it == map.mapping.end()) continue;
      Entity e = p;
      e.etype = it->second;
      out.push_back(std::move(e));
      break;
    }
  }
  return out;
}

void TagScheme::validate() const {
  std::set<std::string> seen;
  for (const auto& [label, tags] : tag_for) {
    if (tags.open.empty() || tags.close.empty()) throw ConfigError("empty tag for label '" + label + "'");
    if (!seen.insert(tags.open).second || !seen.insert(tags.close).second) {
      throw ConfigError("tag reused in scheme (label '" + label + "')");
    }
  }
}

bool TagScheme::covers(const TypeSet& types) const {
  return std::all_of(types.labels().begin(), types.labels().end(),
                     [&](const std::string& l) { return tag_for.count(l) > 0; });
}

namespace {

TagPair tags(const std::string& code) { return {"<" + code + ">", "</" + code + ">"}; }

}  // namespace

TagScheme TagScheme::genia() {
  return TagScheme{{{"protein", tags("P")},
                    {"DNA", tags("D")},
                    {"RNA", tags("R")},
                    {"cell_line", tags("CL")},
                    {"cell_type", tags("CT")}}};
}

TagScheme TagScheme::bc5cdr() { return TagScheme{{{"Chemical", tags("C")}, {"Disease", tags("D")}}}; }

TagScheme TagScheme::numbered(const TypeSet& types) {
  TagScheme s;
  for (std::size_t i = 0; i < types.labels().size(); ++i) s.tag_for[types.labels()[i]] = tags("L" + std::to_string(i + 1));
  return s;
}

TagScheme profile_tag_scheme(DatasetProfile profile, const TypeSet& types) {
  switch (profile) {
    case DatasetProfile::genia: return TagScheme::genia();
    case DatasetProfile::bc5cdr: return TagScheme::bc5cdr();
    case DatasetProfile::custom: return TagScheme::numbered(types);
  }
  return TagScheme::numbered(types);
}

std::string render_tagged_text(const Document& doc, const std::vector<Entity>& entities,
                               const TagScheme& scheme) {
  std::vector<std::size_t> order(entities.size());
  std::iota(order.begin(), order.end(), 0);
  std::string out;
  for (int i = 0; i < doc.size(); ++i) {
    if (i) out += ' ';
    std::vector<std::size_t> opens, closes;
    for (std::size_t k : order) {
      if (entities[k].span.beg == i) opens.push_back(k);
      if (entities[k].span.end == i) closes.push_back(k);
    }
    std::sort(opens.begin(), opens.end(), [&](std::size_t a, std::size_t b) {
      return std::make_pair(-entities[a].span.end, a) < std::make_pair(-entities[b].span.end, b);
    });
    std::sort(closes.begin(), closes.end(), [&](std::size_t a, std::size_t b) {
      return std::make_pair(-entities[a].span.beg, -static_cast<long>(a)) <
             std::make_pair(-entities[b].span.beg, -static_cast<long>(b));
    });
    for (std::size_t k : opens) {
      auto it = scheme.tag_for.find(entities[k].etype);
      if (it != scheme.tag_for.end()) out += it->second.open;
    }
    out += doc.tokens[i];
    for (std::size_t k : closes) {
      auto it = scheme.tag_for.find(entities[k].etype);
      if (it != scheme.tag_for.end()) out += it->second.close;
    }
  }
  return out;
}

namespace {

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

struct TagHit {
  std::string label;  // empty for the generic close "</>"
  bool open = false;
  std::size_t length = 0;
};

std::optional<TagHit> match_tag(std::string_view text, std::size_t pos, const TagScheme& scheme) {
  std::optional<TagHit> best;
  auto consider = [&](const std::string& tok, const std::string& label, bool open) {
    if (text.compare(pos, tok.size(), tok) == 0 && (!best || tok.size() > best->length)) {
      best = TagHit{label, open, tok.size()};
    }
  };
  for (const auto& [label, pair] : scheme.tag_for) {
    consider(pair.open, label, true);
    consider(pair.close, label, false);
  }
  consider("</>", "", false);
  return best;
}

}  // namespace

TaggedParse parse_tagged_text(std::string_view text, const TagScheme& scheme, const Document& reference) {
  TaggedParse res;

  // Reference characters (whitespace dropped) and token boundaries over them.
  std::string ref_chars;
  std::vector<int> char_token;
  for (int t = 0; t < reference.size(); ++t) {
    for (char c : reference.tokens[t]) {
      if (is_space(c)) continue;
      ref_chars.push_back(c);
      char_token.push_back(t);
    }
  }

  struct Open {
    std::string label;
    std::size_t at;
  };
  struct Closed {
    std::string label;
    std::size_t beg, end;  // [beg, end) in stripped characters
  };
  std::vector<Open> stack;
  std::vector<Closed> closed;
  std::string stripped;

  for (std::size_t i = 0; i < text.size();) {
    if (text[i] == '<') {
      if (auto hit = match_tag(text, i, scheme)) {
        if (hit->open) {
          stack.push_back({hit->label, stripped.size()});
        } else if (stack.empty()) {
          res.warnings.push_back("stray closing tag at offset " + std::to_string(i));
        } else if (hit->label.empty() || stack.back().label == hit->label) {
          closed.push_back({stack.back().label, stack.back().at, stripped.size()});
          stack.pop_back();
        } else {
          auto it = std::find_if(stack.rbegin(), stack.rend(), [&](const Open& o) { return o.label == hit->label; });
          if (it == stack.rend()) {
            res.warnings.push_back("stray closing tag for " + hit->label + " at offset " + std::to_string(i));
          } else {
            res.warnings.push_back("crossing tags for " + hit->label + " at offset " + std::to_string(i));
            stack.erase(std::next(it).base());
          }
        }
        i += hit->length;
        continue;
      }
    }
    if (!is_space(text[i])) stripped.push_back(text[i]);
    ++i;
  }
  for (const auto& o : stack) res.warnings.push_back("unclosed tag for " + o.label);

  if (stripped != ref_chars) {
    res.warnings.push_back("tag-stripped text does not match the document tokens");
    return res;
  }
  res.aligned = true;

  for (const auto& c : closed) {
    if (c.beg >= c.end) {
      res.warnings.push_back("empty tag for " + c.label);
      continue;
    }
    const int tb = char_token[c.beg];
    const int te = char_token[c.end - 1];
    const bool starts_token = c.beg == 0 || char_token[c.beg - 1] != tb;
    const bool ends_token = c.end == char_token.size() || char_token[c.end] != te;
    if (!starts_token || !ends_token) {
      res.warnings.push_back("tag boundary inside a token for " + c.label);
      continue;
    }
    TokenSpan span{tb, te};
    res.entities.push_back(Entity{reference.doc_id, span, c.label, reference.surface(span)});
  }
  sort_canonical(res.entities);
  return res;
}

RevisionResult llm_revision(const Document& doc, const std::vector<Entity>& predicted,
                            const TagScheme& scheme, ChatBackend& backend, const PromptTemplate& tpl,
                            const std::string& model, bool cot) {
  std::vector<Entity> own;
  for (const auto& e : predicted) {
    if (e.doc_id == doc.doc_id) own.push_back(e);
  }
  std::string prompt = tpl.render({{"context", render_tagged_text(doc, own, scheme)}});
  if (cot) prompt += "\nLet's think step by step.";
  const ChatResponse resp = backend.complete(ChatRequest::user(prompt, 0.0, model), 0);

  static constexpr std::string_view kCue = "The labeled sentence:";
  std::vector<std::string_view> lines = split(resp.content, '\n');
  for (auto it = lines.rbegin(); it != lines.rend(); ++it) {
    std::string_view line = trim(*it);
    if (line.substr(0, kCue.size()) == kCue) line = trim(line.substr(kCue.size()));
    if (line.empty()) continue;
    TaggedParse parsed = parse_tagged_text(line, scheme, doc);
    if (parsed.aligned) {
      RevisionResult out{std::move(parsed.entities), std::move(parsed.warnings), false};
      for (auto& w : out.warnings) w = doc.doc_id + ": " + w;
      return out;
    }
  }
  RevisionResult out;
  out.entities = own;
  sort_canonical(out.entities);
  out.fell_back = true;
  out.warnings.push_back(doc.doc_id + ": no response line aligns with the document; kept original predictions");
  return out;
}

}  // namespace kgv
