#include "kgverify/type_verify.hpp"

#include <regex>

#include "kgverify/error.hpp"
#include "text_util.hpp"

namespace kgv {

namespace {

std::string quoted_list(const std::vector<std::string>& items) {
  std::string out = "[";
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += ", ";
    out += "'" + items[i] + "'";
  }
  return out + "]";
}

// Strips quotes, markup and trailing punctuation from a candidate label.
std::string clean_label(std::string_view raw) {
  std::string s(trim(raw));
  auto strip = [](char c) {
    return c == '\'' || c == '"' || c == '`' || c == '*' || c == '.' || c == ',' || c == ';' ||
           c == ':' || c == ')' || c == '(' || c == '!';
  };
  while (!s.empty() && strip(s.back())) s.pop_back();
  std::size_t b = 0;
  while (b < s.size() && strip(s[b])) ++b;
  s = s.substr(b);
  // Unicode curly quotes.
  for (const std::string q : {"‘", "’", "“", "”"}) {
    for (auto pos = s.find(q); pos != std::string::npos; pos = s.find(q)) s.erase(pos, q.size());
  }
  return std::string(trim(s));
}

// Tries the label words following "is" in `tail`: the longest prefix of up
// to three words that names a label wins.
std::optional<std::string> label_after(std::string_view tail, const TypeSet& types) {
  auto words = split_ws(tail);
  std::size_t start = 0;
  if (!words.empty()) {
    const std::string first = ascii_lowercase(clean_label(words[0]));
    if (first == "a" || first == "an" || first == "the") start = 1;
  }
  for (std::size_t n = std::min<std::size_t>(3, words.size() - std::min(start, words.size())); n >= 1; --n) {
    std::string phrase;
    for (std::size_t k = start; k < start + n; ++k) {
      if (k > start) phrase += ' ';
      phrase += std::string(words[k]);
    }
    if (auto label = types.canonical(clean_label(phrase))) return label;
  }
  return std::nullopt;
}

}  // namespace

std::string definition_sentence(std::string_view entity, const std::vector<std::string>& definitions) {
  if (definitions.empty()) return "The definition of " + std::string(entity) + " is not provided.";
  return "The definition of " + std::string(entity) + " is " + quoted_list(definitions) + ".";
}

std::string semantic_type_sentence(std::string_view entity, const std::vector<std::string>& types) {
  if (types.empty()) return "The semantic type of " + std::string(entity) + " is not provided.";
  return "The semantic type of " + std::string(entity) + " is " + quoted_list(types) + ".";
}

ChatRequest render_type_prompt(const PromptTemplate& tpl, const CandidateSpan& candidate,
                               const TypeSet& types, std::string_view context,
                               const RequestSettings& settings) {
  std::vector<std::string> all = types.labels();
  all.push_back(types.none_label());
  const std::map<std::string, std::string> values{
      {"entity", candidate.surface},
      {"context", std::string(context)},
      {"definition", definition_sentence(candidate.surface, candidate.knowledge.definitions)},
      {"semantic_types", semantic_type_sentence(candidate.surface, candidate.knowledge.semantic_types)},
      {"labels", join(all, ", ")},
  };
  for (const auto& ph : tpl.placeholders()) {
    if (!values.count(ph)) throw TemplateError(tpl.name() + ": {" + ph + "} is not available in a type prompt");
  }
  return ChatRequest::user(tpl.render(values), settings.temperature, settings.model);
}

std::optional<std::string> parse_assigned_type(std::string_view response, const TypeSet& types) {
  const std::string lower = ascii_lowercase(response);
  static const std::regex kClassOf(R"(class of (the )?entity)");
  static const std::regex kFallback(R"((classified as|classify [^.\n]* as|belongs to the class of))");

  // after_is: the label follows the last " is " on the anchor's line (entity
  // names may themselves contain "is"); otherwise it follows the anchor.
  auto scan = [&](const std::regex& anchor, bool after_is) -> std::optional<std::string> {
    std::optional<std::string> found;
    for (auto it = std::sregex_iterator(lower.begin(), lower.end(), anchor); it != std::sregex_iterator(); ++it) {
      const std::size_t from = it->position() + it->length();
      std::size_t line_end = response.find('\n', from);
      if (line_end == std::string_view::npos) line_end = response.size();
      std::string_view rest = response.substr(from, line_end - from);
      std::string_view rest_lower = std::string_view(lower).substr(from, line_end - from);
      std::optional<std::string> here;
      if (after_is) {
        for (std::size_t pos = rest_lower.find(" is "); pos != std::string_view::npos;
             pos = rest_lower.find(" is ", pos + 1)) {
          if (auto label = label_after(rest.substr(pos + 4), types)) here = label;
        }
      } else {
        here = label_after(rest, types);
      }
      if (here) found = here;
    }
    return found;
  };
  if (auto label = scan(kClassOf, true)) return label;
  return scan(kFallback, false);
}

std::vector<CandidatePair> verify_types(std::span<const CandidateSpan> candidates,
                                        const TypeSet& types, ChatBackend& backend,
                                        const PromptTemplate& tpl, std::string_view context,
                                        const RequestSettings& settings, TypeVerifyStats* stats) {
  std::vector<CandidatePair> out;
  out.reserve(candidates.size());
  for (const auto& c : candidates) {
    const ChatRequest req = render_type_prompt(tpl, c, types, context, settings);
    ChatResponse resp;
    try {
      resp = backend.complete(req, 0);
    } catch (const BackendError&) {
      rethrow_backend_error("type verification of candidate '" + c.surface + "' [" +
                            std::to_string(c.span.beg) + "," + std::to_string(c.span.end) + "]: ");
    }
    if (stats) ++stats->requests;
    CandidatePair pair{c, types.none_label(), Evidence{resp.content, c.span}, false};
    if (auto label = parse_assigned_type(resp.content, types)) {
      pair.etype = *label;
    } else {
      pair.parse_failed = true;
      if (stats) ++stats->parse_failures;
    }
    if (trim(pair.evidence.text).empty()) pair.evidence.text = "(no explanation returned)";
    out.push_back(std::move(pair));
  }
  return out;
}

std::vector<CandidatePair> surviving_pairs(std::span<const CandidatePair> pairs, const TypeSet& types) {
  std::vector<CandidatePair> out;
  for (const auto& p : pairs) {
    if (!types.is_none(p.etype)) out.push_back(p);
  }
  return out;
}

}  // namespace kgv
