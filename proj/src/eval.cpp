#include "kgverify/eval.hpp"

#include <algorithm>
#include <set>
#include <sstream>
#include <tuple>
#include <unordered_map>

#include <nlohmann/json.hpp>

namespace kgv {

using json = nlohmann::json;

std::string_view to_string(ErrorType type) {
  switch (type) {
    case ErrorType::TP: return "TP";
    case ErrorType::FP_Type: return "FP_Type";
    case ErrorType::FP_Span: return "FP_Span";
    case ErrorType::FP_TypeSpan: return "FP_TypeSpan";
    case ErrorType::FP_Spurious: return "FP_Spurious";
    case ErrorType::FN_Missing: return "FN_Missing";
  }
  return "TP";
}

bool is_false_positive(ErrorType type) {
  return std::find(kFalsePositiveTypes.begin(), kFalsePositiveTypes.end(), type) != kFalsePositiveTypes.end();
}

double f1_score(double precision, double recall) {
  return precision + recall == 0.0 ? 0.0 : 2.0 * precision * recall / (precision + recall);
}

namespace {

using Key = std::tuple<std::string, int, int, std::string>;

Key key_of(const Entity& e) { return {e.doc_id, e.span.beg, e.span.end, e.etype}; }

Metrics finish_metrics(std::size_t tp, std::size_t n_pred, std::size_t n_gold) {
  Metrics m;
  m.tp = tp;
  m.n_pred = n_pred;
  m.n_gold = n_gold;
  m.precision_undefined = n_pred == 0;
  m.recall_undefined = n_gold == 0;
  m.precision = n_pred ? static_cast<double>(tp) / n_pred : 0.0;
  m.recall = n_gold ? static_cast<double>(tp) / n_gold : 0.0;
  m.f1 = f1_score(m.precision, m.recall);
  return m;
}

// Golds grouped by document, as indices into the gold list.
std::unordered_map<std::string, std::vector<std::size_t>> by_doc(const std::vector<Entity>& ents) {
  std::unordered_map<std::string, std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < ents.size(); ++i) out[ents[i].doc_id].push_back(i);
  return out;
}

bool better_reference(const Entity& cand, int cand_ov, const Entity& best, int best_ov) {
  if (cand_ov != best_ov) return cand_ov > best_ov;
  return std::tie(cand.span.beg, cand.span.end, cand.etype) < std::tie(best.span.beg, best.span.end, best.etype);
}

std::optional<std::size_t> max_overlap_index(const Entity& pred, const std::vector<Entity>& gold,
                                             const std::vector<std::size_t>& candidates) {
  std::optional<std::size_t> best;
  int best_ov = 0;
  for (std::size_t gi : candidates) {
    const Entity& g = gold[gi];
    if (g.doc_id != pred.doc_id) continue;
    const int ov = overlap_tokens(pred.span, g.span);
    if (ov == 0) continue;
    if (!best || better_reference(g, ov, gold[*best], best_ov)) {
      best = gi;
      best_ov = ov;
    }
  }
  return best;
}

ErrorType classify_against(const Entity& pred, const std::optional<Entity>& g) {
  if (!g) return ErrorType::FP_Spurious;
  if (g->span == pred.span) {
    // Same span and type but the gold was already matched: a duplicate.
    return g->etype == pred.etype ? ErrorType::FP_Spurious : ErrorType::FP_Type;
  }
  return g->etype == pred.etype ? ErrorType::FP_Span : ErrorType::FP_TypeSpan;
}

std::vector<std::size_t> all_indices(std::size_t n) {
  std::vector<std::size_t> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = i;
  return v;
}

}  // namespace

Metrics exact_match_metrics(const std::vector<Entity>& gold, const std::vector<Entity>& predicted) {
  std::map<Key, std::size_t> available;
  for (const auto& g : gold) ++available[key_of(g)];
  std::size_t tp = 0;
  for (const auto& p : predicted) {
    auto it = available.find(key_of(p));
    if (it != available.end() && it->second > 0) {
      --it->second;
      ++tp;
    }
  }
  return finish_metrics(tp, predicted.size(), gold.size());
}

std::optional<Entity> max_overlap_gold(const Entity& pred, const std::vector<Entity>& gold) {
  auto idx = max_overlap_index(pred, gold, all_indices(gold.size()));
  if (!idx) return std::nullopt;
  return gold[*idx];
}

ErrorType classify_prediction(const Entity& pred, const std::vector<Entity>& gold,
                              const std::vector<bool>* consumed, std::optional<Entity>* reference) {
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (same_annotation(pred, gold[i]) && !(consumed && (*consumed)[i])) {
      if (reference) *reference = gold[i];
      return ErrorType::TP;
    }
  }
  auto g = max_overlap_gold(pred, gold);
  if (reference) *reference = g;
  return classify_against(pred, g);
}

std::vector<Classification> classify_predictions(const std::vector<Entity>& gold,
                                                 const std::vector<Entity>& predicted) {
  const auto gold_docs = by_doc(gold);
  static const std::vector<std::size_t> kNoGold;
  std::vector<bool> consumed(gold.size(), false);
  std::vector<Classification> out(predicted.size());

  for (std::size_t pi = 0; pi < predicted.size(); ++pi) {
    const Entity& p = predicted[pi];
    out[pi].entity = p;
    out[pi].type = ErrorType::FP_Spurious;
    auto it = gold_docs.find(p.doc_id);
    if (it == gold_docs.end()) continue;
    for (std::size_t gi : it->second) {
      if (!consumed[gi] && same_annotation(p, gold[gi])) {
        consumed[gi] = true;
        out[pi].type = ErrorType::TP;
        out[pi].reference = gold[gi];
        break;
      }
    }
  }
  for (std::size_t pi = 0; pi < predicted.size(); ++pi) {
    if (out[pi].type == ErrorType::TP) continue;
    auto it = gold_docs.find(predicted[pi].doc_id);
    const auto& cands = it == gold_docs.end() ? kNoGold : it->second;
    if (auto gi = max_overlap_index(predicted[pi], gold, cands)) out[pi].reference = gold[*gi];
    out[pi].type = classify_against(predicted[pi], out[pi].reference);
  }
  return out;
}

std::vector<Entity> classify_missing(const std::vector<Entity>& gold, const std::vector<Entity>& predicted) {
  const auto pred_docs = by_doc(predicted);
  std::map<Key, std::size_t> matched;
  for (const auto& p : predicted) ++matched[key_of(p)];
  std::vector<Entity> out;
  for (const auto& g : gold) {
    auto mit = matched.find(key_of(g));
    if (mit != matched.end() && mit->second > 0) {
      --mit->second;
      continue;
    }
    bool touched = false;
    if (auto it = pred_docs.find(g.doc_id); it != pred_docs.end()) {
      for (std::size_t pi : it->second) {
        if (overlaps(predicted[pi].span, g.span)) {
          touched = true;
          break;
        }
      }
    }
    if (!touched) out.push_back(g);
  }
  return out;
}

std::map<int, std::size_t> deviation_histogram(const std::vector<Entity>& predicted,
                                               const std::vector<Entity>& gold) {
  std::map<int, std::size_t> hist;
  for (const auto& c : classify_predictions(gold, predicted)) {
    if (c.type == ErrorType::FP_Type || c.type == ErrorType::FP_Span || c.type == ErrorType::FP_TypeSpan) {
      ++hist[c.entity.span.length() - c.reference->span.length()];
    }
  }
  return hist;
}

CorrectionReport correction_report(const std::vector<Entity>& before, const std::vector<Entity>& after,
                                   const std::vector<Entity>& gold) {
  std::set<Key> after_keys;
  for (const auto& a : after) after_keys.insert(key_of(a));
  std::set<Key> gold_keys;
  for (const auto& g : gold) gold_keys.insert(key_of(g));
  const auto after_docs = by_doc(after);

  CorrectionReport rep;
  for (const auto& c : classify_predictions(gold, before)) {
    if (!is_false_positive(c.type)) continue;
    bool fixed = false;
    if (c.type == ErrorType::FP_Spurious) {
      fixed = true;
      if (auto it = after_docs.find(c.entity.doc_id); it != after_docs.end()) {
        for (std::size_t ai : it->second) {
          const Entity& a = after[ai];
          if (overlaps(a.span, c.entity.span) && !gold_keys.count(key_of(a))) {
            fixed = false;
            break;
          }
        }
      }
    } else {
      fixed = after_keys.count(key_of(*c.reference)) > 0;
    }
    auto& st = rep.by_type[c.type];
    ++st.total;
    ++rep.overall.total;
    if (fixed) {
      ++st.corrected;
      ++rep.overall.corrected;
    }
  }
  return rep;
}

ErrorRatios error_ratio_report(const std::vector<Entity>& predicted, const std::vector<Entity>& gold) {
  std::map<ErrorType, std::size_t> counts;
  for (const auto& c : classify_predictions(gold, predicted)) ++counts[c.type];
  const std::size_t fn = classify_missing(gold, predicted).size();
  std::size_t fp = 0;
  for (auto t : kFalsePositiveTypes) fp += counts[t];

  ErrorRatios r;
  r.total_errors = fp + fn;
  r.undefined = r.total_errors == 0;
  if (r.undefined) return r;
  const double total = static_cast<double>(r.total_errors);
  auto pct = [&](std::size_t n) { return 100.0 * static_cast<double>(n) / total; };
  r.type = pct(counts[ErrorType::FP_Type]);
  r.span = pct(counts[ErrorType::FP_Span]);
  r.type_span = pct(counts[ErrorType::FP_TypeSpan]);
  r.spurious = pct(counts[ErrorType::FP_Spurious]);
  r.fp = pct(fp);
  r.fn = pct(fn);
  return r;
}

EvalReport evaluate(const std::vector<Entity>& gold, const std::vector<Entity>& predicted,
                    const std::vector<Entity>* before) {
  EvalReport rep;
  rep.metrics = exact_match_metrics(gold, predicted);
  for (auto t : {ErrorType::TP, ErrorType::FP_Type, ErrorType::FP_Span, ErrorType::FP_TypeSpan,
                 ErrorType::FP_Spurious, ErrorType::FN_Missing}) {
    rep.counts[t] = 0;
  }
  for (const auto& c : classify_predictions(gold, predicted)) {
    ++rep.counts[c.type];
    if (c.type == ErrorType::FP_Type || c.type == ErrorType::FP_Span || c.type == ErrorType::FP_TypeSpan) {
      ++rep.deviation_hist[c.entity.span.length() - c.reference->span.length()];
    }
  }
  rep.counts[ErrorType::FN_Missing] = classify_missing(gold, predicted).size();
  rep.ratios = error_ratio_report(predicted, gold);

  std::set<std::string> labels;
  for (const auto& e : gold) labels.insert(e.etype);
  for (const auto& e : predicted) labels.insert(e.etype);
  for (const auto& label : labels) {
    std::vector<Entity> g, p;
    std::copy_if(gold.begin(), gold.end(), std::back_inserter(g), [&](const Entity& e) { return e.etype == label; });
    std::copy_if(predicted.begin(), predicted.end(), std::back_inserter(p),
                 [&](const Entity& e) { return e.etype == label; });
    rep.per_type[label] = exact_match_metrics(g, p);
  }
  if (before) rep.correction = correction_report(*before, predicted, gold);
  return rep;
}

namespace {

json metrics_json(const Metrics& m) {
  return json{{"precision", m.precision},
              {"recall", m.recall},
              {"f1", m.f1},
              {"tp", m.tp},
              {"n_pred", m.n_pred},
              {"n_gold", m.n_gold},
              {"precision_undefined", m.precision_undefined},
              {"recall_undefined", m.recall_undefined}};
}

json stats_json(const CorrectionStats& s) {
  return json{{"total", s.total}, {"corrected", s.corrected}, {"rate", s.rate()}};
}

}  // namespace

json EvalReport::to_json() const {
  json j = metrics_json(metrics);
  json c = json::object();
  for (const auto& [t, n] : counts) c[std::string(kgv::to_string(t))] = n;
  j["counts"] = c;
  json h = json::object();
  for (const auto& [d, n] : deviation_hist) h[std::to_string(d)] = n;
  j["deviation_histogram"] = h;
  json pt = json::object();
  for (const auto& [label, m] : per_type) pt[label] = metrics_json(m);
  j["per_type"] = pt;
  j["error_ratios"] = json{{"Type", ratios.type},         {"Span", ratios.span},
                           {"TypeSpan", ratios.type_span}, {"Spurious", ratios.spurious},
                           {"FP", ratios.fp},             {"FN", ratios.fn},
                           {"total_errors", ratios.total_errors}, {"undefined", ratios.undefined}};
  if (correction) {
    json cr = json::object();
    for (const auto& [t, s] : correction->by_type) cr[std::string(kgv::to_string(t))] = stats_json(s);
    cr["overall"] = stats_json(correction->overall);
    j["correction"] = cr;
  }
  return j;
}

std::string histogram_csv(const std::map<int, std::size_t>& hist) {
  std::ostringstream out;
  out << "delta,count\n";
  for (const auto& [d, n] : hist) out << d << ',' << n << '\n';
  return out.str();
}

}  // namespace kgv
