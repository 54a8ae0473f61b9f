#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "kgverify/corpus.hpp"

namespace kgv {

enum class ErrorType { TP, FP_Type, FP_Span, FP_TypeSpan, FP_Spurious, FN_Missing };

inline constexpr std::array<ErrorType, 4> kFalsePositiveTypes = {ErrorType::FP_Type, ErrorType::FP_Span,
                                                                 ErrorType::FP_TypeSpan, ErrorType::FP_Spurious};

std::string_view to_string(ErrorType type);
bool is_false_positive(ErrorType type);

struct Metrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t tp = 0;
  std::size_t n_pred = 0;
  std::size_t n_gold = 0;
  /// Set when the respective denominator was zero (value reported as 0).
  bool precision_undefined = false;
  bool recall_undefined = false;
};

/// f1 from precision and recall; 0 when both are 0.
double f1_score(double precision, double recall);

/// Entity-level exact match on (doc_id, beg, end, etype); each gold entity
/// can be matched once.
Metrics exact_match_metrics(const std::vector<Entity>& gold, const std::vector<Entity>& predicted);

struct Classification {
  Entity entity;
  ErrorType type = ErrorType::TP;
  /// Gold with maximal overlap (or the exact match for TP).
  std::optional<Entity> reference;
};

/// Classifies one prediction against the golds of its document. `consumed`
/// (parallel to `gold`, may be null) marks golds already used by a TP; an
/// exact match on a consumed gold is not a TP.
ErrorType classify_prediction(const Entity& pred, const std::vector<Entity>& gold,
                              const std::vector<bool>* consumed = nullptr,
                              std::optional<Entity>* reference = nullptr);

/// Gold with maximal token overlap in pred's document; ties go to the
/// earliest beg, then end, then type. nullopt when nothing overlaps.
std::optional<Entity> max_overlap_gold(const Entity& pred, const std::vector<Entity>& gold);

/// Classifies all predictions (TP matching first, in input order).
std::vector<Classification> classify_predictions(const std::vector<Entity>& gold,
                                                 const std::vector<Entity>& predicted);

/// Golds with no exact match and no token overlap with any prediction.
std::vector<Entity> classify_missing(const std::vector<Entity>& gold, const std::vector<Entity>& predicted);

/// pred_len - gold_len over FP predictions that overlap a gold.
std::map<int, std::size_t> deviation_histogram(const std::vector<Entity>& predicted,
                                               const std::vector<Entity>& gold);

struct CorrectionStats {
  std::size_t total = 0;
  std::size_t corrected = 0;
  double rate() const { return total ? static_cast<double>(corrected) / total : 0.0; }
};

struct CorrectionReport {
  std::map<ErrorType, CorrectionStats> by_type;
  CorrectionStats overall;
};

/// For each FP in `before`: Type/Span/TypeSpan errors are corrected when
/// `after` holds an exact match of the error's max-overlap gold; a Spurious
/// error is corrected when no entity of `after` overlaps its span.
CorrectionReport correction_report(const std::vector<Entity>& before, const std::vector<Entity>& after,
                                   const std::vector<Entity>& gold);

struct ErrorRatios {
  double type = 0, span = 0, type_span = 0, spurious = 0, fp = 0, fn = 0;
  std::size_t total_errors = 0;
  bool undefined = false;
};

/// Percentages of all errors (FP + FN).
ErrorRatios error_ratio_report(const std::vector<Entity>& predicted, const std::vector<Entity>& gold);

struct EvalReport {
  Metrics metrics;
  std::map<ErrorType, std::size_t> counts;
  std::map<int, std::size_t> deviation_hist;
  std::map<std::string, Metrics> per_type;
  ErrorRatios ratios;
  std::optional<CorrectionReport> correction;

  nlohmann::json to_json() const;
};

/// Full report. `before` enables the correction analysis.
EvalReport evaluate(const std::vector<Entity>& gold, const std::vector<Entity>& predicted,
                    const std::vector<Entity>* before = nullptr);

/// "delta,count" lines with a header.
std::string histogram_csv(const std::map<int, std::size_t>& hist);

}  // namespace kgv
