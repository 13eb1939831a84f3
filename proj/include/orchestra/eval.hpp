#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "orchestra/trace.hpp"

// Evaluation strategies and classification metrics.
//
// Abstain (an answer that maps to no label, or to more than one) is scored
// as incorrect: it counts against accuracy and as a false negative for its
// gold class, but never as a false positive.
namespace orchestra::eval {

/// A canonical label, or nullopt for Abstain.
using Answer = std::optional<std::string>;

struct LabelSet {
  std::vector<std::string> labels;
  std::map<std::string, std::string> aliases;  // alias -> canonical, matched case-insensitively

  /// Throws InvalidArgument for duplicate labels or aliases pointing nowhere.
  static LabelSet make(std::vector<std::string> labels, std::map<std::string, std::string> aliases = {});
  static LabelSet of(const Question& question);

  std::optional<std::size_t> index_of(std::string_view label) const;
};

/// Whole-word, case-insensitive search for labels and aliases. Exactly one
/// distinct canonical match wins; none or several abstain. With an empty
/// label set the answer is open-ended and normalizes to its lowercased,
/// whitespace-collapsed text.
Answer normalize_answer(std::string_view answer, const LabelSet& labels);

/// Plurality of non-abstain answers; ties go to the label whose first vote
/// comes earliest. Throws EmptyList.
Answer majority_at_k(std::span<const Answer> answers);

bool best_at_k(std::span<const Answer> answers, const std::string& gold);

/// Share of answers voting for each label (Abstain excluded, denominator k).
std::map<std::string, double> vote_fractions(std::span<const Answer> answers);

struct ConfusionMatrix {
  std::vector<std::string> labels;
  std::vector<std::vector<std::size_t>> counts;  // [gold][predicted]
  std::vector<std::size_t> abstain;              // per gold label

  std::size_t n_abstain() const;
  std::size_t n_cases() const;  // matrix total plus abstains
};

/// Throws LengthMismatch, or InvalidArgument for labels outside the set.
ConfusionMatrix confusion(std::span<const Answer> predictions, std::span<const std::string> golds,
                          const LabelSet& labels);

struct MacroMetrics {
  double accuracy = 0.0;
  std::optional<double> sensitivity_macro;  // absent when no class is defined
  std::optional<double> specificity_macro;
};

/// Throws EmptyMatrix.
MacroMetrics macro_metrics(const ConfusionMatrix& matrix);

struct LabelCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  std::size_t support = 0;
};

std::vector<LabelCounts> label_counts(const ConfusionMatrix& matrix);

struct F1Suite {
  double micro = 0.0;
  double macro = 0.0;
  double weighted = 0.0;
};

F1Suite f1_suite(std::span<const LabelCounts> counts);

struct ScoredPrediction {
  std::vector<double> scores;  // per label, in [0, 1]
  std::vector<bool> gold;      // per label
};

/// Rank-statistic AUC (ties count one half); absent without both classes.
std::optional<double> auc(std::span<const double> scores, const std::vector<bool>& gold);

struct AucSuite {
  std::optional<double> micro;
  std::optional<double> macro;
  std::optional<double> weighted;
};

/// Macro and weighted skip labels lacking positives or negatives; micro pools
/// every (case, label) pair. Throws LengthMismatch for ragged input.
AucSuite auc_suite(std::span<const ScoredPrediction> scored, std::size_t n_labels);

struct MetricsReport {
  std::string strategy;
  double accuracy = 0.0;
  std::optional<double> sensitivity_macro;
  std::optional<double> specificity_macro;
  F1Suite f1;
  AucSuite auc;
  std::size_t n_cases = 0;
  std::size_t n_abstain = 0;
};

nlohmann::json to_json(const MetricsReport& report);
nlohmann::json to_json(const std::vector<MetricsReport>& reports);
/// Aligned columns: ACC, SEN, SPE, F1 micro/macro/weighted, AUC
/// micro/macro/weighted. Undefined values print as "-".
std::string render_table(const std::vector<MetricsReport>& reports);

/// One benchmark case: the gold label and the k trajectory answers.
struct CaseOutcome {
  std::string question_id;
  std::string gold;
  std::vector<Answer> answers;
};

/// best@1, majority@k and best@k reports. best@k predicts the gold label when
/// any trajectory found it, otherwise the majority answer. AUC scores are vote
/// fractions (best@1 uses the one-hot of the first trajectory). Cases are
/// folded in question-id order. Throws EmptyList for no cases.
std::vector<MetricsReport> evaluate_strategies(std::vector<CaseOutcome> cases, const LabelSet& labels);

/// Line-delimited questions: {"id", "question", "label_set", "gold"?,
/// "aliases"?, "attachments"?}. Throws SchemaViolation naming the line.
std::vector<Question> load_dataset(const std::filesystem::path& path);
Question parse_question(const nlohmann::json& record);

}  // namespace orchestra::eval
