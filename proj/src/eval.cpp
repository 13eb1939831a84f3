#include "orchestra/eval.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>

#include "orchestra/error.hpp"
#include "orchestra/text.hpp"

namespace orchestra::eval {

using nlohmann::json;

LabelSet LabelSet::make(std::vector<std::string> labels, std::map<std::string, std::string> aliases) {
  std::set<std::string> seen;
  for (const auto& l : labels) {
    if (text::trim(l).empty()) throw Error(ErrorKind::InvalidArgument, "labels must be non-empty");
    if (!seen.insert(l).second) throw Error(ErrorKind::InvalidArgument, "duplicate label '" + l + "'");
  }
  for (const auto& [alias, target] : aliases) {
    if (!seen.count(target)) {
      throw Error(ErrorKind::InvalidArgument, "alias '" + alias + "' points to unknown label '" + target + "'");
    }
  }
  return LabelSet{std::move(labels), std::move(aliases)};
}

LabelSet LabelSet::of(const Question& question) { return make(question.label_set, question.aliases); }

std::optional<std::size_t> LabelSet::index_of(std::string_view label) const {
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == label) return i;
  }
  return std::nullopt;
}

namespace {

bool is_word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

bool contains_word(const std::string& haystack, const std::string& needle) {
  if (needle.empty()) return false;
  for (auto pos = haystack.find(needle); pos != std::string::npos; pos = haystack.find(needle, pos + 1)) {
    const bool left = pos == 0 || !is_word_char(haystack[pos - 1]) || !is_word_char(needle.front());
    const std::size_t end = pos + needle.size();
    const bool right = end == haystack.size() || !is_word_char(haystack[end]) || !is_word_char(needle.back());
    if (left && right) return true;
  }
  return false;
}

std::string collapse(std::string_view s) {
  std::string out;
  bool space = false;
  for (char c : text::trim(s)) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      space = true;
      continue;
    }
    if (space && !out.empty()) out += ' ';
    space = false;
    out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  return out;
}

std::string fmt(const std::optional<double>& v) {
  if (!v) return "-";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", *v);
  return buf;
}

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

Answer normalize_answer(std::string_view answer, const LabelSet& labels) {
  const std::string hay = text::to_lower(answer);
  if (labels.labels.empty()) {
    std::string open = collapse(answer);
    while (!open.empty() && (open.back() == '.' || open.back() == '!')) open.pop_back();
    if (open.empty()) return std::nullopt;
    return open;
  }
  std::set<std::string> matched;
  for (const auto& l : labels.labels) {
    if (contains_word(hay, text::to_lower(l))) matched.insert(l);
  }
  for (const auto& [alias, target] : labels.aliases) {
    if (contains_word(hay, text::to_lower(alias))) matched.insert(target);
  }
  if (matched.size() != 1) return std::nullopt;
  return *matched.begin();
}

Answer majority_at_k(std::span<const Answer> answers) {
  if (answers.empty()) throw Error(ErrorKind::EmptyList, "majority vote over no answers");
  std::map<std::string, std::pair<std::size_t, std::size_t>> tally;  // label -> (votes, first index)
  for (std::size_t i = 0; i < answers.size(); ++i) {
    if (!answers[i]) continue;
    auto [it, fresh] = tally.try_emplace(*answers[i], 0, i);
    ++it->second.first;
  }
  Answer best;
  std::size_t best_votes = 0, best_first = 0;
  for (const auto& [label, v] : tally) {
    if (v.first > best_votes || (v.first == best_votes && v.second < best_first)) {
      best = label;
      best_votes = v.first;
      best_first = v.second;
    }
  }
  return best;
}

bool best_at_k(std::span<const Answer> answers, const std::string& gold) {
  return std::any_of(answers.begin(), answers.end(), [&](const Answer& a) { return a && *a == gold; });
}

std::map<std::string, double> vote_fractions(std::span<const Answer> answers) {
  std::map<std::string, double> out;
  if (answers.empty()) return out;
  std::map<std::string, std::size_t> counts;
  for (const auto& a : answers) {
    if (a) ++counts[*a];
  }
  for (const auto& [label, c] : counts) out[label] = static_cast<double>(c) / static_cast<double>(answers.size());
  return out;
}

std::size_t ConfusionMatrix::n_abstain() const { return std::accumulate(abstain.begin(), abstain.end(), std::size_t{0}); }

std::size_t ConfusionMatrix::n_cases() const {
  std::size_t n = n_abstain();
  for (const auto& row : counts) n += std::accumulate(row.begin(), row.end(), std::size_t{0});
  return n;
}

ConfusionMatrix confusion(std::span<const Answer> predictions, std::span<const std::string> golds,
                          const LabelSet& labels) {
  if (predictions.size() != golds.size()) {
    throw Error(ErrorKind::LengthMismatch, std::to_string(predictions.size()) + " predictions for " +
                                               std::to_string(golds.size()) + " gold labels");
  }
  const std::size_t n = labels.labels.size();
  ConfusionMatrix m{labels.labels, std::vector<std::vector<std::size_t>>(n, std::vector<std::size_t>(n, 0)),
                    std::vector<std::size_t>(n, 0)};
  for (std::size_t i = 0; i < golds.size(); ++i) {
    const auto g = labels.index_of(golds[i]);
    if (!g) throw Error(ErrorKind::InvalidArgument, "gold label '" + golds[i] + "' is not in the label set");
    if (!predictions[i]) {
      ++m.abstain[*g];
      continue;
    }
    const auto p = labels.index_of(*predictions[i]);
    if (!p) throw Error(ErrorKind::InvalidArgument, "prediction '" + *predictions[i] + "' is not in the label set");
    ++m.counts[*g][*p];
  }
  return m;
}

std::vector<LabelCounts> label_counts(const ConfusionMatrix& m) {
  const std::size_t n = m.labels.size();
  std::vector<LabelCounts> out(n);
  for (std::size_t c = 0; c < n; ++c) {
    auto& lc = out[c];
    lc.tp = m.counts[c][c];
    lc.support = std::accumulate(m.counts[c].begin(), m.counts[c].end(), std::size_t{0}) + m.abstain[c];
    lc.fn = lc.support - lc.tp;
    for (std::size_t g = 0; g < n; ++g) {
      if (g != c) lc.fp += m.counts[g][c];
    }
  }
  return out;
}

MacroMetrics macro_metrics(const ConfusionMatrix& m) {
  const std::size_t total = m.n_cases();
  if (total == 0) throw Error(ErrorKind::EmptyMatrix, "no scored cases");
  MacroMetrics out;
  std::size_t correct = 0;
  for (std::size_t c = 0; c < m.labels.size(); ++c) correct += m.counts[c][c];
  out.accuracy = static_cast<double>(correct) / static_cast<double>(total);

  double sen_sum = 0.0, spe_sum = 0.0;
  std::size_t sen_n = 0, spe_n = 0;
  for (const auto& lc : label_counts(m)) {
    const std::size_t tn = total - lc.tp - lc.fn - lc.fp;
    if (lc.tp + lc.fn > 0) {
      sen_sum += static_cast<double>(lc.tp) / static_cast<double>(lc.tp + lc.fn);
      ++sen_n;
    }
    if (tn + lc.fp > 0) {
      spe_sum += static_cast<double>(tn) / static_cast<double>(tn + lc.fp);
      ++spe_n;
    }
  }
  if (sen_n) out.sensitivity_macro = sen_sum / static_cast<double>(sen_n);
  if (spe_n) out.specificity_macro = spe_sum / static_cast<double>(spe_n);
  return out;
}

F1Suite f1_suite(std::span<const LabelCounts> counts) {
  F1Suite out;
  if (counts.empty()) return out;
  std::size_t tp = 0, fp = 0, fn = 0, support = 0;
  double macro = 0.0, weighted = 0.0;
  for (const auto& c : counts) {
    const std::size_t den = 2 * c.tp + c.fp + c.fn;
    const double f1 = den == 0 ? 0.0 : 2.0 * static_cast<double>(c.tp) / static_cast<double>(den);
    macro += f1;
    weighted += f1 * static_cast<double>(c.support);
    tp += c.tp;
    fp += c.fp;
    fn += c.fn;
    support += c.support;
  }
  const std::size_t den = 2 * tp + fp + fn;
  out.micro = den == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(den);
  out.macro = macro / static_cast<double>(counts.size());
  out.weighted = support == 0 ? 0.0 : weighted / static_cast<double>(support);
  return out;
}

std::optional<double> auc(std::span<const double> scores, const std::vector<bool>& gold) {
  if (scores.size() != gold.size()) throw Error(ErrorKind::LengthMismatch, "scores and gold differ in length");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double rank_sum = 0.0;
  std::size_t pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double midrank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t t = i; t < j; ++t) {
      if (gold[order[t]]) {
        rank_sum += midrank;
        ++pos;
      }
    }
    i = j;
  }
  const std::size_t neg = n - pos;
  if (pos == 0 || neg == 0) return std::nullopt;
  const double p = static_cast<double>(pos);
  return (rank_sum - p * (p + 1.0) / 2.0) / (p * static_cast<double>(neg));
}

AucSuite auc_suite(std::span<const ScoredPrediction> scored, std::size_t n_labels) {
  for (const auto& s : scored) {
    if (s.scores.size() != n_labels || s.gold.size() != n_labels) {
      throw Error(ErrorKind::LengthMismatch, "scored prediction does not cover every label");
    }
  }
  AucSuite out;
  double macro = 0.0, weighted = 0.0, weight = 0.0;
  std::size_t defined = 0;
  std::vector<double> pooled_scores;
  std::vector<bool> pooled_gold;
  for (std::size_t l = 0; l < n_labels; ++l) {
    std::vector<double> sc;
    std::vector<bool> gd;
    for (const auto& s : scored) {
      sc.push_back(s.scores[l]);
      gd.push_back(s.gold[l]);
      pooled_scores.push_back(s.scores[l]);
      pooled_gold.push_back(s.gold[l]);
    }
    if (auto a = auc(sc, gd)) {
      const double positives = static_cast<double>(std::count(gd.begin(), gd.end(), true));
      macro += *a;
      weighted += *a * positives;
      weight += positives;
      ++defined;
    }
  }
  if (defined) {
    out.macro = macro / static_cast<double>(defined);
    out.weighted = weighted / weight;
  }
  out.micro = auc(pooled_scores, pooled_gold);
  return out;
}

json to_json(const MetricsReport& r) {
  return {{"strategy", r.strategy},
          {"accuracy", r.accuracy},
          {"sensitivity_macro", opt(r.sensitivity_macro)},
          {"specificity_macro", opt(r.specificity_macro)},
          {"f1_micro", r.f1.micro},
          {"f1_macro", r.f1.macro},
          {"f1_weighted", r.f1.weighted},
          {"auc_micro", opt(r.auc.micro)},
          {"auc_macro", opt(r.auc.macro)},
          {"auc_weighted", opt(r.auc.weighted)},
          {"n_cases", r.n_cases},
          {"n_abstain", r.n_abstain}};
}

json to_json(const std::vector<MetricsReport>& reports) {
  json arr = json::array();
  for (const auto& r : reports) arr.push_back(to_json(r));
  return arr;
}

std::string render_table(const std::vector<MetricsReport>& reports) {
  const std::vector<std::string> header = {"strategy", "ACC",    "SEN",     "SPE",    "F1-micro", "F1-macro",
                                           "F1-wtd",   "AUC-micro", "AUC-macro", "AUC-wtd", "n", "abstain"};
  std::vector<std::vector<std::string>> rows = {header};
  for (const auto& r : reports) {
    rows.push_back({r.strategy, fmt(r.accuracy), fmt(r.sensitivity_macro), fmt(r.specificity_macro), fmt(r.f1.micro),
                    fmt(r.f1.macro), fmt(r.f1.weighted), fmt(r.auc.micro), fmt(r.auc.macro), fmt(r.auc.weighted),
                    std::to_string(r.n_cases), std::to_string(r.n_abstain)});
  }
  std::vector<std::size_t> width(header.size(), 0);
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) width[i] = std::max(width[i], row[i].size());
  }
  std::string out;
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i == 0) {
        out += row[i] + std::string(width[i] - row[i].size(), ' ');
      } else {
        out += "  " + std::string(width[i] - row[i].size(), ' ') + row[i];
      }
    }
    out += "\n";
  }
  return out;
}

namespace {

MetricsReport score(std::string name, const std::vector<Answer>& predictions, const std::vector<std::string>& golds,
                    const std::vector<ScoredPrediction>& scored, const LabelSet& labels) {
  const auto m = confusion(predictions, golds, labels);
  const auto mm = macro_metrics(m);
  MetricsReport r;
  r.strategy = std::move(name);
  r.accuracy = mm.accuracy;
  r.sensitivity_macro = mm.sensitivity_macro;
  r.specificity_macro = mm.specificity_macro;
  const auto counts = label_counts(m);
  r.f1 = f1_suite(counts);
  r.auc = auc_suite(scored, labels.labels.size());
  r.n_cases = m.n_cases();
  r.n_abstain = m.n_abstain();
  return r;
}

}  // namespace

std::vector<MetricsReport> evaluate_strategies(std::vector<CaseOutcome> cases, const LabelSet& labels) {
  if (cases.empty()) throw Error(ErrorKind::EmptyList, "no benchmark cases");
  std::stable_sort(cases.begin(), cases.end(),
                   [](const CaseOutcome& a, const CaseOutcome& b) { return a.question_id < b.question_id; });
  std::size_t k = 0;
  for (const auto& c : cases) {
    if (c.answers.empty()) throw Error(ErrorKind::EmptyList, "case " + c.question_id + " has no answers");
    k = std::max(k, c.answers.size());
  }
  const std::size_t n = labels.labels.size();
  std::vector<std::string> golds;
  std::vector<Answer> first, majority, best;
  std::vector<ScoredPrediction> one_hot, votes;
  for (const auto& c : cases) {
    golds.push_back(c.gold);
    std::vector<bool> gold_vec(n, false);
    if (auto g = labels.index_of(c.gold)) gold_vec[*g] = true;

    first.push_back(c.answers.front());
    ScoredPrediction oh{std::vector<double>(n, 0.0), gold_vec};
    if (c.answers.front()) {
      if (auto i = labels.index_of(*c.answers.front())) oh.scores[*i] = 1.0;
    }
    one_hot.push_back(std::move(oh));

    const Answer maj = majority_at_k(c.answers);
    majority.push_back(maj);
    best.push_back(best_at_k(c.answers, c.gold) ? Answer(c.gold) : maj);
    ScoredPrediction vf{std::vector<double>(n, 0.0), gold_vec};
    for (const auto& [label, frac] : vote_fractions(c.answers)) {
      if (auto i = labels.index_of(label)) vf.scores[*i] = frac;
    }
    votes.push_back(std::move(vf));
  }
  const std::string ks = std::to_string(k);
  return {score("best@1", first, golds, one_hot, labels), score("majority@" + ks, majority, golds, votes, labels),
          score("best@" + ks, best, golds, votes, labels)};
}

Question parse_question(const json& j) {
  if (!j.is_object()) throw Error(ErrorKind::SchemaViolation, "question record must be an object");
  Question q;
  try {
    if (j.contains("id")) {
      q.id = j.at("id").is_string() ? j.at("id").get<std::string>() : j.at("id").dump();
    } else if (j.contains("question_id")) {
      q.id = j.at("question_id").get<std::string>();
    } else {
      throw Error(ErrorKind::SchemaViolation, "missing \"id\"");
    }
    q.text = j.contains("question") ? j.at("question").get<std::string>() : j.at("text").get<std::string>();
    if (j.contains("label_set")) q.label_set = j.at("label_set").get<std::vector<std::string>>();
    if (j.contains("gold") && !j.at("gold").is_null()) q.gold = j.at("gold").get<std::string>();
    if (j.contains("aliases")) q.aliases = j.at("aliases").get<std::map<std::string, std::string>>();
    if (j.contains("attachments")) {
      for (const auto& a : j.at("attachments")) q.attachments.push_back({a.at("kind").get<std::string>(), a.at("id").get<std::string>()});
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::SchemaViolation, e.what());
  }
  if (q.id.empty()) throw Error(ErrorKind::SchemaViolation, "empty question id");
  if (text::trim(q.text).empty()) throw Error(ErrorKind::SchemaViolation, "empty question text");
  try {
    LabelSet::make(q.label_set, q.aliases);
  } catch (const Error& e) {
    throw Error(ErrorKind::SchemaViolation, e.what());
  }
  if (q.gold && !q.label_set.empty() &&
      std::find(q.label_set.begin(), q.label_set.end(), *q.gold) == q.label_set.end()) {
    throw Error(ErrorKind::SchemaViolation, "gold label '" + *q.gold + "' is not in label_set");
  }
  return q;
}

std::vector<Question> load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open dataset " + path.string());
  std::vector<Question> out;
  std::set<std::string> ids;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim(line).empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(lineno) + ": ";
    try {
      Question q = parse_question(json::parse(line));
      if (!ids.insert(q.id).second) throw Error(ErrorKind::SchemaViolation, "duplicate question id '" + q.id + "'");
      out.push_back(std::move(q));
    } catch (const json::parse_error& e) {
      throw Error(ErrorKind::SchemaViolation, where + e.what());
    } catch (const Error& e) {
      throw Error(ErrorKind::SchemaViolation, where + e.what());
    }
  }
  return out;
}

}  // namespace orchestra::eval
