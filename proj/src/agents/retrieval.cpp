#include "orchestra/agents/retrieval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "orchestra/error.hpp"
#include "orchestra/text.hpp"

namespace orchestra::retrieval {

std::vector<std::string> chunk_text(std::string_view text, const ChunkParams& params) {
  if (params.chunk_tokens == 0 || params.overlap_tokens >= params.chunk_tokens) {
    throw Error(ErrorKind::InvalidArgument, "chunk overlap must be smaller than the chunk size");
  }
  const auto spans = text::word_spans(text);
  std::vector<std::string> out;
  const std::size_t stride = params.chunk_tokens - params.overlap_tokens;
  for (std::size_t start = 0; start < spans.size(); start += stride) {
    const std::size_t end = std::min(spans.size(), start + params.chunk_tokens);
    out.emplace_back(text.substr(spans[start].begin, spans[end - 1].end - spans[start].begin));
    if (end == spans.size()) break;
  }
  return out;
}

std::string strip_front_matter(std::string_view raw, std::string& date) {
  std::istringstream in{std::string(raw)};
  std::string line;
  if (!std::getline(in, line)) return std::string(raw);
  const auto first = text::trim(line);
  if (first == "---") {
    std::size_t consumed = line.size() + 1;
    while (std::getline(in, line)) {
      consumed += line.size() + 1;
      const auto l = text::trim(line);
      if (l == "---") return consumed >= raw.size() ? std::string{} : std::string(raw.substr(consumed));
      if (text::starts_with_icase(l, "date:")) date = std::string(text::trim(l.substr(5)));
    }
    return std::string(raw);  // unterminated front matter: treat as body
  }
  if (text::starts_with_icase(first, "date:")) {
    date = std::string(text::trim(first.substr(5)));
    return line.size() + 1 >= raw.size() ? std::string{} : std::string(raw.substr(line.size() + 1));
  }
  return std::string(raw);
}

Corpus::Corpus(ChunkParams chunking, Bm25Params bm25) : chunking_(chunking), bm25_(bm25) {
  if (chunking_.chunk_tokens == 0 || chunking_.overlap_tokens >= chunking_.chunk_tokens) {
    throw Error(ErrorKind::InvalidArgument, "chunk overlap must be smaller than the chunk size");
  }
}

void Corpus::add(const Document& document) {
  const auto pieces = chunk_text(document.text, chunking_);
  for (std::size_t i = 0; i < pieces.size(); ++i) {
    Entry e;
    e.chunk = {document.doc_id, i, pieces[i], 0.0, document.date};
    e.tokens = text::word_tokens(pieces[i]);
    chunks_.push_back(std::move(e));
  }
}

namespace {

std::string mtime_date(const std::filesystem::path& p) {
  const auto ft = std::filesystem::last_write_time(p);
  const auto sys = std::chrono::file_clock::to_sys(ft);
  const std::time_t t = std::chrono::system_clock::to_time_t(
      std::chrono::time_point_cast<std::chrono::system_clock::duration>(sys));
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[16];
  std::strftime(buf, sizeof buf, "%Y-%m-%d", &tm);
  return buf;
}

}  // namespace

Corpus Corpus::from_directory(const std::filesystem::path& dir, ChunkParams chunking, Bm25Params bm25) {
  if (!std::filesystem::is_directory(dir)) throw Error(ErrorKind::Io, "corpus directory not found: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::recursive_directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const auto ext = text::to_lower(entry.path().extension().string());
    if (ext == ".md" || ext == ".txt") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  Corpus corpus(chunking, bm25);
  for (const auto& f : files) {
    std::ifstream in(f, std::ios::binary);
    if (!in) throw Error(ErrorKind::Io, "cannot read " + f.string());
    std::stringstream ss;
    ss << in.rdbuf();
    Document d;
    d.doc_id = std::filesystem::relative(f, dir).generic_string();
    d.text = strip_front_matter(ss.str(), d.date);
    if (d.date.empty()) d.date = mtime_date(f);
    corpus.add(d);
  }
  return corpus;
}

std::vector<RetrievalChunk> Corpus::search(std::string_view query, std::size_t k) const {
  if (chunks_.empty()) throw Error(ErrorKind::EmptyCorpus, "the retrieval corpus has no chunks");
  const auto q_tokens = text::word_tokens(query);
  const std::set<std::string> q_set(q_tokens.begin(), q_tokens.end());
  if (q_set.empty() || k == 0) return {};

  struct Candidate {
    const Entry* entry;
    std::map<std::string, std::size_t> tf;
  };
  std::vector<Candidate> candidates;
  for (const auto& e : chunks_) {
    Candidate c{&e, {}};
    for (const auto& t : e.tokens) {
      if (q_set.count(t)) ++c.tf[t];
    }
    if (!c.tf.empty()) candidates.push_back(std::move(c));
  }
  if (candidates.empty()) return {};

  const double n = static_cast<double>(candidates.size());
  double total_len = 0.0;
  std::map<std::string, std::size_t> df;
  for (const auto& c : candidates) {
    total_len += static_cast<double>(c.entry->tokens.size());
    for (const auto& [t, _] : c.tf) ++df[t];
  }
  const double avgdl = total_len / n;

  std::vector<RetrievalChunk> scored;
  for (const auto& c : candidates) {
    const double dl = static_cast<double>(c.entry->tokens.size());
    double score = 0.0;
    for (const auto& [t, f] : c.tf) {
      const double nt = static_cast<double>(df[t]);
      const double idf = std::log((n - nt + 0.5) / (nt + 0.5) + 1.0);
      const double tf = static_cast<double>(f);
      score += idf * tf * (bm25_.k1 + 1.0) / (tf + bm25_.k1 * (1.0 - bm25_.b + bm25_.b * dl / avgdl));
    }
    if (score > 0.0 && std::isfinite(score)) {
      RetrievalChunk r = c.entry->chunk;
      r.score = score;
      scored.push_back(std::move(r));
    }
  }
  std::sort(scored.begin(), scored.end(), [](const RetrievalChunk& a, const RetrievalChunk& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.date != b.date) return a.date > b.date;
    if (a.doc_id != b.doc_id) return a.doc_id < b.doc_id;
    return a.chunk_index < b.chunk_index;
  });
  if (scored.size() > k) scored.resize(k);
  return scored;
}

std::string render(const std::vector<RetrievalChunk>& chunks) {
  if (chunks.empty()) return "No matching guideline sections.";
  std::string out;
  char score[32];
  for (std::size_t i = 0; i < chunks.size(); ++i) {
    const auto& c = chunks[i];
    std::snprintf(score, sizeof score, "%.4f", c.score);
    if (i) out += "\n\n";
    out += "[" + std::to_string(i + 1) + "] " + c.doc_id + " #" + std::to_string(c.chunk_index) + " (" + c.date +
           ", score " + score + ")\n" + c.text;
  }
  return out;
}

std::string RetrievalAgent::invoke(std::string_view payload, const InvocationContext&) {
  return render(corpus_.search(payload, k_));
}

}  // namespace orchestra::retrieval
