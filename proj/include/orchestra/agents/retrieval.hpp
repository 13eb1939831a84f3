#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "orchestra/agents/agent.hpp"

// Lexical guideline retrieval: token-window chunking plus BM25 ranking.
namespace orchestra::retrieval {

struct Document {
  std::string doc_id;
  std::string date;  // YYYY-MM-DD; compares lexically
  std::string text;
};

struct RetrievalChunk {
  std::string doc_id;
  std::size_t chunk_index = 0;
  std::string text;
  double score = 0.0;
  std::string date;
};

struct ChunkParams {
  std::size_t chunk_tokens = 300;
  std::size_t overlap_tokens = 50;
};

struct Bm25Params {
  double k1 = 1.2;
  double b = 0.75;
};

/// Splits `text` into windows of `chunk_tokens` tokens; consecutive windows
/// share `overlap_tokens` tokens. Chunk text is the source slice spanning the
/// window's tokens.
std::vector<std::string> chunk_text(std::string_view text, const ChunkParams& params);

/// Reads the optional front matter. Returns the body and sets `date` when a
/// "date:" line is present.
std::string strip_front_matter(std::string_view raw, std::string& date);

class Corpus {
 public:
  explicit Corpus(ChunkParams chunking = {}, Bm25Params bm25 = {});

  void add(const Document& document);

  /// Every *.md / *.txt file under `dir`; doc_id is the path relative to dir.
  static Corpus from_directory(const std::filesystem::path& dir, ChunkParams chunking = {}, Bm25Params bm25 = {});

  /// Top-k chunks, highest score first; ties go to the newer document, then
  /// doc_id and chunk index. Chunks scoring 0 are dropped. Throws EmptyCorpus.
  ///
  /// Document frequencies and the average length are taken over the chunks
  /// that share at least one token with the query, so chunks with no overlap
  /// cannot influence the ranking of the others.
  std::vector<RetrievalChunk> search(std::string_view query, std::size_t k = 5) const;

  std::size_t chunk_count() const { return chunks_.size(); }

 private:
  struct Entry {
    RetrievalChunk chunk;
    std::vector<std::string> tokens;
  };

  ChunkParams chunking_;
  Bm25Params bm25_;
  std::vector<Entry> chunks_;
};

std::string render(const std::vector<RetrievalChunk>& chunks);

/// Settings: corpus_dir (required), k, chunk_tokens, overlap_tokens.
class RetrievalAgent : public Agent {
 public:
  RetrievalAgent(Corpus corpus, std::size_t k) : corpus_(std::move(corpus)), k_(k) {}

  std::string invoke(std::string_view payload, const InvocationContext& context) override;

 private:
  Corpus corpus_;
  std::size_t k_;
};

}  // namespace orchestra::retrieval
