#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "orchestra/agents/agent.hpp"
#include "orchestra/backend.hpp"

namespace orchestra::text2sql {

struct Column {
  std::string name;
  std::string type;
};

struct ForeignKey {
  std::string column;
  std::string ref_table;
  std::string ref_column;
};

struct Table {
  std::string name;
  std::vector<Column> columns;
  std::vector<ForeignKey> foreign_keys;
};

struct SchemaDescription {
  std::vector<Table> tables;
};

/// Reads tables, columns and foreign keys through a read-only connection.
/// Throws SchemaUnavailable when the file cannot be opened or has no tables.
SchemaDescription introspect(const std::filesystem::path& database);

std::string render_schema(const SchemaDescription& schema);

/// Static read-only guard: exactly one statement whose first keyword, after
/// whitespace and comments, is SELECT. Throws NonSelectRejected.
void guard_select(std::string_view sql);

/// The SQL inside a reply: the first fenced block if any, else the whole
/// reply, trimmed.
std::string extract_sql(std::string_view reply);

struct QueryResult {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;  // NULL renders as "NULL"
};

/// Runs a guarded statement on a fresh read-only connection. Throws
/// NonSelectRejected or ExecutionFailed.
QueryResult execute(const std::filesystem::path& database, std::string_view sql);

/// A 1x1 result renders as the bare value; anything else as a pipe table of
/// at most `row_cap` rows.
std::string render_rows(const QueryResult& result, std::size_t row_cap);

struct Options {
  std::size_t row_cap = 50;
  int max_repairs = 2;
  bool verify = true;
};

struct Outcome {
  std::string sql;  // the statement that ran
  std::string rendered;
  int retry_count = 0;
  QueryResult result;
};

/// Introspect, draft, verify, guard, execute; on an execution error the error
/// text goes back to the model for up to `max_repairs` rounds.
Outcome answer(std::string_view request, const std::filesystem::path& database, Backend& backend,
               const Options& options = {});

/// Settings: database (required), row_cap, max_repairs, verify.
class Text2SqlAgent : public Agent {
 public:
  Text2SqlAgent(std::filesystem::path database, std::shared_ptr<Backend> backend, Options options)
      : database_(std::move(database)), backend_(std::move(backend)), options_(options) {}

  std::string invoke(std::string_view payload, const InvocationContext& context) override;

 private:
  std::filesystem::path database_;
  std::shared_ptr<Backend> backend_;
  Options options_;
};

}  // namespace orchestra::text2sql
