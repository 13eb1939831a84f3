#include "orchestra/agents/text2sql.hpp"

#include <sqlite3.h>

#include <algorithm>
#include <cctype>

#include "orchestra/error.hpp"
#include "orchestra/text.hpp"

namespace orchestra::text2sql {

namespace {

struct Connection {
  sqlite3* db = nullptr;
  ~Connection() {
    if (db) sqlite3_close_v2(db);
  }
};

struct Statement {
  sqlite3_stmt* stmt = nullptr;
  ~Statement() {
    if (stmt) sqlite3_finalize(stmt);
  }
};

void open_readonly(const std::filesystem::path& path, Connection& conn, ErrorKind failure) {
  if (!std::filesystem::is_regular_file(path)) {
    throw Error(failure, "database file not found: " + path.string());
  }
  if (sqlite3_open_v2(path.c_str(), &conn.db, SQLITE_OPEN_READONLY | SQLITE_OPEN_NOMUTEX, nullptr) != SQLITE_OK) {
    throw Error(failure, "cannot open database " + path.string() + ": " +
                             (conn.db ? sqlite3_errmsg(conn.db) : "out of memory"));
  }
  sqlite3_busy_timeout(conn.db, 2000);
}

std::string column_text(sqlite3_stmt* stmt, int i) {
  if (sqlite3_column_type(stmt, i) == SQLITE_NULL) return "NULL";
  const auto* p = reinterpret_cast<const char*>(sqlite3_column_text(stmt, i));
  return p ? std::string(p, static_cast<std::size_t>(sqlite3_column_bytes(stmt, i))) : std::string();
}

std::string quote_ident(const std::string& name) {
  std::string out = "\"";
  for (char c : name) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::vector<std::vector<std::string>> query_all(sqlite3* db, const std::string& sql) {
  Statement st;
  if (sqlite3_prepare_v2(db, sql.c_str(), -1, &st.stmt, nullptr) != SQLITE_OK) {
    throw Error(ErrorKind::SchemaUnavailable, std::string("schema query failed: ") + sqlite3_errmsg(db));
  }
  std::vector<std::vector<std::string>> rows;
  int rc;
  while ((rc = sqlite3_step(st.stmt)) == SQLITE_ROW) {
    std::vector<std::string> row;
    for (int i = 0; i < sqlite3_column_count(st.stmt); ++i) row.push_back(column_text(st.stmt, i));
    rows.push_back(std::move(row));
  }
  if (rc != SQLITE_DONE) {
    throw Error(ErrorKind::SchemaUnavailable, std::string("schema query failed: ") + sqlite3_errmsg(db));
  }
  return rows;
}

// Skips whitespace and comments starting at i. Returns false on an
// unterminated block comment.
bool skip_trivia(std::string_view sql, std::size_t& i) {
  while (i < sql.size()) {
    if (std::isspace(static_cast<unsigned char>(sql[i]))) {
      ++i;
    } else if (sql.substr(i, 2) == "--") {
      const auto nl = sql.find('\n', i);
      i = nl == std::string_view::npos ? sql.size() : nl + 1;
    } else if (sql.substr(i, 2) == "/*") {
      const auto end = sql.find("*/", i + 2);
      if (end == std::string_view::npos) return false;
      i = end + 2;
    } else {
      break;
    }
  }
  return true;
}

}  // namespace

SchemaDescription introspect(const std::filesystem::path& database) {
  Connection conn;
  open_readonly(database, conn, ErrorKind::SchemaUnavailable);
  SchemaDescription schema;
  const auto tables = query_all(
      conn.db, "SELECT name FROM sqlite_master WHERE type = 'table' AND name NOT LIKE 'sqlite_%' ORDER BY name");
  for (const auto& t : tables) {
    Table table{t[0], {}, {}};
    for (const auto& c : query_all(conn.db, "PRAGMA table_info(" + quote_ident(table.name) + ")")) {
      table.columns.push_back({c.at(1), c.at(2)});
    }
    for (const auto& fk : query_all(conn.db, "PRAGMA foreign_key_list(" + quote_ident(table.name) + ")")) {
      table.foreign_keys.push_back({fk.at(3), fk.at(2), fk.at(4)});
    }
    schema.tables.push_back(std::move(table));
  }
  if (schema.tables.empty()) throw Error(ErrorKind::SchemaUnavailable, "database has no tables: " + database.string());
  return schema;
}

std::string render_schema(const SchemaDescription& schema) {
  std::string out;
  for (const auto& t : schema.tables) {
    out += "TABLE " + t.name + " (";
    for (std::size_t i = 0; i < t.columns.size(); ++i) {
      if (i) out += ", ";
      out += t.columns[i].name;
      if (!t.columns[i].type.empty()) out += " " + t.columns[i].type;
    }
    out += ")\n";
    for (const auto& fk : t.foreign_keys) {
      out += "  FOREIGN KEY " + t.name + "." + fk.column + " -> " + fk.ref_table + "." + fk.ref_column + "\n";
    }
  }
  return out;
}

void guard_select(std::string_view sql) {
  std::size_t i = 0;
  if (!skip_trivia(sql, i)) throw Error(ErrorKind::NonSelectRejected, "unterminated comment");
  std::size_t kw_end = i;
  while (kw_end < sql.size() && std::isalpha(static_cast<unsigned char>(sql[kw_end]))) ++kw_end;
  const std::string keyword = text::to_lower(sql.substr(i, kw_end - i));
  if (keyword != "select") {
    throw Error(ErrorKind::NonSelectRejected,
                "only a single SELECT statement is allowed; got '" + std::string(sql.substr(i, kw_end - i)) + "'");
  }
  // Find the end of the first statement, honouring quotes and comments.
  for (std::size_t j = kw_end; j < sql.size();) {
    const char c = sql[j];
    if (c == '\'' || c == '"' || c == '`' || c == '[') {
      const char close = c == '[' ? ']' : c;
      std::size_t k = j + 1;
      for (;;) {
        if (k >= sql.size()) throw Error(ErrorKind::NonSelectRejected, "unterminated quoted text");
        if (sql[k] == close) {
          if (close != ']' && k + 1 < sql.size() && sql[k + 1] == close) {
            k += 2;  // doubled quote
            continue;
          }
          break;
        }
        ++k;
      }
      j = k + 1;
    } else if (sql.substr(j, 2) == "--" || sql.substr(j, 2) == "/*") {
      if (!skip_trivia(sql, j)) throw Error(ErrorKind::NonSelectRejected, "unterminated comment");
    } else if (c == ';') {
      std::size_t rest = j + 1;
      for (;;) {
        if (!skip_trivia(sql, rest)) throw Error(ErrorKind::NonSelectRejected, "unterminated comment");
        if (rest < sql.size() && sql[rest] == ';') {
          ++rest;
          continue;
        }
        break;
      }
      if (rest != sql.size()) throw Error(ErrorKind::NonSelectRejected, "only a single statement is allowed");
      return;
    } else {
      ++j;
    }
  }
}

std::string extract_sql(std::string_view reply) {
  const auto open = reply.find("```");
  if (open != std::string_view::npos) {
    const auto nl = reply.find('\n', open);
    const auto close = nl == std::string_view::npos ? nl : reply.find("```", nl);
    if (close != std::string_view::npos) return std::string(text::trim(reply.substr(nl + 1, close - nl - 1)));
  }
  return std::string(text::trim(reply));
}

QueryResult execute(const std::filesystem::path& database, std::string_view sql) {
  guard_select(sql);
  Connection conn;
  open_readonly(database, conn, ErrorKind::ExecutionFailed);
  Statement st;
  const char* tail = nullptr;
  if (sqlite3_prepare_v2(conn.db, sql.data(), static_cast<int>(sql.size()), &st.stmt, &tail) != SQLITE_OK) {
    throw Error(ErrorKind::ExecutionFailed, sqlite3_errmsg(conn.db));
  }
  if (!st.stmt) throw Error(ErrorKind::NonSelectRejected, "empty statement");
  if (!sqlite3_stmt_readonly(st.stmt)) throw Error(ErrorKind::NonSelectRejected, "statement is not read-only");

  QueryResult result;
  for (int i = 0; i < sqlite3_column_count(st.stmt); ++i) result.columns.emplace_back(sqlite3_column_name(st.stmt, i));
  int rc;
  while ((rc = sqlite3_step(st.stmt)) == SQLITE_ROW) {
    std::vector<std::string> row;
    for (int i = 0; i < sqlite3_column_count(st.stmt); ++i) row.push_back(column_text(st.stmt, i));
    result.rows.push_back(std::move(row));
  }
  if (rc != SQLITE_DONE) throw Error(ErrorKind::ExecutionFailed, sqlite3_errmsg(conn.db));
  return result;
}

std::string render_rows(const QueryResult& result, std::size_t row_cap) {
  if (result.columns.size() == 1 && result.rows.size() == 1) return result.rows[0][0];
  std::string out;
  for (std::size_t i = 0; i < result.columns.size(); ++i) out += (i ? " | " : "") + result.columns[i];
  const std::size_t shown = std::min(row_cap, result.rows.size());
  for (std::size_t r = 0; r < shown; ++r) {
    out += "\n";
    for (std::size_t i = 0; i < result.rows[r].size(); ++i) out += (i ? " | " : "") + result.rows[r][i];
  }
  if (shown < result.rows.size()) {
    out += "\n(" + std::to_string(result.rows.size()) + " rows, first " + std::to_string(shown) + " shown)";
  } else {
    out += "\n(" + std::to_string(result.rows.size()) + (result.rows.size() == 1 ? " row)" : " rows)");
  }
  return out;
}

namespace {

constexpr std::string_view kInstructions =
    "You translate questions about patient records into one SQLite SELECT statement.\n"
    "Use only the tables and columns below. Reply with the SQL statement only.\n\nSchema:\n";

constexpr std::string_view kVerifyPrompt =
    "Check the statement below against the schema: table names, column names, joins and filters.\n"
    "Reply with the corrected statement, or the same statement if it is already correct.\n\n";

std::string ask(Backend& backend, std::vector<Message>& conversation) {
  GenerationRequest req;
  req.messages = conversation;
  req.temperature = 0.0;
  auto result = backend.generate(req);
  conversation.push_back({Role::Assistant, result.text});
  return extract_sql(result.text);
}

}  // namespace

Outcome answer(std::string_view request, const std::filesystem::path& database, Backend& backend,
               const Options& options) {
  const auto schema = introspect(database);
  std::vector<Message> conversation = {
      {Role::System, std::string(kInstructions) + render_schema(schema)},
      {Role::User, std::string(text::trim(request))},
  };
  std::string sql = ask(backend, conversation);
  if (options.verify) {
    conversation.push_back({Role::User, std::string(kVerifyPrompt) + sql});
    sql = ask(backend, conversation);
  }

  Outcome outcome;
  for (int attempt = 0;; ++attempt) {
    guard_select(sql);
    try {
      outcome.result = execute(database, sql);
      outcome.sql = sql;
      outcome.retry_count = attempt;
      outcome.rendered = render_rows(outcome.result, options.row_cap);
      return outcome;
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::ExecutionFailed) throw;
      if (attempt >= options.max_repairs) {
        throw Error(ErrorKind::ExecutionFailed, std::string(e.what()) + " (after " + std::to_string(attempt) +
                                                    " repair round" + (attempt == 1 ? "" : "s") + ")");
      }
      conversation.push_back({Role::User, "The statement failed with: " + std::string(e.what()) +
                                              "\nReply with a corrected statement."});
      sql = ask(backend, conversation);
    }
  }
}

std::string Text2SqlAgent::invoke(std::string_view payload, const InvocationContext&) {
  if (!backend_) throw Error(ErrorKind::InvalidArgument, "text2sql agent has no backend");
  return answer(payload, database_, *backend_, options_).rendered;
}

}  // namespace orchestra::text2sql
