#pragma once

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "textclf/common.hpp"

namespace textclf {

// A class label as a short string token ("0", "1", ...). Kept as a strong
// type so label strings and free-form text never mix silently.
struct Label {
  std::string value;

  friend auto operator<=>(const Label&, const Label&) = default;
};

// The declared label set of a task, its verbalizations (the target strings a
// generative model is trained to emit), and the fallback label assigned to
// generations that match no verbalization. The fallback is allowed to lie
// outside the declared set; that is a legal (if punishing) configuration.
class LabelSpace {
 public:
  LabelSpace() = default;

  LabelSpace(std::vector<Label> declared, Label default_fallback,
             std::map<Label, std::string> verbalization)
      : declared_(std::move(declared)),
        default_fallback_(std::move(default_fallback)),
        verbalization_(std::move(verbalization)) {
    if (declared_.empty()) fail("LabelSpace: declared label set is empty");
    std::unordered_set<std::string> seen_labels;
    std::unordered_set<std::string> seen_targets;
    for (const Label& l : declared_) {
      if (contains_whitespace(l.value))
        fail("LabelSpace: label '", l.value, "' contains whitespace");
      if (!seen_labels.insert(l.value).second)
        fail("LabelSpace: duplicate declared label '", l.value, "'");
      auto it = verbalization_.find(l);
      if (it == verbalization_.end())
        fail("LabelSpace: no verbalization for label '", l.value, "'");
      if (!seen_targets.insert(it->second).second)
        fail("LabelSpace: verbalization '", it->second, "' is not one-to-one");
    }
  }

  // Common case: each label verbalizes as its own string.
  static LabelSpace identity(std::vector<Label> declared, Label fallback) {
    std::map<Label, std::string> verb;
    for (const Label& l : declared) verb[l] = l.value;
    return LabelSpace(std::move(declared), std::move(fallback), std::move(verb));
  }

  const std::vector<Label>& declared() const { return declared_; }
  const Label& default_fallback() const { return default_fallback_; }

  bool contains(const Label& l) const {
    return verbalization_.find(l) != verbalization_.end();
  }

  const std::string& verbalize(const Label& l) const {
    auto it = verbalization_.find(l);
    if (it == verbalization_.end())
      fail("label '", l.value, "' is outside the declared space");
    return it->second;
  }

  // Exact match of a candidate target string against the declared
  // verbalizations; no fuzzy or prefix matching.
  std::optional<Label> match_verbalization(const std::string& target) const {
    for (const auto& [label, verb] : verbalization_)
      if (verb == target) return label;
    return std::nullopt;
  }

  friend bool operator==(const LabelSpace& a, const LabelSpace& b) {
    return a.declared_ == b.declared_ &&
           a.default_fallback_ == b.default_fallback_ &&
           a.verbalization_ == b.verbalization_;
  }

 private:
  std::vector<Label> declared_;
  Label default_fallback_;
  std::map<Label, std::string> verbalization_;
};

// One labeled (or unlabeled) text instance. `text` is stored byte-for-byte
// as ingested; no cleaning or normalization happens anywhere in the corpus
// layer.
struct Example {
  std::string id;
  std::optional<std::string> keyword;
  std::string text;
  std::optional<Label> label;
};

struct Dataset {
  std::vector<Example> examples;
  LabelSpace label_space;
  std::string split_name;

  std::size_t size() const { return examples.size(); }
};

// Checks the Dataset invariants: non-empty unique ids, present labels inside
// the declared space. Throws on violation, naming the offending example.
inline void validate_dataset(const Dataset& ds) {
  std::unordered_set<std::string> ids;
  for (std::size_t i = 0; i < ds.examples.size(); ++i) {
    const Example& ex = ds.examples[i];
    if (ex.id.empty()) fail("dataset ", ds.split_name, ": example ", i, " has empty id");
    if (!ids.insert(ex.id).second)
      fail("dataset ", ds.split_name, ": duplicate id '", ex.id, "'");
    if (ex.label && !ds.label_space.contains(*ex.label))
      fail("dataset ", ds.split_name, ": id '", ex.id, "' has label '",
           ex.label->value, "' outside the declared space");
  }
}

// ---------------------------------------------------------------------------
// CSV ingestion
// ---------------------------------------------------------------------------

// Column layout of a task's CSV delivery. The header row must match exactly:
// id column, optional keyword column, text column, then (for labeled splits)
// the label column.
struct CsvSchema {
  std::string id_column;
  std::optional<std::string> keyword_column;
  std::string text_column;
  std::string label_column = "label";

  std::vector<std::string> columns(bool with_label) const {
    std::vector<std::string> cols{id_column};
    if (keyword_column) cols.push_back(*keyword_column);
    cols.push_back(text_column);
    if (with_label) cols.push_back(label_column);
    return cols;
  }
};

namespace detail {

struct CsvRecord {
  std::vector<std::string> fields;
  std::size_t line = 0;  // 1-based physical line where the record starts
};

// RFC 4180 style parser: double-quote quoting, doubled quotes as escapes,
// embedded newlines inside quoted fields, LF or CRLF record terminators.
inline std::vector<CsvRecord> parse_csv(std::istream& in, const std::string& origin) {
  std::vector<CsvRecord> records;
  CsvRecord current;
  std::string field;
  std::size_t line = 1;
  current.line = 1;
  bool in_quotes = false;
  bool field_was_quoted = false;
  bool record_has_data = false;

  auto end_field = [&] {
    current.fields.push_back(std::move(field));
    field.clear();
    field_was_quoted = false;
  };
  auto end_record = [&] {
    end_field();
    records.push_back(std::move(current));
    current = CsvRecord{};
    current.line = line;
    record_has_data = false;
  };

  char c;
  while (in.get(c)) {
    if (in_quotes) {
      if (c == '"') {
        if (in.peek() == '"') {
          in.get(c);
          field += '"';
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++line;
        field += c;
      }
      continue;
    }
    switch (c) {
      case '"':
        if (!field.empty())
          fail(origin, ":", line, ": unexpected quote inside unquoted field");
        in_quotes = true;
        field_was_quoted = true;
        record_has_data = true;
        break;
      case ',':
        end_field();
        record_has_data = true;
        break;
      case '\r':
        break;  // swallowed; the LF that follows ends the record
      case '\n':
        ++line;
        if (record_has_data || !current.fields.empty() || !field.empty() ||
            field_was_quoted) {
          end_record();
        } else {
          current.line = line;  // skip blank line
        }
        break;
      default:
        field += c;
        record_has_data = true;
        break;
    }
  }
  if (in_quotes) fail(origin, ":", line, ": unterminated quoted field");
  if (record_has_data || !current.fields.empty() || !field.empty()) end_record();
  return records;
}

inline std::string csv_quote(const std::string& s) {
  bool needs = s.find_first_of(",\"\r\n") != std::string::npos;
  if (!needs) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out += c;
  }
  out += '"';
  return out;
}

}  // namespace detail

// Loads one split from a CSV stream. The header must equal the schema's
// column list, with or without the trailing label column (test deliveries
// omit it). An empty label or keyword cell reads back as absent. Every
// validation failure names the physical line it came from.
inline Dataset load_csv_stream(std::istream& in, const std::string& origin,
                               const CsvSchema& schema, const LabelSpace& space,
                               const std::string& split_name) {
  auto records = detail::parse_csv(in, origin);
  if (records.empty()) fail(origin, ": empty file, expected a header row");

  const auto with_label = schema.columns(true);
  const auto without_label = schema.columns(false);
  const auto& header = records.front().fields;
  bool has_label_column;
  if (header == with_label) {
    has_label_column = true;
  } else if (header == without_label) {
    has_label_column = false;
  } else {
    fail(origin, ":", records.front().line, ": malformed header [",
         join(header, ","), "], expected [", join(with_label, ","),
         "] or [", join(without_label, ","), "]");
  }

  Dataset ds;
  ds.label_space = space;
  ds.split_name = split_name;
  ds.examples.reserve(records.size() - 1);

  std::unordered_set<std::string> seen_ids;
  for (std::size_t r = 1; r < records.size(); ++r) {
    const auto& rec = records[r];
    const std::size_t expected = header.size();
    if (rec.fields.size() != expected)
      fail(origin, ":", rec.line, ": row has ", rec.fields.size(),
           " fields, expected ", expected);

    Example ex;
    std::size_t col = 0;
    ex.id = rec.fields[col++];
    if (schema.keyword_column) {
      const std::string& kw = rec.fields[col++];
      if (!kw.empty()) ex.keyword = kw;
    }
    ex.text = rec.fields[col++];
    if (has_label_column) {
      const std::string& lab = rec.fields[col++];
      if (!lab.empty()) ex.label = Label{lab};
    }

    if (ex.id.empty()) fail(origin, ":", rec.line, ": row has empty id");
    if (!seen_ids.insert(ex.id).second)
      fail(origin, ":", rec.line, ": duplicate id '", ex.id, "'");
    if (ex.label && !space.contains(*ex.label))
      fail(origin, ":", rec.line, ": label '", ex.label->value,
           "' is not in the declared label set");

    ds.examples.push_back(std::move(ex));
  }
  return ds;
}

inline Dataset load_csv(const std::filesystem::path& path, const CsvSchema& schema,
                        const LabelSpace& space, const std::string& split_name) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("cannot open csv file: ", path.string());
  return load_csv_stream(in, path.string(), schema, space, split_name);
}

// Mirror of load_csv: emits the same dialect so augmented sets can be
// inspected and re-ingested. The label column is written only when at least
// one example carries a label.
inline void write_csv_stream(std::ostream& out, const Dataset& ds,
                             const CsvSchema& schema) {
  bool any_label = false;
  for (const auto& ex : ds.examples) any_label |= ex.label.has_value();

  out << join(schema.columns(any_label), ",") << "\n";
  for (const auto& ex : ds.examples) {
    out << detail::csv_quote(ex.id);
    if (schema.keyword_column)
      out << ',' << detail::csv_quote(ex.keyword.value_or(""));
    out << ',' << detail::csv_quote(ex.text);
    if (any_label)
      out << ',' << detail::csv_quote(ex.label ? ex.label->value : "");
    out << "\n";
  }
}

inline void write_csv(const std::filesystem::path& path, const Dataset& ds,
                      const CsvSchema& schema) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail("cannot open csv file for writing: ", path.string());
  write_csv_stream(out, ds, schema);
  if (!out) fail("write failed: ", path.string());
}

// ---------------------------------------------------------------------------
// Concatenation
// ---------------------------------------------------------------------------

// All of `a` followed by all of `b`. Duplicate rows are kept; ids arriving
// from `b` that collide with anything already present get a deterministic
// "#dup", "#dup2", ... suffix so the result still has unique ids.
inline Dataset concat(const Dataset& a, const Dataset& b) {
  if (!(a.label_space == b.label_space))
    fail("concat: datasets '", a.split_name, "' and '", b.split_name,
         "' have mismatched label spaces");

  Dataset out;
  out.label_space = a.label_space;
  out.split_name = a.split_name + "+" + b.split_name;
  out.examples = a.examples;

  std::unordered_set<std::string> ids;
  for (const auto& ex : out.examples) ids.insert(ex.id);
  for (Example ex : b.examples) {
    if (!ids.insert(ex.id).second) {
      std::string base = ex.id + "#dup";
      std::string candidate = base;
      for (int n = 2; !ids.insert(candidate).second; ++n)
        candidate = base + std::to_string(n);
      ex.id = candidate;
    }
    out.examples.push_back(std::move(ex));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Long-input token window
// ---------------------------------------------------------------------------

// Over-length inputs keep their first head_len and last tail_len tokens.
struct TokenWindowPolicy {
  std::size_t max_len = 0;
  std::size_t head_len = 0;
  std::size_t tail_len = 0;

  void validate() const {
    if (max_len == 0 || head_len == 0 || tail_len == 0)
      fail("TokenWindowPolicy: lengths must be positive");
    if (head_len + tail_len != max_len)
      fail("TokenWindowPolicy: head_len (", head_len, ") + tail_len (", tail_len,
           ") != max_len (", max_len, ")");
  }

  // Keeps the 1:2 head:tail proportion of the reference 256+512=768 policy.
  static TokenWindowPolicy proportional(std::size_t max_len) {
    std::size_t head = std::max<std::size_t>(1, max_len / 3);
    return TokenWindowPolicy{max_len, head, max_len - head};
  }
};

template <typename Token>
std::vector<Token> window_tokens(const std::vector<Token>& tokens,
                                 const TokenWindowPolicy& policy) {
  policy.validate();
  if (tokens.size() <= policy.max_len) return tokens;
  std::vector<Token> out;
  out.reserve(policy.max_len);
  out.insert(out.end(), tokens.begin(),
             tokens.begin() + static_cast<std::ptrdiff_t>(policy.head_len));
  out.insert(out.end(), tokens.end() - static_cast<std::ptrdiff_t>(policy.tail_len),
             tokens.end());
  return out;
}

}  // namespace textclf
