#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "textclf/common.hpp"

namespace textclf {

struct Bm25Params {
  double k1 = 1.2;
  double b = 0.75;

  void validate() const {
    if (k1 < 0.0) fail("Bm25Params: k1 must be nonnegative, got ", k1);
    if (b < 0.0 || b > 1.0) fail("Bm25Params: b must lie in [0,1], got ", b);
  }
};

// Retrieval-side analyzer: case folding plus splitting on non-alphanumeric
// runs. This is deliberately separate from model inputs, which stay raw.
inline std::vector<std::string> bm25_analyze(const std::string& text) {
  std::vector<std::string> tokens;
  std::string current;
  for (unsigned char c : text) {
    if (std::isalnum(c)) {
      current += static_cast<char>(std::tolower(c));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

// Okapi BM25 with the nonnegative idf variant
//   idf(t) = ln(1 + (N - df + 0.5) / (df + 0.5))
// so every score is >= 0 and a zero score means "no query term present".
// Immutable once built; scoring is const and safely concurrent.
class Bm25Index {
 public:
  Bm25Index() { params_.validate(); }

  template <typename Analyzer>
  static Bm25Index build(const std::vector<std::pair<std::string, std::string>>& docs,
                         const Bm25Params& params, Analyzer&& analyze) {
    params.validate();
    Bm25Index index;
    index.params_ = params;
    std::unordered_set<std::string> seen;
    std::size_t total_len = 0;
    for (const auto& [id, text] : docs) {
      if (!seen.insert(id).second) fail("bm25 build: duplicate doc id '", id, "'");
      const std::size_t doc = index.doc_ids_.size();
      index.doc_ids_.push_back(id);
      std::unordered_map<std::string, std::size_t> tf;
      std::size_t len = 0;
      for (std::string& tok : analyze(text)) {
        ++tf[std::move(tok)];
        ++len;
      }
      index.doc_lens_.push_back(len);
      total_len += len;
      for (auto& [term, count] : tf)
        index.postings_[term].push_back({static_cast<std::uint32_t>(doc),
                                         static_cast<std::uint32_t>(count)});
      index.doc_terms_.push_back(std::move(tf));
    }
    for (auto& [term, plist] : index.postings_)
      std::sort(plist.begin(), plist.end(),
                [](const Posting& a, const Posting& b) { return a.doc < b.doc; });
    index.avg_doc_len_ =
        index.doc_ids_.empty() ? 0.0
                               : static_cast<double>(total_len) /
                                     static_cast<double>(index.doc_ids_.size());
    return index;
  }

  std::size_t doc_count() const { return doc_ids_.size(); }
  double avg_doc_len() const { return avg_doc_len_; }
  const Bm25Params& params() const { return params_; }
  const std::string& doc_id(std::size_t doc) const { return doc_ids_.at(doc); }

  std::size_t doc_len(std::size_t doc) const {
    if (doc >= doc_lens_.size()) fail("bm25: doc ref ", doc, " out of range");
    return doc_lens_[doc];
  }

  std::size_t doc_freq(const std::string& term) const {
    auto it = postings_.find(term);
    return it == postings_.end() ? 0 : it->second.size();
  }

  std::size_t term_freq(std::size_t doc, const std::string& term) const {
    if (doc >= doc_terms_.size()) fail("bm25: doc ref ", doc, " out of range");
    auto it = doc_terms_[doc].find(term);
    return it == doc_terms_[doc].end() ? 0 : it->second;
  }

  double idf(const std::string& term) const {
    const double n = static_cast<double>(doc_count());
    const double df = static_cast<double>(doc_freq(term));
    return std::log(1.0 + (n - df + 0.5) / (df + 0.5));
  }

  // Sum over query term occurrences; repeated query terms contribute once
  // per occurrence.
  double score(const std::vector<std::string>& query, std::size_t doc) const {
    if (doc >= doc_count()) fail("bm25: doc ref ", doc, " out of range");
    const double dl = static_cast<double>(doc_lens_[doc]);
    const double norm =
        1.0 - params_.b + (avg_doc_len_ > 0.0 ? params_.b * dl / avg_doc_len_ : 0.0);
    double total = 0.0;
    for (const std::string& term : query) {
      const double tf = static_cast<double>(term_freq(doc, term));
      if (tf == 0.0) continue;
      total += idf(term) * (tf * (params_.k1 + 1.0)) / (tf + params_.k1 * norm);
    }
    return total;
  }

  // The k best documents, descending by score with ties (including the
  // zero-score tail) broken by ascending id. Deterministic by construction.
  std::vector<std::pair<std::string, double>> top_k(
      const std::vector<std::string>& query, std::size_t k) const {
    if (k == 0) fail("bm25 top_k: k must be >= 1");
    std::vector<std::pair<std::string, double>> ranked;
    ranked.reserve(doc_count());
    for (std::size_t doc = 0; doc < doc_count(); ++doc)
      ranked.emplace_back(doc_ids_[doc], score(query, doc));
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
      if (a.second != b.second) return a.second > b.second;
      return a.first < b.first;
    });
    if (ranked.size() > k) ranked.resize(k);
    return ranked;
  }

  // Inspection dump; line-delimited, not a stability-guaranteed format.
  void dump(std::ostream& out) const {
    out << "bm25\tv1\n";
    out << "params\t" << params_.k1 << '\t' << params_.b << '\n';
    out << "docs\t" << doc_count() << '\n';
    for (std::size_t d = 0; d < doc_count(); ++d)
      out << "doc\t" << d << '\t' << detail::escape_tsv(doc_ids_[d]) << '\t'
          << doc_lens_[d] << '\n';
    for (std::size_t d = 0; d < doc_count(); ++d) {
      std::vector<std::pair<std::string, std::size_t>> terms(doc_terms_[d].begin(),
                                                             doc_terms_[d].end());
      std::sort(terms.begin(), terms.end());
      for (const auto& [term, tf] : terms)
        out << "tf\t" << d << '\t' << detail::escape_tsv(term) << '\t' << tf << '\n';
    }
  }

  static Bm25Index load(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line != "bm25\tv1")
      fail("bm25 load: bad magic line");
    Bm25Index index;
    std::vector<std::pair<std::string, std::string>> dummy;
    std::size_t total_len = 0;
    while (std::getline(in, line)) {
      auto fields = detail::split_tsv(line);
      if (fields.empty()) continue;
      if (fields[0] == "params" && fields.size() == 3) {
        index.params_.k1 = std::stod(fields[1]);
        index.params_.b = std::stod(fields[2]);
        index.params_.validate();
      } else if (fields[0] == "docs" && fields.size() == 2) {
        const std::size_t n = std::stoul(fields[1]);
        index.doc_ids_.resize(n);
        index.doc_lens_.resize(n, 0);
        index.doc_terms_.resize(n);
      } else if (fields[0] == "doc" && fields.size() == 4) {
        const std::size_t d = std::stoul(fields[1]);
        if (d >= index.doc_ids_.size()) fail("bm25 load: doc index out of range");
        index.doc_ids_[d] = detail::unescape_tsv(fields[2]);
        index.doc_lens_[d] = std::stoul(fields[3]);
        total_len += index.doc_lens_[d];
      } else if (fields[0] == "tf" && fields.size() == 4) {
        const std::size_t d = std::stoul(fields[1]);
        if (d >= index.doc_terms_.size()) fail("bm25 load: doc index out of range");
        const std::string term = detail::unescape_tsv(fields[2]);
        const std::size_t tf = std::stoul(fields[3]);
        index.doc_terms_[d][term] = tf;
        index.postings_[term].push_back({static_cast<std::uint32_t>(d),
                                         static_cast<std::uint32_t>(tf)});
      } else {
        fail("bm25 load: unrecognized line: ", line);
      }
    }
    for (auto& [term, plist] : index.postings_)
      std::sort(plist.begin(), plist.end(),
                [](const Posting& a, const Posting& b) { return a.doc < b.doc; });
    index.avg_doc_len_ = index.doc_ids_.empty()
                             ? 0.0
                             : static_cast<double>(total_len) /
                                   static_cast<double>(index.doc_ids_.size());
    return index;
  }

 private:
  struct Posting {
    std::uint32_t doc;
    std::uint32_t tf;
  };

  Bm25Params params_;
  std::vector<std::string> doc_ids_;
  std::vector<std::size_t> doc_lens_;
  std::vector<std::unordered_map<std::string, std::size_t>> doc_terms_;
  std::unordered_map<std::string, std::vector<Posting>> postings_;
  double avg_doc_len_ = 0.0;
};

inline Bm25Index build_index(const std::vector<std::pair<std::string, std::string>>& docs,
                             const Bm25Params& params = {}) {
  return Bm25Index::build(docs, params, bm25_analyze);
}

}  // namespace textclf
