#pragma once

#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "textclf/classifier.hpp"
#include "textclf/common.hpp"

namespace textclf {

// Deterministic memorizing backend. It learns an exact mapping from the
// source-token fingerprint to the most frequent target seen for it, and
// falls back to the globally most frequent target for unseen inputs. Loss is
// a fixed decreasing schedule. No randomness anywhere, which makes whole
// pipeline runs byte-reproducible; useful for tests and dry runs, useless
// for actual classification quality.
class MockBackend : public Backend {
 public:
  std::string name() const override { return "mock"; }

  std::vector<std::string> tokenize(const std::string& text) const override {
    return split_whitespace(text);
  }

  double train_epoch(const std::vector<std::vector<Seq2SeqPair>>& batches) override {
    ++epochs_seen_;
    for (const auto& batch : batches) {
      for (const auto& pair : batch) {
        ++memory_[fingerprint(pair.source_tokens)][pair.target_text];
        ++target_counts_[pair.target_text];
      }
    }
    return 1.0 / static_cast<double>(epochs_seen_);
  }

  std::string generate(const std::vector<std::string>& source_tokens) const override {
    auto it = memory_.find(fingerprint(source_tokens));
    if (it != memory_.end()) return argmax(it->second);
    if (!target_counts_.empty()) return argmax(target_counts_);
    return "";
  }

  std::string save_state() const override {
    std::ostringstream os;
    os << "mock\tv1\t" << epochs_seen_ << "\n";
    for (const auto& [fp, targets] : memory_)
      for (const auto& [target, count] : targets)
        os << "m\t" << fp << '\t' << detail::escape_tsv(target) << '\t' << count << "\n";
    for (const auto& [target, count] : target_counts_)
      os << "t\t" << detail::escape_tsv(target) << '\t' << count << "\n";
    return os.str();
  }

  void load_state(const std::string& blob) override {
    memory_.clear();
    target_counts_.clear();
    epochs_seen_ = 0;
    std::istringstream in(blob);
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
      auto fields = detail::split_tsv(line);
      if (first) {
        if (fields.size() != 3 || fields[0] != "mock" || fields[1] != "v1")
          fail("mock backend: unrecognized state blob");
        epochs_seen_ = std::stoul(fields[2]);
        first = false;
        continue;
      }
      if (fields.size() == 4 && fields[0] == "m") {
        memory_[fields[1]][detail::unescape_tsv(fields[2])] = std::stoul(fields[3]);
      } else if (fields.size() == 3 && fields[0] == "t") {
        target_counts_[detail::unescape_tsv(fields[1])] = std::stoul(fields[2]);
      } else {
        fail("mock backend: bad state line: ", line);
      }
    }
    if (first) fail("mock backend: empty state blob");
  }

 private:
  static std::string fingerprint(const std::vector<std::string>& tokens) {
    std::uint64_t h = 1469598103934665603ull;
    for (const auto& t : tokens) {
      h = fnv1a64(t) ^ (h * 1099511628211ull);
      h ^= 0x2545f4914f6cdd1dull;
    }
    return hex64(h);
  }

  // Highest count wins; ties go to the lexicographically smaller target so
  // results never depend on map iteration order.
  static std::string argmax(const std::map<std::string, std::size_t>& counts) {
    std::string best;
    std::size_t best_count = 0;
    for (const auto& [target, count] : counts) {
      if (count > best_count) {
        best = target;
        best_count = count;
      }
    }
    return best;
  }

  std::map<std::string, std::map<std::string, std::size_t>> memory_;
  std::map<std::string, std::size_t> target_counts_;
  std::size_t epochs_seen_ = 0;
};

}  // namespace textclf
