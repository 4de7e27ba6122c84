#pragma once

#include <atomic>
#include <chrono>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "textclf/common.hpp"

namespace textclf {

// Fatal: bad credentials never become per-item errors.
class AuthError : public Error {
 public:
  using Error::Error;
};

// The one prompt this toolkit sends. Versioned by fingerprint so cache
// entries from an older template can never be served for a newer one.
inline constexpr const char* kParaphraseSystemPrompt =
    "Paraphrase the following post, preserving its meaning, tone, and any "
    "mention of symptoms or disorders. Output only the paraphrase.";

inline std::string paraphrase_prompt_fingerprint() {
  return hex64(fnv1a64(kParaphraseSystemPrompt));
}

struct ClientPolicy {
  int max_concurrent_requests = 4;
  int max_retries = 3;
  double backoff_base_seconds = 0.25;
  int requests_per_minute_cap = 60;

  void validate() const {
    if (max_concurrent_requests <= 0)
      fail("ClientPolicy: max_concurrent_requests must be positive");
    if (max_retries < 0) fail("ClientPolicy: max_retries must be nonnegative");
    if (backoff_base_seconds < 0.0) fail("ClientPolicy: backoff_base must be nonnegative");
    if (requests_per_minute_cap <= 0)
      fail("ClientPolicy: requests_per_minute_cap must be positive");
  }
};

struct ParaphraseRequest {
  std::string id;
  std::string text;
};

struct ParaphraseRecord {
  std::string source_id;
  std::string source_text;
  std::string paraphrase_text;
  std::string provider_tag;
  std::string prompt_fingerprint;
  bool ok = true;
  bool from_cache = false;
  std::string error;  // set when !ok
};

// Injectable time source so rate-limit and backoff behavior is testable
// without wall-clock waits.
struct Clock {
  std::function<double()> now;          // monotonic seconds
  std::function<void(double)> sleep;    // seconds

  static Clock real() {
    return Clock{
        [] {
          return std::chrono::duration<double>(
                     std::chrono::steady_clock::now().time_since_epoch())
              .count();
        },
        [](double s) {
          if (s > 0) std::this_thread::sleep_for(std::chrono::duration<double>(s));
        }};
  }
};

// Sliding one-minute window; acquire blocks (via the injected sleep) until a
// slot frees up. Thread-safe.
class RateLimiter {
 public:
  RateLimiter(int per_minute_cap, Clock clock)
      : cap_(static_cast<std::size_t>(per_minute_cap)), clock_(std::move(clock)) {}

  void acquire() {
    for (;;) {
      double wait = 0.0;
      {
        std::lock_guard<std::mutex> lock(mu_);
        const double now = clock_.now();
        while (!stamps_.empty() && stamps_.front() <= now - 60.0) stamps_.pop_front();
        if (stamps_.size() < cap_) {
          stamps_.push_back(now);
          return;
        }
        wait = stamps_.front() + 60.0 - now;
      }
      clock_.sleep(wait > 0.0 ? wait : 0.001);
    }
  }

 private:
  std::size_t cap_;
  Clock clock_;
  std::mutex mu_;
  std::deque<double> stamps_;
};

// ---------------------------------------------------------------------------
// Providers
// ---------------------------------------------------------------------------

class ParaphraseProvider {
 public:
  virtual ~ParaphraseProvider() = default;
  virtual std::string tag() const = 0;
  // One chat completion. Throws AuthError on fatal credential problems and
  // Error on retryable per-call failures.
  virtual std::string complete(const std::string& system_message,
                               const std::string& user_message) = 0;
};

// The deterministic offline transform behind the stub provider: shuffles the
// words of the input with a permutation seeded by the text itself.
inline std::string stub_paraphrase_transform(const std::string& text) {
  auto words = split_whitespace(text);
  auto order = shuffled_indices(words.size(), fnv1a64(text));
  std::vector<std::string> shuffled(words.size());
  for (std::size_t i = 0; i < words.size(); ++i) shuffled[i] = words[order[i]];
  return join(shuffled, " ");
}

// Offline provider; every test and dry run works without network access. It
// keeps a call log (timestamp + concurrent requests in flight at entry) so
// tests can assert the client's concurrency and rate-limit contracts.
class StubParaphraseProvider : public ParaphraseProvider {
 public:
  struct Call {
    double at = 0.0;
    int concurrent = 0;
    std::string text;
  };

  explicit StubParaphraseProvider(Clock clock = Clock::real())
      : clock_(std::move(clock)) {}

  std::string tag() const override { return "stub"; }

  std::string complete(const std::string& /*system_message*/,
                       const std::string& user_message) override {
    const int concurrent = ++in_flight_;
    {
      std::lock_guard<std::mutex> lock(mu_);
      calls_.push_back({clock_.now(), concurrent, user_message});
      max_concurrent_ = std::max(max_concurrent_, concurrent);
    }
    if (simulated_delay_seconds_ > 0.0) clock_.sleep(simulated_delay_seconds_);
    std::string result;
    bool failed = false;
    if (should_fail_) {
      std::lock_guard<std::mutex> lock(mu_);
      failed = should_fail_(user_message, attempt_counts_[user_message]++);
    }
    if (!failed) result = stub_paraphrase_transform(user_message);
    --in_flight_;
    if (failed) fail("stub provider: injected failure for '", user_message, "'");
    return result;
  }

  // Test hooks.
  void set_failure_rule(std::function<bool(const std::string&, int)> rule) {
    should_fail_ = std::move(rule);
  }
  void set_simulated_delay(double seconds) { simulated_delay_seconds_ = seconds; }

  std::vector<Call> calls() const {
    std::lock_guard<std::mutex> lock(mu_);
    return calls_;
  }
  int max_concurrent_observed() const {
    std::lock_guard<std::mutex> lock(mu_);
    return max_concurrent_;
  }

 private:
  Clock clock_;
  mutable std::mutex mu_;
  std::vector<Call> calls_;
  std::unordered_map<std::string, int> attempt_counts_;
  std::function<bool(const std::string&, int)> should_fail_;
  std::atomic<int> in_flight_{0};
  int max_concurrent_ = 0;
  double simulated_delay_seconds_ = 0.0;
};

// ---------------------------------------------------------------------------
// Cache: append-only, line-delimited JSON keyed by
// (prompt fingerprint, source-text hash). Crash-tolerant and diffable.
// ---------------------------------------------------------------------------

class ParaphraseCache {
 public:
  ParaphraseCache() = default;

  explicit ParaphraseCache(std::filesystem::path path) : path_(std::move(path)) {
    if (std::filesystem::exists(*path_)) {
      std::ifstream in(*path_);
      if (!in) fail("paraphrase cache: cannot open ", path_->string());
      std::string line;
      std::size_t lineno = 0;
      while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.contains("fp") || !j.contains("src") ||
            !j.contains("text"))
          fail("paraphrase cache corrupt: ", path_->string(), ":", lineno);
        entries_[key(j["fp"].get<std::string>(), j["src"].get<std::string>())] =
            j["text"].get<std::string>();
      }
    }
  }

  std::optional<std::string> lookup(const std::string& fingerprint,
                                    const std::string& text_hash) const {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = entries_.find(key(fingerprint, text_hash));
    if (it == entries_.end()) return std::nullopt;
    return it->second;
  }

  void store(const std::string& fingerprint, const std::string& text_hash,
             const std::string& source_id, const std::string& paraphrase,
             const std::string& provider_tag) {
    std::lock_guard<std::mutex> lock(mu_);
    entries_[key(fingerprint, text_hash)] = paraphrase;
    if (path_) {
      std::ofstream out(*path_, std::ios::app | std::ios::binary);
      if (!out) fail("paraphrase cache: cannot append to ", path_->string());
      nlohmann::json j{{"fp", fingerprint},
                       {"src", text_hash},
                       {"id", source_id},
                       {"text", paraphrase},
                       {"provider", provider_tag}};
      out << j.dump() << "\n";
    }
  }

  std::size_t size() const {
    std::lock_guard<std::mutex> lock(mu_);
    return entries_.size();
  }

 private:
  static std::string key(const std::string& fp, const std::string& src) {
    return fp + ":" + src;
  }

  mutable std::mutex mu_;
  std::unordered_map<std::string, std::string> entries_;
  std::optional<std::filesystem::path> path_;
};

// ---------------------------------------------------------------------------
// The client itself
// ---------------------------------------------------------------------------

// One record per input, in input order. Cache hits never touch the provider;
// misses go through a worker pool bounded by max_concurrent_requests and the
// per-minute cap, with exponential backoff between retries. An item that
// still fails after max_retries becomes an error record, never a silent
// drop. AuthError aborts the whole run.
inline std::vector<ParaphraseRecord> paraphrase(
    const std::vector<ParaphraseRequest>& inputs, ParaphraseProvider& provider,
    ParaphraseCache& cache, const ClientPolicy& policy,
    const Clock& clock = Clock::real()) {
  policy.validate();
  const std::string fingerprint = paraphrase_prompt_fingerprint();

  std::vector<ParaphraseRecord> records(inputs.size());
  std::vector<std::size_t> pending;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    ParaphraseRecord& rec = records[i];
    rec.source_id = inputs[i].id;
    rec.source_text = inputs[i].text;
    rec.prompt_fingerprint = fingerprint;
    rec.provider_tag = provider.tag();
    if (auto hit = cache.lookup(fingerprint, hex64(fnv1a64(inputs[i].text)))) {
      rec.paraphrase_text = *hit;
      rec.from_cache = true;
    } else {
      pending.push_back(i);
    }
  }
  if (pending.empty()) return records;

  RateLimiter limiter(policy.requests_per_minute_cap, clock);
  std::atomic<std::size_t> next{0};
  std::atomic<bool> fatal{false};
  std::mutex fatal_mu;
  std::string fatal_message;

  auto worker = [&] {
    for (;;) {
      const std::size_t slot = next.fetch_add(1);
      if (slot >= pending.size() || fatal.load()) return;
      const std::size_t i = pending[slot];
      ParaphraseRecord& rec = records[i];
      for (int attempt = 0;; ++attempt) {
        if (fatal.load()) return;
        try {
          limiter.acquire();
          rec.paraphrase_text =
              provider.complete(kParaphraseSystemPrompt, rec.source_text);
          rec.ok = true;
          rec.error.clear();
          break;
        } catch (const AuthError& e) {
          std::lock_guard<std::mutex> lock(fatal_mu);
          fatal = true;
          if (fatal_message.empty()) fatal_message = e.what();
          return;
        } catch (const Error& e) {
          if (attempt >= policy.max_retries) {
            rec.ok = false;
            rec.error = e.what();
            break;
          }
          clock.sleep(policy.backoff_base_seconds * static_cast<double>(1 << attempt));
        }
      }
    }
  };

  const std::size_t n_workers =
      std::min<std::size_t>(static_cast<std::size_t>(policy.max_concurrent_requests),
                            pending.size());
  std::vector<std::thread> pool;
  pool.reserve(n_workers);
  for (std::size_t w = 0; w < n_workers; ++w) pool.emplace_back(worker);
  for (auto& t : pool) t.join();

  if (fatal.load()) fail("paraphrase: authentication failed: ", fatal_message);

  // Persist in input order so the cache file is reproducible.
  for (std::size_t i : pending) {
    const ParaphraseRecord& rec = records[i];
    if (rec.ok)
      cache.store(fingerprint, hex64(fnv1a64(rec.source_text)), rec.source_id,
                  rec.paraphrase_text, rec.provider_tag);
  }
  return records;
}

}  // namespace textclf
