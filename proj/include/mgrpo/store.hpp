// Copyright 2026 The mgrpo Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Write-once key/value store shared by the two training workers.
//
// Keys are (run_id, step, query_id, rollout_k, kind) tuples. Every key can be
// written exactly once; readers block in wait() until a whole key set exists.
// MemoryStore serves threads of one process, DirectoryStore serves processes
// sharing a directory (one file per key, published with an atomic hard link).

#ifndef MGRPO_STORE_HPP_
#define MGRPO_STORE_HPP_

#include <algorithm>
#include <atomic>
#include <cctype>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <system_error>
#include <thread>
#include <tuple>
#include <vector>

#include <unistd.h>

#include "mgrpo/serialize.hpp"

namespace mgrpo {

// Payload kinds. There is deliberately no gradient kind; SubCheckpoint is
// the sub policy snapshot the main side needs to generate rollouts.
enum class StoreKind : std::uint8_t { kMainReward, kSubTrajectoryRef, kBarrier, kSubCheckpoint };

inline constexpr StoreKind kAllStoreKinds[] = {StoreKind::kMainReward, StoreKind::kSubTrajectoryRef,
                                               StoreKind::kBarrier, StoreKind::kSubCheckpoint};

inline const char* to_string(StoreKind k) {
  switch (k) {
    case StoreKind::kMainReward:
      return "MainReward";
    case StoreKind::kSubTrajectoryRef:
      return "SubTrajectoryRef";
    case StoreKind::kBarrier:
      return "Barrier";
    case StoreKind::kSubCheckpoint:
      return "SubCheckpoint";
  }
  return "?";
}

inline std::optional<StoreKind> parse_store_kind(const std::string& s) {
  for (StoreKind k : kAllStoreKinds)
    if (s == to_string(k)) return k;
  return std::nullopt;
}

struct StoreKey {
  std::string run_id;
  std::int64_t step = 0;
  std::string query_id;
  std::int64_t rollout_k = 0;
  StoreKind kind = StoreKind::kBarrier;

  auto tie() const { return std::tie(run_id, step, query_id, rollout_k, kind); }
  bool operator==(const StoreKey& o) const { return tie() == o.tie(); }
  bool operator<(const StoreKey& o) const { return tie() < o.tie(); }
};

inline std::string to_string(const StoreKey& k) {
  return k.run_id + "/" + std::to_string(k.step) + "/" + k.query_id + "/" +
         std::to_string(k.rollout_k) + "/" + to_string(k.kind);
}

class WriteOnceViolation : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Retriable: the caller may wait again.
class StoreTimeout : public std::runtime_error {
 public:
  StoreTimeout(const std::string& what, std::vector<StoreKey> missing)
      : std::runtime_error(what), missing_(std::move(missing)) {}
  const std::vector<StoreKey>& missing() const { return missing_; }

 private:
  std::vector<StoreKey> missing_;
};

// Raised inside wait() once the run has been cancelled by another worker.
class StoreCancelled : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Store {
 public:
  virtual ~Store() = default;

  // Throws WriteOnceViolation when the key already exists.
  virtual void put(const StoreKey& key, const Bytes& payload) = 0;
  virtual std::optional<Bytes> try_get(const StoreKey& key) const = 0;
  virtual std::vector<StoreKey> keys() const = 0;
  // Records that every key of (run_id, step) has been written.
  virtual void mark_step_complete(const std::string& run_id, std::int64_t step) = 0;
  virtual std::vector<std::pair<std::string, std::int64_t>> completed_steps() const = 0;

  // Blocks until every key exists, then returns all payloads. On timeout the
  // error lists the keys that are still missing.
  std::map<StoreKey, Bytes> wait(const std::vector<StoreKey>& wanted,
                                 std::chrono::milliseconds timeout) {
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    std::map<StoreKey, Bytes> found;
    std::vector<StoreKey> missing = wanted;
    for (;;) {
      std::vector<StoreKey> still;
      for (const StoreKey& k : missing) {
        if (auto v = try_get(k))
          found.emplace(k, std::move(*v));
        else
          still.push_back(k);
      }
      missing = std::move(still);
      if (missing.empty()) return found;
      if (cancelled_.load()) throw StoreCancelled("store wait cancelled");
      if (std::chrono::steady_clock::now() >= deadline) {
        std::string msg = "store wait timed out; missing " + std::to_string(missing.size()) + " key(s):";
        for (std::size_t i = 0; i < missing.size() && i < 8; ++i) msg += " " + to_string(missing[i]);
        throw StoreTimeout(msg, missing);
      }
      block_until_change(deadline);
    }
  }

  Bytes wait_one(const StoreKey& key, std::chrono::milliseconds timeout) {
    return wait({key}, timeout).begin()->second;
  }

  // Wakes every waiter and makes further waits fail fast.
  void cancel() {
    cancelled_.store(true);
    notify_all();
  }

 protected:
  virtual void block_until_change(std::chrono::steady_clock::time_point deadline) = 0;
  virtual void notify_all() {}

 private:
  std::atomic<bool> cancelled_{false};
};

class MemoryStore : public Store {
 public:
  void put(const StoreKey& key, const Bytes& payload) override {
    {
      std::lock_guard<std::mutex> lock(mu_);
      if (!data_.emplace(key, payload).second)
        throw WriteOnceViolation("key already written: " + to_string(key));
      ++generation_;
    }
    cv_.notify_all();
  }

  std::optional<Bytes> try_get(const StoreKey& key) const override {
    std::lock_guard<std::mutex> lock(mu_);
    const auto it = data_.find(key);
    if (it == data_.end()) return std::nullopt;
    return it->second;
  }

  std::vector<StoreKey> keys() const override {
    std::lock_guard<std::mutex> lock(mu_);
    std::vector<StoreKey> out;
    for (const auto& [k, v] : data_) out.push_back(k);
    return out;
  }

  void mark_step_complete(const std::string& run_id, std::int64_t step) override {
    std::lock_guard<std::mutex> lock(mu_);
    completed_.emplace_back(run_id, step);
  }

  std::vector<std::pair<std::string, std::int64_t>> completed_steps() const override {
    std::lock_guard<std::mutex> lock(mu_);
    return completed_;
  }

 protected:
  void block_until_change(std::chrono::steady_clock::time_point deadline) override {
    std::unique_lock<std::mutex> lock(mu_);
    const std::uint64_t seen = generation_;
    cv_.wait_until(lock, std::min(deadline, std::chrono::steady_clock::now() + kSlice),
                   [&] { return generation_ != seen; });
  }
  void notify_all() override {
    { std::lock_guard<std::mutex> lock(mu_); ++generation_; }
    cv_.notify_all();
  }

 private:
  static constexpr std::chrono::milliseconds kSlice{50};

  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::map<StoreKey, Bytes> data_;
  std::vector<std::pair<std::string, std::int64_t>> completed_;
  std::uint64_t generation_ = 0;
};

// Every byte outside [A-Za-z0-9_-] becomes %XX, so '.' can separate fields.
inline std::string percent_encode(const std::string& s) {
  static const char* hex = "0123456789ABCDEF";
  std::string out;
  for (unsigned char c : s) {
    if (std::isalnum(c) || c == '_' || c == '-') {
      out.push_back(static_cast<char>(c));
    } else {
      out.push_back('%');
      out.push_back(hex[c >> 4]);
      out.push_back(hex[c & 15]);
    }
  }
  return out;
}

inline std::string percent_decode(const std::string& s) {
  auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    return -1;
  };
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '%') {
      out.push_back(s[i]);
      continue;
    }
    const int hi = i + 1 < s.size() ? nibble(s[i + 1]) : -1;
    const int lo = i + 2 < s.size() ? nibble(s[i + 2]) : -1;
    if (hi < 0 || lo < 0) throw DataIntegrityError("bad percent escape in '" + s + "'");
    out.push_back(static_cast<char>(hi * 16 + lo));
    i += 2;
  }
  return out;
}

// File name: run.step.query.k.kind, each text field percent-encoded.
inline std::string key_file_name(const StoreKey& k) {
  return percent_encode(k.run_id) + "." + std::to_string(k.step) + "." + percent_encode(k.query_id) +
         "." + std::to_string(k.rollout_k) + "." + to_string(k.kind);
}

inline std::optional<StoreKey> parse_key_file_name(const std::string& name) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  for (;;) {
    const std::size_t dot = name.find('.', start);
    parts.push_back(name.substr(start, dot == std::string::npos ? std::string::npos : dot - start));
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  if (parts.size() != 5) return std::nullopt;
  const auto kind = parse_store_kind(parts[4]);
  if (!kind) return std::nullopt;
  try {
    std::size_t used = 0;
    StoreKey k;
    k.run_id = percent_decode(parts[0]);
    k.step = std::stoll(parts[1], &used);
    if (used != parts[1].size()) return std::nullopt;
    k.query_id = percent_decode(parts[2]);
    k.rollout_k = std::stoll(parts[3], &used);
    if (used != parts[3].size()) return std::nullopt;
    k.kind = *kind;
    return k;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

class DirectoryStore : public Store {
 public:
  static constexpr const char* kManifest = "MANIFEST";

  explicit DirectoryStore(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::filesystem::create_directories(dir_);
  }

  const std::filesystem::path& dir() const { return dir_; }

  void put(const StoreKey& key, const Bytes& payload) override {
    const std::filesystem::path final_path = dir_ / key_file_name(key);
    const std::filesystem::path tmp = dir_ / (".tmp-" + std::to_string(::getpid()) + "-" +
                                              std::to_string(tmp_counter_.fetch_add(1)));
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      if (!out) throw std::runtime_error("cannot write " + tmp.string());
      out.write(reinterpret_cast<const char*>(payload.data()),
                static_cast<std::streamsize>(payload.size()));
      if (!out) throw std::runtime_error("short write to " + tmp.string());
    }
    // link() fails with EEXIST if another writer got there first, and the
    // final name never refers to a partially written file.
    std::error_code ec;
    std::filesystem::create_hard_link(tmp, final_path, ec);
    std::filesystem::remove(tmp);
    if (ec == std::errc::file_exists) throw WriteOnceViolation("key already written: " + to_string(key));
    if (ec) throw std::runtime_error("cannot publish " + final_path.string() + ": " + ec.message());
  }

  std::optional<Bytes> try_get(const StoreKey& key) const override {
    std::ifstream in(dir_ / key_file_name(key), std::ios::binary);
    if (!in) return std::nullopt;
    return Bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  }

  std::vector<StoreKey> keys() const override {
    std::vector<StoreKey> out;
    for (const auto& entry : std::filesystem::directory_iterator(dir_)) {
      if (!entry.is_regular_file()) continue;
      if (auto k = parse_key_file_name(entry.path().filename().string())) out.push_back(*k);
    }
    std::sort(out.begin(), out.end());
    return out;
  }

  void mark_step_complete(const std::string& run_id, std::int64_t step) override {
    std::lock_guard<std::mutex> lock(manifest_mu_);
    std::ofstream out(dir_ / kManifest, std::ios::app);
    out << percent_encode(run_id) << '\t' << step << '\n';
    if (!out) throw std::runtime_error("cannot append to MANIFEST");
  }

  std::vector<std::pair<std::string, std::int64_t>> completed_steps() const override {
    std::vector<std::pair<std::string, std::int64_t>> out;
    std::ifstream in(dir_ / kManifest);
    std::string run;
    std::int64_t step = 0;
    while (in >> run >> step) out.emplace_back(percent_decode(run), step);
    return out;
  }

 protected:
  void block_until_change(std::chrono::steady_clock::time_point deadline) override {
    const auto wake = std::min(deadline, std::chrono::steady_clock::now() + kPoll);
    std::this_thread::sleep_until(wake);
  }

 private:
  static constexpr std::chrono::milliseconds kPoll{1};

  std::filesystem::path dir_;
  std::atomic<std::uint64_t> tmp_counter_{0};
  std::mutex manifest_mu_;
};

}  // namespace mgrpo

#endif  // MGRPO_STORE_HPP_
