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

#ifndef MGRPO_SERIALIZE_HPP_
#define MGRPO_SERIALIZE_HPP_

#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <vector>

#include "mgrpo/core.hpp"

namespace mgrpo {

using Bytes = std::vector<std::uint8_t>;

// Little-endian primitive encoding, independent of host byte order.
class ByteWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void f64s(std::span<const double> vs) {
    for (double v : vs) f64(v);
  }
  void bytes(std::span<const std::uint8_t> b) {
    u32(static_cast<std::uint32_t>(b.size()));
    buf_.insert(buf_.end(), b.begin(), b.end());
  }
  void str(const std::string& s) {
    bytes({reinterpret_cast<const std::uint8_t*>(s.data()), s.size()});
  }

  Bytes take() { return std::move(buf_); }

 private:
  Bytes buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> data) : data_(data) {}

  std::uint8_t u8() {
    need(1);
    return data_[pos_++];
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(data_[pos_++]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(data_[pos_++]) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  Bytes bytes() {
    const std::uint32_t n = u32();
    need(n);
    Bytes out(data_.begin() + static_cast<std::ptrdiff_t>(pos_),
              data_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return out;
  }
  std::string str() {
    Bytes b = bytes();
    return {b.begin(), b.end()};
  }

  bool done() const { return pos_ == data_.size(); }
  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > data_.size()) throw DataIntegrityError("truncated record");
  }

  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
};

inline constexpr std::uint32_t kTrajectoryRecordVersion = 1;

// Record layout: role u8, step count u32, output length u32, format version
// u32, then f64 arrays: [state_dim, terminated], per step
// [state..., action, behavior_logprob, reward], then the output tokens.
inline Bytes serialize_trajectory(const Trajectory& t) {
  const auto problems = validate_trajectory(t, t.role);
  if (!problems.empty()) throw ContractViolation("cannot serialize: " + problems.front());
  const std::size_t dim = t.steps.empty() ? 0 : t.steps.front().state.size();
  for (const Step& s : t.steps)
    require(s.state.size() == dim, "cannot serialize: ragged state dimension");

  ByteWriter w;
  w.u8(static_cast<std::uint8_t>(t.role));
  w.u32(static_cast<std::uint32_t>(t.steps.size()));
  w.u32(static_cast<std::uint32_t>(t.output.size()));
  w.u32(kTrajectoryRecordVersion);
  w.f64(static_cast<double>(dim));
  w.f64(t.terminated ? 1.0 : 0.0);
  for (const Step& s : t.steps) {
    w.f64s(s.state);
    w.f64(static_cast<double>(s.action));
    w.f64(s.behavior_logprob);
    w.f64(s.reward);
  }
  for (Token tok : t.output) w.f64(static_cast<double>(tok));
  return w.take();
}

inline Trajectory read_trajectory(ByteReader& r) {
  Trajectory t;
  const std::uint8_t role = r.u8();
  if (role > 1) throw DataIntegrityError("bad role byte in trajectory record");
  t.role = static_cast<Role>(role);
  const std::uint32_t n_steps = r.u32();
  const std::uint32_t n_out = r.u32();
  if (r.u32() != kTrajectoryRecordVersion)
    throw DataIntegrityError("unsupported trajectory record version");
  const auto dim = static_cast<std::size_t>(r.f64());
  t.terminated = r.f64() != 0.0;
  t.steps.resize(n_steps);
  for (Step& s : t.steps) {
    s.state.resize(dim);
    for (double& x : s.state) x = r.f64();
    s.action = static_cast<int>(r.f64());
    s.behavior_logprob = r.f64();
    s.reward = r.f64();
  }
  t.output.resize(n_out);
  for (Token& tok : t.output) tok = static_cast<Token>(r.f64());
  return t;
}

inline Trajectory deserialize_trajectory(std::span<const std::uint8_t> data) {
  ByteReader r(data);
  Trajectory t = read_trajectory(r);
  if (!r.done()) throw DataIntegrityError("trailing bytes after trajectory record");
  return t;
}

}  // namespace mgrpo

#endif  // MGRPO_SERIALIZE_HPP_
