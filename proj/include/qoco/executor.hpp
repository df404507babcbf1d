#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "qoco/common.hpp"

namespace qoco {

/// Token bucket at the cache entrance. Capacity equals one tick of fill, so
/// unspent tokens never bank for more than a single tick.
class TokenBucket {
 public:
  explicit TokenBucket(double bytes_per_token = 1024.0) : bytes_per_token_(bytes_per_token) {
    if (!(bytes_per_token > 0.0)) throw Error("bytes_per_token must be > 0");
  }

  void set_bandwidth(double bytes_per_second, double tick_seconds) {
    if (!(bytes_per_second >= 0.0)) throw Error("bandwidth must be >= 0");
    fill_rate_ = bytes_per_second * tick_seconds / bytes_per_token_;
    capacity_ = fill_rate_;
    tokens_ = std::min(tokens_, capacity_);
  }

  void replenish() { tokens_ = std::min(capacity_, tokens_ + fill_rate_); }

  double tokens_needed(std::uint64_t size) const {
    return std::ceil(static_cast<double>(size) / bytes_per_token_);
  }

  bool can_admit(std::uint64_t size) const { return tokens_ >= tokens_needed(size); }

  bool try_admit(std::uint64_t size) {
    const double need = tokens_needed(size);
    if (tokens_ < need) return false;
    tokens_ -= need;
    return true;
  }

  double tokens() const { return tokens_; }
  double capacity() const { return capacity_; }
  double fill_rate() const { return fill_rate_; }
  double bytes_per_token() const { return bytes_per_token_; }

  // Test hook.
  void set_tokens(double t) { tokens_ = std::clamp(t, 0.0, capacity_); }

 private:
  double bytes_per_token_;
  double fill_rate_ = 0.0;
  double capacity_ = 0.0;
  double tokens_ = 0.0;
};

}  // namespace qoco
