#pragma once

#include <compare>
#include <cstdint>
#include <limits>
#include <ostream>

namespace bsim {

// Simulated time in integer microseconds.
class SimTime {
 public:
  constexpr SimTime() = default;
  constexpr explicit SimTime(std::uint64_t us) : us_(us) {}

  static constexpr SimTime micros(std::uint64_t us) { return SimTime(us); }
  static constexpr SimTime millis(std::uint64_t ms) { return SimTime(ms * 1000); }
  static constexpr SimTime zero() { return SimTime(0); }
  static constexpr SimTime max() { return SimTime(std::numeric_limits<std::uint64_t>::max()); }

  constexpr std::uint64_t us() const { return us_; }
  constexpr double ms() const { return static_cast<double>(us_) / 1000.0; }

  constexpr auto operator<=>(const SimTime&) const = default;

  constexpr SimTime& operator+=(SimTime o) {
    us_ += o.us_;
    return *this;
  }
  friend constexpr SimTime operator+(SimTime a, SimTime b) { return SimTime(a.us_ + b.us_); }
  // Saturates at zero; simulated durations are never negative.
  friend constexpr SimTime operator-(SimTime a, SimTime b) {
    return SimTime(a.us_ > b.us_ ? a.us_ - b.us_ : 0);
  }
  friend constexpr SimTime operator*(SimTime a, std::uint64_t k) { return SimTime(a.us_ * k); }

  friend std::ostream& operator<<(std::ostream& os, SimTime t) { return os << t.us_ << "us"; }

 private:
  std::uint64_t us_ = 0;
};

namespace literals {
constexpr SimTime operator""_us(unsigned long long v) { return SimTime(v); }
constexpr SimTime operator""_ms(unsigned long long v) { return SimTime(v * 1000); }
}  // namespace literals

}  // namespace bsim
