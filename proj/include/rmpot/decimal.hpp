#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace rmpot {

enum class Rounding { HalfEven, HalfUp };

// Exact base-10 number: sign, digit string, power-of-ten exponent.
// Value = (-1)^negative * digits * 10^exponent. Always normalized: no leading
// zeros in digits, no trailing zeros (they move into the exponent), and zero
// is "0" with exponent 0 and positive sign, so equal values compare equal
// member-wise.
class Decimal {
 public:
  Decimal() = default;

  static Decimal from_int(std::int64_t v) {
    Decimal d;
    d.negative_ = v < 0;
    // avoid overflow on INT64_MIN
    auto mag = v < 0 ? static_cast<std::uint64_t>(-(v + 1)) + 1u
                     : static_cast<std::uint64_t>(v);
    d.digits_ = std::to_string(mag);
    d.normalize();
    return d;
  }

  // Accepts [+-]?digits[.digits]?([eE][+-]?digits)? with at least one digit.
  // Leading/trailing ASCII whitespace is ignored; anything else fails.
  static std::optional<Decimal> parse(std::string_view text) {
    auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; };
    while (!text.empty() && is_space(text.front())) text.remove_prefix(1);
    while (!text.empty() && is_space(text.back())) text.remove_suffix(1);
    if (text.empty()) return std::nullopt;

    Decimal d;
    std::size_t i = 0;
    if (text[i] == '+' || text[i] == '-') {
      d.negative_ = text[i] == '-';
      ++i;
    }
    std::string digits;
    int frac_len = 0;
    bool seen_digit = false;
    bool seen_point = false;
    for (; i < text.size(); ++i) {
      char c = text[i];
      if (c >= '0' && c <= '9') {
        digits.push_back(c);
        seen_digit = true;
        if (seen_point) ++frac_len;
      } else if (c == '.' && !seen_point) {
        seen_point = true;
      } else {
        break;
      }
    }
    if (!seen_digit) return std::nullopt;
    long long exp = 0;
    if (i < text.size()) {
      if (text[i] != 'e' && text[i] != 'E') return std::nullopt;
      ++i;
      auto rest = text.substr(i);
      if (!rest.empty() && rest.front() == '+') rest.remove_prefix(1);
      if (rest.empty()) return std::nullopt;
      auto [ptr, ec] = std::from_chars(rest.data(), rest.data() + rest.size(), exp);
      if (ec != std::errc{} || ptr != rest.data() + rest.size()) return std::nullopt;
      if (exp > 100000 || exp < -100000) return std::nullopt;
    }
    d.digits_ = std::move(digits);
    d.exponent_ = static_cast<int>(exp) - frac_len;
    d.normalize();
    return d;
  }

  // Shortest decimal text that round-trips the double.
  static Decimal from_double(double v) {
    if (!std::isfinite(v)) throw std::invalid_argument("Decimal::from_double: non-finite value");
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc{}) throw std::invalid_argument("Decimal::from_double: formatting failed");
    auto parsed = parse(std::string_view(buf, static_cast<std::size_t>(ptr - buf)));
    if (!parsed) throw std::invalid_argument("Decimal::from_double: unparseable");
    return *parsed;
  }

  bool is_zero() const { return digits_ == "0"; }
  bool negative() const { return negative_; }
  int exponent() const { return exponent_; }
  const std::string& digits() const { return digits_; }
  int significant_digits() const { return is_zero() ? 0 : static_cast<int>(digits_.size()); }

  Decimal abs() const {
    Decimal d = *this;
    d.negative_ = false;
    return d;
  }

  // Multiply by 10^power.
  Decimal shifted(int power) const {
    Decimal d = *this;
    if (!d.is_zero()) d.exponent_ += power;
    return d;
  }

  // Keep `n` significant digits.
  Decimal round_significant(int n, Rounding mode = Rounding::HalfEven) const {
    if (n <= 0) throw std::invalid_argument("round_significant: n must be positive");
    if (is_zero() || significant_digits() <= n) return *this;
    int drop = significant_digits() - n;
    return round_dropping(drop, mode);
  }

  // Keep `places` digits after the decimal point.
  Decimal round_places(int places, Rounding mode = Rounding::HalfUp) const {
    if (is_zero() || exponent_ >= -places) return *this;
    int drop = -places - exponent_;
    if (drop > significant_digits()) {
      // magnitude is below half a unit in the last kept place
      Decimal zero;
      return zero;
    }
    return round_dropping(drop, mode);
  }

  // Plain notation, no exponent: "72", "-0.5", "13.6875", "1200".
  std::string str() const {
    std::string out;
    if (negative_) out.push_back('-');
    if (exponent_ >= 0) {
      out += digits_;
      out.append(static_cast<std::size_t>(exponent_), '0');
      return out;
    }
    auto frac = static_cast<std::size_t>(-exponent_);
    if (digits_.size() > frac) {
      out += digits_.substr(0, digits_.size() - frac);
      out.push_back('.');
      out += digits_.substr(digits_.size() - frac);
    } else {
      out += "0.";
      out.append(frac - digits_.size(), '0');
      out += digits_;
    }
    return out;
  }

  // Exactly `places` fraction digits; the value must already be rounded to
  // at most that many places.
  std::string to_fixed(int places) const {
    Decimal r = round_places(places, Rounding::HalfUp);
    std::string s = r.str();
    if (places <= 0) return s;
    auto dot = s.find('.');
    int have = dot == std::string::npos ? 0 : static_cast<int>(s.size() - dot - 1);
    if (dot == std::string::npos) s.push_back('.');
    s.append(static_cast<std::size_t>(places - have), '0');
    return s;
  }

  long double to_long_double() const {
    std::string s = str();
    return std::strtold(s.c_str(), nullptr);
  }

  double to_double() const { return static_cast<double>(to_long_double()); }

  friend bool operator==(const Decimal& a, const Decimal& b) {
    return a.negative_ == b.negative_ && a.exponent_ == b.exponent_ && a.digits_ == b.digits_;
  }

  // Total order on exact values.
  friend int compare(const Decimal& a, const Decimal& b) {
    if (a.is_zero() && b.is_zero()) return 0;
    if (a.negative_ != b.negative_) return a.negative_ ? -1 : 1;
    int mag = compare_magnitude(a, b);
    return a.negative_ ? -mag : mag;
  }

  friend bool operator<(const Decimal& a, const Decimal& b) { return compare(a, b) < 0; }

 private:
  static int compare_magnitude(const Decimal& a, const Decimal& b) {
    if (a.is_zero()) return b.is_zero() ? 0 : -1;
    if (b.is_zero()) return 1;
    // position of the most significant digit
    long long ma = static_cast<long long>(a.digits_.size()) + a.exponent_;
    long long mb = static_cast<long long>(b.digits_.size()) + b.exponent_;
    if (ma != mb) return ma < mb ? -1 : 1;
    std::size_t n = std::max(a.digits_.size(), b.digits_.size());
    for (std::size_t i = 0; i < n; ++i) {
      char ca = i < a.digits_.size() ? a.digits_[i] : '0';
      char cb = i < b.digits_.size() ? b.digits_[i] : '0';
      if (ca != cb) return ca < cb ? -1 : 1;
    }
    return 0;
  }

  Decimal round_dropping(int drop, Rounding mode) const {
    // drop in [1, significant_digits()]
    std::string kept = digits_.substr(0, digits_.size() - static_cast<std::size_t>(drop));
    std::string_view tail(digits_.data() + kept.size(), static_cast<std::size_t>(drop));
    bool round_up = false;
    char first = tail.front();
    if (first > '5') {
      round_up = true;
    } else if (first == '5') {
      bool beyond = tail.find_first_not_of('0', 1) != std::string_view::npos;
      if (beyond || mode == Rounding::HalfUp) {
        round_up = true;
      } else {
        int last = kept.empty() ? 0 : kept.back() - '0';
        round_up = (last % 2) == 1;
      }
    }
    if (kept.empty()) kept = "0";
    if (round_up) {
      int i = static_cast<int>(kept.size()) - 1;
      while (i >= 0 && kept[static_cast<std::size_t>(i)] == '9') {
        kept[static_cast<std::size_t>(i)] = '0';
        --i;
      }
      if (i < 0) {
        kept.insert(kept.begin(), '1');
      } else {
        ++kept[static_cast<std::size_t>(i)];
      }
    }
    Decimal d;
    d.negative_ = negative_;
    d.digits_ = std::move(kept);
    d.exponent_ = exponent_ + drop;
    d.normalize();
    return d;
  }

  void normalize() {
    auto nz = digits_.find_first_not_of('0');
    if (nz == std::string::npos) {
      digits_ = "0";
      exponent_ = 0;
      negative_ = false;
      return;
    }
    digits_.erase(0, nz);
    auto last = digits_.find_last_not_of('0');
    auto trailing = digits_.size() - 1 - last;
    if (trailing > 0) {
      digits_.erase(last + 1);
      exponent_ += static_cast<int>(trailing);
    }
  }

  bool negative_ = false;
  std::string digits_ = "0";
  int exponent_ = 0;
};

// One-decimal percentage of an exact fraction num/den, rounded half-up:
// 7/16 -> "43.8".
inline std::string format_percent(std::int64_t num, std::int64_t den) {
  if (den <= 0) throw std::invalid_argument("format_percent: denominator must be positive");
  bool neg = num < 0;
  // tenths of a percent, scaled by 2 so the half-up step stays integral
  __int128 scaled = static_cast<__int128>(neg ? -num : num) * 2000 + den;
  __int128 tenths = scaled / (2 * static_cast<__int128>(den));
  auto t = static_cast<long long>(tenths);
  std::string out = (neg && t != 0) ? "-" : "";
  out += std::to_string(t / 10) + "." + std::to_string(t % 10);
  return out;
}

// One-decimal percentage of an exact decimal fraction: 0.804 -> "80.4".
inline std::string format_percent(const Decimal& fraction) {
  return fraction.shifted(2).round_places(1, Rounding::HalfUp).to_fixed(1);
}

}  // namespace rmpot
