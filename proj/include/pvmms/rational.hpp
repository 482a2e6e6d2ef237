#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include <boost/rational.hpp>

#include "pvmms/errors.hpp"

namespace pvmms {

using Rational = boost::rational<std::int64_t>;

/// Ratio that may be +infinity (a share of 0 is satisfied by anything).
using ExtendedRational = std::optional<Rational>;

inline std::int64_t floor_of(const Rational &r) {
  std::int64_t q = r.numerator() / r.denominator();
  if (r.numerator() % r.denominator() != 0 && r.numerator() < 0)
    --q;
  return q;
}

inline std::int64_t ceil_of(const Rational &r) {
  std::int64_t q = r.numerator() / r.denominator();
  if (r.numerator() % r.denominator() != 0 && r.numerator() > 0)
    ++q;
  return q;
}

/// "p/q", or "p" when the value is an integer.
inline std::string to_string(const Rational &r) {
  if (r.denominator() == 1)
    return std::to_string(r.numerator());
  return std::to_string(r.numerator()) + "/" + std::to_string(r.denominator());
}

inline std::string to_string(const ExtendedRational &r) {
  return r ? to_string(*r) : std::string("inf");
}

/// Accepts "p", "p/q" and "inf".
inline ExtendedRational parse_extended_rational(const std::string &text) {
  if (text == "inf")
    return std::nullopt;
  try {
    std::size_t slash = text.find('/');
    std::size_t used = 0;
    if (slash == std::string::npos) {
      std::int64_t p = std::stoll(text, &used);
      if (used != text.size())
        throw InvalidArgument("bad rational: " + text);
      return Rational(p);
    }
    std::string ps = text.substr(0, slash);
    std::string qs = text.substr(slash + 1);
    std::int64_t p = std::stoll(ps, &used);
    if (used != ps.size())
      throw InvalidArgument("bad rational: " + text);
    std::int64_t q = std::stoll(qs, &used);
    if (used != qs.size() || q == 0)
      throw InvalidArgument("bad rational: " + text);
    return Rational(p, q);
  } catch (const std::logic_error &) {
    throw InvalidArgument("bad rational: " + text);
  }
}

/// a < b with +infinity as the largest element.
inline bool ext_less(const ExtendedRational &a, const ExtendedRational &b) {
  if (!a)
    return false;
  if (!b)
    return true;
  return *a < *b;
}

} // namespace pvmms
