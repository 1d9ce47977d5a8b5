#pragma once

#include <boost/multiprecision/cpp_int.hpp>

namespace trackhom {

using Integer = boost::multiprecision::cpp_int;

inline Integer int_gcd(Integer a, Integer b) {
  if (a < 0) a = -a;
  if (b < 0) b = -b;
  while (b != 0) {
    Integer t = a % b;
    a = b;
    b = t;
  }
  return a;
}

inline Integer int_lcm(const Integer& a, const Integer& b) {
  if (a == 0 || b == 0) return 0;
  Integer g = int_gcd(a, b);
  Integer r = (a / g) * b;
  return r < 0 ? Integer(-r) : r;
}

// g = gcd(a,b) with x*a + y*b = g, g >= 0.
inline Integer ext_gcd(const Integer& a, const Integer& b, Integer& x, Integer& y) {
  Integer r0 = a, r1 = b;
  Integer x0 = 1, x1 = 0, y0 = 0, y1 = 1;
  while (r1 != 0) {
    Integer q = r0 / r1;
    Integer r2 = r0 - q * r1;
    Integer x2 = x0 - q * x1;
    Integer y2 = y0 - q * y1;
    r0 = r1; r1 = r2;
    x0 = x1; x1 = x2;
    y0 = y1; y1 = y2;
  }
  if (r0 < 0) {
    r0 = -r0; x0 = -x0; y0 = -y0;
  }
  x = x0; y = y0;
  return r0;
}

// Euclidean remainder in [0, |m|); m == 0 leaves v unchanged.
inline Integer mod_floor(const Integer& v, const Integer& m) {
  if (m == 0) return v;
  Integer mm = m < 0 ? Integer(-m) : m;
  Integer r = v % mm;
  if (r < 0) r += mm;
  return r;
}

}  // namespace trackhom
