#ifndef PCPKIT_NUMBERS_HPP_
#define PCPKIT_NUMBERS_HPP_

#include <boost/multiprecision/cpp_int.hpp>

#include <string>

#include <json.hpp>

#include "pcpkit/errors.hpp"

namespace pcpkit {

using BigInt = boost::multiprecision::cpp_int;
using Rational = boost::multiprecision::cpp_rational;

inline double to_double(const Rational& r) { return r.convert_to<double>(); }
inline double to_double(const BigInt& n) { return n.convert_to<double>(); }

/* JSON form of an exact rational: {"num": "...", "den": "..."} with decimal
 * string payloads so arbitrary precision survives the round trip. */
inline nlohmann::json rational_to_json(const Rational& r) {
  return nlohmann::json{{"num", boost::multiprecision::numerator(r).str()},
                        {"den", boost::multiprecision::denominator(r).str()}};
}

inline Rational rational_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("num") || !j.contains("den"))
    throw domain_error("rational JSON must be an object with num/den strings");
  const BigInt num(j.at("num").get<std::string>());
  const BigInt den(j.at("den").get<std::string>());
  if (den == 0) throw domain_error("rational JSON with zero denominator");
  return Rational(num, den);
}

}  // namespace pcpkit

#endif
