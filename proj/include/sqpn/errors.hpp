#pragma once

#include <stdexcept>
#include <string>

namespace sqpn {

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

// Thrown when interval propagation proves the upper bound of P(e) is zero.
class EvidenceImpossibleError : public Error {
 public:
  using Error::Error;
};

}  // namespace sqpn
