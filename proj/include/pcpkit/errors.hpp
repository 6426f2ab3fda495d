#ifndef PCPKIT_ERRORS_HPP_
#define PCPKIT_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace pcpkit {

/* Invalid mathematical input: dimension mismatches, labels out of range,
 * malformed instances. The CLI maps this (and usage errors) to exit code 1. */
class domain_error : public std::invalid_argument {
 public:
  explicit domain_error(const std::string& what) : std::invalid_argument(what) {}
};

/* A configured cap would be exceeded: enumeration too large, table too big,
 * sampler failed to make progress. Also exit code 1 at the CLI. */
class resource_error : public std::runtime_error {
 public:
  explicit resource_error(const std::string& what) : std::runtime_error(what) {}
};

/* A checked mathematical guarantee failed to hold on concrete data. The
 * anchor is a stable kebab-case id naming the violated inequality; the CLI
 * maps this to exit code 2. */
class assertion_error : public std::runtime_error {
 public:
  assertion_error(std::string anchor_, const std::string& what)
      : std::runtime_error(anchor_ + ": " + what), anchor(std::move(anchor_)) {}
  std::string anchor;
};

}  // namespace pcpkit

#endif
