#pragma once

#include <stdexcept>
#include <string>

namespace mmcl {

// Shape disagreement between operands of a tensor op.
class DimensionError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Math domain violation (log of non-positive, negative probability, ...).
class DomainError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// API misuse: backward on a non-scalar, missing snapshot entry, ...
class ContractError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Non-finite values where finite ones are required.
class NumericError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Id outside a lookup table or vocabulary.
class IndexError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Dataset text that does not follow the expected layout.
class ParseError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// A slot tag that is neither O nor B-/I- prefixed.
class TagError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Config file problems: unknown key, unparsable value.
class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

}  // namespace mmcl
