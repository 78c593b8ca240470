#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace mvc {

// Each class maps onto one CLI exit category (see tools/mvcons.cpp).
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

class ValueError : public Error {
public:
    using Error::Error;
};

class NonFiniteError : public Error {
public:
    NonFiniteError(const std::string& op, uint64_t node_id)
        : Error("non-finite value produced by op '" + op + "' (node " + std::to_string(node_id) + ")"),
          op_(op),
          node_id_(node_id) {}

    const std::string& op() const { return op_; }
    uint64_t node_id() const { return node_id_; }

private:
    std::string op_;
    uint64_t node_id_;
};

class IoError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class HashMismatchError : public Error {
public:
    using Error::Error;
};

}  // namespace mvc
