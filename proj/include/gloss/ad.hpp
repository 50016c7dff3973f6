#pragma once

// Scalar reverse-mode automatic differentiation.
//
// A Tape records every primitive applied to its variables as a node holding
// the value, at most two parent indices and the local partial derivatives.
// Nodes are appended in evaluation order so parents always precede children
// and a single reverse sweep accumulates adjoints.
//
// A Var without a tape is a constant; arithmetic between constants records
// nothing. Every recorded value must be finite: a primitive that leaves its
// domain or overflows throws TraceInvalid naming the primitive.

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "gloss/scalar.hpp"

namespace gloss::ad {

class TraceInvalid : public std::runtime_error {
 public:
  explicit TraceInvalid(std::string op)
      : std::runtime_error("trace invalid: non-finite result in '" + op + "'"),
        op_(std::move(op)) {}
  const std::string& op() const { return op_; }

 private:
  std::string op_;
};

class Tape;

class Var {
 public:
  Var() = default;
  Var(double v) : value_(v) {}  // NOLINT: constants convert implicitly

  double value() const { return value_; }
  bool is_constant() const { return tape_ == nullptr; }
  Tape* tape() const { return tape_; }
  std::uint32_t index() const { return index_; }

 private:
  friend class Tape;
  Var(Tape* tape, std::uint32_t index, double v)
      : tape_(tape), index_(index), value_(v) {}

  Tape* tape_ = nullptr;
  std::uint32_t index_ = 0;
  double value_ = 0.0;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// New independent (leaf) variable.
  Var variable(double v);
  std::vector<Var> variables(std::span<const double> values);

  /// d output / d input for each input, by one reverse sweep. Inputs must be
  /// leaves of this tape. Does not modify the tape.
  std::vector<double> gradient(const Var& output,
                               std::span<const Var> inputs) const;

  void clear() { nodes_.clear(); }
  void reserve(std::size_t n) { nodes_.reserve(n); }
  std::size_t size() const { return nodes_.size(); }

  // Recording primitives; used by the operator overloads below.
  static Var unary(double v, const Var& a, double da, const char* op);
  static Var binary(double v, const Var& a, double da, const Var& b, double db,
                    const char* op);

 private:
  struct Node {
    std::uint32_t parent[2];
    double partial[2];
    std::uint8_t arity;
  };

  Var push(double v, std::uint8_t arity, std::uint32_t p0, double d0,
           std::uint32_t p1, double d1);

  std::vector<Node> nodes_;
};

inline double value(const Var& x) { return x.value(); }

Var operator+(const Var& a, const Var& b);
Var operator-(const Var& a, const Var& b);
Var operator*(const Var& a, const Var& b);
Var operator/(const Var& a, const Var& b);
Var operator-(const Var& a);

Var operator+(const Var& a, double b);
Var operator+(double a, const Var& b);
Var operator-(const Var& a, double b);
Var operator-(double a, const Var& b);
Var operator*(const Var& a, double b);
Var operator*(double a, const Var& b);
Var operator/(const Var& a, double b);
Var operator/(double a, const Var& b);

inline Var& operator+=(Var& a, const Var& b) { return a = a + b; }
inline Var& operator-=(Var& a, const Var& b) { return a = a - b; }
inline Var& operator*=(Var& a, const Var& b) { return a = a * b; }
inline Var& operator/=(Var& a, const Var& b) { return a = a / b; }

inline bool operator<(const Var& a, const Var& b) { return a.value() < b.value(); }
inline bool operator>(const Var& a, const Var& b) { return a.value() > b.value(); }
inline bool operator<=(const Var& a, const Var& b) { return a.value() <= b.value(); }
inline bool operator>=(const Var& a, const Var& b) { return a.value() >= b.value(); }

Var exp(const Var& a);
Var log(const Var& a);
Var log1p(const Var& a);
Var sqrt(const Var& a);
Var pow(const Var& a, double p);
Var pow(const Var& a, const Var& p);
Var tanh(const Var& a);
Var sigmoid(const Var& a);
Var log_sum_exp(const Var& a, const Var& b);
Var lgamma(const Var& a);

inline Var log_sigmoid(const Var& a) { return -log_sum_exp(Var(0.0), -a); }

}  // namespace gloss::ad
