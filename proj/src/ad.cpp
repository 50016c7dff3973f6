#include "gloss/ad.hpp"

#include <cmath>
#include <limits>

namespace gloss::ad {

namespace {

constexpr std::uint32_t kNoParent = std::numeric_limits<std::uint32_t>::max();

void check_finite(double v, const char* op) {
  if (!std::isfinite(v)) throw TraceInvalid(op);
}

}  // namespace

Var Tape::push(double v, std::uint8_t arity, std::uint32_t p0, double d0,
               std::uint32_t p1, double d1) {
  const auto index = static_cast<std::uint32_t>(nodes_.size());
  nodes_.push_back(Node{{p0, p1}, {d0, d1}, arity});
  return Var(this, index, v);
}

Var Tape::variable(double v) {
  check_finite(v, "variable");
  return push(v, 0, kNoParent, 0.0, kNoParent, 0.0);
}

std::vector<Var> Tape::variables(std::span<const double> values) {
  std::vector<Var> out;
  out.reserve(values.size());
  for (double v : values) out.push_back(variable(v));
  return out;
}

Var Tape::unary(double v, const Var& a, double da, const char* op) {
  check_finite(v, op);
  if (a.is_constant()) return Var(v);
  return a.tape_->push(v, 1, a.index_, da, kNoParent, 0.0);
}

Var Tape::binary(double v, const Var& a, double da, const Var& b, double db,
                 const char* op) {
  check_finite(v, op);
  if (a.is_constant()) {
    if (b.is_constant()) return Var(v);
    return b.tape_->push(v, 1, b.index_, db, kNoParent, 0.0);
  }
  if (b.is_constant()) return a.tape_->push(v, 1, a.index_, da, kNoParent, 0.0);
  if (a.tape_ != b.tape_) {
    throw std::logic_error("ad: operands recorded on different tapes");
  }
  return a.tape_->push(v, 2, a.index_, da, b.index_, db);
}

std::vector<double> Tape::gradient(const Var& output,
                                   std::span<const Var> inputs) const {
  std::vector<double> out(inputs.size(), 0.0);
  if (output.is_constant()) return out;
  if (output.tape_ != this || output.index_ >= nodes_.size()) {
    throw std::invalid_argument("gradient: output is not recorded on this tape");
  }
  for (const Var& in : inputs) {
    if (in.is_constant()) continue;
    if (in.tape_ != this || in.index_ >= nodes_.size() ||
        nodes_[in.index_].arity != 0) {
      throw std::invalid_argument("gradient: input is not a leaf of this tape");
    }
  }
  std::vector<double> adjoint(output.index_ + 1, 0.0);
  adjoint[output.index_] = 1.0;
  for (std::size_t k = output.index_ + 1; k-- > 0;) {
    const double a = adjoint[k];
    if (a == 0.0) continue;
    const Node& node = nodes_[k];
    if (node.arity >= 1) adjoint[node.parent[0]] += a * node.partial[0];
    if (node.arity == 2) adjoint[node.parent[1]] += a * node.partial[1];
  }
  for (std::size_t j = 0; j < inputs.size(); ++j) {
    const Var& in = inputs[j];
    if (!in.is_constant() && in.index_ <= output.index_) out[j] = adjoint[in.index_];
  }
  return out;
}

Var operator+(const Var& a, const Var& b) {
  return Tape::binary(a.value() + b.value(), a, 1.0, b, 1.0, "add");
}
Var operator-(const Var& a, const Var& b) {
  return Tape::binary(a.value() - b.value(), a, 1.0, b, -1.0, "sub");
}
Var operator*(const Var& a, const Var& b) {
  return Tape::binary(a.value() * b.value(), a, b.value(), b, a.value(), "mul");
}
Var operator/(const Var& a, const Var& b) {
  const double inv = 1.0 / b.value();
  const double v = a.value() * inv;
  return Tape::binary(v, a, inv, b, -v * inv, "div");
}
Var operator-(const Var& a) { return Tape::unary(-a.value(), a, -1.0, "neg"); }

Var operator+(const Var& a, double b) {
  return Tape::unary(a.value() + b, a, 1.0, "add");
}
Var operator+(double a, const Var& b) { return b + a; }
Var operator-(const Var& a, double b) {
  return Tape::unary(a.value() - b, a, 1.0, "sub");
}
Var operator-(double a, const Var& b) {
  return Tape::unary(a - b.value(), b, -1.0, "sub");
}
Var operator*(const Var& a, double b) {
  return Tape::unary(a.value() * b, a, b, "mul");
}
Var operator*(double a, const Var& b) { return b * a; }
Var operator/(const Var& a, double b) {
  return Tape::unary(a.value() / b, a, 1.0 / b, "div");
}
Var operator/(double a, const Var& b) {
  const double inv = 1.0 / b.value();
  const double v = a * inv;
  return Tape::unary(v, b, -v * inv, "div");
}

Var exp(const Var& a) {
  const double v = std::exp(a.value());
  return Tape::unary(v, a, v, "exp");
}

Var log(const Var& a) {
  if (!(a.value() > 0.0)) throw TraceInvalid("log");
  return Tape::unary(std::log(a.value()), a, 1.0 / a.value(), "log");
}

Var log1p(const Var& a) {
  if (!(a.value() > -1.0)) throw TraceInvalid("log1p");
  return Tape::unary(std::log1p(a.value()), a, 1.0 / (1.0 + a.value()), "log1p");
}

Var sqrt(const Var& a) {
  if (!(a.value() > 0.0)) throw TraceInvalid("sqrt");
  const double v = std::sqrt(a.value());
  return Tape::unary(v, a, 0.5 / v, "sqrt");
}

Var pow(const Var& a, double p) {
  const double x = a.value();
  return Tape::unary(std::pow(x, p), a, p * std::pow(x, p - 1.0), "pow");
}

Var pow(const Var& a, const Var& p) {
  const double x = a.value();
  if (!(x > 0.0)) throw TraceInvalid("pow");
  const double v = std::pow(x, p.value());
  return Tape::binary(v, a, p.value() * v / x, p, v * std::log(x), "pow");
}

Var tanh(const Var& a) {
  const double v = std::tanh(a.value());
  return Tape::unary(v, a, 1.0 - v * v, "tanh");
}

Var sigmoid(const Var& a) {
  const double v = gloss::sigmoid(a.value());
  return Tape::unary(v, a, v * (1.0 - v), "sigmoid");
}

Var log_sum_exp(const Var& a, const Var& b) {
  const double v = gloss::log_sum_exp(a.value(), b.value());
  const double wa = std::exp(a.value() - v);
  const double wb = std::exp(b.value() - v);
  return Tape::binary(v, a, wa, b, wb, "log_sum_exp");
}

Var lgamma(const Var& a) {
  if (!(a.value() > 0.0)) throw TraceInvalid("lgamma");
  return Tape::unary(std::lgamma(a.value()), a, gloss::digamma(a.value()),
                     "lgamma");
}

}  // namespace gloss::ad
