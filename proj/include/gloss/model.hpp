#pragma once

// The fitting contract for a two-level hierarchical model
//
//   p(theta | y)  propto  p(theta_G) * prod_i h_i(b_i | theta_G),
//   h_i(b_i | theta_G) = p(b_i | theta_G) p(y_i | b_i, theta_G).
//
// Every parameter lives on an unconstrained space; transforms and their
// Jacobians belong inside log_prior_global. Constants that do not depend on
// theta may be dropped.
//
// A full parameter vector theta is laid out as (theta_G, b_1, ..., b_n).

#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gloss/ad.hpp"
#include "gloss/linalg.hpp"

namespace gloss {

struct ModelSignature {
  std::size_t groups = 0;  // n
  std::size_t global_dim = 0;  // d
  std::vector<std::size_t> local_dims;  // d_i
  std::vector<std::string> global_names;
  std::vector<std::string> local_names;  // per-coordinate label inside b_i

  /// Signature with every group of the same local dimension.
  static ModelSignature uniform(std::size_t groups, std::size_t global_dim,
                                std::size_t local_dim,
                                std::vector<std::string> global_names = {},
                                std::vector<std::string> local_names = {});

  /// Throws DimensionError when the invariants (d >= 1, d_i >= 1, one d_i per
  /// group, label counts) do not hold. Zero groups are allowed for toy
  /// targets that only have globals.
  void validate() const;

  std::size_t total_local_dim() const;
  std::size_t total_dim() const { return global_dim + total_local_dim(); }
  std::size_t local_offset(std::size_t i) const;  // offset of b_i in theta

  /// One label per coordinate of theta: global names, then "b[i].name".
  std::vector<std::string> labels() const;
};

class HierarchicalModel {
 public:
  virtual ~HierarchicalModel() = default;

  virtual const ModelSignature& signature() const = 0;
  virtual std::string kind() const = 0;

  virtual double log_prior_global(std::span<const double> theta_g) const = 0;
  virtual ad::Var log_prior_global(std::span<const ad::Var> theta_g) const = 0;

  virtual double log_h_local(std::size_t i, std::span<const double> b,
                             std::span<const double> theta_g) const = 0;
  virtual ad::Var log_h_local(std::size_t i, std::span<const ad::Var> b,
                              std::span<const ad::Var> theta_g) const = 0;

  /// Covariance of the random-effects distribution implied by theta_G, for
  /// models that have one.
  virtual std::optional<Matrix<double>> random_effect_covariance(
      std::span<const double> /*theta_g*/) const {
    return std::nullopt;
  }
};

/// Implements both scalar overloads of the interface from templated members
///   template <class T> T prior(std::span<const T> theta_g) const;
///   template <class T> T local(std::size_t i, std::span<const T> b,
///                              std::span<const T> theta_g) const;
template <class Derived>
class ModelBase : public HierarchicalModel {
 public:
  double log_prior_global(std::span<const double> theta_g) const final {
    return self().template prior<double>(theta_g);
  }
  ad::Var log_prior_global(std::span<const ad::Var> theta_g) const final {
    return self().template prior<ad::Var>(theta_g);
  }
  double log_h_local(std::size_t i, std::span<const double> b,
                     std::span<const double> theta_g) const final {
    return self().template local<double>(i, b, theta_g);
  }
  ad::Var log_h_local(std::size_t i, std::span<const ad::Var> b,
                      std::span<const ad::Var> theta_g) const final {
    return self().template local<ad::Var>(i, b, theta_g);
  }

 private:
  const Derived& self() const { return static_cast<const Derived&>(*this); }
};

/// Model assembled from two generic callables, handy for toy targets:
///   prior(std::span<const T> theta_g) -> T
///   local(std::size_t i, std::span<const T> b, std::span<const T> theta_g) -> T
template <class PriorFn, class LocalFn>
class FunctionalModel final
    : public ModelBase<FunctionalModel<PriorFn, LocalFn>> {
 public:
  FunctionalModel(ModelSignature sig, PriorFn prior_fn, LocalFn local_fn,
                  std::string kind = "functional")
      : sig_(std::move(sig)),
        prior_fn_(std::move(prior_fn)),
        local_fn_(std::move(local_fn)),
        kind_(std::move(kind)) {
    sig_.validate();
  }

  const ModelSignature& signature() const override { return sig_; }
  std::string kind() const override { return kind_; }

  template <class T>
  T prior(std::span<const T> theta_g) const {
    return prior_fn_(theta_g);
  }
  template <class T>
  T local(std::size_t i, std::span<const T> b, std::span<const T> theta_g) const {
    return local_fn_(i, b, theta_g);
  }

 private:
  ModelSignature sig_;
  PriorFn prior_fn_;
  LocalFn local_fn_;
  std::string kind_;
};

template <class PriorFn, class LocalFn>
std::unique_ptr<HierarchicalModel> make_functional_model(
    ModelSignature sig, PriorFn prior_fn, LocalFn local_fn,
    std::string kind = "functional") {
  return std::make_unique<FunctionalModel<PriorFn, LocalFn>>(
      std::move(sig), std::move(prior_fn), std::move(local_fn), std::move(kind));
}

/// log p(theta_G) + sum_i log h_i(b_i | theta_G) for theta = (theta_G, b_1..b_n).
double log_h_joint(const HierarchicalModel& model, std::span<const double> theta);
ad::Var log_h_joint(const HierarchicalModel& model, std::span<const ad::Var> theta);

struct LocalGradient {
  double value = 0.0;
  std::vector<double> d_local;   // d/d b_i
  std::vector<double> d_global;  // d/d theta_G
};

LocalGradient grad_log_h_local(const HierarchicalModel& model, std::size_t i,
                               std::span<const double> b,
                               std::span<const double> theta_g);

/// Value and gradient of log_h_joint over the whole theta.
std::pair<double, std::vector<double>> grad_log_h_joint(
    const HierarchicalModel& model, std::span<const double> theta);

}  // namespace gloss
