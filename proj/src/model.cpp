#include "gloss/model.hpp"

#include <numeric>

namespace gloss {

ModelSignature ModelSignature::uniform(std::size_t groups, std::size_t global_dim,
                                       std::size_t local_dim,
                                       std::vector<std::string> global_names,
                                       std::vector<std::string> local_names) {
  ModelSignature sig;
  sig.groups = groups;
  sig.global_dim = global_dim;
  sig.local_dims.assign(groups, local_dim);
  if (global_names.empty()) {
    for (std::size_t k = 0; k < global_dim; ++k)
      global_names.push_back("theta" + std::to_string(k));
  }
  if (local_names.empty()) {
    for (std::size_t k = 0; k < local_dim; ++k) local_names.push_back(std::to_string(k));
  }
  sig.global_names = std::move(global_names);
  sig.local_names = std::move(local_names);
  return sig;
}

void ModelSignature::validate() const {
  if (global_dim < 1) throw DimensionError("signature: global dimension must be >= 1");
  if (local_dims.size() != groups) {
    throw DimensionError("signature: need one local dimension per group");
  }
  for (std::size_t di : local_dims) {
    if (di < 1) throw DimensionError("signature: local dimensions must be >= 1");
  }
  if (global_names.size() != global_dim) {
    throw DimensionError("signature: one name per global coordinate required");
  }
  for (std::size_t di : local_dims) {
    if (local_names.size() < di) {
      throw DimensionError("signature: missing local coordinate names");
    }
  }
}

std::size_t ModelSignature::total_local_dim() const {
  return std::accumulate(local_dims.begin(), local_dims.end(), std::size_t{0});
}

std::size_t ModelSignature::local_offset(std::size_t i) const {
  std::size_t off = global_dim;
  for (std::size_t k = 0; k < i; ++k) off += local_dims[k];
  return off;
}

std::vector<std::string> ModelSignature::labels() const {
  std::vector<std::string> out = global_names;
  for (std::size_t i = 0; i < groups; ++i)
    for (std::size_t k = 0; k < local_dims[i]; ++k)
      out.push_back("b[" + std::to_string(i) + "]." + local_names[k]);
  return out;
}

namespace {

template <class T>
T joint(const HierarchicalModel& model, std::span<const T> theta) {
  const ModelSignature& sig = model.signature();
  if (theta.size() != sig.total_dim()) {
    throw DimensionError("log_h_joint: theta has " + std::to_string(theta.size()) +
                         " entries, model expects " + std::to_string(sig.total_dim()));
  }
  const auto theta_g = theta.first(sig.global_dim);
  T total = model.log_prior_global(theta_g);
  std::size_t off = sig.global_dim;
  for (std::size_t i = 0; i < sig.groups; ++i) {
    total += model.log_h_local(i, theta.subspan(off, sig.local_dims[i]), theta_g);
    off += sig.local_dims[i];
  }
  return total;
}

}  // namespace

double log_h_joint(const HierarchicalModel& model, std::span<const double> theta) {
  return joint<double>(model, theta);
}

ad::Var log_h_joint(const HierarchicalModel& model, std::span<const ad::Var> theta) {
  return joint<ad::Var>(model, theta);
}

LocalGradient grad_log_h_local(const HierarchicalModel& model, std::size_t i,
                               std::span<const double> b,
                               std::span<const double> theta_g) {
  const ModelSignature& sig = model.signature();
  if (i >= sig.groups || b.size() != sig.local_dims[i] ||
      theta_g.size() != sig.global_dim) {
    throw DimensionError("grad_log_h_local: dimension mismatch");
  }
  ad::Tape tape;
  const auto bv = tape.variables(b);
  const auto gv = tape.variables(theta_g);
  const ad::Var out = model.log_h_local(i, bv, gv);
  LocalGradient g;
  g.value = out.value();
  g.d_local = tape.gradient(out, bv);
  g.d_global = tape.gradient(out, gv);
  return g;
}

std::pair<double, std::vector<double>> grad_log_h_joint(
    const HierarchicalModel& model, std::span<const double> theta) {
  ad::Tape tape;
  const auto vars = tape.variables(theta);
  const ad::Var out = joint<ad::Var>(model, vars);
  return {out.value(), tape.gradient(out, vars)};
}

}  // namespace gloss
