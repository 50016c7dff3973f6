#pragma once

// Variational parameters lambda and the variant registry.
//
// The flat lambda vector is ordered
//   mu_G, vech(T_G*), m_1..m_n, vec(T_G1)..vec(T_Gn), f_1..f_n, vec(B_1)..vec(B_n)
// where T_Gi is d x d_i, f_i has k_i = d_i(d_i+1)/2 entries and B_i is k_i x d.
// For the Gaussian base the B_i blocks are present but frozen at zero.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "gloss/linalg.hpp"
#include "gloss/model.hpp"

namespace gloss {

struct VariantSpec {
  enum class Base { kGaussian, kCsg };
  enum class Skew { kNone, kGlobal, kHierarchical };
  enum class Fit { kPosthoc, kLearned };

  Base base = Base::kCsg;
  Skew skew = Skew::kHierarchical;
  Fit fit = Fit::kLearned;  // ignored when skew is kNone

  bool global_skew() const { return skew != Skew::kNone; }
  bool local_skew() const { return skew == Skew::kHierarchical; }
  bool posthoc() const { return skew != Skew::kNone && fit == Fit::kPosthoc; }

  /// The family whose ELBO is optimized: the unskewed base for post-hoc
  /// variants, the variant itself otherwise.
  VariantSpec objective() const;

  /// Display name, e.g. "GLOSS-VA" or "G-VA^{H-}".
  std::string name() const;
  /// Filesystem-safe name, e.g. "glossva" or "gva_h_posthoc".
  std::string slug() const;

  /// Throws std::invalid_argument for Gaussian + hierarchical + learned.
  void validate() const;

  friend bool operator==(const VariantSpec& a, const VariantSpec& b) {
    return a.base == b.base && a.skew == b.skew &&
           (a.skew == Skew::kNone || a.fit == b.fit);
  }
};

/// Accepts display names and slugs.
VariantSpec parse_variant(const std::string& name);

/// G-VA, G-VA^{G-}, G-VA^{G+}, G-VA^{H-}, CSG-VA, CSG-VA^{H-}, GLOSS-VA.
std::vector<VariantSpec> ladder();

namespace variants {
inline const VariantSpec kGva{VariantSpec::Base::kGaussian, VariantSpec::Skew::kNone,
                              VariantSpec::Fit::kLearned};
inline const VariantSpec kGvaGPosthoc{VariantSpec::Base::kGaussian,
                                      VariantSpec::Skew::kGlobal,
                                      VariantSpec::Fit::kPosthoc};
inline const VariantSpec kGvaGLearned{VariantSpec::Base::kGaussian,
                                      VariantSpec::Skew::kGlobal,
                                      VariantSpec::Fit::kLearned};
inline const VariantSpec kGvaHPosthoc{VariantSpec::Base::kGaussian,
                                      VariantSpec::Skew::kHierarchical,
                                      VariantSpec::Fit::kPosthoc};
inline const VariantSpec kCsgva{VariantSpec::Base::kCsg, VariantSpec::Skew::kNone,
                                VariantSpec::Fit::kLearned};
inline const VariantSpec kCsgvaHPosthoc{VariantSpec::Base::kCsg,
                                        VariantSpec::Skew::kHierarchical,
                                        VariantSpec::Fit::kPosthoc};
inline const VariantSpec kGlossva{VariantSpec::Base::kCsg,
                                  VariantSpec::Skew::kHierarchical,
                                  VariantSpec::Fit::kLearned};
}  // namespace variants

struct ParamBlock {
  std::string name;  // "mu_G", "T_G*", "m[3]", "T_G[3]", "f[3]", "B[3]"
  std::size_t offset = 0;
  std::size_t rows = 0;
  std::size_t cols = 1;
  bool free = true;
  std::size_t size() const { return rows * cols; }
};

class ParamLayout {
 public:
  ParamLayout() = default;
  ParamLayout(const ModelSignature& sig, VariantSpec::Base base);

  std::size_t size() const { return size_; }
  std::size_t free_count() const;
  /// One flag per flat coordinate; false for frozen coordinates.
  std::vector<bool> free_mask() const;

  const std::vector<ParamBlock>& blocks() const { return blocks_; }
  std::size_t global_dim() const { return d_; }
  const std::vector<std::size_t>& local_dims() const { return local_dims_; }
  std::size_t groups() const { return local_dims_.size(); }
  VariantSpec::Base base() const { return base_; }

  std::size_t mu_g_offset() const { return 0; }
  std::size_t t_g_offset() const { return d_; }
  std::size_t m_offset(std::size_t i) const { return m_off_[i]; }
  std::size_t t_gi_offset(std::size_t i) const { return tgi_off_[i]; }
  std::size_t f_offset(std::size_t i) const { return f_off_[i]; }
  std::size_t b_offset(std::size_t i) const { return b_off_[i]; }

  friend bool operator==(const ParamLayout& a, const ParamLayout& b) {
    return a.d_ == b.d_ && a.local_dims_ == b.local_dims_ && a.base_ == b.base_;
  }

 private:
  std::size_t d_ = 0;
  std::vector<std::size_t> local_dims_;
  VariantSpec::Base base_ = VariantSpec::Base::kCsg;
  std::vector<std::size_t> m_off_, tgi_off_, f_off_, b_off_;
  std::vector<ParamBlock> blocks_;
  std::size_t size_ = 0;
};

template <class T>
struct LocalParams {
  std::vector<T> m;     // d_i
  Matrix<T> t_gi;       // d x d_i
  std::vector<T> f;     // k_i
  Matrix<T> b;          // k_i x d
};

template <class T>
struct VariationalParams {
  std::vector<T> mu_g;
  LowerTriangular<T> t_g_star;  // log-diagonal form of T_G
  std::vector<LocalParams<T>> locals;
  VariantSpec::Base base = VariantSpec::Base::kCsg;

  std::size_t global_dim() const { return mu_g.size(); }
  std::size_t groups() const { return locals.size(); }
};

template <class T>
VariationalParams<T> unpack(const ParamLayout& layout, std::span<const T> flat);

template <class T>
std::vector<T> pack(const ParamLayout& layout, const VariationalParams<T>& params);

/// Header metadata stored next to a flat lambda.
struct LambdaFile {
  ParamLayout layout;
  std::vector<double> lambda;
  std::string variant;  // display name
  std::string model;    // model kind
  std::uint64_t seed = 0;
};

/// Writes "GLOSSLAM", a little-endian u64 header length, a JSON header
/// describing the block layout, then the raw little-endian doubles.
void save_lambda(const std::filesystem::path& path, const LambdaFile& file);
LambdaFile load_lambda(const std::filesystem::path& path);

}  // namespace gloss
