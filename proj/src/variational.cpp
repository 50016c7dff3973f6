#include "gloss/variational.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace gloss {

namespace {

using Base = VariantSpec::Base;
using Skew = VariantSpec::Skew;
using Fit = VariantSpec::Fit;

struct Entry {
  VariantSpec spec;
  const char* name;
  const char* slug;
};

const Entry kEntries[] = {
    {variants::kGva, "G-VA", "gva"},
    {variants::kGvaGPosthoc, "G-VA^{G-}", "gva_g_posthoc"},
    {variants::kGvaGLearned, "G-VA^{G+}", "gva_g_learned"},
    {variants::kGvaHPosthoc, "G-VA^{H-}", "gva_h_posthoc"},
    {variants::kCsgva, "CSG-VA", "csgva"},
    {variants::kCsgvaHPosthoc, "CSG-VA^{H-}", "csgva_h_posthoc"},
    {variants::kGlossva, "GLOSS-VA", "glossva"},
    // Expressible but outside the ladder.
    {{Base::kCsg, Skew::kGlobal, Fit::kPosthoc}, "CSG-VA^{G-}", "csgva_g_posthoc"},
    {{Base::kCsg, Skew::kGlobal, Fit::kLearned}, "CSG-VA^{G+}", "csgva_g_learned"},
};

std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

}  // namespace

VariantSpec VariantSpec::objective() const {
  if (!posthoc()) return *this;
  return VariantSpec{base, Skew::kNone, Fit::kLearned};
}

std::string VariantSpec::name() const {
  for (const auto& e : kEntries)
    if (e.spec == *this) return e.name;
  return "invalid";
}

std::string VariantSpec::slug() const {
  for (const auto& e : kEntries)
    if (e.spec == *this) return e.slug;
  return "invalid";
}

void VariantSpec::validate() const {
  if (base == Base::kGaussian && skew == Skew::kHierarchical && fit == Fit::kLearned) {
    throw std::invalid_argument(
        "variant: Gaussian base with learned hierarchical skew is not supported");
  }
}

VariantSpec parse_variant(const std::string& name) {
  const std::string key = lower(name);
  for (const auto& e : kEntries) {
    if (key == lower(e.name) || key == e.slug) return e.spec;
  }
  // ASCII spellings of the superscripts: G-VA^G-, gva-g+, ...
  std::string compact;
  for (char c : key)
    if (c != '{' && c != '}' && c != '^' && c != '_' && c != ' ') compact += c;
  for (const auto& e : kEntries) {
    std::string n;
    for (char c : lower(e.name))
      if (c != '{' && c != '}' && c != '^' && c != '_' && c != ' ') n += c;
    if (compact == n) return e.spec;
  }
  throw std::invalid_argument("unknown variant '" + name + "'");
}

std::vector<VariantSpec> ladder() {
  return {variants::kGva,   variants::kGvaGPosthoc,   variants::kGvaGLearned,
          variants::kGvaHPosthoc, variants::kCsgva, variants::kCsgvaHPosthoc,
          variants::kGlossva};
}

ParamLayout::ParamLayout(const ModelSignature& sig, VariantSpec::Base base)
    : d_(sig.global_dim), local_dims_(sig.local_dims), base_(base) {
  sig.validate();
  const std::size_t n = local_dims_.size();
  std::size_t off = 0;
  auto add = [&](std::string name, std::size_t rows, std::size_t cols, bool free) {
    blocks_.push_back(ParamBlock{std::move(name), off, rows, cols, free});
    off += rows * cols;
    return blocks_.back().offset;
  };
  add("mu_G", d_, 1, true);
  add("T_G*", tri_size(d_), 1, true);
  for (std::size_t i = 0; i < n; ++i)
    m_off_.push_back(add("m[" + std::to_string(i) + "]", local_dims_[i], 1, true));
  for (std::size_t i = 0; i < n; ++i)
    tgi_off_.push_back(add("T_G[" + std::to_string(i) + "]", d_, local_dims_[i], true));
  for (std::size_t i = 0; i < n; ++i)
    f_off_.push_back(add("f[" + std::to_string(i) + "]", tri_size(local_dims_[i]), 1, true));
  const bool b_free = base == VariantSpec::Base::kCsg;
  for (std::size_t i = 0; i < n; ++i)
    b_off_.push_back(add("B[" + std::to_string(i) + "]", tri_size(local_dims_[i]), d_, b_free));
  size_ = off;
}

std::size_t ParamLayout::free_count() const {
  std::size_t count = 0;
  for (const auto& b : blocks_)
    if (b.free) count += b.size();
  return count;
}

std::vector<bool> ParamLayout::free_mask() const {
  std::vector<bool> mask(size_, false);
  for (const auto& b : blocks_)
    if (b.free) std::fill(mask.begin() + b.offset, mask.begin() + b.offset + b.size(), true);
  return mask;
}

namespace {

// vec is column-major: entry (r, c) of a rows x cols block sits at c*rows + r.
template <class T>
Matrix<T> read_block(std::span<const T> flat, std::size_t offset, std::size_t rows,
                     std::size_t cols) {
  Matrix<T> m(rows, cols);
  for (std::size_t c = 0; c < cols; ++c)
    for (std::size_t r = 0; r < rows; ++r) m(r, c) = flat[offset + c * rows + r];
  return m;
}

template <class T>
void write_block(std::vector<T>& flat, std::size_t offset, const Matrix<T>& m) {
  for (std::size_t c = 0; c < m.cols(); ++c)
    for (std::size_t r = 0; r < m.rows(); ++r) flat[offset + c * m.rows() + r] = m(r, c);
}

}  // namespace

template <class T>
VariationalParams<T> unpack(const ParamLayout& layout, std::span<const T> flat) {
  if (flat.size() != layout.size()) {
    throw DimensionError("unpack: lambda has " + std::to_string(flat.size()) +
                         " entries, layout expects " + std::to_string(layout.size()));
  }
  const std::size_t d = layout.global_dim();
  VariationalParams<T> p;
  p.base = layout.base();
  p.mu_g.assign(flat.begin(), flat.begin() + static_cast<std::ptrdiff_t>(d));
  p.t_g_star = unvech<T>(flat.subspan(layout.t_g_offset(), tri_size(d)));
  p.locals.resize(layout.groups());
  for (std::size_t i = 0; i < layout.groups(); ++i) {
    const std::size_t di = layout.local_dims()[i];
    const std::size_t k = tri_size(di);
    LocalParams<T>& l = p.locals[i];
    const auto m = flat.subspan(layout.m_offset(i), di);
    l.m.assign(m.begin(), m.end());
    l.t_gi = read_block(flat, layout.t_gi_offset(i), d, di);
    const auto f = flat.subspan(layout.f_offset(i), k);
    l.f.assign(f.begin(), f.end());
    l.b = read_block(flat, layout.b_offset(i), k, d);
  }
  return p;
}

template <class T>
std::vector<T> pack(const ParamLayout& layout, const VariationalParams<T>& p) {
  std::vector<T> flat(layout.size(), T(0.0));
  const std::size_t d = layout.global_dim();
  if (p.mu_g.size() != d || p.groups() != layout.groups()) {
    throw DimensionError("pack: parameters do not match layout");
  }
  std::copy(p.mu_g.begin(), p.mu_g.end(), flat.begin());
  const auto packed = p.t_g_star.packed();
  std::copy(packed.begin(), packed.end(), flat.begin() + static_cast<std::ptrdiff_t>(d));
  for (std::size_t i = 0; i < layout.groups(); ++i) {
    const LocalParams<T>& l = p.locals[i];
    std::copy(l.m.begin(), l.m.end(), flat.begin() + static_cast<std::ptrdiff_t>(layout.m_offset(i)));
    write_block(flat, layout.t_gi_offset(i), l.t_gi);
    std::copy(l.f.begin(), l.f.end(), flat.begin() + static_cast<std::ptrdiff_t>(layout.f_offset(i)));
    write_block(flat, layout.b_offset(i), l.b);
  }
  return flat;
}

template VariationalParams<double> unpack<double>(const ParamLayout&, std::span<const double>);
template VariationalParams<ad::Var> unpack<ad::Var>(const ParamLayout&,
                                                    std::span<const ad::Var>);
template std::vector<double> pack<double>(const ParamLayout&, const VariationalParams<double>&);
template std::vector<ad::Var> pack<ad::Var>(const ParamLayout&,
                                            const VariationalParams<ad::Var>&);

namespace {

constexpr char kMagic[8] = {'G', 'L', 'O', 'S', 'S', 'L', 'A', 'M'};

std::uint64_t to_little(std::uint64_t x) {
  if constexpr (std::endian::native == std::endian::big) {
    std::uint64_t r = 0;
    for (int k = 0; k < 8; ++k) r = (r << 8) | ((x >> (8 * k)) & 0xFF);
    return r;
  }
  return x;
}

}  // namespace

void save_lambda(const std::filesystem::path& path, const LambdaFile& file) {
  if (file.lambda.size() != file.layout.size()) {
    throw DimensionError("save_lambda: lambda length does not match layout");
  }
  nlohmann::json header;
  header["variant"] = file.variant;
  header["model"] = file.model;
  header["seed"] = file.seed;
  header["base"] = file.layout.base() == VariantSpec::Base::kCsg ? "csg" : "gaussian";
  header["global_dim"] = file.layout.global_dim();
  header["local_dims"] = file.layout.local_dims();
  header["size"] = file.layout.size();
  header["free"] = file.layout.free_count();
  auto& blocks = header["blocks"] = nlohmann::json::array();
  for (const auto& b : file.layout.blocks()) {
    blocks.push_back({{"name", b.name},
                      {"offset", b.offset},
                      {"rows", b.rows},
                      {"cols", b.cols},
                      {"free", b.free}});
  }
  const std::string text = header.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out.write(kMagic, sizeof(kMagic));
  const std::uint64_t len = to_little(text.size());
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (double v : file.lambda) {
    const std::uint64_t bits = to_little(std::bit_cast<std::uint64_t>(v));
    out.write(reinterpret_cast<const char*>(&bits), sizeof(bits));
  }
  if (!out) throw std::runtime_error("failed writing '" + path.string() + "'");
}

LambdaFile load_lambda(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw std::runtime_error(path.string() + ": not a lambda file");
  }
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  len = to_little(len);
  if (!in || len > (1u << 30)) throw std::runtime_error(path.string() + ": corrupt header");
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  const auto header = nlohmann::json::parse(text);

  const auto local_dims = header.at("local_dims").get<std::vector<std::size_t>>();
  std::size_t max_local = 1;
  for (std::size_t di : local_dims) max_local = std::max(max_local, di);
  ModelSignature sig = ModelSignature::uniform(
      local_dims.size(), header.at("global_dim").get<std::size_t>(), max_local);
  sig.local_dims = local_dims;
  const auto base = header.at("base").get<std::string>() == "csg" ? VariantSpec::Base::kCsg
                                                                   : VariantSpec::Base::kGaussian;
  LambdaFile file;
  file.layout = ParamLayout(sig, base);
  file.variant = header.at("variant").get<std::string>();
  file.model = header.at("model").get<std::string>();
  file.seed = header.at("seed").get<std::uint64_t>();
  if (header.at("size").get<std::size_t>() != file.layout.size()) {
    throw std::runtime_error(path.string() + ": header size disagrees with layout");
  }
  file.lambda.resize(file.layout.size());
  for (double& v : file.lambda) {
    std::uint64_t bits = 0;
    in.read(reinterpret_cast<char*>(&bits), sizeof(bits));
    v = std::bit_cast<double>(to_little(bits));
  }
  if (!in) throw std::runtime_error(path.string() + ": truncated lambda");
  return file;
}

}  // namespace gloss
