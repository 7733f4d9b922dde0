#include "embattr/embedding_store.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "embattr/error.hpp"
#include "embattr/random.hpp"

namespace embattr {

namespace {

constexpr std::array<char, 4> kMagic = {'E', 'M', 'B', 'S'};
constexpr std::uint32_t kVersionPlain = 1;
constexpr std::uint32_t kVersionSupport = 2;

template <typename T>
void put_le(std::string& buf, T value) {
  using U = std::make_unsigned_t<T>;
  auto bits = static_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    buf.push_back(static_cast<char>(bits & 0xFFu));
    bits = static_cast<U>(bits >> 8);
  }
}

void put_f32(std::string& buf, float value) {
  put_le(buf, std::bit_cast<std::uint32_t>(value));
}

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  void bytes(char* dst, std::size_t n, const char* what) {
    in_.read(dst, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) {
      throw Error(Errc::truncated, std::string("EMBS stream ends inside ") + what);
    }
  }

  template <typename T>
  T le(const char* what) {
    std::array<unsigned char, sizeof(T)> raw{};
    bytes(reinterpret_cast<char*>(raw.data()), raw.size(), what);
    T value = 0;
    for (std::size_t i = sizeof(T); i-- > 0;) value = static_cast<T>((value << 8) | raw[i]);
    return value;
  }

  bool at_end() { return in_.peek() == std::char_traits<char>::eof(); }

 private:
  std::istream& in_;
};

std::vector<std::string> split_labels(const std::string& block) {
  std::vector<std::string> names;
  if (block.empty()) return names;
  std::size_t start = 0;
  while (true) {
    const auto pos = block.find('\n', start);
    names.push_back(block.substr(start, pos - start));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return names;
}

}  // namespace

LabelTable::LabelTable(std::vector<std::string> names) : names_(std::move(names)) {
  index_.reserve(names_.size());
  for (std::size_t i = 0; i < names_.size(); ++i) {
    const auto& n = names_[i];
    if (n.empty()) throw Error(Errc::validation, "empty label name at position " + std::to_string(i));
    if (n.find('\n') != std::string::npos) {
      throw Error(Errc::validation, "label name contains a newline: " + n);
    }
    if (!index_.emplace(n, static_cast<LabelId>(i)).second) {
      throw Error(Errc::validation, "duplicate label name: " + n);
    }
  }
}

const std::string& LabelTable::name(LabelId id) const {
  if (id >= names_.size()) {
    throw Error(Errc::label_out_of_range, "label id " + std::to_string(id) + " out of range");
  }
  return names_[id];
}

std::optional<LabelId> LabelTable::find(std::string_view name) const {
  const auto it = index_.find(std::string(name));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

LabelId LabelTable::id(std::string_view name) const {
  if (auto id = find(name)) return *id;
  throw Error(Errc::unknown_label, "unknown label: " + std::string(name));
}

EmbeddingSet::EmbeddingSet(std::size_t dim, LabelTable labels)
    : EmbeddingSet(dim, std::move(labels), {}, {}) {}

EmbeddingSet::EmbeddingSet(std::size_t dim, LabelTable labels, std::vector<LabelId> label_ids,
                           std::vector<float> coords)
    : dim_(dim),
      labels_(std::move(labels)),
      label_ids_(std::move(label_ids)),
      coords_(std::move(coords)) {
  if (dim_ == 0) throw Error(Errc::validation, "embedding dimension must be positive");
  if (dim_ > UINT32_MAX) throw Error(Errc::validation, "embedding dimension exceeds u32");
  if (coords_.size() != label_ids_.size() * dim_) {
    throw Error(Errc::dimension, "coordinate count does not match records x dim");
  }
  for (std::size_t i = 0; i < label_ids_.size(); ++i) {
    if (label_ids_[i] >= labels_.size()) {
      throw Error(Errc::label_out_of_range,
                  "record " + std::to_string(i) + " has label id " +
                      std::to_string(label_ids_[i]) + " outside a table of " +
                      std::to_string(labels_.size()));
    }
  }
  for (std::size_t j = 0; j < coords_.size(); ++j) {
    if (!std::isfinite(coords_[j])) {
      throw Error(Errc::non_finite, "non-finite coordinate in record " + std::to_string(j / dim_));
    }
  }
}

EmbeddingSet EmbeddingSet::from_matrix(LabelTable labels, std::vector<LabelId> label_ids,
                                       const Matrix& rows) {
  if (static_cast<std::size_t>(rows.rows()) != label_ids.size()) {
    throw Error(Errc::dimension, "row count does not match label count");
  }
  std::vector<float> coords(static_cast<std::size_t>(rows.size()));
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    for (Eigen::Index j = 0; j < rows.cols(); ++j) {
      coords[static_cast<std::size_t>(i * rows.cols() + j)] = static_cast<float>(rows(i, j));
    }
  }
  return EmbeddingSet(static_cast<std::size_t>(rows.cols()), std::move(labels),
                      std::move(label_ids), std::move(coords));
}

std::span<const float> EmbeddingSet::row(std::size_t i) const {
  if (i >= size()) throw Error(Errc::validation, "record index out of range");
  return std::span<const float>(coords_).subspan(i * dim_, dim_);
}

Vector EmbeddingSet::row_vector(std::size_t i) const {
  const auto r = row(i);
  Vector v(static_cast<Eigen::Index>(dim_));
  for (std::size_t j = 0; j < dim_; ++j) v[static_cast<Eigen::Index>(j)] = r[j];
  return v;
}

Matrix EmbeddingSet::to_matrix() const {
  Matrix m(static_cast<Eigen::Index>(size()), static_cast<Eigen::Index>(dim_));
  for (std::size_t j = 0; j < coords_.size(); ++j) m.data()[j] = coords_[j];
  return m;
}

EmbeddingSet EmbeddingSet::subset(std::span<const std::size_t> indices) const {
  std::vector<LabelId> ids;
  std::vector<float> coords;
  ids.reserve(indices.size());
  coords.reserve(indices.size() * dim_);
  for (const auto i : indices) {
    const auto r = row(i);
    ids.push_back(label_ids_[i]);
    coords.insert(coords.end(), r.begin(), r.end());
  }
  return EmbeddingSet(dim_, labels_, std::move(ids), std::move(coords));
}

std::vector<std::size_t> EmbeddingSet::class_counts() const {
  std::vector<std::size_t> counts(labels_.size(), 0);
  for (const auto id : label_ids_) ++counts[id];
  return counts;
}

bool operator==(const EmbeddingSet& a, const EmbeddingSet& b) {
  if (a.dim_ != b.dim_ || a.labels_ != b.labels_ || a.label_ids_ != b.label_ids_) return false;
  if (a.coords_.size() != b.coords_.size()) return false;
  // Bitwise, so that -0.0f and 0.0f are distinguished.
  return std::memcmp(a.coords_.data(), b.coords_.data(), a.coords_.size() * sizeof(float)) == 0;
}

void write_set(const EmbeddingSet& set, std::ostream& out,
               std::optional<std::uint32_t> k_default) {
  std::string block;
  const auto& names = set.labels().names();
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (i > 0) block.push_back('\n');
    block += names[i];
  }
  if (block.size() > UINT32_MAX) throw Error(Errc::validation, "label block exceeds u32 length");

  std::string header;
  header.append(kMagic.data(), kMagic.size());
  put_le(header, k_default ? kVersionSupport : kVersionPlain);
  put_le(header, static_cast<std::uint32_t>(set.dim()));
  put_le(header, static_cast<std::uint64_t>(set.size()));
  put_le(header, static_cast<std::uint32_t>(block.size()));
  header += block;
  if (k_default) put_le(header, *k_default);
  out.write(header.data(), static_cast<std::streamsize>(header.size()));

  std::string rec;
  rec.reserve(4 + 4 * set.dim());
  for (std::size_t i = 0; i < set.size(); ++i) {
    rec.clear();
    put_le(rec, set.label_id(i));
    for (const float x : set.row(i)) put_f32(rec, x);
    out.write(rec.data(), static_cast<std::streamsize>(rec.size()));
  }
  if (!out) throw Error(Errc::io, "failed writing EMBS stream");
}

EmbsContents read_embs(std::istream& in) {
  Reader r(in);
  std::array<char, 4> magic{};
  r.bytes(magic.data(), magic.size(), "magic");
  if (magic != kMagic) throw Error(Errc::bad_magic, "stream does not start with EMBS magic");

  const auto version = r.le<std::uint32_t>("version");
  if (version != kVersionPlain && version != kVersionSupport) {
    throw Error(Errc::unsupported_version, "unsupported EMBS version " + std::to_string(version));
  }
  const auto dim = r.le<std::uint32_t>("dim");
  const auto count = r.le<std::uint64_t>("count");
  const auto block_len = r.le<std::uint32_t>("label block length");
  if (dim == 0) throw Error(Errc::validation, "EMBS dim is zero");

  std::string block(block_len, '\0');
  r.bytes(block.data(), block.size(), "label block");
  LabelTable labels(split_labels(block));

  std::optional<std::uint32_t> k_default;
  if (version == kVersionSupport) k_default = r.le<std::uint32_t>("k_default");

  std::vector<LabelId> ids;
  std::vector<float> coords;
  // Grow as records arrive; a corrupt count must not trigger a huge allocation.
  constexpr std::uint64_t kReserveCap = 1u << 16;
  ids.reserve(static_cast<std::size_t>(std::min(count, kReserveCap)));
  coords.reserve(static_cast<std::size_t>(std::min(count, kReserveCap)) * dim);

  std::vector<char> raw(4 * static_cast<std::size_t>(dim));
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto id = r.le<std::uint32_t>("record label");
    if (id >= labels.size()) {
      throw Error(Errc::label_out_of_range, "record " + std::to_string(i) + " has label id " +
                                                std::to_string(id) + " outside a table of " +
                                                std::to_string(labels.size()));
    }
    r.bytes(raw.data(), raw.size(), "record vector");
    ids.push_back(id);
    for (std::size_t j = 0; j < dim; ++j) {
      std::uint32_t bits = 0;
      for (std::size_t b = 4; b-- > 0;) {
        bits = (bits << 8) | static_cast<unsigned char>(raw[4 * j + b]);
      }
      const float x = std::bit_cast<float>(bits);
      if (!std::isfinite(x)) {
        throw Error(Errc::non_finite, "non-finite coordinate in record " + std::to_string(i));
      }
      coords.push_back(x);
    }
  }
  if (!r.at_end()) throw Error(Errc::validation, "trailing bytes after the declared records");

  return {EmbeddingSet(dim, std::move(labels), std::move(ids), std::move(coords)), k_default};
}

EmbeddingSet read_set(std::istream& in) { return read_embs(in).set; }

void save_set(const EmbeddingSet& set, const std::filesystem::path& path,
              std::optional<std::uint32_t> k_default) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::io, "cannot open " + path.string() + " for writing");
  write_set(set, out, k_default);
  out.close();
  if (!out) throw Error(Errc::io, "failed closing " + path.string());
}

EmbsContents load_embs(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io, "cannot open " + path.string());
  return read_embs(in);
}

EmbeddingSet load_set(const std::filesystem::path& path) { return load_embs(path).set; }

Partition partition(const EmbeddingSet& set, std::span<const LabelId> label_ids,
                    std::optional<std::size_t> per_class_cap, std::uint64_t seed) {
  std::vector<LabelId> wanted(label_ids.begin(), label_ids.end());
  std::sort(wanted.begin(), wanted.end());
  wanted.erase(std::unique(wanted.begin(), wanted.end()), wanted.end());
  for (const auto id : wanted) {
    if (id >= set.labels().size()) {
      throw Error(Errc::unknown_label, "label id " + std::to_string(id) + " not in label table");
    }
  }

  std::vector<std::vector<std::size_t>> by_class(set.labels().size());
  for (std::size_t i = 0; i < set.size(); ++i) by_class[set.label_id(i)].push_back(i);

  Rng rng(seed);
  std::vector<char> chosen(set.size(), 0);
  for (const auto id : wanted) {
    auto& pool = by_class[id];
    const std::size_t take = std::min(per_class_cap.value_or(pool.size()), pool.size());
    for (std::size_t j = 0; j < take; ++j) {
      const auto pick = j + static_cast<std::size_t>(rng.below(pool.size() - j));
      std::swap(pool[j], pool[pick]);
      chosen[pool[j]] = 1;
    }
  }

  std::vector<std::size_t> selected;
  std::vector<std::size_t> remainder;
  for (std::size_t i = 0; i < set.size(); ++i) (chosen[i] ? selected : remainder).push_back(i);

  auto sel = set.subset(selected);
  auto rem = set.subset(remainder);
  return {std::move(sel), std::move(rem), std::move(selected), std::move(remainder)};
}

}  // namespace embattr
