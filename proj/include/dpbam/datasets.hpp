#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "dpbam/errors.hpp"
#include "dpbam/rng.hpp"
#include "dpbam/tensor.hpp"

namespace dpbam {

struct Dataset {
  Tensor X;  // (n, input_dim)
  Tensor Y;  // (n) integer class labels stored as doubles
  std::size_t n = 0;
  std::size_t input_dim = 0;
  std::size_t classes = 0;
  bool standardized = false;
  std::vector<double> feature_mean, feature_std;  // recorded by standardize()
};

inline void validate_labels(const Dataset& ds) {
  for (std::size_t i = 0; i < ds.n; ++i) {
    double v = ds.Y[i];
    long lab = std::lround(v);
    if (static_cast<double>(lab) != v || lab < 0 || static_cast<std::size_t>(lab) >= ds.classes)
      throw ContractError("dataset label out of range [0, K) at row " + std::to_string(i));
  }
}

// Zero mean, unit variance per feature; constant features are left centered.
// The applied statistics are recorded on the dataset.
inline void standardize(Dataset& ds) {
  ds.feature_mean.assign(ds.input_dim, 0.0);
  ds.feature_std.assign(ds.input_dim, 1.0);
  if (ds.n == 0) return;
  for (std::size_t j = 0; j < ds.input_dim; ++j) {
    double mean = 0.0;
    for (std::size_t i = 0; i < ds.n; ++i) mean += ds.X(i, j);
    mean /= static_cast<double>(ds.n);
    double var = 0.0;
    for (std::size_t i = 0; i < ds.n; ++i) {
      double c = ds.X(i, j) - mean;
      var += c * c;
    }
    var /= static_cast<double>(ds.n);
    double stddev = std::sqrt(var);
    if (stddev == 0.0) stddev = 1.0;
    ds.feature_mean[j] = mean;
    ds.feature_std[j] = stddev;
    for (std::size_t i = 0; i < ds.n; ++i) ds.X(i, j) = (ds.X(i, j) - mean) / stddev;
  }
  ds.standardized = true;
}

// K Gaussian clusters with unit in-cluster spread; cluster k is centered at
// separation * e_{k mod dim}, scaled +1/-1 on repeats, so classes stay
// linearly separable for separation around 4 and above.
inline Dataset make_blobs(std::size_t n, std::size_t dim, std::size_t classes, double separation,
                          std::uint64_t seed) {
  if (dim == 0 || classes < 2) throw ContractError("make_blobs: need dim >= 1 and K >= 2");
  Dataset ds;
  ds.n = n;
  ds.input_dim = dim;
  ds.classes = classes;
  ds.X = Tensor({n, dim});
  ds.Y = Tensor({n});
  RngStream rng(seed, 0, RngPurpose::data);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t k = i % classes;
    std::size_t axis = k % dim;
    double sign = (k / dim) % 2 == 0 ? 1.0 : -1.0;
    for (std::size_t j = 0; j < dim; ++j) {
      double center = (j == axis) ? sign * separation : 0.0;
      ds.X(i, j) = center + rng.next_gauss();
    }
    ds.Y[i] = static_cast<double>(k);
  }
  return ds;
}

// Interleaved 2-D spirals, one arm per class.
inline Dataset make_spirals(std::size_t n, std::size_t classes, double noise,
                            std::uint64_t seed) {
  if (classes < 2) throw ContractError("make_spirals: need K >= 2");
  Dataset ds;
  ds.n = n;
  ds.input_dim = 2;
  ds.classes = classes;
  ds.X = Tensor({n, 2});
  ds.Y = Tensor({n});
  RngStream rng(seed, 0, RngPurpose::data);
  const double pi = 3.14159265358979323846;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t k = i % classes;
    double t = rng.next_uniform();
    double r = 0.5 + 2.5 * t;
    double angle = 2.0 * pi * (1.5 * t + static_cast<double>(k) / static_cast<double>(classes));
    ds.X(i, 0) = r * std::cos(angle) + noise * rng.next_gauss();
    ds.X(i, 1) = r * std::sin(angle) + noise * rng.next_gauss();
    ds.Y[i] = static_cast<double>(k);
  }
  return ds;
}

// --- CSV --------------------------------------------------------------------
// Header row names the columns; the label column is called "label", every
// other column is a feature in header order.

inline Dataset load_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open CSV file " + path, 0);
  std::string line;
  std::size_t offset = 0;
  if (!std::getline(in, line)) throw ParseError("empty CSV file " + path, 0);
  std::size_t header_len = line.size() + 1;
  std::vector<std::string> cols;
  {
    std::stringstream ss(line);
    std::string c;
    while (std::getline(ss, c, ',')) cols.push_back(c);
  }
  long label_col = -1;
  for (std::size_t j = 0; j < cols.size(); ++j)
    if (cols[j] == "label") label_col = static_cast<long>(j);
  if (label_col < 0) throw ParseError("CSV header has no 'label' column", 0);
  std::size_t features = cols.size() - 1;

  std::vector<double> xs, ys;
  offset = header_len;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    if (line.empty()) {
      offset += 1;
      continue;
    }
    std::stringstream ss(line);
    std::string cell;
    std::size_t col = 0, cell_offset = offset;
    while (std::getline(ss, cell, ',')) {
      char* end = nullptr;
      double v = std::strtod(cell.c_str(), &end);
      if (end == cell.c_str() || *end != '\0')
        throw ParseError("invalid numeric cell '" + cell + "'", cell_offset);
      if (static_cast<long>(col) == label_col)
        ys.push_back(v);
      else
        xs.push_back(v);
      cell_offset += cell.size() + 1;
      ++col;
    }
    if (col != cols.size())
      throw ParseError("row has " + std::to_string(col) + " cells, expected " +
                           std::to_string(cols.size()),
                       offset);
    offset += line.size() + 1;
    ++rows;
  }
  Dataset ds;
  ds.n = rows;
  ds.input_dim = features;
  ds.X = Tensor({rows, features}, std::move(xs));
  ds.Y = Tensor({rows}, std::move(ys));
  double max_label = 0.0;
  for (std::size_t i = 0; i < rows; ++i) max_label = std::max(max_label, ds.Y[i]);
  ds.classes = static_cast<std::size_t>(max_label) + 1;
  if (ds.classes < 2) ds.classes = 2;
  validate_labels(ds);
  return ds;
}

inline void save_csv(const Dataset& ds, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot open CSV file for writing: " + path, 0);
  for (std::size_t j = 0; j < ds.input_dim; ++j) out << "f" << j << ",";
  out << "label\n";
  out.precision(17);
  for (std::size_t i = 0; i < ds.n; ++i) {
    for (std::size_t j = 0; j < ds.input_dim; ++j) out << ds.X(i, j) << ",";
    out << ds.Y[i] << "\n";
  }
}

// --- IDX --------------------------------------------------------------------
// Big-endian magic [0, 0, dtype, ndims] followed by one 4-byte size per
// dimension. Only ubyte (0x08) payloads are supported; image values are
// scaled to [0, 1].

namespace detail {
inline std::uint32_t read_be32(std::istream& in, std::size_t& offset, const char* what) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw ParseError(std::string("truncated IDX ") + what, offset);
  offset += 4;
  return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) | (std::uint32_t(b[2]) << 8) |
         std::uint32_t(b[3]);
}

struct IdxPayload {
  std::vector<std::size_t> dims;
  std::vector<unsigned char> bytes;
};

inline IdxPayload read_idx(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open IDX file " + path, 0);
  std::size_t offset = 0;
  std::uint32_t magic = read_be32(in, offset, "magic");
  if ((magic & 0xFFFF0000u) != 0) throw ParseError("bad IDX magic", 0);
  unsigned dtype = (magic >> 8) & 0xFF;
  unsigned ndims = magic & 0xFF;
  if (dtype != 0x08) throw ParseError("unsupported IDX dtype (only ubyte 0x08)", 2);
  if (ndims == 0 || ndims > 3) throw ParseError("unsupported IDX rank", 3);
  IdxPayload p;
  std::size_t total = 1;
  for (unsigned i = 0; i < ndims; ++i) {
    std::uint32_t dim = read_be32(in, offset, "dimension");
    p.dims.push_back(dim);
    total *= dim;
  }
  p.bytes.resize(total);
  in.read(reinterpret_cast<char*>(p.bytes.data()), static_cast<std::streamsize>(total));
  if (!in || in.gcount() != static_cast<std::streamsize>(total))
    throw ParseError("truncated IDX payload", offset + static_cast<std::size_t>(in.gcount()));
  return p;
}
}  // namespace detail

// Paired image/label IDX files, optionally truncated to the first `subset`
// samples (0 keeps everything).
inline Dataset load_idx(const std::string& images_path, const std::string& labels_path,
                        std::size_t subset = 0) {
  detail::IdxPayload images = detail::read_idx(images_path);
  detail::IdxPayload labels = detail::read_idx(labels_path);
  if (labels.dims.size() != 1) throw ParseError("IDX label file must be rank 1", 3);
  if (images.dims.empty() || images.dims[0] != labels.dims[0])
    throw ParseError("IDX image/label count mismatch", 4);
  std::size_t n = images.dims[0];
  if (subset > 0) n = std::min(n, subset);
  std::size_t row = 1;
  for (std::size_t i = 1; i < images.dims.size(); ++i) row *= images.dims[i];
  Dataset ds;
  ds.n = n;
  ds.input_dim = row;
  ds.X = Tensor({n, row});
  ds.Y = Tensor({n});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < row; ++j)
      ds.X(i, j) = static_cast<double>(images.bytes[i * row + j]) / 255.0;
    ds.Y[i] = static_cast<double>(labels.bytes[i]);
  }
  double max_label = 0.0;
  for (std::size_t i = 0; i < n; ++i) max_label = std::max(max_label, ds.Y[i]);
  ds.classes = std::max<std::size_t>(2, static_cast<std::size_t>(max_label) + 1);
  validate_labels(ds);
  return ds;
}

// Deterministic held-out split: a seeded permutation assigns the first
// (1 - eval_fraction) of rows to training.
struct Split {
  Dataset train, eval;
};

inline Split train_eval_split(const Dataset& ds, double eval_fraction, std::uint64_t seed) {
  if (eval_fraction < 0.0 || eval_fraction >= 1.0)
    throw ContractError("train_eval_split: eval_fraction must lie in [0,1)");
  std::vector<std::size_t> perm(ds.n);
  std::iota(perm.begin(), perm.end(), 0);
  RngStream rng(seed, 0, RngPurpose::split);
  for (std::size_t i = ds.n; i > 1; --i) {
    std::size_t j = rng.next_u64() % i;
    std::swap(perm[i - 1], perm[j]);
  }
  std::size_t n_eval = static_cast<std::size_t>(std::floor(eval_fraction * ds.n));
  std::size_t n_train = ds.n - n_eval;
  auto take = [&](std::size_t begin, std::size_t count) {
    Dataset out;
    out.n = count;
    out.input_dim = ds.input_dim;
    out.classes = ds.classes;
    out.standardized = ds.standardized;
    out.feature_mean = ds.feature_mean;
    out.feature_std = ds.feature_std;
    out.X = Tensor({count, ds.input_dim});
    out.Y = Tensor({count});
    for (std::size_t i = 0; i < count; ++i) {
      std::size_t src = perm[begin + i];
      for (std::size_t j = 0; j < ds.input_dim; ++j) out.X(i, j) = ds.X(src, j);
      out.Y[i] = ds.Y[src];
    }
    return out;
  };
  return {take(0, n_train), take(n_train, n_eval)};
}

}  // namespace dpbam
