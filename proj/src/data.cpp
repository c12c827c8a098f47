#include "fedcl/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numeric>
#include <random>

#include "fedcl/errors.hpp"
#include "fedcl/rng.hpp"

namespace fedcl {

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset out;
  out.dim = dim;
  out.num_classes = num_classes;
  out.features.reserve(indices.size() * dim);
  out.labels.reserve(indices.size());
  for (auto i : indices) {
    const auto r = row(i);
    out.features.insert(out.features.end(), r.begin(), r.end());
    out.labels.push_back(labels.at(i));
  }
  return out;
}

std::vector<std::size_t> Dataset::class_histogram() const {
  std::vector<std::size_t> h(num_classes, 0);
  for (int y : labels) ++h[static_cast<std::size_t>(y)];
  return h;
}

void Dataset::validate() const {
  if (labels.empty()) throw DataError("dataset is empty");
  if (features.size() != labels.size() * dim) throw DataError("feature matrix size mismatch");
  for (int y : labels)
    if (y < 0 || static_cast<std::size_t>(y) >= num_classes) throw DataError("label out of range");
  for (double v : features)
    if (!std::isfinite(v)) throw DataError("non-finite feature");
}

// ---------------------------------------------------------------------------

void Partition::validate(std::size_t n) const {
  std::vector<char> seen(n, 0);
  std::size_t total = 0;
  for (const auto& c : clients) {
    if (c.empty()) throw DataError("partition has an empty client");
    for (auto i : c) {
      if (i >= n || seen[i]) throw DataError("partition is not disjoint or out of range");
      seen[i] = 1;
      ++total;
    }
  }
  if (total != n) throw DataError("partition does not cover the dataset");
}

std::uint64_t Partition::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](std::uint64_t v) {
    for (int b = 0; b < 8; ++b) {
      h ^= (v >> (8 * b)) & 0xffU;
      h *= 0x100000001b3ULL;
    }
  };
  feed(clients.size());
  for (const auto& c : clients) {
    feed(c.size());
    for (auto i : c) feed(i);
  }
  return h;
}

Partition dirichlet_partition(const Dataset& data, std::size_t num_clients,
                              double alpha, std::uint64_t seed) {
  if (num_clients == 0) throw DataError("partition needs at least one client");
  if (!(alpha > 0.0)) throw DataError("Dirichlet alpha must be positive");
  if (data.size() < num_clients) throw DataError("dataset smaller than client count");

  Rng rng(seed);
  std::gamma_distribution<double> gamma(alpha, 1.0);
  Partition part;
  part.clients.resize(num_clients);

  std::vector<std::vector<std::size_t>> by_class(data.num_classes);
  for (std::size_t i = 0; i < data.size(); ++i)
    by_class[static_cast<std::size_t>(data.labels[i])].push_back(i);

  std::vector<double> props(num_clients);
  for (auto& idx : by_class) {
    std::shuffle(idx.begin(), idx.end(), rng);
    double sum = 0.0;
    for (auto& p : props) {
      p = gamma(rng);
      sum += p;
    }
    // Tiny alpha can underflow every gamma draw; fall back to one client.
    if (!(sum > 0.0)) {
      std::fill(props.begin(), props.end(), 0.0);
      props[std::uniform_int_distribution<std::size_t>(0, num_clients - 1)(rng)] = 1.0;
      sum = 1.0;
    }
    const double n = static_cast<double>(idx.size());
    double cum = 0.0;
    std::size_t start = 0;
    for (std::size_t k = 0; k < num_clients; ++k) {
      cum += props[k] / sum;
      std::size_t end = k + 1 == num_clients
                            ? idx.size()
                            : std::min(idx.size(), static_cast<std::size_t>(std::floor(cum * n)));
      end = std::max(end, start);
      part.clients[k].insert(part.clients[k].end(), idx.begin() + static_cast<std::ptrdiff_t>(start),
                             idx.begin() + static_cast<std::ptrdiff_t>(end));
      start = end;
    }
  }

  for (std::size_t k = 0; k < num_clients; ++k) {
    if (!part.clients[k].empty()) continue;
    auto largest = std::max_element(part.clients.begin(), part.clients.end(),
                                    [](const auto& a, const auto& b) { return a.size() < b.size(); });
    part.clients[k].push_back(largest->back());
    largest->pop_back();
  }
  for (auto& c : part.clients) std::sort(c.begin(), c.end());
  return part;
}

namespace {

std::vector<double> blob_centers(std::size_t classes, std::size_t dim, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "blob-centers"));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> centers(classes * dim);
  for (std::size_t c = 0; c < classes; ++c) {
    double norm = 0.0;
    do {
      norm = 0.0;
      for (std::size_t j = 0; j < dim; ++j) {
        const double v = normal(rng);
        centers[c * dim + j] = v;
        norm += v * v;
      }
    } while (norm == 0.0);
    norm = std::sqrt(norm);
    for (std::size_t j = 0; j < dim; ++j) centers[c * dim + j] *= 5.0 / norm;
  }
  return centers;
}

Dataset blobs_from(const std::vector<double>& centers, std::size_t classes,
                   std::size_t per_class, std::size_t dim, double spread, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Dataset d;
  d.dim = dim;
  d.num_classes = classes;
  d.features.reserve(classes * per_class * dim);
  d.labels.reserve(classes * per_class);
  for (std::size_t c = 0; c < classes; ++c) {
    for (std::size_t i = 0; i < per_class; ++i) {
      for (std::size_t j = 0; j < dim; ++j)
        d.features.push_back(centers[c * dim + j] + spread * normal(rng));
      d.labels.push_back(static_cast<int>(c));
    }
  }
  return d;
}

}  // namespace

Dataset make_blobs(std::size_t classes, std::size_t per_class, std::size_t dim,
                   double spread, std::uint64_t seed) {
  if (classes < 2) throw DataError("blobs need at least two classes");
  if (per_class == 0 || dim == 0) throw DataError("blobs need positive size");
  const auto centers = blob_centers(classes, dim, seed);
  Rng rng(derive_seed(seed, "blob-noise"));
  return blobs_from(centers, classes, per_class, dim, spread, rng);
}

Dataset make_blobs_split(std::size_t classes, std::size_t per_class, std::size_t dim,
                         double spread, std::uint64_t seed, std::uint64_t split_seed) {
  if (classes < 2) throw DataError("blobs need at least two classes");
  if (per_class == 0 || dim == 0) throw DataError("blobs need positive size");
  const auto centers = blob_centers(classes, dim, seed);
  Rng rng(derive_seed(seed, "blob-split", split_seed));
  return blobs_from(centers, classes, per_class, dim, spread, rng);
}

double mean_label_entropy(const Dataset& data, const Partition& part) {
  double total = 0.0;
  for (const auto& c : part.clients) {
    std::vector<double> hist(data.num_classes, 0.0);
    for (auto i : c) hist[static_cast<std::size_t>(data.labels[i])] += 1.0;
    double h = 0.0;
    for (double v : hist) {
      if (v <= 0.0) continue;
      const double p = v / static_cast<double>(c.size());
      h -= p * std::log(p);
    }
    total += h;
  }
  return total / static_cast<double>(part.clients.size());
}

std::vector<std::size_t> stratified_fraction(const Dataset& data, double fraction,
                                             std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw DataError("fraction must lie in (0,1]");
  Rng rng(seed);
  std::vector<std::vector<std::size_t>> by_class(data.num_classes);
  for (std::size_t i = 0; i < data.size(); ++i)
    by_class[static_cast<std::size_t>(data.labels[i])].push_back(i);
  std::vector<std::size_t> out;
  for (auto& idx : by_class) {
    if (idx.empty()) continue;
    std::shuffle(idx.begin(), idx.end(), rng);
    const auto keep = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::floor(fraction * static_cast<double>(idx.size()))));
    out.insert(out.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(keep));
  }
  std::sort(out.begin(), out.end());
  return out;
}

Dataset take_rows(const Dataset& data, std::size_t n) {
  std::vector<std::size_t> idx(std::min(n, data.size()));
  std::iota(idx.begin(), idx.end(), 0);
  return data.subset(idx);
}

// ---------------------------------------------------------------------------

namespace {

std::vector<std::uint8_t> slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IdxError(IdxError::Kind::Io, "cannot open " + p.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t be32(const std::vector<std::uint8_t>& b, std::size_t at) {
  return (std::uint32_t{b[at]} << 24) | (std::uint32_t{b[at + 1]} << 16) |
         (std::uint32_t{b[at + 2]} << 8) | std::uint32_t{b[at + 3]};
}

struct IdxImages {
  std::size_t count, rows, cols;
  std::vector<std::uint8_t> bytes;
  std::size_t data_offset;
};

IdxImages parse_images(const std::filesystem::path& path) {
  IdxImages im{0, 0, 0, slurp(path), 16};
  const auto& b = im.bytes;
  if (b.size() < 4) throw IdxError(IdxError::Kind::Truncated, "truncated IDX image header");
  if (be32(b, 0) != 0x00000803U) throw IdxError(IdxError::Kind::BadMagic, "bad IDX image magic in " + path.string());
  if (b.size() < 16) throw IdxError(IdxError::Kind::Truncated, "truncated IDX image header");
  im.count = be32(b, 4);
  im.rows = be32(b, 8);
  im.cols = be32(b, 12);
  if (b.size() < 16 + im.count * im.rows * im.cols)
    throw IdxError(IdxError::Kind::Truncated, "truncated IDX image data in " + path.string());
  return im;
}

}  // namespace

std::vector<std::uint8_t> read_idx_image_bytes(const std::filesystem::path& images) {
  auto im = parse_images(images);
  const auto n = im.count * im.rows * im.cols;
  return {im.bytes.begin() + 16, im.bytes.begin() + 16 + static_cast<std::ptrdiff_t>(n)};
}

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                 std::size_t num_classes) {
  const auto im = parse_images(images);
  const auto lb = slurp(labels);
  if (lb.size() < 4) throw IdxError(IdxError::Kind::Truncated, "truncated IDX label header");
  if (be32(lb, 0) != 0x00000801U) throw IdxError(IdxError::Kind::BadMagic, "bad IDX label magic in " + labels.string());
  if (lb.size() < 8) throw IdxError(IdxError::Kind::Truncated, "truncated IDX label header");
  const std::size_t nl = be32(lb, 4);
  if (lb.size() < 8 + nl) throw IdxError(IdxError::Kind::Truncated, "truncated IDX label data");
  if (nl != im.count)
    throw IdxError(IdxError::Kind::CountMismatch, "IDX image/label count mismatch: " +
                                                      std::to_string(im.count) + " vs " + std::to_string(nl));
  Dataset d;
  d.dim = im.rows * im.cols;
  d.num_classes = num_classes;
  d.features.resize(im.count * d.dim);
  for (std::size_t i = 0; i < d.features.size(); ++i)
    d.features[i] = static_cast<double>(im.bytes[16 + i]) / 255.0;
  d.labels.resize(nl);
  for (std::size_t i = 0; i < nl; ++i) {
    d.labels[i] = lb[8 + i];
    if (static_cast<std::size_t>(d.labels[i]) >= num_classes)
      throw IdxError(IdxError::Kind::CountMismatch, "IDX label out of class range");
  }
  return d;
}

// ---------------------------------------------------------------------------

namespace {

template <typename T>
void put(std::ofstream& out, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.write(buf, sizeof(T));
}

template <typename T>
T get(std::ifstream& in) {
  char buf[sizeof(T)];
  if (!in.read(buf, sizeof(T))) throw DataError("truncated dataset file");
  T v;
  std::memcpy(&v, buf, sizeof(T));
  return v;
}

constexpr char kDatasetMagic[8] = {'F', 'C', 'L', 'D', 'A', 'T', 'A', '1'};

}  // namespace

void save_dataset(const Dataset& data, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(kDatasetMagic, sizeof kDatasetMagic);
  put<std::uint64_t>(out, data.size());
  put<std::uint64_t>(out, data.dim);
  put<std::uint64_t>(out, data.num_classes);
  for (double v : data.features) put<double>(out, v);
  for (int y : data.labels) put<std::int32_t>(out, y);
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kDatasetMagic, 8) != 0)
    throw DataError("bad dataset magic in " + path.string());
  Dataset d;
  const auto n = get<std::uint64_t>(in);
  d.dim = get<std::uint64_t>(in);
  d.num_classes = get<std::uint64_t>(in);
  d.features.resize(n * d.dim);
  for (auto& v : d.features) v = get<double>(in);
  d.labels.resize(n);
  for (auto& y : d.labels) y = get<std::int32_t>(in);
  d.validate();
  return d;
}

}  // namespace fedcl
