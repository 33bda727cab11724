#include "bdrlab/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>
#include <string>

#include "bdrlab/error.hpp"
#include "bdrlab/rng.hpp"

namespace bdrlab {

std::vector<std::size_t> LabeledSet::indices_of_class(std::size_t k) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] == k) out.push_back(i);
  return out;
}

std::vector<std::size_t> LabeledSet::counts() const {
  std::vector<std::size_t> c(class_count, 0);
  for (std::size_t y : labels) ++c.at(y);
  return c;
}

LabeledSet LabeledSet::subset(std::span<const std::size_t> rows) const {
  LabeledSet out;
  out.class_count = class_count;
  out.features = features.select_rows(rows);
  out.labels.reserve(rows.size());
  out.ids.reserve(rows.size());
  for (std::size_t r : rows) {
    out.labels.push_back(labels[r]);
    out.ids.push_back(ids[r]);
  }
  return out;
}

void LabeledSet::validate() const {
  if (features.rank() != 2) throw DimensionError("features must be a matrix");
  if (features.rows() != labels.size() || ids.size() != labels.size()) {
    throw DimensionError("features, labels and ids disagree on sample count");
  }
  for (std::size_t y : labels)
    if (y >= class_count) throw IndexError("label " + std::to_string(y) + " outside class count " + std::to_string(class_count));
}

LabeledSet make_gaussian_mixture(std::size_t classes, std::size_t per_class, std::size_t dim, double separation,
                                 std::uint64_t seed) {
  if (classes < 2) throw ArgumentError("gaussian mixture needs at least 2 classes");
  if (per_class < 1) throw ArgumentError("gaussian mixture needs at least 1 sample per class");
  if (dim < 2) throw ArgumentError("gaussian mixture needs dimension >= 2");
  if (!(separation > 0.0)) throw ArgumentError("gaussian mixture separation must be positive");

  Rng root(seed);
  Rng mean_rng = root.split("means");
  Rng noise_rng = root.split("noise");

  std::vector<std::vector<double>> means(classes, std::vector<double>(dim));
  for (auto& mu : means) {
    double norm = 0.0;
    do {
      norm = 0.0;
      for (double& v : mu) {
        v = mean_rng.normal();
        norm += v * v;
      }
      norm = std::sqrt(norm);
    } while (norm < 1e-12);
    for (double& v : mu) v *= separation / norm;
  }

  LabeledSet out;
  out.class_count = classes;
  std::vector<double> data;
  data.reserve(classes * per_class * dim);
  for (std::size_t k = 0; k < classes; ++k) {
    for (std::size_t i = 0; i < per_class; ++i) {
      for (std::size_t j = 0; j < dim; ++j) data.push_back(means[k][j] + noise_rng.normal());
      out.labels.push_back(k);
      out.ids.push_back(out.ids.size());
    }
  }
  out.features = Tensor({classes * per_class, dim}, std::move(data));
  return out;
}

LabeledSet make_rings(std::size_t classes, std::size_t per_class, double noise, std::uint64_t seed) {
  if (classes < 2) throw ArgumentError("rings need at least 2 classes");
  if (per_class < 1) throw ArgumentError("rings need at least 1 sample per class");
  if (!(noise >= 0.0)) throw ArgumentError("ring noise must be non-negative");

  Rng rng = Rng(seed).split("rings");
  LabeledSet out;
  out.class_count = classes;
  std::vector<double> data;
  data.reserve(classes * per_class * 2);
  for (std::size_t k = 0; k < classes; ++k) {
    for (std::size_t i = 0; i < per_class; ++i) {
      const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
      const double radius = static_cast<double>(k + 1) + noise * rng.normal();
      data.push_back(radius * std::cos(angle));
      data.push_back(radius * std::sin(angle));
      out.labels.push_back(k);
      out.ids.push_back(out.ids.size());
    }
  }
  out.features = Tensor({classes * per_class, 2}, std::move(data));
  return out;
}

namespace {

std::vector<unsigned char> read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string(), 0);
  return std::vector<unsigned char>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

std::uint32_t read_be32(const std::vector<unsigned char>& bytes, std::size_t offset, const std::string& what) {
  if (offset + 4 > bytes.size()) throw FormatError(what + ": truncated header", offset);
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

}  // namespace

LabeledSet load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path) {
  const auto images = read_all(images_path);
  const auto labels = read_all(labels_path);

  if (const auto magic = read_be32(images, 0, "images"); magic != 0x00000803) {
    throw FormatError("images: bad magic " + std::to_string(magic), 0);
  }
  if (const auto magic = read_be32(labels, 0, "labels"); magic != 0x00000801) {
    throw FormatError("labels: bad magic " + std::to_string(magic), 0);
  }
  const std::size_t n_images = read_be32(images, 4, "images");
  const std::size_t rows = read_be32(images, 8, "images");
  const std::size_t cols = read_be32(images, 12, "images");
  const std::size_t n_labels = read_be32(labels, 4, "labels");
  if (n_images != n_labels) {
    throw FormatError("image count " + std::to_string(n_images) + " does not match label count " +
                          std::to_string(n_labels),
                      4);
  }
  const std::size_t d = rows * cols;
  if (d == 0) throw FormatError("images: zero-sized image", 8);
  if (images.size() < 16 + n_images * d) throw FormatError("images: truncated payload", images.size());
  if (labels.size() < 8 + n_labels) throw FormatError("labels: truncated payload", labels.size());

  LabeledSet out;
  std::vector<double> data(n_images * d);
  for (std::size_t i = 0; i < data.size(); ++i) data[i] = static_cast<double>(images[16 + i]) / 255.0;
  out.features = Tensor({n_images, d}, std::move(data));
  std::size_t max_label = 0;
  for (std::size_t i = 0; i < n_labels; ++i) {
    out.labels.push_back(labels[8 + i]);
    out.ids.push_back(i);
    max_label = std::max<std::size_t>(max_label, labels[8 + i]);
  }
  out.class_count = n_labels ? max_label + 1 : 0;
  return out;
}

TrainTestSplit train_test_split(const LabeledSet& data, std::uint64_t seed) {
  Rng rng = Rng(seed).split("holdout");
  std::vector<std::size_t> train_rows, test_rows;
  for (std::size_t k = 0; k < data.class_count; ++k) {
    auto idx = data.indices_of_class(k);
    if (idx.empty()) continue;
    rng.split(k).shuffle(idx);
    const std::size_t n_test = idx.size() / kHoldoutDenominator;
    std::sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_test));
    std::sort(idx.begin() + static_cast<std::ptrdiff_t>(n_test), idx.end());
    test_rows.insert(test_rows.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_test));
    train_rows.insert(train_rows.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_test), idx.end());
  }
  std::sort(train_rows.begin(), train_rows.end());
  std::sort(test_rows.begin(), test_rows.end());
  return {data.subset(train_rows), data.subset(test_rows)};
}

PhaseStream split_phases(const LabeledSet& data, std::size_t base, std::size_t step, std::uint64_t seed) {
  const std::size_t k = data.class_count;
  const auto protocol = [&] {
    return "K=" + std::to_string(k) + ", B=" + std::to_string(base) + ", S=" + std::to_string(step);
  };
  if (step == 0) throw ProtocolError("step size S must be positive (" + protocol() + ")");
  if (base > k) throw ProtocolError("initial classes exceed class count (" + protocol() + ")");
  if (base > 0 && (k - base) % step != 0) throw ProtocolError("K - B not divisible by S (" + protocol() + ")");
  if (base == 0 && k % step != 0) throw ProtocolError("K not divisible by S (" + protocol() + ")");

  PhaseStream stream;
  stream.base = base;
  stream.step = step;
  stream.seed = seed;
  stream.class_count = k;
  Rng rng(seed);
  stream.class_order = rng.split("class_order").permutation(k);

  const std::size_t first = base > 0 ? base : step;
  std::vector<std::size_t> phase_of(k);
  std::size_t phase_count = 1 + (k - first) / step;
  for (std::size_t pos = 0; pos < k; ++pos) {
    phase_of[stream.class_order[pos]] = pos < first ? 0 : 1 + (pos - first) / step;
  }

  std::vector<std::vector<std::size_t>> rows(phase_count);
  for (std::size_t i = 0; i < data.size(); ++i) rows[phase_of[data.labels[i]]].push_back(i);

  for (std::size_t p = 0; p < phase_count; ++p) {
    Phase phase;
    const std::size_t begin = p == 0 ? 0 : first + (p - 1) * step;
    const std::size_t end = p == 0 ? first : begin + step;
    phase.classes.assign(stream.class_order.begin() + static_cast<std::ptrdiff_t>(begin),
                         stream.class_order.begin() + static_cast<std::ptrdiff_t>(end));
    auto split = train_test_split(data.subset(rows[p]), rng.split("phase").split(p).next_u64());
    phase.train = std::move(split.train);
    phase.test = std::move(split.test);
    stream.phases.push_back(std::move(phase));
  }
  return stream;
}

LabeledSet concat(const LabeledSet& a, const LabeledSet& b) {
  if (a.size() == 0) return b;
  if (b.size() == 0) return a;
  if (a.dim() != b.dim()) {
    throw DimensionError("cannot merge sets of feature dimension " + std::to_string(a.dim()) + " and " +
                         std::to_string(b.dim()));
  }
  LabeledSet out;
  out.class_count = std::max(a.class_count, b.class_count);
  std::vector<double> data(a.features.values());
  data.insert(data.end(), b.features.data().begin(), b.features.data().end());
  out.features = Tensor({a.size() + b.size(), a.dim()}, std::move(data));
  out.labels = a.labels;
  out.labels.insert(out.labels.end(), b.labels.begin(), b.labels.end());
  out.ids = a.ids;
  out.ids.insert(out.ids.end(), b.ids.begin(), b.ids.end());
  return out;
}

}  // namespace bdrlab
