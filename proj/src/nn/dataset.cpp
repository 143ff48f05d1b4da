#include "qlabgrad/nn.hpp"

#include <zlib.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <random>
#include <sstream>

namespace qlabgrad::nn {

void Dataset::validate() const {
  if (features.rows() < 1) throw std::invalid_argument("dataset: needs at least one sample");
  if (static_cast<std::size_t>(features.rows()) != labels.size()) {
    throw std::invalid_argument("dataset: feature rows and labels differ in count");
  }
  if (num_classes < 2) throw std::invalid_argument("dataset: needs at least two classes");
  for (int label : labels) {
    if (label < 0 || label >= num_classes) throw std::invalid_argument("dataset: label out of range");
  }
  if (!features.allFinite()) throw std::invalid_argument("dataset: non-finite feature value");
}

Batch make_batch(const Dataset& data, std::span<const Eigen::Index> rows) {
  Batch batch;
  batch.features.resize(static_cast<Eigen::Index>(rows.size()), data.feature_dim());
  batch.labels.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    batch.features.row(static_cast<Eigen::Index>(i)) = data.features.row(rows[i]);
    batch.labels.push_back(data.labels[static_cast<std::size_t>(rows[i])]);
  }
  return batch;
}

Batch full_batch(const Dataset& data) { return Batch{data.features, data.labels}; }

Dataset synth_dataset(std::uint64_t seed, Eigen::Index n, Eigen::Index d, int k, double spread, Split split) {
  if (k < 2) throw std::invalid_argument("synth_dataset: need k >= 2 classes");
  if (n < k) throw std::invalid_argument("synth_dataset: need n >= k samples");
  if (d < 1) throw std::invalid_argument("synth_dataset: need d >= 1");
  if (!(spread > 0.0)) throw std::invalid_argument("synth_dataset: spread must be positive");

  Dataset data;
  data.num_classes = k;
  data.split = split;
  data.features.resize(n, d);
  data.labels.resize(static_cast<std::size_t>(n));

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, spread);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int label = static_cast<int>(i % k);
    data.labels[static_cast<std::size_t>(i)] = label;
    for (Eigen::Index j = 0; j < d; ++j) data.features(i, j) = noise(rng);
    if (d >= k) {
      data.features(i, label) += 1.0;
    } else {
      data.features(i, 0) += static_cast<double>(label);
    }
  }
  return data;
}

namespace {

std::vector<unsigned char> read_all(const std::filesystem::path& path) {
  gzFile file = gzopen(path.string().c_str(), "rb");
  if (file == nullptr) throw IdxError("idx: cannot open " + path.string(), 0);
  std::vector<unsigned char> bytes;
  std::array<unsigned char, 1 << 16> chunk{};
  for (;;) {
    const int got = gzread(file, chunk.data(), static_cast<unsigned>(chunk.size()));
    if (got < 0) {
      const std::uint64_t where = bytes.size();
      gzclose(file);
      throw IdxError("idx: read error in " + path.string(), where);
    }
    if (got == 0) break;
    bytes.insert(bytes.end(), chunk.begin(), chunk.begin() + got);
  }
  gzclose(file);
  return bytes;
}

std::uint32_t read_be32(const std::vector<unsigned char>& bytes, std::size_t offset, const std::string& what) {
  if (offset + 4 > bytes.size()) {
    std::ostringstream msg;
    msg << "idx: " << what << " truncated while reading header at byte offset " << bytes.size();
    throw IdxError(msg.str(), bytes.size());
  }
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

struct IdxTensor {
  std::vector<std::uint32_t> dims;
  std::size_t payload_offset = 0;
  std::vector<unsigned char> bytes;
};

IdxTensor parse_idx(const std::filesystem::path& path, std::uint32_t expected_magic) {
  IdxTensor t;
  t.bytes = read_all(path);
  const std::string name = path.filename().string();
  const std::uint32_t magic = read_be32(t.bytes, 0, name);
  if (magic != expected_magic) {
    std::ostringstream msg;
    msg << "idx: " << name << " has magic 0x" << std::hex << magic << ", expected 0x" << expected_magic
        << " (byte offset 0)";
    throw IdxError(msg.str(), 0);
  }
  const std::uint32_t ndims = magic & 0xFFu;
  std::size_t payload = 1;
  for (std::uint32_t i = 0; i < ndims; ++i) {
    t.dims.push_back(read_be32(t.bytes, 4 + 4 * i, name));
    payload *= t.dims.back();
  }
  t.payload_offset = 4 + 4 * static_cast<std::size_t>(ndims);
  if (t.bytes.size() < t.payload_offset + payload) {
    std::ostringstream msg;
    msg << "idx: " << name << " payload truncated at byte offset " << t.bytes.size() << " (expected "
        << t.payload_offset + payload << " bytes)";
    throw IdxError(msg.str(), t.bytes.size());
  }
  return t;
}

}  // namespace

Dataset load_idx(const std::filesystem::path& features_path, const std::filesystem::path& labels_path,
                 Split split) {
  const IdxTensor images = parse_idx(features_path, 0x00000803u);
  const IdxTensor labels = parse_idx(labels_path, 0x00000801u);

  const std::uint32_t n = images.dims[0];
  if (labels.dims[0] != n) {
    std::ostringstream msg;
    msg << "idx: image count " << n << " does not match label count " << labels.dims[0]
        << " (byte offset 4)";
    throw IdxError(msg.str(), 4);
  }
  const std::size_t width = std::size_t{images.dims[1]} * images.dims[2];

  Dataset data;
  data.split = split;
  data.features.resize(n, static_cast<Eigen::Index>(width));
  data.labels.resize(n);
  int max_label = 0;
  for (std::uint32_t i = 0; i < n; ++i) {
    const unsigned char* px = images.bytes.data() + images.payload_offset + i * width;
    for (std::size_t j = 0; j < width; ++j) data.features(i, static_cast<Eigen::Index>(j)) = px[j] / 255.0;
    const int label = labels.bytes[labels.payload_offset + i];
    data.labels[i] = label;
    max_label = std::max(max_label, label);
  }
  // MNIST-style label files do not record the class count.
  data.num_classes = std::max(max_label + 1, 2);
  return data;
}

}  // namespace qlabgrad::nn
