#include "gsamia/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <stdexcept>

#include "gsamia/container.hpp"
#include "gsamia/rng.hpp"

namespace gsamia {

namespace {

constexpr std::size_t kCifarSide = 32;
constexpr std::size_t kCifarPixels = 3 * kCifarSide * kCifarSide;
constexpr std::size_t kCifarRecord = 1 + kCifarPixels;
constexpr const char* kDatasetMagic = "GSADAT01";

}  // namespace

DataSource parse_data_source(const std::string& name) {
  if (name == "synthetic") return DataSource::synthetic;
  if (name == "cifar10") return DataSource::cifar10;
  if (name == "raw") return DataSource::raw;
  throw std::invalid_argument("unknown data source '" + name + "'");
}

std::string to_string(DataSource source) {
  switch (source) {
    case DataSource::synthetic: return "synthetic";
    case DataSource::cifar10: return "cifar10";
    case DataSource::raw: return "raw";
  }
  return "synthetic";
}

ImageShape ImageDataset::image_shape() const { return {images.dim(1), images.dim(2), images.dim(3)}; }

Tensor ImageDataset::image(std::size_t i) const {
  const ImageShape s = image_shape();
  Tensor out(s.shape());
  std::copy_n(images.data().begin() + static_cast<std::ptrdiff_t>(i * s.numel()), s.numel(),
              out.data().begin());
  return out;
}

ImageDataset ImageDataset::subset(const std::vector<std::size_t>& rows) const {
  const ImageShape s = image_shape();
  ImageDataset out;
  out.source = source;
  out.images = Tensor({rows.size(), s.channels, s.height, s.width});
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] >= size()) throw std::out_of_range("dataset subset index out of range");
    std::copy_n(images.data().begin() + static_cast<std::ptrdiff_t>(rows[r] * s.numel()), s.numel(),
                out.images.data().begin() + static_cast<std::ptrdiff_t>(r * s.numel()));
    out.ids.push_back(ids[rows[r]]);
    out.classes.push_back(classes[rows[r]]);
  }
  return out;
}

ImageDataset generate_synthetic_dataset(std::size_t count, std::size_t side, std::size_t classes,
                                        std::uint64_t seed) {
  if (count < 1) throw std::invalid_argument("synthetic dataset needs count >= 1");
  if (side != 8 && side != 16 && side != 32) throw std::invalid_argument("synthetic side must be 8, 16 or 32");
  if (classes < 1) throw std::invalid_argument("synthetic dataset needs at least one class");
  constexpr double kPi = std::numbers::pi;
  Rng rng(seed);
  ImageDataset ds;
  ds.source = DataSource::synthetic;
  ds.images = Tensor({count, 1, side, side});
  const double s = static_cast<double>(side);
  for (std::size_t i = 0; i < count; ++i) {
    const auto c = static_cast<int>(rng.uniform_int(classes));
    const double theta = kPi * c / static_cast<double>(classes);
    const double freq = 1.0 + 0.5 * (c % 3);
    const double phase = 0.7 * c + (rng.uniform() - 0.5);
    const double amp = 0.6 * (1.0 + 0.2 * (2.0 * rng.uniform() - 1.0));
    const double ct = std::cos(theta), st = std::sin(theta);
    for (std::size_t y = 0; y < side; ++y) {
      for (std::size_t x = 0; x < side; ++x) {
        const double u = (static_cast<double>(x) * ct + static_cast<double>(y) * st) / s;
        const double v = amp * std::sin(2.0 * kPi * freq * u + phase) + 0.3 * rng.normal();
        ds.images[(i * side + y) * side + x] = std::clamp(v, -1.0, 1.0);
      }
    }
    ds.ids.push_back(i);
    ds.classes.push_back(c);
  }
  return ds;
}

ImageDataset import_cifar10(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  if (bytes.size() % kCifarRecord != 0) {
    const std::size_t offset = bytes.size() - bytes.size() % kCifarRecord;
    throw std::runtime_error(path.string() + ": truncated record at byte offset " + std::to_string(offset) +
                             " (" + std::to_string(bytes.size() % kCifarRecord) + " of " +
                             std::to_string(kCifarRecord) + " bytes)");
  }
  const std::size_t n = bytes.size() / kCifarRecord;
  if (n == 0) throw std::runtime_error(path.string() + ": no records");
  ImageDataset ds;
  ds.source = DataSource::cifar10;
  ds.images = Tensor({n, 3, kCifarSide, kCifarSide});
  for (std::size_t i = 0; i < n; ++i) {
    const unsigned char* rec = bytes.data() + i * kCifarRecord;
    ds.classes.push_back(rec[0]);
    ds.ids.push_back(i);
    for (std::size_t k = 0; k < kCifarPixels; ++k) {
      ds.images[i * kCifarPixels + k] = static_cast<double>(rec[1 + k]) / 127.5 - 1.0;
    }
  }
  return ds;
}

void export_cifar10(const ImageDataset& data, const std::filesystem::path& path) {
  if (data.image_shape() != ImageShape{3, kCifarSide, kCifarSide}) {
    throw std::invalid_argument("export_cifar10 needs 3x32x32 images");
  }
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  std::vector<char> rec(kCifarRecord);
  for (std::size_t i = 0; i < data.size(); ++i) {
    rec[0] = static_cast<char>(data.classes.empty() ? 0 : data.classes[i]);
    for (std::size_t k = 0; k < kCifarPixels; ++k) {
      const double v = std::clamp(data.images[i * kCifarPixels + k], -1.0, 1.0);
      rec[1 + k] = static_cast<char>(static_cast<unsigned char>(std::lround((v + 1.0) * 127.5)));
    }
    os.write(rec.data(), static_cast<std::streamsize>(rec.size()));
  }
}

void save_dataset(const ImageDataset& data, const std::filesystem::path& path) {
  Container c;
  c.magic = kDatasetMagic;
  const ImageShape s = data.image_shape();
  c.header = {static_cast<std::uint32_t>(data.size()), static_cast<std::uint32_t>(s.channels),
              static_cast<std::uint32_t>(s.height), static_cast<std::uint32_t>(s.width),
              static_cast<std::uint32_t>(data.source)};
  c.payload.assign(data.images.data().begin(), data.images.data().end());
  for (auto id : data.ids) c.payload.push_back(static_cast<double>(id));
  for (int k : data.classes) c.payload.push_back(k);
  write_container(path, c);
}

ImageDataset load_dataset(const std::filesystem::path& path) {
  const Container c = read_container(path, kDatasetMagic);
  if (c.header.size() != 5) throw std::runtime_error(path.string() + ": malformed dataset header");
  const std::size_t n = c.header[0];
  const ImageShape s{c.header[1], c.header[2], c.header[3]};
  if (c.payload.size() != n * s.numel() + 2 * n) throw std::runtime_error(path.string() + ": payload size mismatch");
  ImageDataset ds;
  ds.source = static_cast<DataSource>(c.header[4]);
  std::vector<double> px(c.payload.begin(), c.payload.begin() + static_cast<std::ptrdiff_t>(n * s.numel()));
  ds.images = Tensor({n, s.channels, s.height, s.width}, std::move(px));
  for (std::size_t i = 0; i < n; ++i) {
    ds.ids.push_back(static_cast<std::uint64_t>(c.payload[n * s.numel() + i]));
    ds.classes.push_back(static_cast<int>(c.payload[n * s.numel() + n + i]));
  }
  for (double v : ds.images.data()) {
    if (v < -1.0 || v > 1.0) throw std::runtime_error(path.string() + ": pixel outside [-1, 1]");
  }
  return ds;
}

}  // namespace gsamia
