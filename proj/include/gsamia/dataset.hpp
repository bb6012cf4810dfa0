#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "gsamia/denoiser.hpp"
#include "gsamia/tensor.hpp"

namespace gsamia {

enum class DataSource { synthetic, cifar10, raw };

DataSource parse_data_source(const std::string& name);
std::string to_string(DataSource source);

/// images is [count, C, H, W] with every pixel in [-1, 1].
struct ImageDataset {
  Tensor images;
  std::vector<std::uint64_t> ids;
  std::vector<int> classes;
  DataSource source = DataSource::synthetic;

  std::size_t size() const { return ids.size(); }
  ImageShape image_shape() const;
  Tensor image(std::size_t i) const;
  /// Rows at the given positions, in that order.
  ImageDataset subset(const std::vector<std::size_t>& rows) const;
};

/// Single-channel side x side images. Class c is a plane wave with its own
/// orientation, frequency and phase; each image jitters phase and amplitude
/// and adds N(0, 0.3^2) pixel noise before clamping to [-1, 1].
ImageDataset generate_synthetic_dataset(std::size_t count, std::size_t side, std::size_t classes,
                                        std::uint64_t seed);

/// CIFAR-10 binary batches: 3073-byte records of one label byte and 3072
/// pixel bytes (R, G, B planes, each 32x32 row-major). Bytes map to
/// b / 127.5 - 1.
ImageDataset import_cifar10(const std::filesystem::path& path);
/// Inverse of import_cifar10 for 3x32x32 datasets (pixels rounded to bytes).
void export_cifar10(const ImageDataset& data, const std::filesystem::path& path);

void save_dataset(const ImageDataset& data, const std::filesystem::path& path);
ImageDataset load_dataset(const std::filesystem::path& path);

}  // namespace gsamia
