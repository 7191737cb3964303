#pragma once

#include "specring/core.hpp"
#include "specring/lowrank.hpp"
#include "specring/projector.hpp"

#include <Eigen/Dense>
#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace specring {

enum class DType { f32, f64, i32 };
const char* to_string(DType t);
DType dtype_from_string(const std::string& s);
std::size_t dtype_size(DType t);

/// JSON sidecar of a raw container. The payload is little-endian and
/// row-major in the declared axis order.
struct RawHeader {
  std::vector<std::int64_t> shape;
  std::vector<std::string> axis_names;
  DType dtype{DType::f32};
  std::string kind;
  std::vector<std::string> channel_labels;
  nlohmann::json metadata = nlohmann::json::object();

  std::int64_t element_count() const;
};

struct RawArray {
  RawHeader header;
  /// Values widened to double; saving narrows them back to header.dtype.
  std::vector<double> values;
};

/// `<stem>.json` and `<stem>.raw`; a trailing .json or .raw on `path` is ignored.
std::filesystem::path raw_stem(const std::filesystem::path& path);

void save_raw(const std::filesystem::path& path, const RawArray& array);
RawArray load_raw(const std::filesystem::path& path);

void save_sinogram(const std::filesystem::path& path, const SpectralSinogram& sino,
                   const nlohmann::json& metadata = nlohmann::json::object());
SpectralSinogram load_sinogram(const std::filesystem::path& path);

/// Stored as (row, col, channel).
void save_volume(const std::filesystem::path& path, const SpectralVolume& vol,
                 const std::vector<std::string>& labels = {},
                 const nlohmann::json& metadata = nlohmann::json::object());
SpectralVolume load_volume(const std::filesystem::path& path);

/// Stored as (detector, channel).
void save_flat(const std::filesystem::path& path, const FlatEstimate& flat,
               const std::vector<std::string>& labels = {},
               const nlohmann::json& metadata = nlohmann::json::object());
FlatEstimate load_flat(const std::filesystem::path& path);

/// Stored as (flat, detector, channel). A two-axis container loads as a
/// single flat.
void save_flat_stack(const std::filesystem::path& path, const FlatFieldStack& stack,
                     const std::vector<std::string>& labels = {});
FlatFieldStack load_flat_stack(const std::filesystem::path& path);

/// Three containers `<stem>.indptr`, `<stem>.indices` (i32) and
/// `<stem>.values` (f64); the geometry rides in the values header.
void save_system_matrix(const std::filesystem::path& path, const SystemMatrix& a);
SystemMatrix load_system_matrix(const std::filesystem::path& path);

nlohmann::json geometry_to_json(const ScanGeometry& g);
ScanGeometry geometry_from_json(const nlohmann::json& j);

/// 16-bit binary PGM with min-max windowing.
void write_pgm(const std::filesystem::path& path, const Eigen::MatrixXd& image);

}  // namespace specring
