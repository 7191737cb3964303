#include "specring/raw_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace specring {

namespace fs = std::filesystem;
using nlohmann::json;

const char* to_string(DType t) {
  switch (t) {
    case DType::f32: return "f32";
    case DType::f64: return "f64";
    case DType::i32: return "i32";
  }
  return "f32";
}

DType dtype_from_string(const std::string& s) {
  if (s == "f32") return DType::f32;
  if (s == "f64") return DType::f64;
  if (s == "i32") return DType::i32;
  throw std::runtime_error("raw: unknown dtype '" + s + "'");
}

std::size_t dtype_size(DType t) { return t == DType::f64 ? 8 : 4; }

std::int64_t RawHeader::element_count() const {
  std::int64_t n = 1;
  for (auto s : shape) n *= s;
  return n;
}

fs::path raw_stem(const fs::path& path) {
  const auto ext = path.extension();
  if (ext == ".json" || ext == ".raw") return fs::path(path).replace_extension();
  return path;
}

namespace {

fs::path with_suffix(const fs::path& stem, const char* suffix) {
  return fs::path(stem.string() + suffix);
}

template <typename U>
void put_le(std::vector<unsigned char>& out, U bits) {
  for (std::size_t b = 0; b < sizeof(U); ++b) out.push_back(static_cast<unsigned char>(bits >> (8 * b)));
}

template <typename U>
U get_le(const unsigned char* p) {
  U bits = 0;
  for (std::size_t b = 0; b < sizeof(U); ++b) bits |= static_cast<U>(p[b]) << (8 * b);
  return bits;
}

void check_header(const RawHeader& h) {
  if (h.shape.empty()) throw std::invalid_argument("raw: empty shape");
  for (auto s : h.shape)
    if (s < 0) throw std::invalid_argument("raw: negative extent");
  if (h.axis_names.size() != h.shape.size())
    throw std::invalid_argument("raw: axis_names length differs from shape length");
}

json header_to_json(const RawHeader& h) {
  json j;
  j["shape"] = h.shape;
  j["axis_names"] = h.axis_names;
  j["dtype"] = to_string(h.dtype);
  j["byte_order"] = "little";
  j["kind"] = h.kind;
  j["channel_labels"] = h.channel_labels;
  j["metadata"] = h.metadata.is_null() ? json::object() : h.metadata;
  return j;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("raw: cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw std::runtime_error("raw: write failed for " + path.string());
}

}  // namespace

void save_raw(const fs::path& path, const RawArray& array) {
  const RawHeader& h = array.header;
  check_header(h);
  if (static_cast<std::int64_t>(array.values.size()) != h.element_count())
    throw std::invalid_argument("raw: value count does not match shape");
  const fs::path stem = raw_stem(path);
  if (stem.has_parent_path()) fs::create_directories(stem.parent_path());

  std::vector<unsigned char> bytes;
  bytes.reserve(array.values.size() * dtype_size(h.dtype));
  for (double v : array.values) {
    switch (h.dtype) {
      case DType::f32: put_le(bytes, std::bit_cast<std::uint32_t>(static_cast<float>(v))); break;
      case DType::f64: put_le(bytes, std::bit_cast<std::uint64_t>(v)); break;
      case DType::i32: {
        if (v != std::trunc(v) || v < -2147483648.0 || v > 2147483647.0)
          throw std::invalid_argument("raw: value not representable as i32");
        put_le(bytes, static_cast<std::uint32_t>(static_cast<std::int32_t>(v)));
        break;
      }
    }
  }
  write_file(with_suffix(stem, ".json"), header_to_json(h).dump(2) + "\n");
  std::ofstream out(with_suffix(stem, ".raw"), std::ios::binary);
  if (!out) throw std::runtime_error("raw: cannot open payload for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("raw: payload write failed");
}

RawArray load_raw(const fs::path& path) {
  const fs::path stem = raw_stem(path);
  const fs::path header_path = with_suffix(stem, ".json");
  const fs::path payload_path = with_suffix(stem, ".raw");
  std::ifstream hin(header_path);
  if (!hin) throw std::runtime_error("raw: missing sidecar " + header_path.string());
  json j;
  try {
    hin >> j;
  } catch (const json::exception& e) {
    throw std::runtime_error("raw: malformed sidecar " + header_path.string() + ": " + e.what());
  }

  RawArray out;
  RawHeader& h = out.header;
  try {
    h.shape = j.at("shape").get<std::vector<std::int64_t>>();
    h.axis_names = j.at("axis_names").get<std::vector<std::string>>();
    h.dtype = dtype_from_string(j.at("dtype").get<std::string>());
    if (j.value("byte_order", std::string("little")) != "little")
      throw std::runtime_error("raw: unsupported byte order");
    h.kind = j.value("kind", std::string());
    h.channel_labels = j.value("channel_labels", std::vector<std::string>{});
    h.metadata = j.value("metadata", json::object());
  } catch (const json::exception& e) {
    throw std::runtime_error("raw: bad sidecar " + header_path.string() + ": " + e.what());
  }
  check_header(h);

  std::ifstream pin(payload_path, std::ios::binary);
  if (!pin) throw std::runtime_error("raw: missing payload " + payload_path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(pin)), std::istreambuf_iterator<char>());
  const std::size_t width = dtype_size(h.dtype);
  const auto expected = static_cast<std::size_t>(h.element_count()) * width;
  if (bytes.size() != expected)
    throw std::runtime_error("raw: payload length mismatch for " + payload_path.string() + " (" +
                             std::to_string(bytes.size()) + " bytes, header implies " +
                             std::to_string(expected) + ")");
  out.values.resize(static_cast<std::size_t>(h.element_count()));
  for (std::size_t i = 0; i < out.values.size(); ++i) {
    const unsigned char* p = bytes.data() + i * width;
    switch (h.dtype) {
      case DType::f32: out.values[i] = std::bit_cast<float>(get_le<std::uint32_t>(p)); break;
      case DType::f64: out.values[i] = std::bit_cast<double>(get_le<std::uint64_t>(p)); break;
      case DType::i32: out.values[i] = static_cast<std::int32_t>(get_le<std::uint32_t>(p)); break;
    }
  }
  return out;
}

void save_sinogram(const fs::path& path, const SpectralSinogram& sino, const json& metadata) {
  RawArray a;
  a.header.shape = {sino.num_angles(), sino.num_detectors(), sino.num_channels()};
  a.header.axis_names = {"angle", "detector", "channel"};
  a.header.kind = to_string(sino.kind());
  a.header.channel_labels = sino.channel_labels();
  a.header.metadata = metadata;
  a.values = sino.data();
  save_raw(path, a);
}

SpectralSinogram load_sinogram(const fs::path& path) {
  RawArray a = load_raw(path);
  if (a.header.shape.size() != 3) throw std::runtime_error("raw: sinogram must have three axes");
  const auto& s = a.header.shape;
  return SpectralSinogram(static_cast<int>(s[0]), static_cast<int>(s[1]), static_cast<int>(s[2]),
                          sinogram_kind_from_string(a.header.kind), std::move(a.values),
                          a.header.channel_labels);
}

void save_volume(const fs::path& path, const SpectralVolume& vol,
                 const std::vector<std::string>& labels, const json& metadata) {
  RawArray a;
  const int n = vol.grid_side();
  const int m = vol.num_channels();
  a.header.shape = {n, n, m};
  a.header.axis_names = {"row", "col", "channel"};
  a.header.kind = "volume";
  a.header.channel_labels = labels;
  a.header.metadata = metadata;
  a.values.resize(static_cast<std::size_t>(vol.num_pixels()) * m);
  for (int p = 0; p < vol.num_pixels(); ++p)
    for (int k = 0; k < m; ++k) a.values[static_cast<std::size_t>(p) * m + k] = vol.data()(p, k);
  save_raw(path, a);
}

SpectralVolume load_volume(const fs::path& path) {
  RawArray a = load_raw(path);
  const auto& s = a.header.shape;
  if (s.size() != 3 || s[0] != s[1]) throw std::runtime_error("raw: volume must be (row, col, channel) and square");
  const auto pixels = static_cast<Eigen::Index>(s[0] * s[1]);
  const auto m = static_cast<Eigen::Index>(s[2]);
  Eigen::MatrixXd data(pixels, m);
  for (Eigen::Index p = 0; p < pixels; ++p)
    for (Eigen::Index k = 0; k < m; ++k) data(p, k) = a.values[static_cast<std::size_t>(p * m + k)];
  return SpectralVolume(static_cast<int>(s[0]), std::move(data));
}

void save_flat(const fs::path& path, const FlatEstimate& flat, const std::vector<std::string>& labels,
               const json& metadata) {
  RawArray a;
  const auto& v = flat.values();
  a.header.shape = {v.rows(), v.cols()};
  a.header.axis_names = {"detector", "channel"};
  a.header.kind = "flat";
  a.header.channel_labels = labels;
  a.header.metadata = metadata;
  a.values.resize(static_cast<std::size_t>(v.size()));
  for (Eigen::Index d = 0; d < v.rows(); ++d)
    for (Eigen::Index k = 0; k < v.cols(); ++k) a.values[static_cast<std::size_t>(d * v.cols() + k)] = v(d, k);
  save_raw(path, a);
}

namespace {

Eigen::MatrixXd row_major_matrix(const std::vector<double>& values, Eigen::Index rows, Eigen::Index cols) {
  Eigen::MatrixXd out(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) out(i, j) = values[static_cast<std::size_t>(i * cols + j)];
  return out;
}

}  // namespace

FlatEstimate load_flat(const fs::path& path) {
  RawArray a = load_raw(path);
  const auto& s = a.header.shape;
  if (s.size() != 2) throw std::runtime_error("raw: flat estimate must have two axes");
  return FlatEstimate(row_major_matrix(a.values, s[0], s[1]));
}

void save_flat_stack(const fs::path& path, const FlatFieldStack& stack,
                     const std::vector<std::string>& labels) {
  RawArray a;
  const auto& v = stack.data();
  a.header.shape = {stack.num_flats(), stack.num_detectors(), stack.num_channels()};
  a.header.axis_names = {"flat", "detector", "channel"};
  a.header.kind = "flat_stack";
  a.header.channel_labels = labels;
  a.values.resize(static_cast<std::size_t>(v.size()));
  for (Eigen::Index i = 0; i < v.rows(); ++i)
    for (Eigen::Index k = 0; k < v.cols(); ++k) a.values[static_cast<std::size_t>(i * v.cols() + k)] = v(i, k);
  save_raw(path, a);
}

FlatFieldStack load_flat_stack(const fs::path& path) {
  RawArray a = load_raw(path);
  const auto& s = a.header.shape;
  if (s.size() == 2) return FlatFieldStack(row_major_matrix(a.values, s[0], s[1]), 1);
  if (s.size() != 3) throw std::runtime_error("raw: flat stack must have two or three axes");
  return FlatFieldStack(row_major_matrix(a.values, s[0] * s[1], s[2]), static_cast<int>(s[0]));
}

json geometry_to_json(const ScanGeometry& g) {
  return json{{"num_detectors", g.num_detectors},
              {"num_angles", g.num_angles},
              {"angles_deg", g.angles_deg},
              {"grid_side", g.grid_side},
              {"pixel_size", g.pixel_size}};
}

ScanGeometry geometry_from_json(const json& j) {
  ScanGeometry g;
  g.num_detectors = j.at("num_detectors").get<int>();
  g.num_angles = j.at("num_angles").get<int>();
  g.angles_deg = j.at("angles_deg").get<std::vector<double>>();
  g.grid_side = j.at("grid_side").get<int>();
  g.pixel_size = j.value("pixel_size", 1.0);
  g.validate();
  return g;
}

void save_system_matrix(const fs::path& path, const SystemMatrix& a) {
  const fs::path stem = raw_stem(path);
  const auto& mat = a.matrix;
  if (!mat.isCompressed()) throw std::invalid_argument("raw: system matrix must be compressed");
  const auto rows = mat.rows();
  const auto nnz = mat.nonZeros();

  RawArray indptr;
  indptr.header = {{rows + 1}, {"row"}, DType::i32, "system_matrix_indptr", {}, json::object()};
  indptr.values.assign(mat.outerIndexPtr(), mat.outerIndexPtr() + rows + 1);
  RawArray indices;
  indices.header = {{nnz}, {"nonzero"}, DType::i32, "system_matrix_indices", {}, json::object()};
  indices.values.assign(mat.innerIndexPtr(), mat.innerIndexPtr() + nnz);
  RawArray values;
  values.header = {{nnz}, {"nonzero"}, DType::f64, "system_matrix_values", {}, json::object()};
  values.header.metadata["geometry"] = geometry_to_json(a.geometry);
  values.header.metadata["rows"] = rows;
  values.header.metadata["cols"] = mat.cols();
  values.values.assign(mat.valuePtr(), mat.valuePtr() + nnz);

  save_raw(with_suffix(stem, ".indptr"), indptr);
  save_raw(with_suffix(stem, ".indices"), indices);
  save_raw(with_suffix(stem, ".values"), values);
}

SystemMatrix load_system_matrix(const fs::path& path) {
  const fs::path stem = raw_stem(path);
  const RawArray indptr = load_raw(with_suffix(stem, ".indptr"));
  const RawArray indices = load_raw(with_suffix(stem, ".indices"));
  const RawArray values = load_raw(with_suffix(stem, ".values"));
  SystemMatrix out;
  out.geometry = geometry_from_json(values.header.metadata.at("geometry"));
  const Eigen::Index rows = static_cast<Eigen::Index>(out.geometry.num_angles) * out.geometry.num_detectors;
  const Eigen::Index cols = out.geometry.num_pixels();
  const auto nnz = static_cast<Eigen::Index>(values.values.size());
  if (static_cast<Eigen::Index>(indptr.values.size()) != rows + 1 ||
      static_cast<Eigen::Index>(indices.values.size()) != nnz || indptr.values.back() != nnz)
    throw std::runtime_error("raw: inconsistent system matrix cache");
  std::vector<int> outer(indptr.values.begin(), indptr.values.end());
  std::vector<int> inner(indices.values.begin(), indices.values.end());
  for (int c : inner)
    if (c < 0 || c >= cols) throw std::runtime_error("raw: system matrix column out of range");
  for (Eigen::Index i = 0; i < rows; ++i)
    if (outer[i] > outer[i + 1]) throw std::runtime_error("raw: system matrix row pointers decrease");
  std::vector<double> vals = values.values;
  out.matrix = Eigen::Map<const SparseRowMatrix>(rows, cols, nnz, outer.data(), inner.data(), vals.data());
  return out;
}

void write_pgm(const fs::path& path, const Eigen::MatrixXd& image) {
  if (image.size() == 0) throw std::invalid_argument("pgm: empty image");
  if (!image.allFinite()) throw std::invalid_argument("pgm: non-finite image");
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const double lo = image.minCoeff();
  const double hi = image.maxCoeff();
  const double scale = hi > lo ? 65535.0 / (hi - lo) : 0.0;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("pgm: cannot open " + path.string());
  out << "P5\n" << image.cols() << " " << image.rows() << "\n65535\n";
  for (Eigen::Index i = 0; i < image.rows(); ++i)
    for (Eigen::Index j = 0; j < image.cols(); ++j) {
      const auto v = static_cast<std::uint16_t>(std::lround((image(i, j) - lo) * scale));
      const char bytes[2] = {static_cast<char>(v >> 8), static_cast<char>(v & 0xff)};
      out.write(bytes, 2);
    }
  if (!out) throw std::runtime_error("pgm: write failed for " + path.string());
}

}  // namespace specring
