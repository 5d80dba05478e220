#include "gresynth/io/nifti.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "gresynth/error.hpp"

namespace gresynth::io {
namespace {

constexpr int kHeaderSize = 348;
constexpr int kVoxOffset = 352;

enum : std::int16_t {
  kUint8 = 2,
  kInt16 = 4,
  kInt32 = 8,
  kFloat32 = 16,
  kFloat64 = 64,
  kUint16 = 512,
};

template <typename T>
void put(std::vector<char>& buf, std::size_t off, T v) {
  std::memcpy(buf.data() + off, &v, sizeof(T));
}

template <typename T>
T get(const std::vector<char>& buf, std::size_t off) {
  T v;
  std::memcpy(&v, buf.data() + off, sizeof(T));
  return v;
}

std::string describe(const data::Volume& v) {
  std::ostringstream os;
  os << "gresynth:" << data::modality_name(v.modality);
  if (v.modality == data::Modality::Echo) os << ":te=" << v.echo_time_ms;
  return os.str();
}

void parse_description(const std::string& d, data::Volume& v) {
  if (d.rfind("gresynth:", 0) != 0) return;
  std::string rest = d.substr(9);
  const auto colon = rest.find(':');
  v.modality = data::parse_modality(rest.substr(0, colon));
  if (colon != std::string::npos && rest.compare(colon + 1, 3, "te=") == 0)
    v.echo_time_ms = std::stod(rest.substr(colon + 4));
}

template <typename Src>
void decode(const std::vector<char>& raw, std::vector<float>& out, double slope, double inter) {
  const std::size_t n = out.size();
  for (std::size_t i = 0; i < n; ++i) {
    Src s;
    std::memcpy(&s, raw.data() + i * sizeof(Src), sizeof(Src));
    out[i] = static_cast<float>(static_cast<double>(s) * slope + inter);
  }
}

}  // namespace

void write_nifti(const std::filesystem::path& path, const data::Volume& v) {
  v.validate();
  const bool integral = v.modality == data::Modality::Labels || v.modality == data::Modality::Mask;
  std::vector<char> hdr(kVoxOffset, 0);
  put<std::int32_t>(hdr, 0, kHeaderSize);
  put<char>(hdr, 38, 'r');
  const std::int16_t dim[8] = {3, static_cast<std::int16_t>(v.nx), static_cast<std::int16_t>(v.ny),
                               static_cast<std::int16_t>(v.nz), 1, 1, 1, 1};
  for (int i = 0; i < 8; ++i) put<std::int16_t>(hdr, 40 + 2 * i, dim[i]);
  put<std::int16_t>(hdr, 70, integral ? kInt16 : kFloat32);
  put<std::int16_t>(hdr, 72, integral ? 16 : 32);
  const float pixdim[8] = {1.0f, static_cast<float>(v.spacing[0]), static_cast<float>(v.spacing[1]),
                           static_cast<float>(v.spacing[2]), 1.0f, 1.0f, 1.0f, 1.0f};
  for (int i = 0; i < 8; ++i) put<float>(hdr, 76 + 4 * i, pixdim[i]);
  put<float>(hdr, 108, static_cast<float>(kVoxOffset));
  put<float>(hdr, 112, 1.0f);
  put<float>(hdr, 116, 0.0f);
  put<char>(hdr, 123, 2);  // mm
  const std::string desc = describe(v);
  std::memcpy(hdr.data() + 148, desc.data(), std::min<std::size_t>(desc.size(), 79));
  put<std::int16_t>(hdr, 252, 0);
  put<std::int16_t>(hdr, 254, 1);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 4; ++c)
      put<float>(hdr, 280 + 16 * r + 4 * c, static_cast<float>(v.affine[r][c]));
  std::memcpy(hdr.data() + 344, "n+1\0", 4);

  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(hdr.data(), static_cast<std::streamsize>(hdr.size()));
  if (integral) {
    std::vector<std::int16_t> buf(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) buf[i] = static_cast<std::int16_t>(v.data[i]);
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(std::int16_t)));
  } else {
    out.write(reinterpret_cast<const char*>(v.data.data()),
              static_cast<std::streamsize>(v.size() * sizeof(float)));
  }
  if (!out) throw DataError("write failed: " + path.string());
}

data::Volume read_nifti(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<char> hdr(kHeaderSize);
  in.read(hdr.data(), kHeaderSize);
  if (!in) throw DataError("truncated NIfTI header: " + path.string());
  if (get<std::int32_t>(hdr, 0) != kHeaderSize)
    throw DataError("not a little-endian NIfTI-1 file: " + path.string());
  if (std::memcmp(hdr.data() + 344, "n+1", 3) != 0)
    throw DataError("not a single-file NIfTI-1 image: " + path.string());

  const int ndim = get<std::int16_t>(hdr, 40);
  int dims[7] = {1, 1, 1, 1, 1, 1, 1};
  for (int i = 0; i < ndim && i < 7; ++i) dims[i] = get<std::int16_t>(hdr, 42 + 2 * i);
  if (ndim < 1 || ndim > 7) throw DataError("bad NIfTI dimensionality in " + path.string());
  for (int i = 3; i < 7; ++i)
    if (dims[i] != 1) throw DataError("only 3D NIfTI volumes are supported: " + path.string());

  data::Volume v(dims[0], dims[1], dims[2]);
  for (int i = 0; i < 3; ++i) {
    const float p = get<float>(hdr, 80 + 4 * i);
    v.spacing[static_cast<std::size_t>(i)] = p > 0 ? p : 1.0;
  }
  if (get<std::int16_t>(hdr, 254) > 0) {
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 4; ++c)
        v.affine[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] =
            get<float>(hdr, 280 + 16 * static_cast<std::size_t>(r) + 4 * static_cast<std::size_t>(c));
  } else {
    v.reset_affine();
  }
  std::string desc(hdr.data() + 148, 80);
  desc = desc.substr(0, desc.find('\0'));
  parse_description(desc, v);

  const std::int16_t datatype = get<std::int16_t>(hdr, 70);
  std::size_t width = 0;
  switch (datatype) {
    case kUint8: width = 1; break;
    case kInt16:
    case kUint16: width = 2; break;
    case kInt32:
    case kFloat32: width = 4; break;
    case kFloat64: width = 8; break;
    default: throw DataError("unsupported NIfTI datatype " + std::to_string(datatype));
  }
  double slope = get<float>(hdr, 112);
  double inter = get<float>(hdr, 116);
  if (slope == 0.0 || !std::isfinite(slope)) {
    slope = 1.0;
    inter = 0.0;
  }
  const auto offset = static_cast<std::streamoff>(get<float>(hdr, 108));
  in.seekg(offset);
  std::vector<char> raw(v.size() * width);
  in.read(raw.data(), static_cast<std::streamsize>(raw.size()));
  if (!in) throw DataError("truncated NIfTI data: " + path.string());
  switch (datatype) {
    case kUint8: decode<std::uint8_t>(raw, v.data, slope, inter); break;
    case kInt16: decode<std::int16_t>(raw, v.data, slope, inter); break;
    case kUint16: decode<std::uint16_t>(raw, v.data, slope, inter); break;
    case kInt32: decode<std::int32_t>(raw, v.data, slope, inter); break;
    case kFloat32: decode<float>(raw, v.data, slope, inter); break;
    case kFloat64: decode<double>(raw, v.data, slope, inter); break;
    default: break;
  }
  return v;
}

}  // namespace gresynth::io
