#include "gresynth/io/npy.hpp"

#include <cstring>
#include <fstream>
#include <sstream>
#include <string>

#include "gresynth/error.hpp"

namespace gresynth::io {
namespace {

std::size_t product(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (auto s : shape) n *= s;
  return n;
}

template <typename T>
void write_impl(const std::filesystem::path& path, std::span<const T> data,
                const std::vector<std::size_t>& shape, const char* descr) {
  if (product(shape) != data.size())
    throw ShapeError("npy: data size does not match shape for " + path.string());
  std::ostringstream dict;
  dict << "{'descr': '" << descr << "', 'fortran_order': False, 'shape': (";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    dict << shape[i];
    if (shape.size() == 1 || i + 1 < shape.size()) dict << ",";
    if (i + 1 < shape.size()) dict << " ";
  }
  dict << "), }";
  std::string header = dict.str();
  const std::size_t unpadded = 10 + header.size() + 1;
  header.append((64 - unpadded % 64) % 64, ' ');
  header.push_back('\n');

  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  const char magic[] = "\x93NUMPY\x01\x00";
  out.write(magic, 8);
  const auto len = static_cast<std::uint16_t>(header.size());
  const unsigned char len_bytes[2] = {static_cast<unsigned char>(len & 0xff),
                                      static_cast<unsigned char>(len >> 8)};
  out.write(reinterpret_cast<const char*>(len_bytes), 2);
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  out.write(reinterpret_cast<const char*>(data.data()),
            static_cast<std::streamsize>(data.size_bytes()));
  if (!out) throw DataError("write failed: " + path.string());
}

std::string dict_value(const std::string& header, const std::string& key) {
  const auto k = header.find("'" + key + "'");
  if (k == std::string::npos) throw DataError("npy header lacks " + key);
  auto colon = header.find(':', k);
  auto start = header.find_first_not_of(' ', colon + 1);
  if (header[start] == '(') return header.substr(start + 1, header.find(')', start) - start - 1);
  auto end = header.find_first_of(",}", start);
  std::string v = header.substr(start, end - start);
  while (!v.empty() && (v.back() == ' ')) v.pop_back();
  if (v.size() >= 2 && v.front() == '\'') v = v.substr(1, v.size() - 2);
  return v;
}

template <typename Src, typename T>
void convert(const std::vector<char>& raw, std::vector<T>& out) {
  const std::size_t n = raw.size() / sizeof(Src);
  out.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    Src v;
    std::memcpy(&v, raw.data() + i * sizeof(Src), sizeof(Src));
    out[i] = static_cast<T>(v);
  }
}

}  // namespace

void write_npy(const std::filesystem::path& path, std::span<const float> data,
               const std::vector<std::size_t>& shape) {
  write_impl(path, data, shape, "<f4");
}
void write_npy(const std::filesystem::path& path, std::span<const double> data,
               const std::vector<std::size_t>& shape) {
  write_impl(path, data, shape, "<f8");
}
void write_npy(const std::filesystem::path& path, std::span<const std::int64_t> data,
               const std::vector<std::size_t>& shape) {
  write_impl(path, data, shape, "<i8");
}

template <typename T>
std::vector<T> read_npy(const std::filesystem::path& path, std::vector<std::size_t>& shape) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, "\x93NUMPY", 6) != 0)
    throw DataError("not an npy file: " + path.string());
  std::size_t header_len = 0;
  if (magic[6] == 1) {
    unsigned char b[2];
    in.read(reinterpret_cast<char*>(b), 2);
    header_len = b[0] | (static_cast<std::size_t>(b[1]) << 8);
  } else {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    header_len = b[0] | (static_cast<std::size_t>(b[1]) << 8) |
                 (static_cast<std::size_t>(b[2]) << 16) | (static_cast<std::size_t>(b[3]) << 24);
  }
  std::string header(header_len, '\0');
  in.read(header.data(), static_cast<std::streamsize>(header_len));
  if (!in) throw DataError("truncated npy header: " + path.string());
  if (dict_value(header, "fortran_order") != "False")
    throw DataError("fortran-ordered npy unsupported: " + path.string());
  const std::string descr = dict_value(header, "descr");

  shape.clear();
  std::istringstream dims(dict_value(header, "shape"));
  std::string tok;
  while (std::getline(dims, tok, ',')) {
    if (tok.find_first_not_of(' ') == std::string::npos) continue;
    shape.push_back(static_cast<std::size_t>(std::stoull(tok)));
  }
  std::size_t width = 0;
  if (descr == "<f4" || descr == "<i4") width = 4;
  else if (descr == "<f8" || descr == "<i8") width = 8;
  else if (descr == "<i2") width = 2;
  else if (descr == "|u1") width = 1;
  else throw DataError("unsupported npy dtype " + descr + " in " + path.string());

  std::vector<char> raw(product(shape) * width);
  in.read(raw.data(), static_cast<std::streamsize>(raw.size()));
  if (!in) throw DataError("truncated npy data: " + path.string());
  std::vector<T> out;
  if (descr == "<f4") convert<float>(raw, out);
  else if (descr == "<f8") convert<double>(raw, out);
  else if (descr == "<i4") convert<std::int32_t>(raw, out);
  else if (descr == "<i8") convert<std::int64_t>(raw, out);
  else if (descr == "<i2") convert<std::int16_t>(raw, out);
  else convert<std::uint8_t>(raw, out);
  return out;
}

template std::vector<float> read_npy<float>(const std::filesystem::path&, std::vector<std::size_t>&);
template std::vector<double> read_npy<double>(const std::filesystem::path&,
                                              std::vector<std::size_t>&);
template std::vector<std::int64_t> read_npy<std::int64_t>(const std::filesystem::path&,
                                                          std::vector<std::size_t>&);

}  // namespace gresynth::io
