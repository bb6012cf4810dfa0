#include "gsamia/container.hpp"

#include <bit>
#include <fstream>
#include <stdexcept>

namespace gsamia {

namespace {

template <typename U>
void put(std::ostream& os, U v) {
  char buf[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(buf, sizeof(U));
}

template <typename U>
U get(std::istream& is, const std::filesystem::path& path) {
  unsigned char buf[sizeof(U)];
  const auto offset = is.tellg();
  if (!is.read(reinterpret_cast<char*>(buf), sizeof(U))) {
    throw std::runtime_error(path.string() + ": truncated container at byte " +
                             std::to_string(static_cast<long long>(offset)));
  }
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(buf[i]) << (8 * i);
  return v;
}

}  // namespace

void write_container(const std::filesystem::path& path, const Container& c) {
  if (c.magic.size() != 8) throw std::invalid_argument("container magic must be 8 bytes");
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  os.write(c.magic.data(), 8);
  put<std::uint32_t>(os, c.version);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(c.header.size()));
  for (auto h : c.header) put<std::uint32_t>(os, h);
  put<std::uint64_t>(os, c.payload.size());
  for (double d : c.payload) put<std::uint64_t>(os, std::bit_cast<std::uint64_t>(d));
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

Container read_container(const std::filesystem::path& path, const std::string& expected_magic) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  Container c;
  c.magic.resize(8);
  if (!is.read(c.magic.data(), 8)) throw std::runtime_error(path.string() + ": truncated magic");
  if (c.magic != expected_magic) {
    throw std::runtime_error(path.string() + ": bad magic '" + c.magic + "', expected '" +
                             expected_magic + "'");
  }
  c.version = get<std::uint32_t>(is, path);
  const auto nh = get<std::uint32_t>(is, path);
  c.header.resize(nh);
  for (auto& h : c.header) h = get<std::uint32_t>(is, path);
  const auto np = get<std::uint64_t>(is, path);
  c.payload.resize(np);
  for (auto& d : c.payload) d = std::bit_cast<double>(get<std::uint64_t>(is, path));
  return c;
}

}  // namespace gsamia
