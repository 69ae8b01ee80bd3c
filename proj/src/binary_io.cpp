#include "qkl/binary_io.hpp"

#include <array>
#include <bit>
#include <istream>
#include <ostream>

#include "qkl/errors.hpp"

namespace qkl::binio {

namespace {

constexpr std::uint64_t kMaxText = 1u << 20;

void read_exact(std::istream& in, char* dst, std::size_t n, const std::string& what) {
  in.read(dst, static_cast<std::streamsize>(n));
  if (in.gcount() != static_cast<std::streamsize>(n)) throw DataError(what + ": unexpected end of file");
}

}  // namespace

void write_magic(std::ostream& out, const std::string& magic) { out.write(magic.data(), static_cast<std::streamsize>(magic.size())); }

void write_u64(std::ostream& out, std::uint64_t v) {
  std::array<char, 8> b{};
  for (int i = 0; i < 8; ++i) b[static_cast<std::size_t>(i)] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(b.data(), 8);
}

void write_f64(std::ostream& out, double v) { write_u64(out, std::bit_cast<std::uint64_t>(v)); }

void write_text(std::ostream& out, const std::string& s) {
  write_u64(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

void expect_magic(std::istream& in, const std::string& magic, const std::string& what) {
  std::string got(magic.size(), '\0');
  in.read(got.data(), static_cast<std::streamsize>(got.size()));
  if (in.gcount() != static_cast<std::streamsize>(magic.size()) || got != magic) {
    throw DataError(what + ": bad magic (expected " + magic + ")");
  }
}

std::uint64_t read_u64(std::istream& in, const std::string& what) {
  std::array<char, 8> b{};
  read_exact(in, b.data(), 8, what);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(b[static_cast<std::size_t>(i)])) << (8 * i);
  return v;
}

double read_f64(std::istream& in, const std::string& what) { return std::bit_cast<double>(read_u64(in, what)); }

std::string read_text(std::istream& in, const std::string& what) {
  const std::uint64_t n = read_u64(in, what);
  if (n > kMaxText) throw DataError(what + ": text field too long");
  std::string s(n, '\0');
  read_exact(in, s.data(), n, what);
  return s;
}

}  // namespace qkl::binio
