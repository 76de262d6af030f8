#include "repton/io.hpp"

#include <array>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "repton/errors.hpp"

namespace repton {

// ---------------------------------------------------------------------------
// SHA-256 (FIPS 180-4), self-contained

namespace {

constexpr std::array<std::uint32_t, 64> kSha256K = {
    0x428a2f98, 0x71374491, 0xb5c0fbcf, 0xe9b5dba5, 0x3956c25b, 0x59f111f1,
    0x923f82a4, 0xab1c5ed5, 0xd807aa98, 0x12835b01, 0x243185be, 0x550c7dc3,
    0x72be5d74, 0x80deb1fe, 0x9bdc06a7, 0xc19bf174, 0xe49b69c1, 0xefbe4786,
    0x0fc19dc6, 0x240ca1cc, 0x2de92c6f, 0x4a7484aa, 0x5cb0a9dc, 0x76f988da,
    0x983e5152, 0xa831c66d, 0xb00327c8, 0xbf597fc7, 0xc6e00bf3, 0xd5a79147,
    0x06ca6351, 0x14292967, 0x27b70a85, 0x2e1b2138, 0x4d2c6dfc, 0x53380d13,
    0x650a7354, 0x766a0abb, 0x81c2c92e, 0x92722c85, 0xa2bfe8a1, 0xa81a664b,
    0xc24b8b70, 0xc76c51a3, 0xd192e819, 0xd6990624, 0xf40e3585, 0x106aa070,
    0x19a4c116, 0x1e376c08, 0x2748774c, 0x34b0bcb5, 0x391c0cb3, 0x4ed8aa4a,
    0x5b9cca4f, 0x682e6ff3, 0x748f82ee, 0x78a5636f, 0x84c87814, 0x8cc70208,
    0x90befffa, 0xa4506ceb, 0xbef9a3f7, 0xc67178f2};

inline std::uint32_t rotr(std::uint32_t x, int n) {
  return (x >> n) | (x << (32 - n));
}

}  // namespace

std::string sha256_hex(const std::string& bytes) {
  std::array<std::uint32_t, 8> h = {0x6a09e667, 0xbb67ae85, 0x3c6ef372,
                                    0xa54ff53a, 0x510e527f, 0x9b05688c,
                                    0x1f83d9ab, 0x5be0cd19};
  std::string msg = bytes;
  const std::uint64_t bit_len = static_cast<std::uint64_t>(bytes.size()) * 8;
  msg.push_back(static_cast<char>(0x80));
  while (msg.size() % 64 != 56) msg.push_back('\0');
  for (int i = 7; i >= 0; --i)
    msg.push_back(static_cast<char>((bit_len >> (8 * i)) & 0xff));

  std::array<std::uint32_t, 64> w{};
  for (std::size_t off = 0; off < msg.size(); off += 64) {
    for (int t = 0; t < 16; ++t) {
      w[t] = (static_cast<std::uint32_t>(static_cast<unsigned char>(msg[off + 4 * t])) << 24) |
             (static_cast<std::uint32_t>(static_cast<unsigned char>(msg[off + 4 * t + 1])) << 16) |
             (static_cast<std::uint32_t>(static_cast<unsigned char>(msg[off + 4 * t + 2])) << 8) |
             static_cast<std::uint32_t>(static_cast<unsigned char>(msg[off + 4 * t + 3]));
    }
    for (int t = 16; t < 64; ++t) {
      const std::uint32_t s0 = rotr(w[t - 15], 7) ^ rotr(w[t - 15], 18) ^ (w[t - 15] >> 3);
      const std::uint32_t s1 = rotr(w[t - 2], 17) ^ rotr(w[t - 2], 19) ^ (w[t - 2] >> 10);
      w[t] = w[t - 16] + s0 + w[t - 7] + s1;
    }
    std::uint32_t a = h[0], b = h[1], c = h[2], d = h[3];
    std::uint32_t e = h[4], f = h[5], g = h[6], hh = h[7];
    for (int t = 0; t < 64; ++t) {
      const std::uint32_t S1 = rotr(e, 6) ^ rotr(e, 11) ^ rotr(e, 25);
      const std::uint32_t ch = (e & f) ^ (~e & g);
      const std::uint32_t t1 = hh + S1 + ch + kSha256K[t] + w[t];
      const std::uint32_t S0 = rotr(a, 2) ^ rotr(a, 13) ^ rotr(a, 22);
      const std::uint32_t maj = (a & b) ^ (a & c) ^ (b & c);
      const std::uint32_t t2 = S0 + maj;
      hh = g;
      g = f;
      f = e;
      e = d + t1;
      d = c;
      c = b;
      b = a;
      a = t1 + t2;
    }
    h[0] += a;
    h[1] += b;
    h[2] += c;
    h[3] += d;
    h[4] += e;
    h[5] += f;
    h[6] += g;
    h[7] += hh;
  }
  static const char* hex = "0123456789abcdef";
  std::string out;
  out.reserve(64);
  for (std::uint32_t v : h)
    for (int i = 7; i >= 0; --i) out.push_back(hex[(v >> (4 * i)) & 0xf]);
  return out;
}

// ---------------------------------------------------------------------------
// CSV

std::string format_double(double v) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string trajectory_csv(const Trajectory& traj, const std::string& meta) {
  const bool with_coeffs = !traj.coeffs.empty();
  if (with_coeffs && traj.coeffs.size() != traj.rows.size())
    throw IoError("coefficient records out of step with monitor rows");
  std::string s;
  if (!meta.empty()) s += "# " + meta + "\n";
  s += "t, mass, l2_norm, free_energy, min_value, penalty_mass";
  if (with_coeffs)
    for (int k = 0; k < traj.coeffs[0].size(); ++k) s += ", c" + std::to_string(k);
  s += "\n";
  for (std::size_t i = 0; i < traj.rows.size(); ++i) {
    const MonitorRow& r = traj.rows[i];
    s += format_double(r.t);
    s += ',';
    s += format_double(r.mass);
    s += ',';
    s += format_double(r.l2_norm);
    s += ',';
    s += format_double(r.free_energy);
    s += ',';
    s += format_double(r.min_value);
    s += ',';
    s += format_double(r.penalty_mass);
    if (with_coeffs)
      for (int k = 0; k < traj.coeffs[i].size(); ++k) {
        s += ',';
        s += format_double(traj.coeffs[i][k]);
      }
    s += '\n';
  }
  return s;
}

// ---------------------------------------------------------------------------
// files

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for writing: " + path);
  f.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!f) throw IoError("short write: " + path);
}

std::string read_text_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open: " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------------------
// snapshots

namespace {

constexpr char kMagic[9] = "RPTNSNP1";

void append_u64_le(std::string& buf, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t read_u64_le(const std::string& buf, std::size_t off) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i)
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[off + i])) << (8 * i);
  return v;
}

}  // namespace

void write_snapshot(const std::string& path, const Vec& coeffs) {
  std::string buf;
  buf.reserve(16 + 8 * static_cast<std::size_t>(coeffs.size()));
  buf.append(kMagic, 8);
  append_u64_le(buf, static_cast<std::uint64_t>(coeffs.size()));
  for (int k = 0; k < coeffs.size(); ++k) {
    std::uint64_t bits;
    static_assert(sizeof bits == sizeof(double));
    std::memcpy(&bits, &coeffs[k], sizeof bits);
    append_u64_le(buf, bits);
  }
  write_text_file(path, buf);
}

Vec read_snapshot(const std::string& path) {
  const std::string buf = read_text_file(path);
  if (buf.size() < 16 || buf.compare(0, 8, kMagic, 8) != 0)
    throw IoError("not a state snapshot: " + path);
  const std::uint64_t k = read_u64_le(buf, 8);
  if (buf.size() != 16 + 8 * k) throw IoError("truncated snapshot: " + path);
  Vec c(static_cast<int>(k));
  for (std::uint64_t i = 0; i < k; ++i) {
    const std::uint64_t bits = read_u64_le(buf, 16 + 8 * i);
    double v;
    std::memcpy(&v, &bits, sizeof v);
    c[static_cast<int>(i)] = v;
  }
  return c;
}

}  // namespace repton
