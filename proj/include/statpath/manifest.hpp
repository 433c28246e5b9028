#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <string>
#include <vector>

#include "statpath/errors.hpp"
#include "statpath/io.hpp"

namespace statpath {

namespace detail {

/// Minimal SHA-256 (FIPS 180-4), enough to fingerprint run artifacts.
class Sha256 {
public:
  Sha256() { reset(); }

  void reset() {
    h_ = {0x6a09e667u, 0xbb67ae85u, 0x3c6ef372u, 0xa54ff53au,
          0x510e527fu, 0x9b05688cu, 0x1f83d9abu, 0x5be0cd19u};
    len_ = 0;
    buf_len_ = 0;
  }

  void update(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    len_ += n;
    while (n > 0) {
      std::size_t take = std::min(n, std::size_t(64) - buf_len_);
      std::memcpy(buf_.data() + buf_len_, p, take);
      buf_len_ += take;
      p += take;
      n -= take;
      if (buf_len_ == 64) {
        compress(buf_.data());
        buf_len_ = 0;
      }
    }
  }

  std::string hex_digest() {
    std::uint64_t bits = len_ * 8;
    unsigned char pad[72] = {0x80};
    std::size_t pad_len = (buf_len_ < 56) ? 56 - buf_len_ : 120 - buf_len_;
    update(pad, pad_len);
    unsigned char len_be[8];
    for (int i = 0; i < 8; ++i)
      len_be[i] = static_cast<unsigned char>(bits >> (56 - 8 * i));
    update(len_be, 8);
    static const char* hexd = "0123456789abcdef";
    std::string out;
    out.reserve(64);
    for (std::uint32_t w : h_)
      for (int i = 28; i >= 0; i -= 4) out += hexd[(w >> i) & 0xF];
    return out;
  }

private:
  static std::uint32_t rotr(std::uint32_t x, int n) {
    return (x >> n) | (x << (32 - n));
  }

  void compress(const unsigned char* p) {
    static const std::uint32_t K[64] = {
        0x428a2f98, 0x71374491, 0xb5c0fbcf, 0xe9b5dba5, 0x3956c25b,
        0x59f111f1, 0x923f82a4, 0xab1c5ed5, 0xd807aa98, 0x12835b01,
        0x243185be, 0x550c7dc3, 0x72be5d74, 0x80deb1fe, 0x9bdc06a7,
        0xc19bf174, 0xe49b69c1, 0xefbe4786, 0x0fc19dc6, 0x240ca1cc,
        0x2de92c6f, 0x4a7484aa, 0x5cb0a9dc, 0x76f988da, 0x983e5152,
        0xa831c66d, 0xb00327c8, 0xbf597fc7, 0xc6e00bf3, 0xd5a79147,
        0x06ca6351, 0x14292967, 0x27b70a85, 0x2e1b2138, 0x4d2c6dfc,
        0x53380d13, 0x650a7354, 0x766a0abb, 0x81c2c92e, 0x92722c85,
        0xa2bfe8a1, 0xa81a664b, 0xc24b8b70, 0xc76c51a3, 0xd192e819,
        0xd6990624, 0xf40e3585, 0x106aa070, 0x19a4c116, 0x1e376c08,
        0x2748774c, 0x34b0bcb5, 0x391c0cb3, 0x4ed8aa4a, 0x5b9cca4f,
        0x682e6ff3, 0x748f82ee, 0x78a5636f, 0x84c87814, 0x8cc70208,
        0x90befffa, 0xa4506ceb, 0xbef9a3f7, 0xc67178f2};
    std::uint32_t w[64];
    for (int i = 0; i < 16; ++i)
      w[i] = (std::uint32_t(p[4 * i]) << 24) |
             (std::uint32_t(p[4 * i + 1]) << 16) |
             (std::uint32_t(p[4 * i + 2]) << 8) | std::uint32_t(p[4 * i + 3]);
    for (int i = 16; i < 64; ++i) {
      std::uint32_t s0 =
          rotr(w[i - 15], 7) ^ rotr(w[i - 15], 18) ^ (w[i - 15] >> 3);
      std::uint32_t s1 =
          rotr(w[i - 2], 17) ^ rotr(w[i - 2], 19) ^ (w[i - 2] >> 10);
      w[i] = w[i - 16] + s0 + w[i - 7] + s1;
    }
    std::uint32_t a = h_[0], b = h_[1], c = h_[2], d = h_[3];
    std::uint32_t e = h_[4], f = h_[5], g = h_[6], h = h_[7];
    for (int i = 0; i < 64; ++i) {
      std::uint32_t S1 = rotr(e, 6) ^ rotr(e, 11) ^ rotr(e, 25);
      std::uint32_t ch = (e & f) ^ (~e & g);
      std::uint32_t t1 = h + S1 + ch + K[i] + w[i];
      std::uint32_t S0 = rotr(a, 2) ^ rotr(a, 13) ^ rotr(a, 22);
      std::uint32_t maj = (a & b) ^ (a & c) ^ (b & c);
      std::uint32_t t2 = S0 + maj;
      h = g;
      g = f;
      f = e;
      e = d + t1;
      d = c;
      c = b;
      b = a;
      a = t1 + t2;
    }
    h_[0] += a;
    h_[1] += b;
    h_[2] += c;
    h_[3] += d;
    h_[4] += e;
    h_[5] += f;
    h_[6] += g;
    h_[7] += h;
  }

  std::array<std::uint32_t, 8> h_;
  std::array<unsigned char, 64> buf_;
  std::uint64_t len_ = 0;
  std::size_t buf_len_ = 0;
};

}  // namespace detail

inline std::string sha256_hex(const std::string& bytes) {
  detail::Sha256 h;
  h.update(bytes.data(), bytes.size());
  return h.hex_digest();
}

inline std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw config_error("cannot read " + path.string());
  detail::Sha256 h;
  char buf[65536];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0)
    h.update(buf, static_cast<std::size_t>(in.gcount()));
  return h.hex_digest();
}

/// Reproducibility record for a run directory: the command, its inputs, and
/// a fingerprint of every emitted file. Contains no timestamps or absolute
/// paths, so re-running the same command with the same seed reproduces the
/// manifest byte for byte.
class RunManifest {
public:
  RunManifest(std::string command, std::uint64_t seed, std::string format)
      : command_(std::move(command)), seed_(seed),
        format_(std::move(format)) {}

  void set_config(const std::string& name, const std::string& content) {
    config_name_ = name;
    config_sha_ = sha256_hex(content);
  }

  /// Writes a file under the run directory and records its fingerprint.
  void emit(const std::filesystem::path& run_dir, const std::string& rel,
            const std::string& content) {
    write_text_file(run_dir / rel, content);
    outputs_.push_back({rel, sha256_hex(content), content.size()});
  }

  const std::string& format() const { return format_; }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["tool"] = "statpath";
    j["version"] = "1.0.0";
    j["command"] = command_;
    j["seed"] = seed_;
    j["format"] = format_;
    j["config"] = {{"name", config_name_}, {"sha256", config_sha_}};
    nlohmann::json outs = nlohmann::json::array();
    for (const auto& o : outputs_)
      outs.push_back(
          {{"path", o.path}, {"sha256", o.sha256}, {"bytes", o.bytes}});
    j["outputs"] = outs;
    return j;
  }

  void write(const std::filesystem::path& run_dir) const {
    write_text_file(run_dir / "manifest.json", to_json().dump(2) + "\n");
  }

private:
  struct Output {
    std::string path;
    std::string sha256;
    std::size_t bytes = 0;
  };

  std::string command_;
  std::uint64_t seed_ = 0;
  std::string format_;
  std::string config_name_;
  std::string config_sha_;
  std::vector<Output> outputs_;
};

}  // namespace statpath
