// Copyright (c) 2026, OBIFormer contributors
// SPDX-License-Identifier: Apache-2.0

#include "obiformer/container.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <vector>

#include "obiformer/errors.hpp"

namespace obiformer {

static_assert(std::endian::native == std::endian::little, "container I/O assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'O', 'B', 'I', 'F'};

void put_u32(std::string& out, std::uint32_t v) { out.append(reinterpret_cast<const char*>(&v), 4); }

class Reader {
 public:
  Reader(const std::string& bytes, const std::string& path) : bytes_(bytes), path_(path) {}

  bool done() const { return pos_ == bytes_.size(); }

  std::uint32_t u32() {
    std::uint32_t v;
    std::memcpy(&v, take(4), 4);
    return v;
  }
  std::string text(std::size_t n) { return std::string(take(n), n); }
  void floats(float* dst, std::size_t n) { std::memcpy(dst, take(n * sizeof(float)), n * sizeof(float)); }

 private:
  const char* take(std::size_t n) {
    if (bytes_.size() - pos_ < n) throw FormatError(path_ + ": truncated container at byte " + std::to_string(pos_));
    const char* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }

  const std::string& bytes_;
  const std::string& path_;
  std::size_t pos_ = 0;
};

}  // namespace

void write_container(const std::string& path, const Container& container) {
  std::string out(kMagic, 4);
  put_u32(out, kContainerVersion);
  const std::string text = format_key_values(container.config);
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  out += text;
  for (const auto& e : container.records.entries()) {
    put_u32(out, static_cast<std::uint32_t>(e.name.size()));
    out += e.name;
    put_u32(out, static_cast<std::uint32_t>(e.value.rank()));
    for (int d : e.value.shape()) put_u32(out, static_cast<std::uint32_t>(d));
    out.append(reinterpret_cast<const char*>(e.value.data()), e.value.size() * sizeof(float));
  }

  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw IngestionError("cannot open " + tmp + " for writing");
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw IngestionError("write failed: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

Container read_container(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IngestionError("cannot open " + path);
  const std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

  Reader r(bytes, path);
  if (r.text(4) != std::string(kMagic, 4)) throw FormatError(path + ": bad magic, not an OBIF container");
  const std::uint32_t version = r.u32();
  if (version != kContainerVersion) {
    throw FormatError(path + ": unsupported container version " + std::to_string(version));
  }
  Container c;
  c.config = parse_key_values(r.text(r.u32()));
  while (!r.done()) {
    std::string name = r.text(r.u32());
    if (c.records.contains(name)) throw FormatError(path + ": duplicate record " + name);
    const std::uint32_t rank = r.u32();
    if (rank > 8) throw FormatError(path + ": implausible rank " + std::to_string(rank) + " for " + name);
    Shape shape(rank);
    for (auto& d : shape) d = static_cast<int>(r.u32());
    Tensor<float> t(shape);
    r.floats(t.data(), t.size());
    c.records.add(std::move(name), std::move(t));
  }
  return c;
}

}  // namespace obiformer
