#pragma once
// Snapshot stream persistence. Little-endian layout:
//
//   header   "FKSN" | u32 version=1 | u8 kind | u8 boundary | i32 n | f64 spacing
//            | u8 model | i32 q | f64 p | f64 h | u64 seed | u32 chain
//   record   u32 length (bytes after this field) | u64 sweep | u32 bond count
//            | ceil(bonds/8) bytes of occupations, bond e in bit e%8 of byte e/8

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <optional>
#include <ostream>
#include <vector>

#include "fkfield/config.hpp"
#include "fkfield/error.hpp"
#include "fkfield/lattice.hpp"
#include "fkfield/sampler.hpp"

namespace fkfield {

static_assert(std::endian::native == std::endian::little, "snapshot I/O assumes a little-endian host");

struct SnapshotHeader {
  LatticeSpec spec;
  CouplingSpec coupling;
  std::uint64_t seed = 0;
  std::uint32_t chain = 0;
};

struct SnapshotRecord {
  std::uint64_t sweep = 0;
  BondConfig bonds;
};

namespace detail {

template <class T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class T>
bool get(std::istream& is, T& v) {
  return static_cast<bool>(is.read(reinterpret_cast<char*>(&v), sizeof v));
}

}  // namespace detail

class SnapshotWriter {
 public:
  SnapshotWriter(std::ostream& os, const SnapshotHeader& h) : os_(os) {
    os_.write("FKSN", 4);
    detail::put<std::uint32_t>(os_, 1);
    detail::put<std::uint8_t>(os_, static_cast<std::uint8_t>(h.spec.kind));
    detail::put<std::uint8_t>(os_, static_cast<std::uint8_t>(h.spec.boundary));
    detail::put<std::int32_t>(os_, h.spec.n);
    detail::put<double>(os_, h.spec.spacing);
    detail::put<std::uint8_t>(os_, static_cast<std::uint8_t>(h.coupling.model));
    detail::put<std::int32_t>(os_, h.coupling.q);
    detail::put<double>(os_, h.coupling.p);
    detail::put<double>(os_, h.coupling.h);
    detail::put<std::uint64_t>(os_, h.seed);
    detail::put<std::uint32_t>(os_, h.chain);
    if (!os_) throw Error(ErrorCode::io_error, "cannot write snapshot header");
  }

  void write(std::uint64_t sweep, const BondConfig& c) {
    const auto nb = static_cast<std::uint32_t>(c.open.size());
    std::vector<std::uint8_t> packed((nb + 7) / 8, 0);
    for (std::uint32_t e = 0; e < nb; ++e)
      if (c.open[e]) packed[e / 8] |= static_cast<std::uint8_t>(1u << (e % 8));
    detail::put<std::uint32_t>(os_, static_cast<std::uint32_t>(8 + 4 + packed.size()));
    detail::put<std::uint64_t>(os_, sweep);
    detail::put<std::uint32_t>(os_, nb);
    os_.write(reinterpret_cast<const char*>(packed.data()), static_cast<std::streamsize>(packed.size()));
    if (!os_) throw Error(ErrorCode::io_error, "cannot write snapshot record");
  }

 private:
  std::ostream& os_;
};

class SnapshotReader {
 public:
  explicit SnapshotReader(std::istream& is) : is_(is) {
    char magic[4];
    std::uint32_t version = 0;
    if (!is_.read(magic, 4) || std::memcmp(magic, "FKSN", 4) != 0) throw Error(ErrorCode::io_error, "not a snapshot stream");
    if (!detail::get(is_, version) || version != 1) throw Error(ErrorCode::io_error, "unsupported snapshot version");
    std::uint8_t kind = 0, boundary = 0, model = 0;
    std::int32_t n = 0, q = 0;
    bool ok = detail::get(is_, kind) && detail::get(is_, boundary) && detail::get(is_, n) && detail::get(is_, header_.spec.spacing) &&
              detail::get(is_, model) && detail::get(is_, q) && detail::get(is_, header_.coupling.p) &&
              detail::get(is_, header_.coupling.h) && detail::get(is_, header_.seed) && detail::get(is_, header_.chain);
    if (!ok || kind > 1 || boundary > 2 || model > 2) throw Error(ErrorCode::io_error, "truncated or corrupt snapshot header");
    header_.spec.kind = static_cast<LatticeKind>(kind);
    header_.spec.boundary = static_cast<Boundary>(boundary);
    header_.spec.n = n;
    header_.coupling.model = static_cast<Model>(model);
    header_.coupling.q = q;
  }

  const SnapshotHeader& header() const { return header_; }

  std::optional<SnapshotRecord> next() {
    std::uint32_t len = 0;
    if (!detail::get(is_, len)) return std::nullopt;
    SnapshotRecord r;
    std::uint32_t nb = 0;
    if (!detail::get(is_, r.sweep) || !detail::get(is_, nb) || len != 12 + (nb + 7) / 8)
      throw Error(ErrorCode::io_error, "corrupt snapshot record");
    std::vector<std::uint8_t> packed((nb + 7) / 8);
    if (!is_.read(reinterpret_cast<char*>(packed.data()), static_cast<std::streamsize>(packed.size())))
      throw Error(ErrorCode::io_error, "truncated snapshot record");
    r.bonds.open.resize(nb);
    for (std::uint32_t e = 0; e < nb; ++e) r.bonds.open[e] = (packed[e / 8] >> (e % 8)) & 1u;
    return r;
  }

 private:
  std::istream& is_;
  SnapshotHeader header_;
};

}  // namespace fkfield
