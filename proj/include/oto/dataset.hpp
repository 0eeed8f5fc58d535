#pragma once

#include <array>
#include <cstdint>
#include <fstream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "oto/domain.hpp"

namespace oto::dataset {

// OTO1 container. Little-endian throughout. Layout:
//   file      := magic records*
//   magic     := 4F 54 4F 31 00 00 00 01
//   record    := u32 payload_length, payload
//   payload   := u16 flags (bit0 = labeled, others reserved 0)
//                u32 nx, u32 ny, f64 cell_size, f64 vf
//                [labeled only] table(loads) table(constraints)
//                f32 density[nx*ny]                 (element order e = ex*ny+ey)
//                f64 compliance (NaN when absent), u32 iterations
//                u64 seed, u64 index
//   table     := u32 group_count, group*
//   group     := u8 kind, u8 dirflags, u32 node_count, u32 node_id[node_count],
//                f64 fx, f64 fy    (constraints: dirflags = fix_x | fix_y<<1,
//                                   forces written as 0)
inline constexpr std::array<unsigned char, 8> kMagic = {0x4F, 0x54, 0x4F, 0x31, 0, 0, 0, 1};

struct SampleRecord {
  bool labeled = false;  // problem definition present
  Domain domain;
  double vf = 0.0;
  std::vector<LoadGroup> loads;              // labeled only
  std::vector<ConstraintGroup> constraints;  // labeled only
  std::vector<float> density;                // always, length nx*ny
  double compliance = std::numeric_limits<double>::quiet_NaN();
  std::uint32_t iterations = 0;
  std::uint64_t seed = 0;
  std::uint64_t index = 0;

  ProblemSpec problem() const;  // requires labeled
};

SampleRecord make_record(const ProblemSpec& p, const std::vector<float>& density,
                         double compliance, std::uint32_t iterations, std::uint64_t seed,
                         std::uint64_t index);

// Append-oriented writer. `append` validates an existing file's magic and
// adds records at the end; otherwise a fresh file is started.
class Writer {
 public:
  explicit Writer(const std::string& path, bool append = false);
  void write(const SampleRecord& rec);
  std::uint64_t bytes_written() const { return bytes_; }

 private:
  std::ofstream out_;
  std::uint64_t bytes_ = 0;
};

// Streaming reader; never loads the whole corpus. next() returns records
// until end of file. Throws MagicMismatch / TruncatedRecord / LengthMismatch.
class Reader {
 public:
  explicit Reader(const std::string& path);
  std::optional<SampleRecord> next();

 private:
  std::ifstream in_;
};

// Whole-corpus convenience wrappers.
std::uint64_t write_corpus(const std::vector<SampleRecord>& records, const std::string& path);
std::vector<SampleRecord> read_corpus(const std::string& path);

// In-memory serialization of one record (length prefix included); exposed
// for byte-level tests.
std::vector<unsigned char> serialize_record(const SampleRecord& rec);

}  // namespace oto::dataset
