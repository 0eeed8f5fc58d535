#include "doctest.h"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "oto/dataset.hpp"
#include "oto/errors.hpp"
#include "oto/rng.hpp"

using namespace oto;
using dataset::SampleRecord;

namespace {

// Golden single-record file, produced by an independent byte-level encoder.
const char* kGoldenHex =
    "4f544f3100000001a400000001000200000002000000000000000000903f000000000000"
    "e03f0100000000030100000004000000333333333333e33f9a9999999999e9bf02000000"
    "040303000000000000000100000002000000000000000000000000000000000000000201"
    "010000000600000000000000000000000000000000000000"
    "0000803e0000003f0000403f0000803f00000000000029402a0000000700000000000000"
    "0300000000000000";

std::vector<unsigned char> from_hex(const std::string& hex) {
  std::vector<unsigned char> out;
  out.reserve(hex.size() / 2);
  for (std::size_t i = 0; i + 1 < hex.size(); i += 2)
    out.push_back(static_cast<unsigned char>(std::stoi(hex.substr(i, 2), nullptr, 16)));
  return out;
}

std::string to_hex(const std::vector<unsigned char>& bytes) {
  static const char* digits = "0123456789abcdef";
  std::string s;
  s.reserve(bytes.size() * 2);
  for (unsigned char b : bytes) {
    s.push_back(digits[b >> 4]);
    s.push_back(digits[b & 0xF]);
  }
  return s;
}

SampleRecord golden_record() {
  SampleRecord rec;
  rec.labeled = true;
  rec.domain = {2, 2, 0.015625};
  rec.vf = 0.5;
  LoadGroup lg;
  lg.kind = FeatureKind::InternalPoint;
  lg.dir = kDirBoth;
  lg.node_ids = {4};
  lg.fx = 0.6;
  lg.fy = -0.8;
  rec.loads = {lg};
  ConstraintGroup c1;
  c1.kind = FeatureKind::FullEdge;
  c1.fix_x = c1.fix_y = true;
  c1.node_ids = {0, 1, 2};
  ConstraintGroup c2;
  c2.kind = FeatureKind::CornerPoint;
  c2.fix_x = true;
  c2.fix_y = false;
  c2.node_ids = {6};
  rec.constraints = {c1, c2};
  rec.density = {0.25f, 0.5f, 0.75f, 1.0f};
  rec.compliance = 12.5;
  rec.iterations = 42;
  rec.seed = 7;
  rec.index = 3;
  return rec;
}

std::vector<unsigned char> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::string& path, const std::vector<unsigned char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

bool bit_equal(float a, float b) {
  return std::bit_cast<std::uint32_t>(a) == std::bit_cast<std::uint32_t>(b);
}
bool bit_equal(double a, double b) {
  return std::bit_cast<std::uint64_t>(a) == std::bit_cast<std::uint64_t>(b);
}

void check_same(const SampleRecord& a, const SampleRecord& b) {
  REQUIRE(a.labeled == b.labeled);
  CHECK(a.domain.nx == b.domain.nx);
  CHECK(a.domain.ny == b.domain.ny);
  CHECK(bit_equal(a.domain.cell_size, b.domain.cell_size));
  CHECK(bit_equal(a.vf, b.vf));
  REQUIRE(a.loads.size() == b.loads.size());
  for (std::size_t i = 0; i < a.loads.size(); ++i) {
    CHECK(a.loads[i].kind == b.loads[i].kind);
    CHECK(a.loads[i].dir == b.loads[i].dir);
    CHECK(a.loads[i].node_ids == b.loads[i].node_ids);
    CHECK(bit_equal(a.loads[i].fx, b.loads[i].fx));
    CHECK(bit_equal(a.loads[i].fy, b.loads[i].fy));
  }
  REQUIRE(a.constraints.size() == b.constraints.size());
  for (std::size_t i = 0; i < a.constraints.size(); ++i) {
    CHECK(a.constraints[i].kind == b.constraints[i].kind);
    CHECK(a.constraints[i].fix_x == b.constraints[i].fix_x);
    CHECK(a.constraints[i].fix_y == b.constraints[i].fix_y);
    CHECK(a.constraints[i].node_ids == b.constraints[i].node_ids);
  }
  REQUIRE(a.density.size() == b.density.size());
  for (std::size_t i = 0; i < a.density.size(); ++i)
    CHECK(bit_equal(a.density[i], b.density[i]));
  CHECK(bit_equal(a.compliance, b.compliance));
  CHECK(a.iterations == b.iterations);
  CHECK(a.seed == b.seed);
  CHECK(a.index == b.index);
}

SampleRecord random_record(rng::CounterRng& r, std::uint64_t index) {
  SampleRecord rec;
  rec.labeled = r.u01() < 0.7;
  const int nx = static_cast<int>(r.uniform_int(1, 6));
  const int ny = static_cast<int>(r.uniform_int(1, 6));
  rec.domain = {nx, ny, r.uniform_range(1e-3, 1e-1)};
  rec.vf = r.uniform_range(0.05, 0.95);
  if (rec.labeled) {
    const int nl = static_cast<int>(r.uniform_int(1, 3));
    for (int g = 0; g < nl; ++g) {
      LoadGroup lg;
      lg.kind = static_cast<FeatureKind>(r.uniform_int(0, 5));
      lg.dir = static_cast<std::uint8_t>(r.uniform_int(1, 3));
      const int cnt = static_cast<int>(r.uniform_int(1, 4));
      for (int k = 0; k < cnt; ++k)
        lg.node_ids.push_back(static_cast<int>(r.uniform_int(0, rec.domain.n_nodes() - 1)));
      lg.fx = r.uniform_range(-1.0, 1.0);
      lg.fy = r.uniform_range(-1.0, 1.0);
      rec.loads.push_back(std::move(lg));
    }
    const int nc = static_cast<int>(r.uniform_int(1, 3));
    for (int g = 0; g < nc; ++g) {
      ConstraintGroup cg;
      cg.kind = static_cast<FeatureKind>(r.uniform_int(0, 5));
      cg.fix_x = r.u01() < 0.5;
      cg.fix_y = !cg.fix_x || r.u01() < 0.5;
      const int cnt = static_cast<int>(r.uniform_int(1, 4));
      for (int k = 0; k < cnt; ++k)
        cg.node_ids.push_back(static_cast<int>(r.uniform_int(0, rec.domain.n_nodes() - 1)));
      rec.constraints.push_back(std::move(cg));
    }
  }
  rec.density.resize(static_cast<std::size_t>(nx) * ny);
  for (auto& v : rec.density) v = static_cast<float>(r.u01());
  rec.compliance = r.u01() < 0.25 ? std::numeric_limits<double>::quiet_NaN()
                                  : r.uniform_range(0.1, 1e4);
  rec.iterations = static_cast<std::uint32_t>(r.uniform_int(0, 150));
  rec.seed = r.next_u64();
  rec.index = index;
  return rec;
}

}  // namespace

TEST_CASE("single golden record serializes to the reference bytes") {
  const auto golden = from_hex(kGoldenHex);
  const std::string path = "golden_tmp.oto1";

  {
    dataset::Writer w(path);
    w.write(golden_record());
    CHECK(w.bytes_written() == golden.size());
  }
  const auto bytes = read_file(path);
  REQUIRE(bytes.size() == golden.size());
  CHECK(to_hex(bytes) == kGoldenHex);

  // serialize_record covers everything after the 8-byte magic
  const auto payload = dataset::serialize_record(golden_record());
  CHECK(to_hex(payload) == std::string(kGoldenHex).substr(16));
  std::remove(path.c_str());
}

TEST_CASE("golden bytes parse back to the golden record") {
  const std::string path = "golden_parse_tmp.oto1";
  write_file(path, from_hex(kGoldenHex));
  dataset::Reader r(path);
  const auto rec = r.next();
  REQUIRE(rec.has_value());
  check_same(*rec, golden_record());
  CHECK(!r.next().has_value());
  std::remove(path.c_str());
}

TEST_CASE("1000 mixed records round-trip bit-exactly") {
  rng::CounterRng prng(20260815, 0);
  std::vector<SampleRecord> records;
  records.reserve(1000);
  for (std::uint64_t k = 0; k < 1000; ++k) records.push_back(random_record(prng, k));

  const std::string path = "roundtrip_tmp.oto1";
  const auto bytes = dataset::write_corpus(records, path);
  CHECK(bytes == read_file(path).size());

  const auto back = dataset::read_corpus(path);
  REQUIRE(back.size() == records.size());
  for (std::size_t i = 0; i < records.size(); ++i) check_same(records[i], back[i]);

  // a second write of the decoded records is byte-identical
  const std::string path2 = "roundtrip_tmp2.oto1";
  dataset::write_corpus(back, path2);
  CHECK(read_file(path) == read_file(path2));
  std::remove(path.c_str());
  std::remove(path2.c_str());
}

TEST_CASE("reader rejects a bad magic") {
  const std::string path = "magic_tmp.oto1";
  auto bytes = from_hex(kGoldenHex);
  bytes[0] = 0x58;
  write_file(path, bytes);
  CHECK_THROWS_AS(dataset::Reader r(path), MagicMismatch);

  // wrong version byte counts as a magic failure too
  bytes = from_hex(kGoldenHex);
  bytes[7] = 2;
  write_file(path, bytes);
  CHECK_THROWS_AS(dataset::Reader r2(path), MagicMismatch);
  std::remove(path.c_str());
}

TEST_CASE("truncation damages only the cut record") {
  // two golden records back to back, then cut the second one short
  const auto one = from_hex(kGoldenHex);
  std::vector<unsigned char> two = one;
  two.insert(two.end(), one.begin() + 8, one.end());

  const std::string path = "trunc_tmp.oto1";
  SUBCASE("cut inside the second payload") {
    std::vector<unsigned char> cut(two.begin(), two.end() - 40);
    write_file(path, cut);
    dataset::Reader r(path);
    const auto first = r.next();
    REQUIRE(first.has_value());
    check_same(*first, golden_record());
    CHECK_THROWS_AS(r.next(), TruncatedRecord);
  }
  SUBCASE("cut inside the second length prefix") {
    std::vector<unsigned char> cut(two.begin(), two.begin() + one.size() + 2);
    write_file(path, cut);
    dataset::Reader r(path);
    REQUIRE(r.next().has_value());
    CHECK_THROWS_AS(r.next(), TruncatedRecord);
  }
  SUBCASE("clean cut between records is a normal end of file") {
    write_file(path, one);
    dataset::Reader r(path);
    REQUIRE(r.next().has_value());
    CHECK(!r.next().has_value());
  }
  std::remove(path.c_str());
}

TEST_CASE("reserved flag bits are rejected") {
  auto bytes = from_hex(kGoldenHex);
  bytes[12] |= 0x02;  // payload starts at offset 12; flags is its first u16
  const std::string path = "flags_tmp.oto1";
  write_file(path, bytes);
  dataset::Reader r(path);
  CHECK_THROWS_AS(r.next(), FormatError);
  std::remove(path.c_str());
}

TEST_CASE("unknown feature kinds are rejected") {
  auto bytes = from_hex(kGoldenHex);
  // first load group's kind byte: offset 12 (payload) + 26 (header) + 4 (count)
  REQUIRE(bytes[42] == 0x00);
  bytes[42] = 0x06;
  const std::string path = "kind_tmp.oto1";
  write_file(path, bytes);
  dataset::Reader r(path);
  CHECK_THROWS_AS(r.next(), FormatError);
  std::remove(path.c_str());
}

TEST_CASE("length mismatches are rejected in both directions") {
  const std::string path = "len_tmp.oto1";
  SUBCASE("declared length larger than the payload needs") {
    auto bytes = from_hex(kGoldenHex);
    bytes.push_back(0);  // extra byte inside the declared payload
    bytes[8] = static_cast<unsigned char>(bytes[8] + 1);
    write_file(path, bytes);
    dataset::Reader r(path);
    CHECK_THROWS_AS(r.next(), LengthMismatch);
  }
  SUBCASE("declared length too small for the contents") {
    auto bytes = from_hex(kGoldenHex);
    bytes[8] = static_cast<unsigned char>(bytes[8] - 4);
    bytes.resize(bytes.size() - 4);  // keep the file consistent with the new length
    write_file(path, bytes);
    dataset::Reader r(path);
    CHECK_THROWS_AS(r.next(), LengthMismatch);
  }
  std::remove(path.c_str());
}

TEST_CASE("non-positive dimensions are rejected") {
  auto bytes = from_hex(kGoldenHex);
  bytes[14] = bytes[15] = bytes[16] = bytes[17] = 0;  // nx = 0
  const std::string path = "dims_tmp.oto1";
  write_file(path, bytes);
  dataset::Reader r(path);
  CHECK_THROWS_AS(r.next(), FormatError);
  std::remove(path.c_str());
}

TEST_CASE("append mode extends an existing corpus") {
  const std::string path = "append_tmp.oto1";
  rng::CounterRng prng(4, 2);
  const auto a = random_record(prng, 0);
  const auto b = random_record(prng, 1);
  const auto c = random_record(prng, 2);
  {
    dataset::Writer w(path);
    w.write(a);
    w.write(b);
  }
  {
    dataset::Writer w(path, /*append=*/true);
    w.write(c);
  }
  const auto back = dataset::read_corpus(path);
  REQUIRE(back.size() == 3);
  check_same(back[0], a);
  check_same(back[1], b);
  check_same(back[2], c);

  // append=false truncates and starts over
  {
    dataset::Writer w(path);
    w.write(c);
  }
  CHECK(dataset::read_corpus(path).size() == 1);
  std::remove(path.c_str());
}

TEST_CASE("append refuses a foreign file") {
  const std::string path = "foreign_tmp.bin";
  write_file(path, {0x50, 0x4B, 0x03, 0x04, 0, 0, 0, 0, 1, 2, 3});
  CHECK_THROWS_AS(dataset::Writer(path, true), MagicMismatch);
  std::remove(path.c_str());
}

TEST_CASE("unlabeled records omit the problem tables") {
  SampleRecord rec;
  rec.labeled = false;
  rec.domain = {3, 2, 0.25};
  rec.vf = 0.4;
  rec.density = {0.1f, 0.2f, 0.3f, 0.4f, 0.5f, 0.6f};
  rec.seed = 11;
  rec.index = 9;

  const auto bytes = dataset::serialize_record(rec);
  // u32 len + u16 flags + 2*u32 + 2*f64 + 6*f32 + f64 + u32 + 2*u64 = 82
  CHECK(bytes.size() == 82);

  const std::string path = "unlabeled_tmp.oto1";
  {
    dataset::Writer w(path);
    w.write(rec);
  }
  const auto back = dataset::read_corpus(path);
  REQUIRE(back.size() == 1);
  check_same(back[0], rec);
  CHECK_THROWS_AS(back[0].problem(), InvalidArgument);
  std::remove(path.c_str());
}

TEST_CASE("problem() reconstructs the stored specification") {
  const auto rec = golden_record();
  const ProblemSpec p = rec.problem();
  CHECK(p.domain.nx == 2);
  CHECK(p.domain.cell_size == 0.015625);
  CHECK(p.volume_fraction == 0.5);
  REQUIRE(p.loads.size() == 1);
  CHECK(p.loads[0].fx == 0.6);
  CHECK(p.loads[0].fy == -0.8);
  REQUIRE(p.constraints.size() == 2);
  CHECK(p.constraints[0].fix_x);
  CHECK(p.constraints[0].fix_y);
  CHECK(p.constraints[1].fix_x);
  CHECK(!p.constraints[1].fix_y);
}

TEST_CASE("serialize_record validates the density length") {
  auto rec = golden_record();
  rec.density.pop_back();
  CHECK_THROWS_AS(dataset::serialize_record(rec), InvalidArgument);
}
