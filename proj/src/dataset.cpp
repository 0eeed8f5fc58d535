#include "oto/dataset.hpp"

#include <bit>
#include <cstring>
#include <type_traits>

#include "oto/errors.hpp"

namespace oto::dataset {

namespace {

template <class T>
void put(std::vector<unsigned char>& buf, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char raw[sizeof(T)];
  std::memcpy(raw, &v, sizeof(T));
  // Host is little-endian on every supported target; keep byte order explicit
  // anyway so the format stays well-defined.
  if constexpr (std::endian::native == std::endian::big) {
    for (std::size_t i = sizeof(T); i-- > 0;) buf.push_back(raw[i]);
  } else {
    buf.insert(buf.end(), raw, raw + sizeof(T));
  }
}

class Cursor {
 public:
  Cursor(const unsigned char* data, std::size_t size) : data_(data), size_(size) {}

  template <class T>
  T get() {
    if (pos_ + sizeof(T) > size_)
      throw LengthMismatch("record payload shorter than its declared length requires");
    T v;
    if constexpr (std::endian::native == std::endian::big) {
      unsigned char raw[sizeof(T)];
      for (std::size_t i = 0; i < sizeof(T); ++i) raw[sizeof(T) - 1 - i] = data_[pos_ + i];
      std::memcpy(&v, raw, sizeof(T));
    } else {
      std::memcpy(&v, data_ + pos_, sizeof(T));
    }
    pos_ += sizeof(T);
    return v;
  }

  std::size_t pos() const { return pos_; }
  std::size_t size() const { return size_; }

 private:
  const unsigned char* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
};

void put_group(std::vector<unsigned char>& buf, FeatureKind kind, std::uint8_t dirflags,
               const std::vector<int>& nodes, double fx, double fy) {
  put<std::uint8_t>(buf, static_cast<std::uint8_t>(kind));
  put<std::uint8_t>(buf, dirflags);
  put<std::uint32_t>(buf, static_cast<std::uint32_t>(nodes.size()));
  for (int n : nodes) put<std::uint32_t>(buf, static_cast<std::uint32_t>(n));
  put<double>(buf, fx);
  put<double>(buf, fy);
}

FeatureKind parse_kind(std::uint8_t k) {
  if (k > 5) throw FormatError("unknown feature kind byte");
  return static_cast<FeatureKind>(k);
}

}  // namespace

ProblemSpec SampleRecord::problem() const {
  if (!labeled) throw InvalidArgument("record is unlabeled (no problem definition)");
  ProblemSpec p;
  p.domain = domain;
  p.loads = loads;
  p.constraints = constraints;
  p.volume_fraction = vf;
  return p;
}

SampleRecord make_record(const ProblemSpec& p, const std::vector<float>& density,
                         double compliance, std::uint32_t iterations, std::uint64_t seed,
                         std::uint64_t index) {
  SampleRecord r;
  r.labeled = true;
  r.domain = p.domain;
  r.vf = p.volume_fraction;
  r.loads = p.loads;
  r.constraints = p.constraints;
  r.density = density;
  r.compliance = compliance;
  r.iterations = iterations;
  r.seed = seed;
  r.index = index;
  return r;
}

std::vector<unsigned char> serialize_record(const SampleRecord& rec) {
  if (static_cast<int>(rec.density.size()) != rec.domain.n_elems())
    throw InvalidArgument("record density length != nx*ny");

  std::vector<unsigned char> payload;
  put<std::uint16_t>(payload, rec.labeled ? 1 : 0);
  put<std::uint32_t>(payload, static_cast<std::uint32_t>(rec.domain.nx));
  put<std::uint32_t>(payload, static_cast<std::uint32_t>(rec.domain.ny));
  put<double>(payload, rec.domain.cell_size);
  put<double>(payload, rec.vf);
  if (rec.labeled) {
    put<std::uint32_t>(payload, static_cast<std::uint32_t>(rec.loads.size()));
    for (const auto& g : rec.loads) put_group(payload, g.kind, g.dir, g.node_ids, g.fx, g.fy);
    put<std::uint32_t>(payload, static_cast<std::uint32_t>(rec.constraints.size()));
    for (const auto& g : rec.constraints) {
      const std::uint8_t dirflags =
          static_cast<std::uint8_t>((g.fix_x ? kDirX : 0) | (g.fix_y ? kDirY : 0));
      put_group(payload, g.kind, dirflags, g.node_ids, 0.0, 0.0);
    }
  }
  for (float v : rec.density) put<float>(payload, v);
  put<double>(payload, rec.compliance);
  put<std::uint32_t>(payload, rec.iterations);
  put<std::uint64_t>(payload, rec.seed);
  put<std::uint64_t>(payload, rec.index);

  std::vector<unsigned char> out;
  out.reserve(payload.size() + 4);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(payload.size()));
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

Writer::Writer(const std::string& path, bool append) {
  bool need_magic = true;
  if (append) {
    std::ifstream existing(path, std::ios::binary);
    if (existing) {
      std::array<unsigned char, 8> m{};
      existing.read(reinterpret_cast<char*>(m.data()), 8);
      if (existing.gcount() > 0) {
        if (existing.gcount() != 8 || m != kMagic)
          throw MagicMismatch("append target is not an OTO1 file");
        need_magic = false;
      }
    }
  }
  out_.open(path, std::ios::binary | (append ? std::ios::app : std::ios::trunc));
  if (!out_) throw IoError("cannot open for writing: " + path);
  if (need_magic) {
    out_.write(reinterpret_cast<const char*>(kMagic.data()), 8);
    bytes_ += 8;
  }
}

void Writer::write(const SampleRecord& rec) {
  const auto bytes = serialize_record(rec);
  out_.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out_) throw IoError("write failed");
  bytes_ += bytes.size();
}

Reader::Reader(const std::string& path) : in_(path, std::ios::binary) {
  if (!in_) throw IoError("cannot open for reading: " + path);
  std::array<unsigned char, 8> m{};
  in_.read(reinterpret_cast<char*>(m.data()), 8);
  if (in_.gcount() != 8 || m != kMagic) throw MagicMismatch("missing or wrong OTO1 magic");
}

std::optional<SampleRecord> Reader::next() {
  unsigned char lenraw[4];
  in_.read(reinterpret_cast<char*>(lenraw), 4);
  if (in_.gcount() == 0) return std::nullopt;  // clean end of file
  if (in_.gcount() != 4) throw TruncatedRecord("record length field cut short");
  std::uint32_t len;
  std::memcpy(&len, lenraw, 4);
  if constexpr (std::endian::native == std::endian::big) {
    len = __builtin_bswap32(len);
  }

  std::vector<unsigned char> payload(len);
  in_.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(len));
  if (in_.gcount() != static_cast<std::streamsize>(len))
    throw TruncatedRecord("record payload cut short");

  Cursor cur(payload.data(), payload.size());
  SampleRecord rec;
  const auto flags = cur.get<std::uint16_t>();
  if (flags & ~std::uint16_t{1}) throw FormatError("reserved flag bits set");
  rec.labeled = flags & 1;
  rec.domain.nx = static_cast<int>(cur.get<std::uint32_t>());
  rec.domain.ny = static_cast<int>(cur.get<std::uint32_t>());
  rec.domain.cell_size = cur.get<double>();
  rec.vf = cur.get<double>();
  if (rec.domain.nx <= 0 || rec.domain.ny <= 0) throw FormatError("non-positive grid dims");

  if (rec.labeled) {
    const auto n_loads = cur.get<std::uint32_t>();
    rec.loads.resize(n_loads);
    for (auto& g : rec.loads) {
      g.kind = parse_kind(cur.get<std::uint8_t>());
      g.dir = cur.get<std::uint8_t>();
      const auto cnt = cur.get<std::uint32_t>();
      g.node_ids.resize(cnt);
      for (auto& n : g.node_ids) n = static_cast<int>(cur.get<std::uint32_t>());
      g.fx = cur.get<double>();
      g.fy = cur.get<double>();
    }
    const auto n_cons = cur.get<std::uint32_t>();
    rec.constraints.resize(n_cons);
    for (auto& g : rec.constraints) {
      g.kind = parse_kind(cur.get<std::uint8_t>());
      const auto dirflags = cur.get<std::uint8_t>();
      g.fix_x = dirflags & kDirX;
      g.fix_y = dirflags & kDirY;
      const auto cnt = cur.get<std::uint32_t>();
      g.node_ids.resize(cnt);
      for (auto& n : g.node_ids) n = static_cast<int>(cur.get<std::uint32_t>());
      cur.get<double>();  // reserved force slots
      cur.get<double>();
    }
  }

  rec.density.resize(static_cast<std::size_t>(rec.domain.n_elems()));
  for (auto& v : rec.density) v = cur.get<float>();
  rec.compliance = cur.get<double>();
  rec.iterations = cur.get<std::uint32_t>();
  rec.seed = cur.get<std::uint64_t>();
  rec.index = cur.get<std::uint64_t>();

  if (cur.pos() != cur.size())
    throw LengthMismatch("record payload longer than its contents");
  return rec;
}

std::uint64_t write_corpus(const std::vector<SampleRecord>& records, const std::string& path) {
  if (records.empty()) throw InvalidArgument("write_corpus: no records");
  Writer w(path);
  for (const auto& r : records) w.write(r);
  return w.bytes_written();
}

std::vector<SampleRecord> read_corpus(const std::string& path) {
  Reader r(path);
  std::vector<SampleRecord> out;
  while (auto rec = r.next()) out.push_back(std::move(*rec));
  return out;
}

}  // namespace oto::dataset
