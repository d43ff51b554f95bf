#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ebert/tokenizer.hpp"

namespace ebert {

// Fixed little-endian sample record stream:
//   magic "EBRT0001", then per sample
//   u16 dna id x150, u8 ideas id x150, f32 dnase x150, f32 mappability x150, u8 label.
// Serialized label arrays elsewhere in the toolchain use -1 for ignored
// positions; this stream only carries the binary binding label.

constexpr char kRecordMagic[8] = {'E', 'B', 'R', 'T', '0', '0', '0', '1'};
constexpr int kRecordPositions = 150;

struct SampleRecord {
  TokenizedPair pair;
  std::uint8_t label = 0;  // 0 = Unbound, 1 = Bound
};

namespace detail {

inline void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

inline void put_f32(std::string& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

inline std::uint16_t get_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

inline float get_f32(const unsigned char* p) {
  std::uint32_t bits = static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
                       (static_cast<std::uint32_t>(p[2]) << 16) |
                       (static_cast<std::uint32_t>(p[3]) << 24);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

}  // namespace detail

class RecordWriter {
public:
  RecordWriter(const std::string& path, const Vocab& vocab) : out_(path, std::ios::binary) {
    if (!out_) throw std::runtime_error("cannot open '" + path + "' for writing");
    if (vocab.size > 65536) throw std::invalid_argument("vocabulary too large for u16 record ids");
    out_.write(kRecordMagic, sizeof(kRecordMagic));
  }

  void write(const SampleRecord& rec) {
    const auto& p = rec.pair;
    if (static_cast<int>(p.dna_ids.size()) != kRecordPositions || !p.has_ideas() || !p.has_aux())
      throw std::invalid_argument("record stream requires 150 positions with all channels");
    std::string buf;
    buf.reserve(1651);
    for (auto id : p.dna_ids) detail::put_u16(buf, static_cast<std::uint16_t>(id));
    for (auto id : p.ideas_ids) buf.push_back(static_cast<char>(id));
    for (auto v : p.dnase) detail::put_f32(buf, static_cast<float>(v));
    for (auto v : p.mappability) detail::put_f32(buf, static_cast<float>(v));
    buf.push_back(static_cast<char>(rec.label));
    out_.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  }

  void close() { out_.close(); }

private:
  std::ofstream out_;
};

inline std::vector<SampleRecord> read_records(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open record file '" + path + "'");

  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kRecordMagic, 8) != 0)
    throw std::runtime_error("'" + path + "' is not an EBRT0001 record file");

  constexpr std::size_t rec_size = kRecordPositions * (2 + 1 + 4 + 4) + 1;
  std::vector<unsigned char> buf(rec_size);
  std::vector<SampleRecord> records;
  while (in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(rec_size))) {
    SampleRecord rec;
    auto& p = rec.pair;
    p.dna_ids.resize(kRecordPositions);
    p.ideas_ids.resize(kRecordPositions);
    p.attention_mask.resize(kRecordPositions);
    p.dnase.resize(kRecordPositions);
    p.mappability.resize(kRecordPositions);

    const unsigned char* ptr = buf.data();
    for (int i = 0; i < kRecordPositions; ++i, ptr += 2)
      p.dna_ids[static_cast<std::size_t>(i)] = detail::get_u16(ptr);
    for (int i = 0; i < kRecordPositions; ++i, ++ptr)
      p.ideas_ids[static_cast<std::size_t>(i)] = *ptr;
    for (int i = 0; i < kRecordPositions; ++i, ptr += 4)
      p.dnase[static_cast<std::size_t>(i)] = detail::get_f32(ptr);
    for (int i = 0; i < kRecordPositions; ++i, ptr += 4)
      p.mappability[static_cast<std::size_t>(i)] = detail::get_f32(ptr);
    rec.label = *ptr;

    for (int i = 0; i < kRecordPositions; ++i)
      p.attention_mask[static_cast<std::size_t>(i)] =
          p.dna_ids[static_cast<std::size_t>(i)] == Vocab::kPad ? 0 : 1;
    records.push_back(std::move(rec));
  }
  if (in.gcount() != 0) throw std::runtime_error("'" + path + "' has a truncated trailing record");
  return records;
}

}  // namespace ebert
