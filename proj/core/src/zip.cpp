#include "rsnet/zip.hpp"

#include <zlib.h>

#include <cstdio>
#include <cstring>
#include <fstream>

#include "rsnet/errors.hpp"

namespace rsnet {

namespace {

constexpr std::uint32_t kLocalSig = 0x04034b50;
constexpr std::uint32_t kCentralSig = 0x02014b50;
constexpr std::uint32_t kEndSig = 0x06054b50;
// 1980-01-01, the DOS epoch; fixed so archives are byte-reproducible.
constexpr std::uint16_t kDosDate = 0x0021;

void put16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put32(std::string& out, std::uint32_t v) {
  put16(out, static_cast<std::uint16_t>(v & 0xffff));
  put16(out, static_cast<std::uint16_t>((v >> 16) & 0xffff));
}

std::uint16_t get16(const std::uint8_t* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

std::uint32_t get32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace

ZipWriter::ZipWriter(const std::filesystem::path& path) : path_(path) {
  file_ = std::fopen(path.c_str(), "wb");
  if (!file_) throw IoError("cannot create archive " + path.string());
}

ZipWriter::~ZipWriter() {
  if (!finished_ && file_) std::fclose(static_cast<std::FILE*>(file_));
}

void ZipWriter::add_entry(const std::string& name, const void* data, std::size_t size) {
  if (finished_) throw IoError("archive already finished");
  auto* f = static_cast<std::FILE*>(file_);
  Entry entry;
  entry.name = name;
  entry.size = static_cast<std::uint32_t>(size);
  entry.crc32 = static_cast<std::uint32_t>(
      ::crc32(0L, static_cast<const Bytef*>(data), static_cast<uInt>(size)));
  entry.offset = static_cast<std::uint32_t>(std::ftell(f));

  std::string header;
  put32(header, kLocalSig);
  put16(header, 20);        // version needed
  put16(header, 0);         // flags
  put16(header, 0);         // method: store
  put16(header, 0);         // mod time
  put16(header, kDosDate);  // mod date
  put32(header, entry.crc32);
  put32(header, entry.size);  // compressed == uncompressed for store
  put32(header, entry.size);
  put16(header, static_cast<std::uint16_t>(name.size()));
  put16(header, 0);  // extra length
  header += name;

  if (std::fwrite(header.data(), 1, header.size(), f) != header.size() ||
      (size > 0 && std::fwrite(data, 1, size, f) != size)) {
    throw IoError("short write to " + path_.string());
  }
  entries_.push_back(std::move(entry));
}

void ZipWriter::add_entry(const std::string& name, const std::string& text) {
  add_entry(name, text.data(), text.size());
}

void ZipWriter::finish() {
  if (finished_) return;
  auto* f = static_cast<std::FILE*>(file_);
  const std::uint32_t cd_offset = static_cast<std::uint32_t>(std::ftell(f));
  std::string cd;
  for (const Entry& e : entries_) {
    put32(cd, kCentralSig);
    put16(cd, 20);  // version made by
    put16(cd, 20);  // version needed
    put16(cd, 0);
    put16(cd, 0);
    put16(cd, 0);
    put16(cd, kDosDate);
    put32(cd, e.crc32);
    put32(cd, e.size);
    put32(cd, e.size);
    put16(cd, static_cast<std::uint16_t>(e.name.size()));
    put16(cd, 0);  // extra
    put16(cd, 0);  // comment
    put16(cd, 0);  // disk
    put16(cd, 0);  // internal attrs
    put32(cd, 0);  // external attrs
    put32(cd, e.offset);
    cd += e.name;
  }
  std::string eocd;
  put32(eocd, kEndSig);
  put16(eocd, 0);
  put16(eocd, 0);
  put16(eocd, static_cast<std::uint16_t>(entries_.size()));
  put16(eocd, static_cast<std::uint16_t>(entries_.size()));
  put32(eocd, static_cast<std::uint32_t>(cd.size()));
  put32(eocd, cd_offset);
  put16(eocd, 0);  // comment length

  if (std::fwrite(cd.data(), 1, cd.size(), f) != cd.size() ||
      std::fwrite(eocd.data(), 1, eocd.size(), f) != eocd.size()) {
    throw IoError("short write to " + path_.string());
  }
  std::fclose(f);
  file_ = nullptr;
  finished_ = true;
}

ZipReader::ZipReader(const std::filesystem::path& path) : path_(path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CorruptArchive("cannot open " + path.string());
  in.seekg(0, std::ios::end);
  const std::size_t file_size = static_cast<std::size_t>(in.tellg());
  if (file_size < 22) throw CorruptArchive("archive too short: " + path.string());

  // Locate the end-of-central-directory record from the back.
  const std::size_t tail = std::min<std::size_t>(file_size, 22 + 65535);
  std::vector<std::uint8_t> buf(tail);
  in.seekg(static_cast<std::streamoff>(file_size - tail));
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(tail));
  std::ptrdiff_t eocd = -1;
  for (std::ptrdiff_t i = static_cast<std::ptrdiff_t>(tail) - 22; i >= 0; --i) {
    if (get32(buf.data() + i) == kEndSig) {
      eocd = i;
      break;
    }
  }
  if (eocd < 0) throw CorruptArchive("no end-of-central-directory in " + path.string());

  const std::uint16_t n_entries = get16(buf.data() + eocd + 10);
  const std::uint32_t cd_size = get32(buf.data() + eocd + 12);
  const std::uint32_t cd_offset = get32(buf.data() + eocd + 16);
  if (static_cast<std::size_t>(cd_offset) + cd_size > file_size) {
    throw CorruptArchive("central directory out of range in " + path.string());
  }

  std::vector<std::uint8_t> cd(cd_size);
  in.seekg(cd_offset);
  in.read(reinterpret_cast<char*>(cd.data()), static_cast<std::streamsize>(cd_size));
  if (!in) throw CorruptArchive("cannot read central directory of " + path.string());

  std::size_t pos = 0;
  for (std::uint16_t i = 0; i < n_entries; ++i) {
    if (pos + 46 > cd.size() || get32(cd.data() + pos) != kCentralSig) {
      throw CorruptArchive("bad central directory entry in " + path.string());
    }
    Entry e;
    const std::uint16_t method = get16(cd.data() + pos + 10);
    e.crc32 = get32(cd.data() + pos + 16);
    const std::uint32_t csize = get32(cd.data() + pos + 20);
    e.size = get32(cd.data() + pos + 24);
    const std::uint16_t name_len = get16(cd.data() + pos + 28);
    const std::uint16_t extra_len = get16(cd.data() + pos + 30);
    const std::uint16_t comment_len = get16(cd.data() + pos + 32);
    e.offset = get32(cd.data() + pos + 42);
    if (method != 0 || csize != e.size) {
      throw CorruptArchive("unsupported compression in " + path.string());
    }
    if (pos + 46 + name_len > cd.size()) {
      throw CorruptArchive("truncated entry name in " + path.string());
    }
    std::string name(reinterpret_cast<const char*>(cd.data() + pos + 46), name_len);
    entries_.emplace(std::move(name), e);
    pos += 46u + name_len + extra_len + comment_len;
  }
}

std::vector<std::string> ZipReader::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [name, _] : entries_) out.push_back(name);
  return out;
}

std::vector<std::uint8_t> ZipReader::read(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) {
    throw CorruptArchive("missing entry '" + name + "' in " + path_.string());
  }
  const Entry& e = it->second;
  std::ifstream in(path_, std::ios::binary);
  if (!in) throw CorruptArchive("cannot open " + path_.string());

  std::uint8_t header[30];
  in.seekg(e.offset);
  in.read(reinterpret_cast<char*>(header), 30);
  if (!in || get32(header) != kLocalSig) {
    throw CorruptArchive("bad local header for '" + name + "'");
  }
  const std::uint16_t name_len = get16(header + 26);
  const std::uint16_t extra_len = get16(header + 28);
  in.seekg(e.offset + 30 + name_len + extra_len);
  std::vector<std::uint8_t> data(e.size);
  in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(e.size));
  if (!in) throw CorruptArchive("truncated data for '" + name + "'");
  const auto crc = static_cast<std::uint32_t>(
      ::crc32(0L, reinterpret_cast<const Bytef*>(data.data()), static_cast<uInt>(data.size())));
  if (crc != e.crc32) throw CorruptArchive("CRC mismatch for '" + name + "'");
  return data;
}

std::string ZipReader::read_text(const std::string& name) const {
  auto bytes = read(name);
  return std::string(bytes.begin(), bytes.end());
}

}  // namespace rsnet
