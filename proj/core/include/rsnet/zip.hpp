#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace rsnet {

/// Minimal ZIP archive support (store method only). Writes deterministic
/// archives: no timestamps beyond a fixed DOS epoch, entries in insertion
/// order. The reader validates signatures, sizes and CRCs and throws
/// CorruptArchive on any disagreement.
class ZipWriter {
 public:
  explicit ZipWriter(const std::filesystem::path& path);
  ~ZipWriter();

  void add_entry(const std::string& name, const void* data, std::size_t size);
  void add_entry(const std::string& name, const std::string& text);
  void finish();

 private:
  struct Entry {
    std::string name;
    std::uint32_t crc32 = 0;
    std::uint32_t size = 0;
    std::uint32_t offset = 0;
  };
  std::filesystem::path path_;
  std::vector<Entry> entries_;
  void* file_ = nullptr;
  bool finished_ = false;
};

class ZipReader {
 public:
  explicit ZipReader(const std::filesystem::path& path);

  bool contains(const std::string& name) const { return entries_.count(name) > 0; }
  std::vector<std::string> names() const;
  std::vector<std::uint8_t> read(const std::string& name) const;
  std::string read_text(const std::string& name) const;

 private:
  struct Entry {
    std::uint32_t crc32 = 0;
    std::uint32_t size = 0;
    std::uint32_t offset = 0;  // local header offset
  };
  std::filesystem::path path_;
  std::map<std::string, Entry> entries_;
};

}  // namespace rsnet
