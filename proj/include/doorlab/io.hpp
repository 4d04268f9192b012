#pragma once

// Run artifacts: directory locking, JSONL curve logs, CSV tables. Every
// output file starts with (config hash, seed, observation layout version)
// so artifacts stay traceable to the exact run that produced them. Writers
// are deterministic: identical values serialize to identical bytes.

#include <fcntl.h>
#include <unistd.h>

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "doorlab/env.hpp"

namespace doorlab::io {

using nlohmann::json;

// failure classes with dedicated process exit codes
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NanAbortError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(v));
  return buf;
}

struct LogMeta {
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;

  json header() const {
    return json{{"config_hash", hex64(config_hash)},
                {"seed", seed},
                {"layout_version", kObsLayoutVersion}};
  }
  std::string banner() const {
    return "# config_hash=" + hex64(config_hash) +
           " seed=" + std::to_string(seed) +
           " layout_version=" + std::string(kObsLayoutVersion);
  }
};

// one directory per run, exclusive via a lock file; concurrent runs must
// not share files
class RunDir {
 public:
  RunDir(const std::string& out_dir, const std::string& run_name) {
    path_ = out_dir + "/" + run_name;
    std::filesystem::create_directories(path_);
    lock_path_ = path_ + "/.lock";
    fd_ = ::open(lock_path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd_ < 0)
      throw std::runtime_error("run directory " + path_ +
                               " is locked by another run (remove " +
                               lock_path_ + " if that run is gone)");
  }
  ~RunDir() {
    if (fd_ >= 0) {
      ::close(fd_);
      ::unlink(lock_path_.c_str());
    }
  }
  RunDir(const RunDir&) = delete;
  RunDir& operator=(const RunDir&) = delete;

  const std::string& path() const { return path_; }
  std::string file(const std::string& name) const {
    return path_ + "/" + name;
  }

 private:
  std::string path_;
  std::string lock_path_;
  int fd_ = -1;
};

class JsonlWriter {
 public:
  JsonlWriter(const std::string& path, const LogMeta& meta) {
    f_.open(path, std::ios::trunc);
    if (!f_) throw std::runtime_error("cannot open " + path);
    write(meta.header());
  }
  void write(const json& record) {
    f_ << record.dump() << '\n';
    if (!f_) throw std::runtime_error("jsonl write failed");
  }
  void flush() { f_.flush(); }

 private:
  std::ofstream f_;
};

class CsvWriter {
 public:
  CsvWriter(const std::string& path, const LogMeta& meta,
            const std::vector<std::string>& columns) {
    f_.open(path, std::ios::trunc);
    if (!f_) throw std::runtime_error("cannot open " + path);
    f_ << meta.banner() << '\n';
    row(columns);
  }
  void row(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) f_ << ',';
      f_ << cells[i];
    }
    f_ << '\n';
    if (!f_) throw std::runtime_error("csv write failed");
  }

  static std::string num(double v) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
  }
  static std::string num(int v) { return std::to_string(v); }
  static std::string num(long v) { return std::to_string(v); }

 private:
  std::ofstream f_;
};

}  // namespace doorlab::io
