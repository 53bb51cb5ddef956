#pragma once

#include <filesystem>
#include <map>
#include <ostream>
#include <set>
#include <string>
#include <vector>

namespace pfm::cli {

// Flat key=value settings with dotted keys. Reading a key through a typed
// getter records its default, so the stored map always holds the full
// effective configuration.
class RunConfig {
 public:
  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const { return values_.count(key) != 0; }
  // Lines of key=value; blank lines and lines starting with '#' are ignored.
  void merge_file(const std::filesystem::path& path);
  void write(const std::filesystem::path& path) const;

  std::string str(const std::string& key, const std::string& fallback);
  int integer(const std::string& key, int fallback);
  double real(const std::string& key, double fallback);
  bool flag(const std::string& key, bool fallback);
  // Marks every key starting with `prefix` as read and returns them.
  std::map<std::string, std::string> section(const std::string& prefix);

  // Keys never read by any getter.
  std::vector<std::string> unused() const;
  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
  std::set<std::string> read_;
};

// Runs one subcommand. Returns 0 on success, 1 for usage and validation
// errors, 2 for failures while working.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace pfm::cli
