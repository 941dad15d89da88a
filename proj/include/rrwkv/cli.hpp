#pragma once

// Run configuration, checkpoint persistence and the command runner behind the
// `rrwkv` executable.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "rrwkv/errors.hpp"
#include "rrwkv/harness.hpp"
#include "rrwkv/rrwkv.hpp"

namespace rrwkv {

// A configuration key that is unknown or holds an invalid value. Exit status 2.
class SchemaError : public InputError {
 public:
  SchemaError(std::string key, const std::string& what) : InputError(what), key_(std::move(key)) {}
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

enum class KeyKind { uint, real, text, uint_list, arch_list };

struct KeySpec {
  const char* name;
  KeyKind kind;
  const char* default_value;
  const char* help;
};

// Every recognized key, in echo order.
const std::vector<KeySpec>& config_schema();

// Flat `key = value` settings. Every schema key is always present, starting
// from its default; set() validates against the schema.
class RunConfig {
 public:
  RunConfig();

  void set(const std::string& key, const std::string& value);
  // `key = value` lines, `#` starts a comment, blank lines ignored.
  void merge_text(const std::string& text, const std::string& origin = "config");
  void merge_file(const std::filesystem::path& path);
  // "key=value" as given on the command line.
  void merge_assignment(const std::string& assignment);

  const std::string& raw(const std::string& key) const;
  std::uint64_t get_uint(const std::string& key) const;
  double get_real(const std::string& key) const;
  std::vector<std::size_t> get_uint_list(const std::string& key) const;
  std::vector<Arch> get_arch_list(const std::string& key) const;

  ModelConfig model_config() const;
  TaskSpec task_spec() const;
  TrainConfig train_config() const;
  BenchConfig bench_config() const;

  // Resolved settings in schema order, one `key = value` per line.
  std::string echo() const;

 private:
  std::vector<std::pair<std::string, std::string>> values_;
};

// ---------------------------------------------------------------------------
// Checkpoints
//
//   rrwkv-checkpoint v1
//   config d=8 layers=2 ...
//   param <name> <rows> <cols>
//   <rows lines of cols values, 17 significant digits>
//   ...
//   end

inline constexpr const char* kCheckpointHeader = "rrwkv-checkpoint v1";

// Failure to read a checkpoint; names the parameter when one is involved.
class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void write_checkpoint(std::ostream& os, const Model& model);
// Throws CheckpointError; nothing is returned unless the whole file parsed.
Model read_checkpoint(std::istream& is, const std::optional<ModelConfig>& expected = std::nullopt);

// Written to a sibling temporary file and renamed into place.
void save_checkpoint(const Model& model, const std::filesystem::path& path);
Model load_checkpoint(const std::filesystem::path& path, const std::optional<ModelConfig>& expected = std::nullopt);

std::string describe(const ModelConfig& cfg);

// ---------------------------------------------------------------------------
// Commands

inline constexpr const char* kOutDirEnv = "RRWKV_OUT_DIR";

const std::vector<std::string>& command_names();

// Resolution order: out_dir key, $RRWKV_OUT_DIR/<command>, runs/<command>.
std::filesystem::path resolve_out_dir(const RunConfig& cfg, const std::string& command);

// Exclusive claim on an output directory for the lifetime of the object.
class DirLock {
 public:
  explicit DirLock(const std::filesystem::path& dir);
  ~DirLock();
  DirLock(const DirLock&) = delete;
  DirLock& operator=(const DirLock&) = delete;

 private:
  std::filesystem::path lock_;
};

// Runs one command, writing artifacts under the resolved output directory and
// progress to `log`. Returns the process exit status: 0 success, 1 runtime
// failure (diagnostic on `err`), 2 configuration error naming the key.
int run_command(const std::string& command, const RunConfig& cfg, std::ostream& log, std::ostream& err);

}  // namespace rrwkv
