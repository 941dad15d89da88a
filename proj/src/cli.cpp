#include "rrwkv/cli.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <iostream>
#include <sstream>

#include "rrwkv/gradcheck.hpp"

namespace rrwkv {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Schema

const std::vector<KeySpec>& config_schema() {
  static const std::vector<KeySpec> schema{
      {"d", KeyKind::uint, "8", "model width"},
      {"layers", KeyKind::uint, "2", "residual layers"},
      {"vocab", KeyKind::uint, "16", "token ids, including the prompt id 0"},
      {"variant", KeyKind::text, "rrwkv", "rwkv | rrwkv"},
      {"s", KeyKind::uint, "4", "tokens between mediums"},
      {"C", KeyKind::uint, "4", "squeeze bottleneck width"},
      {"c_max", KeyKind::uint, "64", "capacity of the per-medium squeeze weights"},
      {"mapping_mode", KeyKind::text, "causal", "causal | paper_literal"},
      {"medium_mode", KeyKind::text, "gate_literal", "gate_literal | gated_pool"},
      {"pooling", KeyKind::text, "mean", "mean | sum | last"},
      {"task", KeyKind::text, "recall", "recall | copy"},
      {"seq_len", KeyKind::uint, "20", "task sequence length"},
      {"gap", KeyKind::uint, "8", "task gap"},
      {"seed", KeyKind::uint, "0", "model, task and batch seed"},
      {"steps", KeyKind::uint, "500", "training steps"},
      {"batch", KeyKind::uint, "16", "sequences per step"},
      {"lr", KeyKind::real, "0.003", "learning rate"},
      {"eval_interval", KeyKind::uint, "50", "steps between evaluations"},
      {"eval_size", KeyKind::uint, "256", "held-out sequences per evaluation"},
      {"grad_clip", KeyKind::real, "1", "global gradient norm clip, 0 disables"},
      {"target_accuracy", KeyKind::real, "0", "stop once reached, 0 disables"},
      {"probe_size", KeyKind::uint, "32", "sequences averaged by the gradient probe, 0 disables"},
      {"gradcheck_seeds", KeyKind::uint, "20", "random instances per block"},
      {"gradcheck_seq_len", KeyKind::uint, "20", "sequence length of the model check"},
      {"fd_eps", KeyKind::real, "1e-05", "central difference step"},
      {"gradcheck_tol", KeyKind::real, "0.0001", "relative error bound"},
      {"bench_archs", KeyKind::arch_list, "attention,rwkv,rrwkv", "architectures to benchmark"},
      {"bench_n", KeyKind::uint_list, "128,256,512,1024,2048", "ascending sequence lengths"},
      {"bench_d", KeyKind::uint, "64", "benchmark width"},
      {"bench_s", KeyKind::uint, "8", "benchmark medium interval"},
      {"bench_trials", KeyKind::uint, "5", "timed trials per point (median)"},
      {"pathlen_archs", KeyKind::arch_list, "", "architectures; empty uses variant"},
      {"pathlen_n", KeyKind::uint_list, "16,64,256,1024", "sequence lengths"},
      {"pathlen_s", KeyKind::uint_list, "", "medium intervals; empty uses s"},
      {"checkpoint", KeyKind::text, "", "checkpoint to evaluate"},
      {"out_dir", KeyKind::text, "", "output directory"},
  };
  return schema;
}

namespace {

const KeySpec* find_key(const std::string& key) {
  for (const auto& spec : config_schema())
    if (key == spec.name) return &spec;
  return nullptr;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::optional<std::uint64_t> parse_uint(const std::string& s) {
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

std::optional<double> parse_real(const std::string& s) {
  if (s.empty()) return std::nullopt;
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size() || errno == ERANGE || !std::isfinite(v)) return std::nullopt;
  return v;
}

// Enumerated text keys; empty means "no restriction".
bool valid_text(const std::string& key, const std::string& value) {
  try {
    if (key == "variant") parse_variant(value);
    else if (key == "mapping_mode") parse_mapping_mode(value);
    else if (key == "medium_mode") parse_medium_mode(value);
    else if (key == "pooling") parse_pooling(value);
    else if (key == "task") parse_task_kind(value);
  } catch (const InputError&) {
    return false;
  }
  return true;
}

void validate_value(const KeySpec& spec, const std::string& value) {
  const std::string key = spec.name;
  const auto bad = [&](const char* expected) {
    throw SchemaError(key, "invalid value '" + value + "' for key '" + key + "': expected " + expected);
  };
  switch (spec.kind) {
    case KeyKind::uint:
      if (!parse_uint(value)) bad("an unsigned integer");
      break;
    case KeyKind::real:
      if (!parse_real(value)) bad("a finite number");
      break;
    case KeyKind::text:
      if (!valid_text(key, value)) bad(spec.help);
      break;
    case KeyKind::uint_list:
      for (const auto& item : split_list(value))
        if (!parse_uint(item)) bad("a comma-separated list of unsigned integers");
      break;
    case KeyKind::arch_list:
      for (const auto& item : split_list(value)) {
        try {
          parse_arch(item);
        } catch (const InputError&) {
          bad("a comma-separated list of attention, rwkv, rrwkv");
        }
      }
      break;
  }
}

}  // namespace

RunConfig::RunConfig() {
  for (const auto& spec : config_schema()) values_.emplace_back(spec.name, spec.default_value);
}

void RunConfig::set(const std::string& key, const std::string& value) {
  const KeySpec* spec = find_key(key);
  if (!spec) throw SchemaError(key, "unknown configuration key '" + key + "'");
  const std::string v = trim(value);
  validate_value(*spec, v);
  for (auto& [k, stored] : values_)
    if (k == key) stored = v;
}

void RunConfig::merge_text(const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw SchemaError(line, origin + ":" + std::to_string(lineno) + ": expected 'key = value', got '" + line + "'");
    }
    set(trim(line.substr(0, eq)), line.substr(eq + 1));
  }
}

void RunConfig::merge_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  merge_text(ss.str(), path.string());
}

void RunConfig::merge_assignment(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw SchemaError(assignment, "expected key=value, got '" + assignment + "'");
  set(trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

const std::string& RunConfig::raw(const std::string& key) const {
  for (const auto& [k, v] : values_)
    if (k == key) return v;
  throw SchemaError(key, "unknown configuration key '" + key + "'");
}

std::uint64_t RunConfig::get_uint(const std::string& key) const { return *parse_uint(raw(key)); }
double RunConfig::get_real(const std::string& key) const { return *parse_real(raw(key)); }

std::vector<std::size_t> RunConfig::get_uint_list(const std::string& key) const {
  std::vector<std::size_t> out;
  for (const auto& item : split_list(raw(key))) out.push_back(*parse_uint(item));
  return out;
}

std::vector<Arch> RunConfig::get_arch_list(const std::string& key) const {
  std::vector<Arch> out;
  for (const auto& item : split_list(raw(key))) out.push_back(parse_arch(item));
  return out;
}

namespace {

// Range checks that need the typed value; reported against the key.
std::size_t positive(const RunConfig& cfg, const std::string& key) {
  const auto v = cfg.get_uint(key);
  if (v == 0) throw SchemaError(key, "key '" + key + "' must be >= 1");
  return v;
}

}  // namespace

ModelConfig RunConfig::model_config() const {
  ModelConfig m;
  m.d = positive(*this, "d");
  m.layers = positive(*this, "layers");
  m.vocab = positive(*this, "vocab");
  m.variant = parse_variant(raw("variant"));
  m.medium.s = positive(*this, "s");
  m.medium.C = positive(*this, "C");
  m.medium.c_max = positive(*this, "c_max");
  m.medium.mapping = parse_mapping_mode(raw("mapping_mode"));
  m.medium.medium = parse_medium_mode(raw("medium_mode"));
  m.medium.pooling = parse_pooling(raw("pooling"));
  return m;
}

TaskSpec RunConfig::task_spec() const {
  TaskSpec t;
  t.kind = parse_task_kind(raw("task"));
  t.vocab = positive(*this, "vocab");
  t.T = positive(*this, "seq_len");
  t.gap = get_uint("gap");
  t.seed = get_uint("seed");
  if (t.gap >= t.T) throw SchemaError("gap", "key 'gap' must be smaller than seq_len");
  if (t.kind == TaskKind::recall && t.T < t.gap + 4) throw SchemaError("seq_len", "recall needs seq_len >= gap + 4");
  if (t.vocab < 3) throw SchemaError("vocab", "tasks need vocab >= 3");
  return t;
}

TrainConfig RunConfig::train_config() const {
  TrainConfig c;
  c.steps = get_uint("steps");
  c.batch = positive(*this, "batch");
  c.lr = get_real("lr");
  if (c.lr < 0.0) throw SchemaError("lr", "key 'lr' must be >= 0");
  c.eval_interval = positive(*this, "eval_interval");
  c.eval_size = positive(*this, "eval_size");
  c.grad_clip = get_real("grad_clip");
  if (c.grad_clip < 0.0) throw SchemaError("grad_clip", "key 'grad_clip' must be >= 0");
  c.target_accuracy = get_real("target_accuracy");
  c.seed = get_uint("seed");
  return c;
}

BenchConfig RunConfig::bench_config() const {
  BenchConfig b;
  b.archs = get_arch_list("bench_archs");
  if (b.archs.empty()) throw SchemaError("bench_archs", "key 'bench_archs' needs at least one architecture");
  b.n = get_uint_list("bench_n");
  if (b.n.size() < 4) throw SchemaError("bench_n", "key 'bench_n' needs at least 4 lengths");
  for (std::size_t i = 0; i < b.n.size(); ++i)
    if (b.n[i] == 0 || (i && b.n[i] <= b.n[i - 1]))
      throw SchemaError("bench_n", "key 'bench_n' must be strictly ascending and positive");
  b.d = positive(*this, "bench_d");
  b.s = positive(*this, "bench_s");
  b.C = positive(*this, "C");
  b.trials = get_uint("bench_trials");
  b.seed = get_uint("seed");
  return b;
}

std::string RunConfig::echo() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints

std::string describe(const ModelConfig& cfg) {
  return "d=" + std::to_string(cfg.d) + " layers=" + std::to_string(cfg.layers) +
         " vocab=" + std::to_string(cfg.vocab) + " variant=" + to_string(cfg.variant) +
         " s=" + std::to_string(cfg.medium.s) + " C=" + std::to_string(cfg.medium.C) +
         " c_max=" + std::to_string(cfg.medium.c_max) + " mapping_mode=" + to_string(cfg.medium.mapping) +
         " medium_mode=" + to_string(cfg.medium.medium) + " pooling=" + to_string(cfg.medium.pooling);
}

void write_checkpoint(std::ostream& os, const Model& model) {
  os << kCheckpointHeader << '\n' << "config " << describe(model.config) << '\n';
  char buf[32];
  Model::visit(model, [&](const std::string& name, const auto& tensor) {
    const auto [rows, cols] = shape_of(tensor);
    const auto values = values_of(tensor);
    os << "param " << name << ' ' << rows << ' ' << cols << '\n';
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) {
        std::snprintf(buf, sizeof buf, "%.17g", values[r * cols + c]);
        os << (c ? " " : "") << buf;
      }
      os << '\n';
    }
  });
  os << "end\n";
}

namespace {

ModelConfig parse_config_line(const std::string& line) {
  std::istringstream in(line);
  std::string word;
  in >> word;
  if (word != "config") throw CheckpointError("checkpoint: missing config line");
  RunConfig rc;
  while (in >> word) {
    try {
      rc.merge_assignment(word);
    } catch (const InputError& e) {
      throw CheckpointError(std::string("checkpoint: bad config entry: ") + e.what());
    }
  }
  return rc.model_config();
}

}  // namespace

Model read_checkpoint(std::istream& is, const std::optional<ModelConfig>& expected) {
  std::string line;
  if (!std::getline(is, line)) throw CheckpointError("checkpoint: empty file");
  if (line != kCheckpointHeader)
    throw CheckpointError("checkpoint: unsupported format '" + line + "' (expected '" + kCheckpointHeader + "')");
  if (!std::getline(is, line)) throw CheckpointError("checkpoint: truncated before the config line");
  const ModelConfig cfg = parse_config_line(line);
  if (expected && !(*expected == cfg))
    throw CheckpointError("checkpoint: model config mismatch: file has {" + describe(cfg) + "}, run expects {" +
                          describe(*expected) + "}");

  Model model = Model::zeros(cfg);
  Model::visit(model, [&](const std::string& name, auto& tensor) {
    const auto [rows, cols] = shape_of(tensor);
    if (!std::getline(is, line)) throw CheckpointError("checkpoint: truncated, parameter " + name + " missing");
    std::istringstream head(line);
    std::string tag, got_name;
    std::size_t got_rows = 0, got_cols = 0;
    head >> tag >> got_name >> got_rows >> got_cols;
    if (tag != "param" || got_name != name)
      throw CheckpointError("checkpoint: expected parameter " + name + ", found '" + line + "'");
    if (got_rows != rows || got_cols != cols)
      throw CheckpointError("checkpoint: shape mismatch for parameter " + name + ": file has " +
                            std::to_string(got_rows) + "x" + std::to_string(got_cols) + ", model needs " +
                            std::to_string(rows) + "x" + std::to_string(cols));
    auto values = values_of(tensor);
    for (std::size_t r = 0; r < rows; ++r) {
      if (!std::getline(is, line)) throw CheckpointError("checkpoint: truncated inside parameter " + name);
      std::istringstream row(line);
      std::string tok;
      for (std::size_t c = 0; c < cols; ++c) {
        if (!(row >> tok)) throw CheckpointError("checkpoint: short row in parameter " + name);
        const auto v = parse_real(tok);
        if (!v) throw CheckpointError("checkpoint: bad value '" + tok + "' in parameter " + name);
        values[r * cols + c] = *v;
      }
      if (row >> tok) throw CheckpointError("checkpoint: long row in parameter " + name);
    }
  });
  if (!std::getline(is, line) || line != "end") throw CheckpointError("checkpoint: missing end marker");
  return model;
}

void save_checkpoint(const Model& model, const fs::path& path) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw InputError("cannot write checkpoint " + tmp.string());
    write_checkpoint(out, model);
    out.flush();
    if (!out) throw InputError("failed writing checkpoint " + tmp.string());
  }
  fs::rename(tmp, path);
}

Model load_checkpoint(const fs::path& path, const std::optional<ModelConfig>& expected) {
  std::ifstream in(path);
  if (!in) throw CheckpointError("cannot read checkpoint " + path.string());
  return read_checkpoint(in, expected);
}

// ---------------------------------------------------------------------------
// Commands

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names{"train", "eval", "gradcheck", "bench", "pathlen"};
  return names;
}

fs::path resolve_out_dir(const RunConfig& cfg, const std::string& command) {
  if (const auto& dir = cfg.raw("out_dir"); !dir.empty()) return dir;
  if (const char* env = std::getenv(kOutDirEnv); env && *env) return fs::path(env) / command;
  return fs::path("runs") / command;
}

DirLock::DirLock(const fs::path& dir) : lock_(dir / ".lock") {
  const int fd = ::open(lock_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd < 0) {
    if (errno == EEXIST)
      throw InputError("output directory " + dir.string() + " is in use by another run (remove " +
                       lock_.string() + " if that run is gone)");
    throw InputError("cannot lock output directory " + dir.string() + ": " + std::strerror(errno));
  }
  const std::string pid = std::to_string(::getpid()) + "\n";
  [[maybe_unused]] auto n = ::write(fd, pid.data(), pid.size());
  ::close(fd);
}

DirLock::~DirLock() {
  std::error_code ec;
  fs::remove(lock_, ec);
}

namespace {

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw InputError("cannot write " + path.string());
  return out;
}

void write_probe_csv(std::ostream& os, const std::string& arch, const Vector& profile) {
  os << "arch,T,i,grad_norm\n";
  char buf[48];
  for (std::size_t i = 0; i < profile.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", profile[i]);
    os << arch << ',' << profile.size() << ',' << i << ',' << buf << '\n';
  }
}

int cmd_train(const RunConfig& cfg, const fs::path& out, std::ostream& log, std::ostream& err) {
  const ModelConfig mc = cfg.model_config();
  const TaskSpec task = cfg.task_spec();
  const TrainConfig tc = cfg.train_config();
  if (task.vocab != mc.vocab) throw SchemaError("vocab", "model and task vocab differ");
  Model model = Model::init(mc, cfg.get_uint("seed"));
  const TrainResult result = train(model, task, tc, [&](const MetricRow& r) {
    log << "step " << r.step << " loss " << r.loss << " accuracy " << r.accuracy << '\n';
  });
  {
    auto os = open_out(out / "metrics.csv");
    write_metrics_csv(os, result.rows);
  }
  if (result.diverged) {
    err << "error: " << result.diagnostic << '\n';
    return 1;
  }
  save_checkpoint(model, out / "checkpoint.txt");
  if (const auto probe = cfg.get_uint("probe_size"); probe > 0) {
    TaskSpec probe_task = task;
    probe_task.seed = task.seed + 1;
    const auto examples = gen_task(probe_task, probe);
    auto os = open_out(out / "probe.csv");
    write_probe_csv(os, to_string(mc.variant), gradient_profile(model, examples));
  }
  log << "wrote " << (out / "metrics.csv").string() << " and " << (out / "checkpoint.txt").string() << '\n';
  return 0;
}

int cmd_eval(const RunConfig& cfg, const fs::path& out, std::ostream& log) {
  const std::string& path = cfg.raw("checkpoint");
  if (path.empty()) throw SchemaError("checkpoint", "eval needs the 'checkpoint' key");
  const Model model = load_checkpoint(path, cfg.model_config());
  const TaskSpec task = cfg.task_spec();
  const auto examples = held_out_examples(task, cfg.train_config().eval_size);
  const EvalResult r = evaluate(model, examples);
  auto os = open_out(out / "eval.csv");
  char buf[96];
  std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", r.loss, r.accuracy);
  os << "loss,accuracy\n" << buf;
  log << "loss " << r.loss << " accuracy " << r.accuracy << '\n';
  return 0;
}

int cmd_gradcheck(const RunConfig& cfg, const fs::path& out, std::ostream& log, std::ostream& err) {
  const ModelConfig mc = cfg.model_config();
  const auto seeds = cfg.get_uint("gradcheck_seeds");
  const auto T = positive(cfg, "gradcheck_seq_len");
  const double eps = cfg.get_real("fd_eps"), tol = cfg.get_real("gradcheck_tol");
  if (eps <= 0.0) throw SchemaError("fd_eps", "key 'fd_eps' must be > 0");
  GradReport report;
  for (std::uint64_t seed = 0; seed < seeds; ++seed) {
    report.merge(check_wkv_block(seed));
    report.merge(check_time_mix_block(seed));
    report.merge(check_channel_mix_block(seed));
    report.merge(check_medium_block(seed, MediumMode::gate_literal));
    report.merge(check_medium_block(seed, MediumMode::gated_pool));
    report.merge(check_excited_mix_block(seed, MappingMode::causal));
    report.merge(check_excited_mix_block(seed, MappingMode::paper_literal));
    report.merge(check_model(mc, seed, T, eps));
  }
  auto os = open_out(out / "gradreport.csv");
  report.write_csv(os);
  log << "checked " << report.checked() << " coordinates, skipped " << report.skipped() << " at kinks, max rel error "
      << report.max_rel_error() << '\n';
  if (!report.passed(tol)) {
    const GradEntry* w = report.worst();
    err << "error: gradient mismatch in " << w->parameter << ": analytic " << w->analytic << " numeric " << w->numeric
        << " rel error " << w->rel_error << '\n';
    return 1;
  }
  return 0;
}

int cmd_bench(const RunConfig& cfg, const fs::path& out, std::ostream& log) {
  const BenchConfig bc = cfg.bench_config();
  const auto rows = bench_scaling(bc);
  {
    auto os = open_out(out / "bench.csv");
    write_bench_csv(os, rows);
  }
  auto os = open_out(out / "bench_fit.csv");
  os << "arch,loglog_slope,a,b,max_rel_residual\n";
  char buf[160];
  for (Arch arch : bc.archs) {
    const double slope = loglog_slope(rows, arch);
    const TwoTermFit fit = fit_linear_plus_quadratic(rows, arch);
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g", slope, fit.a, fit.b, fit.max_rel_residual);
    os << to_string(arch) << ',' << buf << '\n';
    log << to_string(arch) << ": slope " << slope << '\n';
  }
  return 0;
}

int cmd_pathlen(const RunConfig& cfg, const fs::path& out, std::ostream& log) {
  std::vector<Arch> archs = cfg.get_arch_list("pathlen_archs");
  if (archs.empty()) archs.push_back(parse_variant(cfg.raw("variant")) == Variant::rwkv ? Arch::rwkv : Arch::rrwkv);
  std::vector<std::size_t> ss = cfg.get_uint_list("pathlen_s");
  if (ss.empty()) ss.push_back(positive(cfg, "s"));
  const auto ns = cfg.get_uint_list("pathlen_n");
  if (ns.empty()) throw SchemaError("pathlen_n", "key 'pathlen_n' needs at least one length");
  for (auto n : ns)
    if (n == 0) throw SchemaError("pathlen_n", "key 'pathlen_n' lengths must be >= 1");
  for (auto s : ss)
    if (s == 0) throw SchemaError("pathlen_s", "key 'pathlen_s' intervals must be >= 1");
  const MappingMode mapping = parse_mapping_mode(cfg.raw("mapping_mode"));

  std::vector<PathRow> rows;
  for (Arch arch : archs)
    for (auto n : ns) {
      // Only the medium topology depends on s.
      const std::vector<std::size_t> grid = arch == Arch::rrwkv ? ss : std::vector<std::size_t>{0};
      for (auto s : grid) {
        const InfoFlowGraph g = build_info_flow(arch, n, std::max<std::size_t>(s, 1), mapping);
        rows.push_back({arch, n, s, path_length(g)});
        log << to_string(arch) << " n=" << n << " s=" << s << " max_path=" << rows.back().max_path << '\n';
      }
    }
  auto os = open_out(out / "pathlen.csv");
  write_path_csv(os, rows);
  return 0;
}

}  // namespace

int run_command(const std::string& command, const RunConfig& cfg, std::ostream& log, std::ostream& err) {
  try {
    if (std::find(command_names().begin(), command_names().end(), command) == command_names().end()) {
      err << "error: unknown command '" << command << "'\n";
      return 2;
    }
    const fs::path out = resolve_out_dir(cfg, command);
    fs::create_directories(out);
    DirLock lock(out);
    {
      auto os = open_out(out / "config.resolved");
      os << cfg.echo();
    }
    if (command == "train") return cmd_train(cfg, out, log, err);
    if (command == "eval") return cmd_eval(cfg, out, log);
    if (command == "gradcheck") return cmd_gradcheck(cfg, out, log, err);
    if (command == "bench") return cmd_bench(cfg, out, log);
    return cmd_pathlen(cfg, out, log);
  } catch (const SchemaError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace rrwkv
