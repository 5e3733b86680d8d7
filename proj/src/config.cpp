#include "massl/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "json.hpp"

#include "massl/errors.hpp"

namespace massl {

namespace {

std::string fmt_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, const char* expected) {
  fail(ErrorKind::ConfigError, "key '" + std::string(key) + "': '" + std::string(value) +
                                   "' is not " + expected);
}

double to_double(std::string_view key, std::string_view v) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) bad_value(key, v, "a number");
  return out;
}

std::uint64_t to_u64(std::string_view key, std::string_view v) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) bad_value(key, v, "a non-negative integer");
  return out;
}

bool to_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  bad_value(key, v, "a boolean");
}

template <typename T>
std::vector<T> to_list(std::string_view key, std::string_view v) {
  std::vector<T> out;
  std::string s(v);
  for (char& c : s) {
    if (c == '[' || c == ']' || c == ',') c = ' ';
  }
  std::istringstream in(s);
  std::string item;
  while (in >> item) out.push_back(static_cast<T>(to_u64(key, item)));
  return out;
}

template <typename T>
std::string from_list(const std::vector<T>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(v[i]);
  }
  return out;
}

struct Field {
  const char* key;
  std::function<std::string(const TrainConfig&)> get;
  std::function<void(TrainConfig&, std::string_view)> set;
};

#define MASSL_DOUBLE(name, member)                                               \
  Field{name, [](const TrainConfig& c) { return fmt_double(c.member); },         \
        [](TrainConfig& c, std::string_view v) { c.member = to_double(name, v); }}
#define MASSL_UINT(name, member, type)                                           \
  Field{name, [](const TrainConfig& c) { return std::to_string(c.member); },     \
        [](TrainConfig& c, std::string_view v) { c.member = static_cast<type>(to_u64(name, v)); }}
#define MASSL_STRING(name, member)                                               \
  Field{name, [](const TrainConfig& c) { return c.member; },                     \
        [](TrainConfig& c, std::string_view v) { c.member = std::string(v); }}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      MASSL_STRING("data.csv", data.csv_path),
      MASSL_STRING("data.test_csv", data.test_csv_path),
      MASSL_UINT("data.classes", data.blobs.classes, int),
      MASSL_UINT("data.per_class", data.blobs.per_class, std::size_t),
      MASSL_UINT("data.test_per_class", data.blobs.test_per_class, std::size_t),
      MASSL_UINT("data.dim", data.blobs.dim, std::size_t),
      MASSL_DOUBLE("data.separation", data.blobs.separation),
      MASSL_DOUBLE("data.noise", data.blobs.noise),
      MASSL_UINT("data.seed", data.blobs.seed, std::uint64_t),
      MASSL_UINT("arch.input_dim", arch.input_dim, std::size_t),
      Field{"arch.backbone",
            [](const TrainConfig& c) { return from_list(c.arch.backbone_widths); },
            [](TrainConfig& c, std::string_view v) {
              c.arch.backbone_widths = to_list<std::size_t>("arch.backbone", v);
            }},
      MASSL_UINT("arch.head_hidden", arch.head_hidden, std::size_t),
      MASSL_UINT("arch.output_dim", arch.output_dim, std::size_t),
      MASSL_UINT("memory.size", memory_size, std::size_t),
      MASSL_UINT("memory.block_size", block_size, std::size_t),
      Field{"memory.sampling",
            [](const TrainConfig& c) { return std::string(to_string(c.sampling)); },
            [](TrainConfig& c, std::string_view v) { c.sampling = parse_sampling_strategy(v); }},
      Field{"memory.enqueue",
            [](const TrainConfig& c) { return std::string(to_string(c.enqueue)); },
            [](TrainConfig& c, std::string_view v) {
              if (v == "one_global") {
                c.enqueue = EnqueuePolicy::OneGlobal;
              } else if (v == "both_globals") {
                c.enqueue = EnqueuePolicy::BothGlobals;
              } else {
                bad_value("memory.enqueue", v, "one_global or both_globals");
              }
            }},
      MASSL_DOUBLE("loss.tau_s", tau_s),
      MASSL_DOUBLE("loss.tau_t_start", tau_t_start),
      MASSL_DOUBLE("loss.tau_t_end", tau_t_end),
      MASSL_DOUBLE("loss.tau_t_warmup_epochs", tau_t_warmup_epochs),
      MASSL_UINT("views.globals", views.globals, std::size_t),
      MASSL_UINT("views.locals", views.locals, std::size_t),
      MASSL_DOUBLE("views.global.noise_sigma", views.global.noise_sigma),
      MASSL_DOUBLE("views.global.dropout_prob", views.global.dropout_prob),
      MASSL_DOUBLE("views.global.scale_jitter", views.global.scale_jitter),
      MASSL_DOUBLE("views.local.noise_sigma", views.local.noise_sigma),
      MASSL_DOUBLE("views.local.dropout_prob", views.local.dropout_prob),
      MASSL_DOUBLE("views.local.scale_jitter", views.local.scale_jitter),
      MASSL_DOUBLE("optim.lr", lr),
      MASSL_DOUBLE("optim.lr_end", lr_end),
      MASSL_DOUBLE("optim.wd_start", wd_start),
      MASSL_DOUBLE("optim.wd_end", wd_end),
      MASSL_DOUBLE("optim.beta1", adamw.beta1),
      MASSL_DOUBLE("optim.beta2", adamw.beta2),
      MASSL_DOUBLE("optim.eps", adamw.eps),
      MASSL_DOUBLE("ema.start", ema_start),
      MASSL_DOUBLE("ema.end", ema_end),
      MASSL_UINT("train.epochs", epochs, std::size_t),
      MASSL_UINT("train.batch_size", batch_size, std::size_t),
      MASSL_UINT("train.seed", seed, std::uint64_t),
      MASSL_STRING("train.out_dir", out_dir),
      MASSL_UINT("train.checkpoint_every", checkpoint_every, std::size_t),
      MASSL_UINT("train.log_every", log_every, std::size_t),
      Field{"eval.knn_k",
            [](const TrainConfig& c) { return from_list(c.eval_k); },
            [](TrainConfig& c, std::string_view v) { c.eval_k = to_list<int>("eval.knn_k", v); }},
      MASSL_DOUBLE("eval.knn_temperature", knn_temperature),
      Field{"eval.encoder",
            [](const TrainConfig& c) { return std::string(c.eval_teacher ? "teacher" : "student"); },
            [](TrainConfig& c, std::string_view v) {
              if (v == "teacher") {
                c.eval_teacher = true;
              } else if (v == "student") {
                c.eval_teacher = false;
              } else {
                c.eval_teacher = to_bool("eval.encoder", v);
              }
            }},
  };
  return table;
}

#undef MASSL_DOUBLE
#undef MASSL_UINT
#undef MASSL_STRING

[[noreturn]] void invalid(const std::string& what) { fail(ErrorKind::ConfigError, what); }

}  // namespace

std::string_view to_string(EnqueuePolicy p) noexcept {
  return p == EnqueuePolicy::OneGlobal ? "one_global" : "both_globals";
}

void TrainConfig::validate() const {
  if (data.csv_path.empty()) {
    const auto& b = data.blobs;
    if (b.classes < 2 || b.per_class < 1 || b.dim < 2 || !(b.separation > 0.0) || !(b.noise >= 0.0)) {
      invalid("blobs need classes >= 2, per_class >= 1, dim >= 2, separation > 0, noise >= 0");
    }
    if (arch.input_dim != b.dim) invalid("arch.input_dim must equal data.dim");
  }
  if (arch.input_dim < 1 || arch.head_hidden < 1 || arch.output_dim < 2) {
    invalid("layer widths must be >= 1 and the output dim >= 2");
  }
  for (auto w : arch.backbone_widths) {
    if (w < 1) invalid("backbone widths must be >= 1");
  }
  if (memory_size < 1) invalid("memory.size must be >= 1");
  if (block_size < 2 || memory_size % block_size != 0) {
    invalid("memory.block_size must be >= 2 and divide memory.size");
  }
  if (batch_size < 1) invalid("train.batch_size must be >= 1");
  const std::size_t per_step = batch_size * (enqueue == EnqueuePolicy::BothGlobals ? 2 : 1);
  if (per_step > memory_size) invalid("each step enqueues more vectors than memory.size holds");
  if (views.globals < 2) invalid("views.globals must be >= 2");
  views.global.validate();
  views.local.validate();
  if (!(tau_s > 0.0) || !(tau_t_start > 0.0) || !(tau_t_end > 0.0)) invalid("temperatures must be > 0");
  if (!(tau_t_warmup_epochs >= 1.0)) invalid("loss.tau_t_warmup_epochs must be >= 1");
  if (!(lr >= 0.0) || !(lr_end >= 0.0) || !(wd_start >= 0.0) || !(wd_end >= 0.0)) {
    invalid("learning rates and weight decays must be >= 0");
  }
  if (!(ema_start >= 0.0 && ema_start <= 1.0) || !(ema_end >= 0.0 && ema_end <= 1.0)) {
    invalid("EMA momenta must lie in [0, 1]");
  }
  if (epochs < 1) invalid("train.epochs must be >= 1");
  if (eval_k.empty()) invalid("eval.knn_k needs at least one value");
  for (int k : eval_k) {
    if (k < 1) invalid("eval.knn_k values must be >= 1");
  }
  if (!(knn_temperature > 0.0)) invalid("eval.knn_temperature must be > 0");
}

std::vector<std::pair<std::string, std::string>> to_key_values(const TrainConfig& cfg) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& f : fields()) out.emplace_back(f.key, f.get(cfg));
  return out;
}

void apply_key_value(TrainConfig& cfg, std::string_view key, std::string_view value) {
  for (const auto& f : fields()) {
    if (key == f.key) {
      f.set(cfg, value);
      return;
    }
  }
  fail(ErrorKind::ConfigError, "unknown config key '" + std::string(key) + "'");
}

TrainConfig parse_config_text(std::string_view text) {
  TrainConfig cfg;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      fail(ErrorKind::ConfigError, "line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    const std::string key = trim(std::string_view(body).substr(0, eq));
    const std::string value = trim(std::string_view(body).substr(eq + 1));
    try {
      apply_key_value(cfg, key, value);
    } catch (const Error& e) {
      fail(ErrorKind::ConfigError, "line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return cfg;
}

TrainConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::ConfigError, "cannot read config '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

std::string format_config(const TrainConfig& cfg) {
  std::string out;
  for (const auto& [k, v] : to_key_values(cfg)) out += k + " = " + v + "\n";
  return out;
}

std::string config_to_json(const TrainConfig& cfg) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& [k, v] : to_key_values(cfg)) j[k] = v;
  return j.dump();
}

TrainConfig config_from_json(std::string_view json) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::ConfigError, std::string("config echo is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) fail(ErrorKind::ConfigError, "config echo must be a JSON object");
  TrainConfig cfg;
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!it.value().is_string()) fail(ErrorKind::ConfigError, "config echo values must be strings");
    apply_key_value(cfg, it.key(), it.value().get<std::string>());
  }
  return cfg;
}

TrainConfig full_scale_preset() {
  TrainConfig c;
  c.arch.backbone_widths = {768};
  c.arch.head_hidden = 2048;
  c.arch.output_dim = 256;
  c.memory_size = 65536;
  c.block_size = 16384;
  c.tau_s = 0.1;
  c.tau_t_start = 0.04;
  c.tau_t_end = 0.07;
  c.tau_t_warmup_epochs = 30;
  c.views.globals = 2;
  c.views.locals = 10;
  c.lr = 1e-5;
  c.lr_end = 1e-6;
  c.wd_start = 0.04;
  c.wd_end = 0.4;
  c.batch_size = 1024;
  c.eval_k = {10, 20, 100, 200};
  return c;
}

}  // namespace massl
