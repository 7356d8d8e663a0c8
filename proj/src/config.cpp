#include "xsum/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <istream>
#include <map>

#include "xsum/error.hpp"

namespace xsum {

std::uint64_t RunConfig::corpus_seed() const { return derive_seed(seed, "corpus"); }
std::uint64_t RunConfig::init_seed() const { return derive_seed(seed, "init"); }
std::uint64_t RunConfig::noise_seed() const { return derive_seed(seed, "noise"); }

void RunConfig::finalize() {
  synth.seed = corpus_seed();
  train.seed = noise_seed();
  eval.seed = derive_seed(seed, "eval");
  model.stack.d = model.d;
  if (corpus_size == 0) throw ConfigError("synth.size must be >= 1");
  synth.validate();
  model.validate();
  train.validate();
  model.weights.validate();
  for (const double r : ratios) {
    if (!(r > 0.0 && r <= 1.0)) throw ConfigError("sweep.ratios entries must be in (0, 1], got " + std::to_string(r));
  }
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const std::string& accepted) {
  throw ConfigError("bad value '" + value + "' for key '" + key + "' (accepted: " + accepted + ")");
}

double to_real(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) bad_value(key, v, "a real number");
  return out;
}

std::uint64_t to_count(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) bad_value(key, v, "a non-negative integer");
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on") return true;
  if (v == "false" || v == "0" || v == "off") return false;
  bad_value(key, v, "true, false, 1, 0, on, off");
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : v + ",") {
    if (c == ',') {
      const std::string t = trim(cur);
      if (!t.empty()) out.push_back(t);
      cur.clear();
    } else {
      cur += c;
    }
  }
  return out;
}

using Setter = std::function<void(RunConfig&, const std::string& key, const std::string& value)>;

#define REAL(field) [](RunConfig& c, const std::string& k, const std::string& v) { c.field = to_real(k, v); }
#define COUNT(field) [](RunConfig& c, const std::string& k, const std::string& v) { c.field = to_count(k, v); }
#define BOOL(field) [](RunConfig& c, const std::string& k, const std::string& v) { c.field = to_bool(k, v); }

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"run.seed", COUNT(seed)},
      {"run.corpus", [](RunConfig& c, const std::string&, const std::string& v) { c.corpus_dir = v; }},
      {"run.checkpoint", [](RunConfig& c, const std::string&, const std::string& v) { c.checkpoint = v; }},
      {"synth.size", COUNT(corpus_size)},
      {"synth.n_words", COUNT(synth.n_words)},
      {"synth.m_frames", COUNT(synth.m_frames)},
      {"synth.d",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.synth.d = to_count(k, v);
         c.model.d = c.synth.d;
       }},
      {"synth.shared_signal_dim", COUNT(synth.shared_signal_dim)},
      {"synth.noise_scale", REAL(synth.noise_scale)},
      {"synth.sentence_words", COUNT(synth.sentence_words)},
      {"synth.distractors", COUNT(synth.distractors)},
      {"model.d", COUNT(model.d)},
      {"model.layers", COUNT(model.stack.layers)},
      {"model.heads", COUNT(model.stack.heads)},
      {"model.ff", COUNT(model.stack.ff)},
      {"model.positional", BOOL(model.positional)},
      {"model.max_len", COUNT(model.max_len)},
      {"model.tau", REAL(model.tau)},
      {"model.k_ratio", REAL(model.k_ratio)},
      {"model.gumbel_noise", BOOL(model.gumbel_noise)},
      {"model.gate", BOOL(model.use_gate)},
      {"model.selector",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         try {
           c.model.selector = parse_selector(v);
         } catch (const ConfigError&) {
           bad_value(k, v, "topk, all, random, cosine");
         }
       }},
      {"model.max_words", COUNT(model.max_words)},
      {"model.order",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         try {
           c.model.order = decode::parse_order_mode(v);
         } catch (const ConfigError&) {
           bad_value(k, v, "score, position");
         }
       }},
      {"model.residual_scale", REAL(model.residual_scale)},
      {"sinkhorn.epsilon", REAL(model.sinkhorn.epsilon)},
      {"sinkhorn.max_iters", COUNT(model.sinkhorn.max_iters)},
      {"sinkhorn.tol", REAL(model.sinkhorn.tol)},
      {"loss.debias", BOOL(model.debias)},
      {"loss.lambda_t", REAL(model.weights.lambda_t)},
      {"loss.lambda_v", REAL(model.weights.lambda_v)},
      {"loss.lambda_o", REAL(model.weights.lambda_o)},
      {"loss.lambda_f", REAL(model.weights.lambda_f)},
      {"train.lr", REAL(train.optim.learning_rate)},
      {"train.beta1", REAL(train.optim.beta1)},
      {"train.beta2", REAL(train.optim.beta2)},
      {"train.eps", REAL(train.optim.eps)},
      {"train.weight_decay", REAL(train.optim.weight_decay)},
      {"train.epochs", COUNT(train.epochs)},
      {"train.batch_size", COUNT(train.batch_size)},
      {"train.clip_norm", REAL(train.clip_norm)},
      {"eval.fa_window", COUNT(eval.fa_window)},
      {"eval.iou_half_width", COUNT(eval.iou_half_width)},
      {"ablate.variants",
       [](RunConfig& c, const std::string&, const std::string& v) { c.variants = split_list(v); }},
      {"sweep.ratios",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.ratios.clear();
         for (const std::string& r : split_list(v)) c.ratios.push_back(to_real(k, r));
       }},
  };
  return table;
}

#undef REAL
#undef COUNT
#undef BOOL

}  // namespace

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& [k, s] : setters()) out.push_back(k);
  return out;
}

void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
  const auto& t = setters();
  auto it = t.find(key);
  if (it == t.end()) {
    std::string accepted;
    for (const auto& [k, s] : t) accepted += (accepted.empty() ? "" : ", ") + k;
    throw ConfigError("unknown key '" + key + "' (accepted keys: " + accepted + ")");
  }
  it->second(cfg, key, value);
}

RunConfig parse_config(std::istream& is) {
  RunConfig cfg;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(lineno) + ": expected key=value, got '" + line + "'");
    }
    set_config_value(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  cfg.finalize();
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw PathError("cannot read config " + path.string());
  return parse_config(is);
}

}  // namespace xsum
