#include "xsum/train.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "xsum/error.hpp"

namespace xsum {

void TrainConfig::validate() const {
  optim.validate();
  if (epochs == 0) throw ConfigError("train.epochs must be >= 1");
  if (batch_size == 0) throw ConfigError("train.batch_size must be >= 1");
  if (!(clip_norm >= 0.0)) throw ConfigError("train.clip_norm must be >= 0");
}

// ---- trace ----------------------------------------------------------------

void write_trace(std::ostream& os, const std::vector<TraceRow>& trace) {
  os << "epoch,L_T,L_V,L_O,L_f,total\n";
  char buf[512];
  for (const TraceRow& r : trace) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.epoch, r.l_t, r.l_v,
                  r.l_o, r.l_f, r.total);
    os << buf;
  }
}

std::vector<TraceRow> read_trace(std::istream& is) {
  std::vector<TraceRow> out;
  std::string line;
  if (!std::getline(is, line) || line != "epoch,L_T,L_V,L_O,L_f,total") {
    throw IngestionError("trace: missing header");
  }
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    TraceRow r;
    if (std::sscanf(line.c_str(), "%zu,%lf,%lf,%lf,%lf,%lf", &r.epoch, &r.l_t, &r.l_v, &r.l_o, &r.l_f,
                    &r.total) != 6) {
      throw IngestionError("trace: malformed line '" + line + "'");
    }
    out.push_back(r);
  }
  return out;
}

// ---- checkpoint -----------------------------------------------------------

namespace {

constexpr char kMagic[] = "XSUMCKPT1";
constexpr std::size_t kMagicLen = sizeof(kMagic) - 1;

void put_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

void put_f64(std::ostream& os, double d) { put_u64(os, std::bit_cast<std::uint64_t>(d)); }

void put_str(std::ostream& os, const std::string& s) {
  put_u64(os, s.size());
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

void put_tensor(std::ostream& os, const Tensor2& t) {
  put_u64(os, t.rows());
  put_u64(os, t.cols());
  for (double v : t.values()) put_f64(os, v);
}

std::uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8)) throw IngestionError("checkpoint: truncated");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

double get_f64(std::istream& is) { return std::bit_cast<double>(get_u64(is)); }

constexpr std::uint64_t kMaxLen = std::uint64_t{1} << 32;

std::string get_str(std::istream& is) {
  const std::uint64_t n = get_u64(is);
  if (n > kMaxLen) throw IngestionError("checkpoint: string length out of range");
  std::string s(n, '\0');
  if (!is.read(s.data(), static_cast<std::streamsize>(n))) throw IngestionError("checkpoint: truncated");
  return s;
}

Tensor2 get_tensor(std::istream& is) {
  const std::uint64_t r = get_u64(is);
  const std::uint64_t c = get_u64(is);
  if (r > kMaxLen || c > kMaxLen || r * c > kMaxLen) throw IngestionError("checkpoint: shape out of range");
  std::vector<double> data(r * c);
  for (double& v : data) v = get_f64(is);
  return Tensor2(r, c, std::move(data));
}

}  // namespace

void write_checkpoint(std::ostream& os, const Checkpoint& ck) {
  os.write(kMagic, kMagicLen);
  put_str(os, ck.fingerprint);
  put_u64(os, ck.epoch);
  put_u64(os, ck.params.size());
  for (const auto& [name, t] : ck.params) {
    put_str(os, name);
    put_tensor(os, t);
  }
  put_u64(os, ck.optim.step);
  put_u64(os, ck.optim.m.size());
  for (std::size_t i = 0; i < ck.optim.m.size(); ++i) {
    put_tensor(os, ck.optim.m[i]);
    put_tensor(os, ck.optim.v[i]);
  }
  put_str(os, ck.rng_state);
  put_u64(os, ck.trace.size());
  for (const TraceRow& r : ck.trace) {
    put_u64(os, r.epoch);
    put_f64(os, r.l_t);
    put_f64(os, r.l_v);
    put_f64(os, r.l_o);
    put_f64(os, r.l_f);
    put_f64(os, r.total);
  }
}

Checkpoint read_checkpoint(std::istream& is) {
  char magic[kMagicLen];
  if (!is.read(magic, kMagicLen) || std::memcmp(magic, kMagic, kMagicLen) != 0) {
    throw VersionError("checkpoint: bad magic (expected XSUMCKPT1)");
  }
  Checkpoint ck;
  ck.fingerprint = get_str(is);
  ck.epoch = get_u64(is);
  const std::uint64_t np = get_u64(is);
  if (np > kMaxLen) throw IngestionError("checkpoint: parameter count out of range");
  for (std::uint64_t i = 0; i < np; ++i) {
    std::string name = get_str(is);
    ck.params.emplace_back(std::move(name), get_tensor(is));
  }
  ck.optim.step = get_u64(is);
  const std::uint64_t nm = get_u64(is);
  if (nm > kMaxLen) throw IngestionError("checkpoint: moment count out of range");
  for (std::uint64_t i = 0; i < nm; ++i) {
    ck.optim.m.push_back(get_tensor(is));
    ck.optim.v.push_back(get_tensor(is));
  }
  ck.rng_state = get_str(is);
  const std::uint64_t nt = get_u64(is);
  if (nt > kMaxLen) throw IngestionError("checkpoint: trace length out of range");
  for (std::uint64_t i = 0; i < nt; ++i) {
    TraceRow r;
    r.epoch = get_u64(is);
    r.l_t = get_f64(is);
    r.l_v = get_f64(is);
    r.l_o = get_f64(is);
    r.l_f = get_f64(is);
    r.total = get_f64(is);
    ck.trace.push_back(r);
  }
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw PathError("cannot write " + tmp.string());
    write_checkpoint(os, ck);
    if (!os) throw PathError("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw PathError("cannot read " + path.string());
  return read_checkpoint(is);
}

Checkpoint snapshot(Model& model, const AdamWState& optim, std::size_t epoch, const Rng& rng,
                    const std::vector<TraceRow>& trace) {
  Checkpoint ck;
  ck.fingerprint = model.config().fingerprint();
  ck.epoch = epoch;
  for (Parameter* p : model.parameters()) ck.params.emplace_back(p->name, p->value);
  ck.optim = optim;
  ck.rng_state = serialize_rng(rng);
  ck.trace = trace;
  return ck;
}

void restore(Model& model, const Checkpoint& ck) {
  const std::string fp = model.config().fingerprint();
  if (ck.fingerprint != fp) {
    throw VersionError("checkpoint architecture '" + ck.fingerprint + "' does not match model '" + fp + "'");
  }
  auto params = model.parameters();
  if (params.size() != ck.params.size()) throw VersionError("checkpoint parameter count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& [name, t] = ck.params[i];
    if (name != params[i]->name || !t.same_shape(params[i]->value)) {
      throw VersionError("checkpoint parameter '" + name + "' does not match '" + params[i]->name + "'");
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    params[i]->value = ck.params[i].second;
    params[i]->zero_grad();
  }
}

BigramLm corpus_language_model(const std::vector<EmbeddedPair>& corpus) {
  std::vector<std::vector<std::string>> sentences;
  sentences.reserve(corpus.size());
  for (const EmbeddedPair& p : corpus) sentences.push_back(p.tokens);
  return BigramLm::train(sentences);
}

std::string checkpoint_name(std::size_t epoch) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "epoch_%03zu.ckpt", epoch);
  return buf;
}

// ---- fit ------------------------------------------------------------------

FitResult fit(Model& model, const std::vector<EmbeddedPair>& data, const TrainConfig& cfg,
              const LmInterface& lm, const FitOptions& opts) {
  cfg.validate();
  if (data.empty()) throw ConfigError("training set is empty");
  for (const EmbeddedPair& p : data) p.validate();

  auto params = model.parameters();
  FitResult res;
  Rng rng = make_rng(cfg.seed, "train");
  std::size_t start_epoch = 0;
  if (opts.resume != nullptr) {
    restore(model, *opts.resume);
    res.optim = opts.resume->optim;
    res.trace = opts.resume->trace;
    rng = deserialize_rng(opts.resume->rng_state);
    start_epoch = opts.resume->epoch;
  }
  if (opts.checkpoint_dir) std::filesystem::create_directories(*opts.checkpoint_dir);

  std::vector<std::size_t> order(data.size());
  for (std::size_t epoch = start_epoch + 1; epoch <= cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng, i)]);

    double s_t = 0.0, s_v = 0.0, s_o = 0.0, s_f = 0.0, s_total = 0.0;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += cfg.batch_size) {
      const std::size_t b1 = std::min(order.size(), b0 + cfg.batch_size);
      for (Parameter* p : params) p->zero_grad();
      for (std::size_t b = b0; b < b1; ++b) {
        Tape tape;
        ForwardOptions fo;
        fo.training = true;
        fo.rng = &rng;
        fo.lm = &lm;
        try {
          ForwardResult r = model.forward(tape, data[order[b]], fo);
          tape.backward(r.total);
          s_t += r.terms.l_t.value().item();
          s_v += r.terms.l_v.value().item();
          s_o += r.terms.l_o.value().item();
          s_f += -r.slor;
          s_total += r.total.value().item();
        } catch (const EvaluationError& e) {
          throw DivergenceError("epoch " + std::to_string(epoch) + ": " + e.what());
        }
      }
      const double inv = 1.0 / static_cast<double>(b1 - b0);
      for (Parameter* p : params) p->grad *= inv;
      clip_grad_norm(params, cfg.clip_norm);
      adamw_step(params, res.optim, cfg.optim);
    }

    const double inv_n = 1.0 / static_cast<double>(data.size());
    TraceRow row;
    row.epoch = epoch;
    row.l_t = s_t * inv_n;
    row.l_v = s_v * inv_n;
    row.l_o = s_o * inv_n;
    row.l_f = s_f * inv_n;
    row.total = s_total * inv_n;
    if (!std::isfinite(row.total)) throw DivergenceError("epoch " + std::to_string(epoch) + ": non-finite loss");
    res.trace.push_back(row);
    if (opts.checkpoint_dir) {
      save_checkpoint(*opts.checkpoint_dir / checkpoint_name(epoch), snapshot(model, res.optim, epoch, rng, res.trace));
    }
    if (opts.on_epoch) opts.on_epoch(row);
  }
  res.rng_state = serialize_rng(rng);
  return res;
}

}  // namespace xsum
