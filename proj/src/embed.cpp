#include "xsum/embed.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "xsum/error.hpp"
#include "xsum/rng.hpp"

namespace xsum {

namespace {

std::string format_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<double> gaussian_unit(Rng& rng, std::size_t d, std::size_t lo, std::size_t hi) {
  std::vector<double> v(d, 0.0);
  double norm = 0.0;
  while (norm == 0.0) {
    for (std::size_t i = lo; i < hi; ++i) {
      v[i] = standard_normal(rng);
      norm += v[i] * v[i];
    }
  }
  norm = std::sqrt(norm);
  for (double& x : v) x /= norm;
  return v;
}

}  // namespace

Tensor2 pool_high(const Tensor2& low) {
  if (low.rows() == 0 || low.cols() == 0) {
    throw DimensionError("pool_high: empty input " + low.shape_str());
  }
  return ops::mean_rows(low);
}

Tensor2 normalize_rows(const Tensor2& x) {
  Tensor2 out = x;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    double norm = 0.0;
    for (double v : out.row(r)) norm += v * v;
    if (norm == 0.0) continue;
    norm = std::sqrt(norm);
    for (double& v : out.row(r)) v /= norm;
  }
  return out;
}

void EmbeddedPair::validate() const {
  if (text_low.rows() == 0 || video_low.rows() == 0) {
    throw IngestionError("pair needs at least one word and one frame");
  }
  if (text_low.cols() != video_low.cols()) {
    throw IngestionError("modality dimension mismatch: text d=" + std::to_string(text_low.cols()) +
                         ", video d=" + std::to_string(video_low.cols()));
  }
  if (text_high.rows() != 1 || text_high.cols() != dim() || video_high.rows() != 1 ||
      video_high.cols() != dim()) {
    throw IngestionError("pooled feature shape mismatch");
  }
  if (tokens.size() != n_words()) {
    throw IngestionError("token count " + std::to_string(tokens.size()) + " != n " +
                         std::to_string(n_words()));
  }
  if (gt_frame && *gt_frame >= m_frames()) {
    throw IngestionError("gt_frame " + std::to_string(*gt_frame) + " out of range");
  }
  if (gt_sentence) {
    for (std::size_t i : *gt_sentence) {
      if (i >= n_words()) throw IngestionError("gt word index " + std::to_string(i) + " out of range");
    }
  }
}

Tensor2 SyntheticEncoder::encode(const std::vector<std::string>& items, const char* prefix) const {
  Tensor2 out(items.size(), dim_);
  for (std::size_t r = 0; r < items.size(); ++r) {
    Rng rng = make_rng(seed_, std::string(prefix) + items[r]);
    for (double& v : out.row(r)) v = standard_normal(rng);
  }
  return out;
}

Tensor2 SyntheticEncoder::encode_text(const RawPair& raw) const { return encode(raw.tokens, "tok:"); }
Tensor2 SyntheticEncoder::encode_video(const RawPair& raw) const { return encode(raw.frames, "frame:"); }

EmbeddedPair encode_pair(const RawPair& raw, const EncoderInterface& encoder) {
  Tensor2 text = encoder.encode_text(raw);
  Tensor2 video = encoder.encode_video(raw);
  if (text.cols() != video.cols()) {
    throw IngestionError("modality dimension mismatch: text d=" + std::to_string(text.cols()) +
                         ", video d=" + std::to_string(video.cols()));
  }
  if (text.rows() == 0 || video.rows() == 0) {
    throw IngestionError("pair needs at least one word and one frame");
  }
  EmbeddedPair pair;
  pair.text_low = normalize_rows(text);
  pair.video_low = normalize_rows(video);
  pair.text_high = pool_high(pair.text_low);
  pair.video_high = pool_high(pair.video_low);
  pair.tokens = raw.tokens;
  if (pair.tokens.empty()) {
    for (std::size_t i = 0; i < pair.n_words(); ++i) pair.tokens.push_back("w" + std::to_string(i));
  }
  pair.gt_frame = raw.gt_frame;
  pair.gt_sentence = raw.gt_sentence;
  pair.validate();
  return pair;
}

void SynthConfig::validate() const {
  if (n_words == 0 || m_frames == 0 || d == 0) throw ConfigError("synth: n_words, m_frames and d must be >= 1");
  if (shared_signal_dim == 0 || shared_signal_dim > d) {
    throw ConfigError("synth: shared_signal_dim must be in [1, d], got " +
                      std::to_string(shared_signal_dim));
  }
  if (!(noise_scale >= 0.0) || !std::isfinite(noise_scale)) {
    throw ConfigError("synth: noise_scale must be >= 0");
  }
  if (effective_sentence_words() > n_words) throw ConfigError("synth: sentence_words exceeds n_words");
  if (distractors == 0) throw ConfigError("synth: distractors must be >= 1");
}

std::size_t SynthConfig::effective_sentence_words() const {
  return sentence_words != 0 ? sentence_words : std::max<std::size_t>(1, n_words / 5);
}

std::vector<EmbeddedPair> synth_corpus(const SynthConfig& cfg, std::size_t size) {
  cfg.validate();
  if (size == 0) throw ConfigError("synth: corpus size must be >= 1");
  const std::size_t d = cfg.d, n = cfg.n_words, m = cfg.m_frames;
  const std::size_t k = cfg.shared_signal_dim;
  // Distractors live in the complement of the shared subspace when there is one.
  const std::size_t dis_lo = k < d ? k : 0;
  const double noise_sd = cfg.noise_scale / std::sqrt(static_cast<double>(d));
  const std::size_t span = cfg.effective_sentence_words();

  std::vector<EmbeddedPair> corpus;
  corpus.reserve(size);
  for (std::size_t p = 0; p < size; ++p) {
    Rng rng = make_rng(cfg.seed, "corpus/" + std::to_string(p));
    const auto shared = gaussian_unit(rng, d, 0, k);
    std::vector<std::vector<double>> text_dis, video_dis;
    for (std::size_t i = 0; i < cfg.distractors; ++i) text_dis.push_back(gaussian_unit(rng, d, dis_lo, d));
    for (std::size_t i = 0; i < cfg.distractors; ++i) video_dis.push_back(gaussian_unit(rng, d, dis_lo, d));

    const std::size_t gt_frame = uniform_index(rng, m);
    const std::size_t start = uniform_index(rng, n - span + 1);

    auto noisy_row = [&](const std::vector<double>& base, std::span<double> out) {
      for (std::size_t c = 0; c < d; ++c) {
        const double e = standard_normal(rng);
        out[c] = base[c] + noise_sd * e;
      }
    };

    EmbeddedPair pair;
    Tensor2 text(n, d), video(m, d);
    std::vector<std::size_t> sentence;
    for (std::size_t i = 0; i < n; ++i) {
      const bool in_span = i >= start && i < start + span;
      if (in_span) {
        sentence.push_back(i);
        noisy_row(shared, text.row(i));
        pair.tokens.push_back("topic" + std::to_string(uniform_index(rng, 50)));
      } else {
        noisy_row(text_dis[uniform_index(rng, text_dis.size())], text.row(i));
        pair.tokens.push_back("w" + std::to_string(uniform_index(rng, 500)));
      }
    }
    for (std::size_t j = 0; j < m; ++j) {
      if (j == gt_frame) noisy_row(shared, video.row(j));
      else noisy_row(video_dis[uniform_index(rng, video_dis.size())], video.row(j));
    }
    pair.text_low = normalize_rows(text);
    pair.video_low = normalize_rows(video);
    pair.text_high = pool_high(pair.text_low);
    pair.video_high = pool_high(pair.video_low);
    pair.gt_frame = gt_frame;
    pair.gt_sentence = std::move(sentence);
    corpus.push_back(std::move(pair));
  }
  return corpus;
}

void write_record(std::ostream& os, const EmbeddedPair& pair) {
  pair.validate();
  os << "XSUM1 " << pair.n_words() << ' ' << pair.m_frames() << ' ' << pair.dim() << '\n';
  auto rows = [&](const Tensor2& t) {
    for (std::size_t r = 0; r < t.rows(); ++r) {
      for (std::size_t c = 0; c < t.cols(); ++c) os << (c ? " " : "") << format_real(t(r, c));
      os << '\n';
    }
  };
  rows(pair.text_low);
  rows(pair.video_low);
  os << "GT frame=";
  if (pair.gt_frame) os << *pair.gt_frame;
  else os << '-';
  os << " words=";
  if (pair.gt_sentence && !pair.gt_sentence->empty()) {
    for (std::size_t i = 0; i < pair.gt_sentence->size(); ++i) os << (i ? "," : "") << (*pair.gt_sentence)[i];
  } else {
    os << '-';
  }
  os << '\n';
  for (std::size_t i = 0; i < pair.tokens.size(); ++i) os << (i ? " " : "") << pair.tokens[i];
  os << '\n';
}

namespace {

std::vector<std::string> split_ws(const std::string& line) {
  std::istringstream is(line);
  std::vector<std::string> out;
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

std::size_t parse_count(const std::string& s, const char* what) {
  std::size_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw IngestionError(std::string("bad ") + what + ": '" + s + "'");
  }
  return v;
}

double parse_real(const std::string& s) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size() || !std::isfinite(v)) throw IngestionError("bad real: '" + s + "'");
    return v;
  } catch (const std::logic_error&) {
    throw IngestionError("bad real: '" + s + "'");
  }
}

Tensor2 read_rows(std::istream& is, std::size_t rows, std::size_t d, const char* what) {
  Tensor2 out(rows, d);
  std::string line;
  for (std::size_t r = 0; r < rows; ++r) {
    if (!std::getline(is, line)) throw IngestionError(std::string("truncated ") + what + " rows");
    const auto fields = split_ws(line);
    if (fields.size() != d) {
      throw IngestionError(std::string(what) + " row " + std::to_string(r) + " has " +
                           std::to_string(fields.size()) + " values, header says d=" + std::to_string(d));
    }
    for (std::size_t c = 0; c < d; ++c) out(r, c) = parse_real(fields[c]);
  }
  return out;
}

}  // namespace

EmbeddedPair read_record(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw IngestionError("empty record");
  const auto head = split_ws(line);
  if (head.size() != 4 || head[0] != "XSUM1") throw IngestionError("missing XSUM1 header");
  const std::size_t n = parse_count(head[1], "n");
  const std::size_t m = parse_count(head[2], "m");
  const std::size_t d = parse_count(head[3], "d");
  if (n == 0 || m == 0 || d == 0) throw IngestionError("header counts must be >= 1");

  EmbeddedPair pair;
  pair.text_low = read_rows(is, n, d, "text");
  pair.video_low = read_rows(is, m, d, "video");
  pair.text_high = pool_high(pair.text_low);
  pair.video_high = pool_high(pair.video_low);

  if (!std::getline(is, line)) throw IngestionError("missing GT line");
  const auto gt = split_ws(line);
  if (gt.size() != 3 || gt[0] != "GT" || gt[1].rfind("frame=", 0) != 0 || gt[2].rfind("words=", 0) != 0) {
    throw IngestionError("malformed GT line: '" + line + "'");
  }
  const std::string frame = gt[1].substr(6);
  if (frame != "-") pair.gt_frame = parse_count(frame, "gt frame");
  const std::string words = gt[2].substr(6);
  if (words != "-") {
    std::vector<std::size_t> idx;
    std::istringstream ws(words);
    std::string item;
    while (std::getline(ws, item, ',')) idx.push_back(parse_count(item, "gt word"));
    pair.gt_sentence = std::move(idx);
  }
  if (!std::getline(is, line)) throw IngestionError("missing token line");
  pair.tokens = split_ws(line);
  pair.validate();
  return pair;
}

void save_record(const std::filesystem::path& path, const EmbeddedPair& pair) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw PathError("cannot write " + path.string());
  write_record(os, pair);
  if (!os) throw PathError("write failed: " + path.string());
}

EmbeddedPair load_record(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw PathError("cannot read " + path.string());
  return read_record(is);
}

void save_corpus(const std::filesystem::path& dir, const std::vector<EmbeddedPair>& corpus) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw PathError("cannot create " + dir.string() + ": " + ec.message());
  std::ofstream manifest(dir / "manifest.txt", std::ios::binary);
  if (!manifest) throw PathError("cannot write manifest in " + dir.string());
  manifest << "XSUMMANIFEST1 " << corpus.size() << '\n';
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    std::ostringstream name;
    name << "pair_" << std::setw(5) << std::setfill('0') << i << ".xsum";
    save_record(dir / name.str(), corpus[i]);
    manifest << name.str() << '\n';
  }
}

std::vector<EmbeddedPair> load_corpus(const std::filesystem::path& dir) {
  std::ifstream manifest(dir / "manifest.txt", std::ios::binary);
  if (!manifest) throw PathError("no corpus manifest at " + (dir / "manifest.txt").string());
  std::string line;
  std::getline(manifest, line);
  const auto head = split_ws(line);
  if (head.size() != 2 || head[0] != "XSUMMANIFEST1") throw IngestionError("bad manifest header");
  const std::size_t count = parse_count(head[1], "manifest count");
  std::vector<EmbeddedPair> corpus;
  corpus.reserve(count);
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    corpus.push_back(load_record(dir / line));
  }
  if (corpus.size() != count) throw IngestionError("manifest lists fewer records than its header");
  return corpus;
}

}  // namespace xsum
