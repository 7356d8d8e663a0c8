#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "xsum/config.hpp"
#include "xsum/error.hpp"
#include "xsum/experiment.hpp"

namespace fs = std::filesystem;
using namespace xsum;

namespace {

std::ofstream open_out(const fs::path& p) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw PathError("cannot write " + p.string());
  return os;
}

fs::path corpus_path(const RunConfig& cfg, const fs::path& out) {
  return cfg.corpus_dir.empty() ? out / "corpus" : cfg.corpus_dir;
}

std::vector<EmbeddedPair> read_corpus(const RunConfig& cfg, const fs::path& out) {
  const fs::path dir = corpus_path(cfg, out);
  if (!fs::exists(dir / "manifest.txt")) throw PathError("no corpus manifest at " + dir.string());
  return load_corpus(dir);
}

std::optional<fs::path> latest_checkpoint(const fs::path& dir) {
  if (!fs::is_directory(dir)) return std::nullopt;
  std::vector<fs::path> found;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().extension() == ".ckpt") found.push_back(e.path());
  }
  if (found.empty()) return std::nullopt;
  std::sort(found.begin(), found.end());
  return found.back();
}

void write_reports(const fs::path& out, const std::string& stem, const std::vector<EvalReport>& reports,
                   const std::string& key) {
  auto txt = open_out(out / (stem + ".txt"));
  write_report_table(txt, reports, key);
  auto csv = open_out(out / (stem + ".csv"));
  write_report_csv(csv, reports, key);
  write_report_table(std::cout, reports, key);
}

void cmd_gen(const RunConfig& cfg, const fs::path& out) {
  const auto corpus = synth_corpus(cfg.synth, cfg.corpus_size);
  const fs::path dir = corpus_path(cfg, out);
  save_corpus(dir, corpus);
  std::cout << "wrote " << corpus.size() << " pairs to " << dir.string() << "\n";
}

void cmd_train(const RunConfig& cfg, const fs::path& out, const std::string& resume) {
  const auto corpus = read_corpus(cfg, out);
  std::optional<Checkpoint> ck;
  FitOptions opts;
  opts.checkpoint_dir = out / "checkpoints";
  if (!resume.empty()) {
    ck = load_checkpoint(resume);
    opts.resume = &*ck;
  }
  opts.on_epoch = [](const TraceRow& r) {
    std::fprintf(stderr, "epoch %zu  total %.6f  L_T %.6f  L_V %.6f  L_O %.6f  L_f %.6f\n", r.epoch, r.total, r.l_t,
                 r.l_v, r.l_o, r.l_f);
  };
  TrainedModel tm = train_model(cfg, corpus, opts);
  auto os = open_out(out / "trace.csv");
  write_trace(os, tm.fit.trace);
}

void cmd_eval(const RunConfig& cfg, const fs::path& out) {
  const auto corpus = read_corpus(cfg, out);
  fs::path ckpath = cfg.checkpoint;
  if (ckpath.empty()) {
    auto latest = latest_checkpoint(out / "checkpoints");
    if (!latest) throw PathError("no checkpoint under " + (out / "checkpoints").string());
    ckpath = *latest;
  }
  Model model(cfg.model, cfg.init_seed());
  restore(model, load_checkpoint(ckpath));
  const EvalReport rep = evaluate(model, corpus, cfg.eval, "full");
  const fs::path sdir = out / "summaries";
  fs::create_directories(sdir);
  for (const PairEval& p : rep.pairs) {
    char name[32];
    std::snprintf(name, sizeof name, "pair_%05zu.txt", p.index);
    auto os = open_out(sdir / name);
    decode::write_summary(os, p.summary, corpus[p.index].tokens);
  }
  auto pairs = open_out(out / "pairs.csv");
  write_pair_csv(pairs, rep);
  write_reports(out, "report", {rep}, "variant");
}

void cmd_ablate(const RunConfig& cfg, const fs::path& out) {
  const auto corpus = read_corpus(cfg, out);
  const auto variants = cfg.variants.empty() ? variant_names() : cfg.variants;
  write_reports(out, "ablation", ablation_run(corpus, cfg, variants), "variant");
}

void cmd_sweep(const RunConfig& cfg, const fs::path& out) {
  const auto corpus = read_corpus(cfg, out);
  write_reports(out, "sweep", sweep_k(corpus, cfg, cfg.ratios), "ratio");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Extreme multimodal summarization engine"};
  app.require_subcommand(1);
  std::string config_path, out_dir, resume, ratios;
  std::vector<std::string> overrides;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "key=value config file");
    sub->add_option("--out", out_dir, "output directory")->required();
    sub->add_option("--set", overrides, "extra key=value overrides");
  };
  auto* gen = app.add_subcommand("gen", "generate a planted-signal corpus");
  auto* train = app.add_subcommand("train", "train and write per-epoch checkpoints and trace.csv");
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  auto* ablate = app.add_subcommand("ablate", "train and evaluate ablation variants");
  auto* sweep = app.add_subcommand("sweep-k", "train and evaluate across shared-information ratios");
  for (auto* s : {gen, train, eval, ablate, sweep}) add_common(s);
  train->add_option("--resume", resume, "checkpoint to resume from");
  sweep->add_option("--ratios", ratios, "comma-separated k ratios");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: usage: " << e.what() << "\n";
    return 2;
  }

  try {
    std::ostringstream text;
    if (!config_path.empty()) {
      std::ifstream is(config_path);
      if (!is) throw PathError("cannot read config " + config_path);
      text << is.rdbuf() << "\n";
    }
    for (const auto& o : overrides) text << o << "\n";
    if (!ratios.empty()) text << "sweep.ratios=" << ratios << "\n";
    std::istringstream in(text.str());
    const RunConfig cfg = parse_config(in);

    const fs::path out(out_dir);
    fs::create_directories(out);
    if (gen->parsed()) cmd_gen(cfg, out);
    if (train->parsed()) cmd_train(cfg, out, resume);
    if (eval->parsed()) cmd_eval(cfg, out);
    if (ablate->parsed()) cmd_ablate(cfg, out);
    if (sweep->parsed()) cmd_sweep(cfg, out);
  } catch (const Error& e) {
    std::cerr << "error: " << e.category() << ": " << e.what() << "\n";
    return 1;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: path: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
