#include <cmath>
#include <filesystem>
#include <sstream>

#include "doctest.h"
#include "helpers.hpp"
#include "xsum/error.hpp"
#include "xsum/experiment.hpp"
#include "xsum/grad_check.hpp"
#include "xsum/optim.hpp"
#include "xsum/train.hpp"

using namespace xsum;
namespace fs = std::filesystem;

namespace {

SynthConfig tiny_synth() {
  SynthConfig s;
  s.n_words = 6;
  s.m_frames = 4;
  s.d = 8;
  s.shared_signal_dim = 4;
  s.distractors = 2;
  return s;
}

ModelConfig tiny_model() {
  ModelConfig c;
  c.d = 8;
  c.stack = {1, 2, 8, 16};
  c.max_len = 16;
  c.max_words = 3;
  c.sinkhorn = {0.1, 30, 0.0};
  return c;
}

TrainConfig tiny_train(std::size_t epochs) {
  TrainConfig t;
  t.epochs = epochs;
  t.batch_size = 3;
  t.seed = 11;
  t.optim.learning_rate = 5e-3;
  return t;
}

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("xsum_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::vector<Tensor2> weights(Model& m) {
  std::vector<Tensor2> out;
  for (Parameter* p : m.parameters()) out.push_back(p->value);
  return out;
}

}  // namespace

TEST_CASE("adamw matches a hand-computed step") {
  Parameter p("p", Tensor2::from_rows({{1.0, -2.0}}));
  p.grad = Tensor2::from_rows({{0.5, -1.0}});
  AdamWState st;
  AdamWConfig cfg;
  cfg.learning_rate = 0.1;
  cfg.weight_decay = 0.1;
  Parameter* ps[] = {&p};
  adamw_step(ps, st, cfg);
  // First step: m̂ = g, v̂ = g², so the moment step is lr·g/(|g|+eps).
  const double w0 = 1.0 * (1.0 - 0.01) - 0.1 * 0.5 / (0.5 + 1e-8);
  const double w1 = -2.0 * (1.0 - 0.01) + 0.1 * 1.0 / (1.0 + 1e-8);
  CHECK(p.value(0, 0) == doctest::Approx(w0).epsilon(1e-14));
  CHECK(p.value(0, 1) == doctest::Approx(w1).epsilon(1e-14));
  CHECK(st.step == 1);

  p.grad = Tensor2::from_rows({{0.5, -1.0}});
  adamw_step(ps, st, cfg);
  const double m = 0.9 * 0.1 * 0.5 + 0.1 * 0.5, v = 0.999 * 0.001 * 0.25 + 0.001 * 0.25;
  const double mhat = m / (1 - 0.81), vhat = v / (1 - 0.998001);
  CHECK(p.value(0, 0) == doctest::Approx(w0 * 0.99 - 0.1 * mhat / (std::sqrt(vhat) + 1e-8)).epsilon(1e-13));
}

TEST_CASE("adamw refuses non-finite gradients") {
  Parameter a("a", Tensor2(1, 2, 1.0)), b("b", Tensor2(1, 1, 1.0));
  a.grad = Tensor2(1, 2, 0.1);
  b.grad = Tensor2(1, 1, std::nan(""));
  AdamWState st;
  Parameter* ps[] = {&a, &b};
  try {
    adamw_step(ps, st, AdamWConfig{});
    FAIL("expected a divergence error");
  } catch (const DivergenceError& e) {
    CHECK(std::string(e.what()).find("b") != std::string::npos);
  }
  CHECK(a.value == Tensor2(1, 2, 1.0));
  AdamWConfig bad;
  bad.learning_rate = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("gradient clipping") {
  Parameter a("a", Tensor2(1, 2)), b("b", Tensor2(1, 1));
  a.grad = Tensor2::from_rows({{3.0, 0.0}});
  b.grad = Tensor2::from_rows({{4.0}});
  Parameter* ps[] = {&a, &b};
  CHECK(grad_norm(ps) == doctest::Approx(5.0).epsilon(1e-15));
  clip_grad_norm(ps, 1.0);
  CHECK(grad_norm(ps) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(a.grad(0, 0) == doctest::Approx(0.6).epsilon(1e-12));
  clip_grad_norm(ps, 10.0);
  CHECK(grad_norm(ps) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("model forward shapes and summaries") {
  SynthConfig s = tiny_synth();
  const auto corpus = synth_corpus(s, 3);
  Model model(tiny_model(), 5);
  CHECK(model.parameter_count() > 0);
  const auto lm = corpus_language_model(corpus);
  Tape tape;
  Rng rng(3);
  ForwardOptions opts;
  opts.training = true;
  opts.rng = &rng;
  opts.lm = &lm;
  const auto r = model.forward(tape, corpus[0], opts);
  CHECK(r.text_out.rows() == 6);
  CHECK(r.video_out.rows() == 4);
  CHECK(r.shared.text_indices.size() == 2);
  CHECK(r.shared.selected_rows.rows() == 4);
  CHECK(r.summary.word_indices.size() == 3);
  CHECK(r.summary.frame_index < 4);
  const auto& w = model.config().weights;
  const double expected = w.lambda_t * r.terms.l_t.value().item() + w.lambda_v * r.terms.l_v.value().item() +
                          w.lambda_o * r.terms.l_o.value().item() - w.lambda_f * r.slor;
  CHECK(std::abs(r.total.value().item() - expected) < 1e-12);

  const auto a = model.summarize(corpus[0]);
  const auto b = model.summarize(corpus[0]);
  CHECK(a.word_indices == b.word_indices);
  CHECK(a.frame_index == b.frame_index);

  EmbeddedPair wrong = corpus[0];
  wrong.text_low = Tensor2(6, 4);
  CHECK_THROWS(model.summarize(wrong));
  ForwardOptions no_rng;
  no_rng.training = true;
  Tape t2;
  CHECK_THROWS_AS(model.forward(t2, corpus[0], no_rng), StateError);
}

TEST_CASE("model gradients with the selection frozen") {
  const auto corpus = synth_corpus(tiny_synth(), 1);
  ModelConfig cfg = tiny_model();
  cfg.residual_scale = 0.5;
  Model model(cfg, 9);
  const auto lm = corpus_language_model(corpus);
  SelectionFreeze fz;
  {
    Tape t(false);
    Rng rng(4);
    ForwardOptions o;
    o.training = true;
    o.rng = &rng;
    o.lm = &lm;
    o.capture = &fz;
    model.forward(t, corpus[0], o);
  }
  auto fn = [&](Tape& t) {
    ForwardOptions o;
    o.training = true;
    o.lm = &lm;
    o.freeze = &fz;
    return model.forward(t, corpus[0], o).total;
  };
  std::vector<Parameter*> soft, hard;
  for (Parameter* p : model.parameters()) {
    const bool st = p == &model.nfdt.score_text.weight || p == &model.nfdt.score_text.bias ||
                    p == &model.nfdt.score_video.weight || p == &model.nfdt.score_video.bias;
    (st ? hard : soft).push_back(p);
  }
  const auto soft_rep = grad_check(fn, soft, 1e-6, 1e-4);
  CAPTURE(soft_rep.max_rel_error);
  CHECK(soft_rep.passed);
  const auto hard_rep = grad_check(fn, hard, 1e-6, 1e-3);
  CAPTURE(hard_rep.max_rel_error);
  CHECK(hard_rep.passed);
}

TEST_CASE("trace round trip") {
  std::vector<TraceRow> rows{{1, 0.1, 0.2, 0.3, -0.4, 0.123456789012345678}, {2, 1e-300, 2, 3, 4, 5}};
  std::stringstream ss;
  write_trace(ss, rows);
  CHECK(ss.str().rfind("epoch,L_T,L_V,L_O,L_f,total\n", 0) == 0);
  CHECK(read_trace(ss) == rows);
}

TEST_CASE("checkpoint round trip and validation") {
  const auto corpus = synth_corpus(tiny_synth(), 2);
  Model model(tiny_model(), 1);
  AdamWState st;
  st.step = 7;
  for (Parameter* p : model.parameters()) {
    st.m.push_back(Tensor2(p->value.rows(), p->value.cols(), 0.5));
    st.v.push_back(Tensor2(p->value.rows(), p->value.cols(), 0.25));
  }
  Rng rng(99);
  rng.discard(5);
  const Checkpoint ck = snapshot(model, st, 3, rng, {{1, 1, 2, 3, 4, 10}});
  std::stringstream ss;
  write_checkpoint(ss, ck);
  const Checkpoint back = read_checkpoint(ss);
  CHECK(back.fingerprint == ck.fingerprint);
  CHECK(back.epoch == 3);
  CHECK(back.optim.step == 7);
  CHECK(back.rng_state == ck.rng_state);
  CHECK(back.trace == ck.trace);
  REQUIRE(back.params.size() == ck.params.size());
  for (std::size_t i = 0; i < ck.params.size(); ++i) CHECK(back.params[i].second == ck.params[i].second);

  Model other(tiny_model(), 2);
  restore(other, back);
  CHECK(weights(other) == weights(model));

  ModelConfig wider = tiny_model();
  wider.stack.layers = 2;
  Model mismatch(wider, 1);
  CHECK_THROWS_AS(restore(mismatch, back), VersionError);

  std::stringstream bad("XSUMCKPT0 garbage");
  CHECK_THROWS_AS(read_checkpoint(bad), VersionError);
  std::string truncated = ss.str().substr(0, 40);
  std::stringstream cut(truncated);
  CHECK_THROWS(read_checkpoint(cut));
  CHECK(checkpoint_name(7) == "epoch_007.ckpt");
}

TEST_CASE("training is deterministic and resumable") {
  const auto corpus = synth_corpus(tiny_synth(), 6);
  const auto lm = corpus_language_model(corpus);
  const fs::path dir = scratch_dir("resume");

  Model a(tiny_model(), 3);
  FitOptions with_dir;
  with_dir.checkpoint_dir = dir;
  const auto fa = fit(a, corpus, tiny_train(3), lm, with_dir);
  REQUIRE(fa.trace.size() == 3);
  for (std::size_t e = 1; e <= 3; ++e) CHECK(fs::exists(dir / checkpoint_name(e)));
  for (const auto& row : fa.trace) CHECK(std::isfinite(row.total));

  Model b(tiny_model(), 3);
  const auto fb = fit(b, corpus, tiny_train(3), lm);
  CHECK(fb.trace == fa.trace);
  CHECK(weights(b) == weights(a));

  const Checkpoint ck = load_checkpoint(dir / checkpoint_name(1));
  Model c(tiny_model(), 1234);
  FitOptions resume;
  resume.resume = &ck;
  const auto fc = fit(c, corpus, tiny_train(3), lm, resume);
  CHECK(fc.trace == fa.trace);
  CHECK(weights(c) == weights(a));
  fs::remove_all(dir);
}

TEST_CASE("trace total equals the weighted terms") {
  const auto corpus = synth_corpus(tiny_synth(), 4);
  const auto lm = corpus_language_model(corpus);
  Model m(tiny_model(), 2);
  const auto r = fit(m, corpus, tiny_train(2), lm);
  const auto& w = m.config().weights;
  for (const auto& row : r.trace) {
    const double sum = w.lambda_t * row.l_t + w.lambda_v * row.l_v + w.lambda_o * row.l_o + w.lambda_f * row.l_f;
    CHECK(std::abs(row.total - sum) < 1e-9);
  }
}

TEST_CASE("fit rejects bad input") {
  const auto corpus = synth_corpus(tiny_synth(), 2);
  const auto lm = corpus_language_model(corpus);
  Model m(tiny_model(), 2);
  CHECK_THROWS_AS(fit(m, {}, tiny_train(1), lm), ConfigError);
  TrainConfig zero = tiny_train(1);
  zero.batch_size = 0;
  CHECK_THROWS_AS(fit(m, corpus, zero, lm), ConfigError);
}

TEST_CASE("ablation variants") {
  CHECK(variant_names().size() == 6);
  const ModelConfig base = tiny_model();
  CHECK(apply_variant(base, "full").selector == Selector::TopK);
  CHECK(apply_variant(base, "no-shared-selection").selector == Selector::All);
  CHECK_FALSE(apply_variant(base, "plain-softmax").gumbel_noise);
  CHECK_FALSE(apply_variant(base, "no-gate").use_gate);
  CHECK(apply_variant(base, "random-selector").selector == Selector::Random);
  CHECK(apply_variant(base, "cosine-filter").selector == Selector::Cosine);
  CHECK_THROWS_AS(apply_variant(base, "bogus"), ConfigError);
}

TEST_CASE("every selector trains and decodes") {
  const auto corpus = synth_corpus(tiny_synth(), 3);
  const auto lm = corpus_language_model(corpus);
  for (const auto& v : variant_names()) {
    CAPTURE(v);
    Model m(apply_variant(tiny_model(), v), 4);
    const auto r = fit(m, corpus, tiny_train(1), lm);
    CHECK(r.trace.size() == 1);
    Rng rng(1);
    CHECK(m.summarize(corpus[0], &rng).word_indices.size() == 3);
  }
}
