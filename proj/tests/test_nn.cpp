#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sstream>

#include "common.hpp"
#include "nn/lm.hpp"
#include "nn/modules.hpp"
#include "nn/optim.hpp"
#include "nn/seq2seq.hpp"
#include "nn/tensor.hpp"
#include "nn/tokenizer.hpp"

using namespace argex;
using namespace argex::nn;

namespace {

Mat random_mat(int rows, int cols, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> dist(0.0, scale);
  Mat m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = dist(rng);
  return m;
}

// Central finite differences of a scalar function against the autograd
// gradient of one parameter.
void gradcheck(const std::function<double(const std::vector<Var*>&)>& loss_fn,
               std::vector<Var*> params, double h = 1e-6, double tol = 1e-5) {
  // analytic pass
  for (Var* p : params) p->zero_grad();
  loss_fn(params);  // backward happens inside
  for (Var* p : params) {
    REQUIRE(p->has_grad());
    Mat analytic = p->grad();
    for (Eigen::Index i = 0; i < p->rows(); ++i) {
      for (Eigen::Index j = 0; j < p->cols(); ++j) {
        NoGradGuard guard;
        const double orig = p->value()(i, j);
        p->value_mut()(i, j) = orig + h;
        const double up = loss_fn(params);
        p->value_mut()(i, j) = orig - h;
        const double down = loss_fn(params);
        p->value_mut()(i, j) = orig;
        const double numeric = (up - down) / (2.0 * h);
        const double denom = std::max({1.0, std::abs(numeric), std::abs(analytic(i, j))});
        CHECK(std::abs(numeric - analytic(i, j)) / denom < tol);
      }
    }
  }
}

double run_and_backward(const Var& loss) {
  if (grad_enabled()) backward(loss);
  return loss.value()(0, 0);
}

}  // namespace

TEST_CASE("gradcheck: matmul / matmul_nt / add / sub / scale") {
  auto rng = make_rng(1);
  Var a(random_mat(3, 4, rng), true);
  Var b(random_mat(4, 5, rng), true);
  Var c(random_mat(3, 5, rng), true);
  const Mat w = random_mat(3, 5, rng);
  gradcheck(
      [&](const std::vector<Var*>&) {
        Var out = add(matmul(a, b), c);
        out = sub(scale(out, 1.7), c);
        Var masked = add_const(out, w);
        return run_and_backward(sum_all(matmul_nt(masked, masked)));
      },
      {&a, &b, &c});
}

TEST_CASE("gradcheck: relu / add_rowvec / slices / concat") {
  auto rng = make_rng(2);
  Var a(random_mat(4, 6, rng), true);
  Var bias(random_mat(1, 6, rng), true);
  gradcheck(
      [&](const std::vector<Var*>&) {
        Var h = relu(add_rowvec(a, bias));
        Var left = slice_cols(h, 0, 3);
        Var right = slice_cols(h, 3, 3);
        Var merged = concat_cols({right, left});
        Var rows = slice_rows(merged, 1, 2);
        return run_and_backward(sum_all(matmul_nt(rows, rows)));
      },
      {&a, &bias});
}

TEST_CASE("gradcheck: row_softmax and layer_norm") {
  auto rng = make_rng(3);
  Var a(random_mat(3, 5, rng), true);
  Var gain(Mat::Ones(1, 5) + 0.1 * random_mat(1, 5, rng), true);
  Var bias(0.1 * random_mat(1, 5, rng), true);
  const Mat w = random_mat(3, 5, rng);
  gradcheck(
      [&](const std::vector<Var*>&) {
        Var p = row_softmax(a);
        Var ln = layer_norm(p, gain, bias);
        return run_and_backward(sum_all(matmul_nt(add_const(ln, w), ln)));
      },
      {&a, &gain, &bias}, 1e-6, 5e-5);
}

TEST_CASE("gradcheck: embedding and gather_log_softmax") {
  auto rng = make_rng(4);
  Var table(random_mat(7, 4, rng), true);
  const std::vector<int> ids = {1, 3, 3, 6};
  const std::vector<int> targets = {0, 2, 5, 6};
  gradcheck(
      [&](const std::vector<Var*>&) {
        Var x = embedding_rows(table, ids);
        Var logits = matmul_nt(x, table);
        Var lp = gather_log_softmax(logits, targets);
        Eigen::VectorXd weights(4);
        weights << 1.0, -0.5, 2.0, 0.25;
        return run_and_backward(weighted_sum(lp, weights));
      },
      {&table});
}

TEST_CASE("gradcheck: attention block end to end") {
  auto rng = make_rng(5);
  EncoderBlock block;
  LoraConfig lora{2, 8.0, 0.0};
  block.init(8, 2, 16, lora, rng);
  Var x(random_mat(5, 8, rng, 0.5), true);
  std::vector<Var*> params;
  block.collect(params);
  std::vector<Var*> check = {&x, params[0], params[2]};  // input, ln gain, a weight
  RunCtx ctx;
  gradcheck(
      [&](const std::vector<Var*>&) {
        Var y = block.forward(x, /*causal=*/true, ctx);
        return run_and_backward(sum_all(matmul_nt(y, y)));
      },
      check, 1e-6, 5e-5);
}

TEST_CASE("gradcheck: causal LM conditional logprob") {
  auto rng = make_rng(6);
  LMConfig cfg;
  cfg.vocab = 11;
  cfg.d_model = 8;
  cfg.layers = 1;
  cfg.heads = 2;
  cfg.d_ff = 16;
  cfg.max_len = 32;
  cfg.lora = {2, 8.0, 0.0};
  TinyCausalLM model(cfg, 77);
  const std::vector<int> in_ids = {3, 4, 5};
  const std::vector<int> out_ids = {6, 7};
  auto params = model.params();
  std::vector<Var*> check = {params[0], params[2]};
  RunCtx ctx;
  gradcheck(
      [&](const std::vector<Var*>&) {
        Var lp = model.conditional_logprob(in_ids, out_ids, ctx);
        if (grad_enabled()) backward(lp);
        return lp.value()(0, 0);
      },
      check, 1e-6, 5e-5);
}

TEST_CASE("gradcheck: seq2seq conditional logprob") {
  auto rng = make_rng(7);
  Seq2SeqConfig cfg;
  cfg.vocab = 11;
  cfg.d_model = 8;
  cfg.enc_layers = 1;
  cfg.dec_layers = 1;
  cfg.heads = 2;
  cfg.d_ff = 16;
  cfg.max_src = 16;
  cfg.max_tgt = 8;
  TinySeq2Seq model(cfg, 78);
  const std::vector<int> src = {3, 4, 5, 6};
  const std::vector<int> tgt = {7, 8};
  auto params = model.params();
  std::vector<Var*> check = {params[0], params[3]};
  RunCtx ctx;
  gradcheck(
      [&](const std::vector<Var*>&) {
        Var lp = model.conditional_logprob(src, tgt, ctx);
        if (grad_enabled()) backward(lp);
        return lp.value()(0, 0);
      },
      check, 1e-6, 5e-5);
}

TEST_CASE("incremental LM inference matches the full forward") {
  LMConfig cfg;
  cfg.vocab = 23;
  cfg.d_model = 12;
  cfg.layers = 2;
  cfg.heads = 3;
  cfg.d_ff = 24;
  cfg.max_len = 40;
  TinyCausalLM model(cfg, 123);
  auto rng = make_rng(9);
  std::uniform_int_distribution<int> tok(2, 22);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<int> ids = {0};
    std::uniform_int_distribution<int> len(3, 20);
    const int n = len(rng);
    for (int i = 0; i < n; ++i) ids.push_back(tok(rng));
    const Eigen::RowVectorXd full = model.last_logits_full(ids);
    const Eigen::RowVectorXd inc = model.last_logits_incremental(ids);
    CHECK((full - inc).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("incremental seq2seq decoding matches the full forward") {
  Seq2SeqConfig cfg;
  cfg.vocab = 19;
  cfg.d_model = 12;
  cfg.enc_layers = 1;
  cfg.dec_layers = 2;
  cfg.heads = 2;
  cfg.d_ff = 24;
  cfg.max_src = 24;
  cfg.max_tgt = 16;
  TinySeq2Seq model(cfg, 321);
  const std::vector<int> src = {4, 7, 9, 2, 11};
  const std::vector<int> prefix = {5, 6, 8};
  const Eigen::RowVectorXd inc = model.next_logits_incremental(src, prefix);
  const Eigen::VectorXd full_logprobs = model.next_token_logprobs(src, prefix);
  // Compare distributions: log-softmax of the incremental row must match.
  const double mx = inc.maxCoeff();
  const double lse = mx + std::log((inc.array() - mx).exp().sum());
  for (int i = 0; i < cfg.vocab; ++i) CHECK(std::abs((inc(i) - lse) - full_logprobs(i)) < 1e-8);
}

TEST_CASE("LM sampling is reproducible and respects the length cap") {
  LMConfig cfg;
  cfg.vocab = 17;
  cfg.d_model = 8;
  cfg.layers = 1;
  cfg.heads = 1;
  cfg.d_ff = 16;
  cfg.max_len = 32;
  TinyCausalLM model(cfg, 55);
  SamplingParams params;
  params.max_new_tokens = 10;
  auto rng1 = make_rng(9001);
  auto rng2 = make_rng(9001);
  const auto a = model.sample({3, 4}, params, rng1);
  const auto b = model.sample({3, 4}, params, rng2);
  CHECK(a == b);
  CHECK(a.size() <= 10);
  for (int id : a) CHECK(id != 1);  // eos never emitted into the output
}

TEST_CASE("conditional logprob is non-positive and length-checked") {
  LMConfig cfg;
  cfg.vocab = 17;
  cfg.d_model = 8;
  cfg.layers = 1;
  cfg.heads = 1;
  cfg.d_ff = 16;
  cfg.max_len = 12;
  TinyCausalLM model(cfg, 56);
  CHECK(model.conditional_logprob_value({3, 4, 5}, {6, 7}) < 0.0);
  // Empty output scores the end token alone.
  CHECK(model.conditional_logprob_value({3, 4, 5}, {}) < 0.0);
  try {
    model.conditional_logprob_value(std::vector<int>(20, 3), {4});
    FAIL("expected a context length error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("12") != std::string::npos);
  }
}

TEST_CASE("save/load round-trips parameters exactly; clone matches") {
  LMConfig cfg;
  cfg.vocab = 13;
  cfg.d_model = 8;
  cfg.layers = 2;
  cfg.heads = 2;
  cfg.d_ff = 16;
  cfg.max_len = 16;
  TinyCausalLM model(cfg, 200);
  std::stringstream buf;
  model.save(buf);
  buf.seekg(0);
  TinyCausalLM loaded = TinyCausalLM::load(buf);
  auto pa = model.params();
  auto pb = loaded.params();
  REQUIRE(pa.size() == pb.size());
  for (size_t i = 0; i < pa.size(); ++i) CHECK(pa[i]->value() == pb[i]->value());
  CHECK(model.conditional_logprob_value({3, 4}, {5}) ==
        loaded.conditional_logprob_value({3, 4}, {5}));
}

TEST_CASE("sgd and adam reduce a quadratic; clipping bounds the step") {
  Var x(Mat::Constant(1, 1, 5.0), true);
  std::vector<Var*> params = {&x};
  for (int i = 0; i < 50; ++i) {
    Var loss = sum_all(matmul_nt(x, x));
    backward(loss);
    sgd_step(params, 0.1);
    zero_grads(params);
  }
  CHECK(std::abs(x.value()(0, 0)) < 1e-3);

  Var y(Mat::Constant(1, 1, 5.0), true);
  std::vector<Var*> yp = {&y};
  Adam adam(0.5);
  for (int i = 0; i < 200; ++i) {
    Var loss = sum_all(matmul_nt(y, y));
    backward(loss);
    adam.step(yp);
    zero_grads(yp);
  }
  CHECK(std::abs(y.value()(0, 0)) < 1e-2);

  Var z(Mat::Constant(1, 1, 100.0), true);
  std::vector<Var*> zp = {&z};
  Var loss = sum_all(matmul_nt(z, z));  // grad = 200
  backward(loss);
  const double before = z.value()(0, 0);
  sgd_step(zp, 1.0, /*clip_norm=*/1.0);
  CHECK(std::abs(before - z.value()(0, 0)) == doctest::Approx(1.0));
}

TEST_CASE("tokenizer peels punctuation and is idempotent over decode") {
  const std::vector<std::string> toks = word_tokenize(
      "Given the event type: conflict.attack and roles: attacker, place, please act.");
  CHECK(std::count(toks.begin(), toks.end(), ":") == 2);
  CHECK(std::find(toks.begin(), toks.end(), "conflict.attack") != toks.end());
  CHECK(std::find(toks.begin(), toks.end(), "attacker") != toks.end());
  CHECK(toks.back() == ".");

  const Vocab vocab = Vocab::build({"alpha bravo , . : ; <arg1> conflict.attack"}, {"None"});
  Tokenizer tokenizer(&vocab);
  const std::vector<int> ids = tokenizer.encode("alpha , bravo : None <arg1>");
  CHECK(tokenizer.encode(tokenizer.decode(ids)) == ids);
  CHECK(vocab.id("zulu") == vocab.unk_id());
  CHECK(vocab.token(vocab.bos_id()) == "<s>");
}

TEST_CASE("vocab save/load preserves ids and fingerprint") {
  const Vocab vocab = Vocab::build({"some words here", "and more words"}, {"<arg1>"});
  const auto path = std::filesystem::temp_directory_path() /
                    ("argex_vocab_" + std::to_string(::getpid()) + ".json");
  vocab.save(path);
  const Vocab loaded = Vocab::load(path);
  CHECK(loaded.size() == vocab.size());
  CHECK(loaded.fingerprint() == vocab.fingerprint());
  CHECK(loaded.id("words") == vocab.id("words"));
  std::filesystem::remove(path);
}

TEST_CASE("dropout is identity at p=0 and rescales otherwise") {
  auto rng = make_rng(31);
  Var x(Mat::Ones(50, 40), true);
  Var same = dropout(x, 0.0, rng);
  CHECK(same.value() == x.value());
  Var dropped = dropout(x, 0.5, rng);
  const double mean = dropped.value().mean();
  CHECK(mean == doctest::Approx(1.0).epsilon(0.15));
}
