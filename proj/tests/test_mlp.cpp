#include <stdexcept>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "doctest.h"
#include "hcsp/mlp.hpp"

using namespace hcsp;
using namespace hcsp::net;

namespace {

MlpSpec gaussian_spec() {
  MlpSpec s;
  s.input_dim = 10;
  s.hidden = {8, 8};
  s.head_kind = HeadKind::Gaussian;
  s.gaussian_dim = 4;
  return s;
}

MlpSpec categorical_spec() {
  MlpSpec s;
  s.input_dim = 12;
  s.hidden = {16};
  s.head_kind = HeadKind::MultiCategorical;
  s.head_sizes = {3, 5, 2};
  return s;
}

std::vector<double> random_obs(int n, Rng& rng) {
  std::vector<double> o(n);
  for (double& v : o) v = rng.normal();
  return o;
}

}  // namespace

TEST_CASE("first trunk layer rows are orthogonal with tanh gain") {
  Rng rng(31);
  PolicyParams p = PolicyParams::init(gaussian_spec(), rng);
  const auto& m = p.layout.trunk_w[0];  // 8 x 10, rows orthonormalized
  const double gain = 5.0 / 3.0;
  for (int r = 0; r < m.rows; ++r) {
    for (int r2 = r; r2 < m.rows; ++r2) {
      double dot = 0.0;
      for (int c = 0; c < m.cols; ++c)
        dot += p.flat[m.offset + r * m.cols + c] *
               p.flat[m.offset + r2 * m.cols + c];
      double expect = r == r2 ? gain * gain : 0.0;
      CHECK(dot == doctest::Approx(expect).epsilon(1e-10));
    }
  }
}

TEST_CASE("biases start at zero and log-std at log(0.5)") {
  Rng rng(3);
  PolicyParams p = PolicyParams::init(gaussian_spec(), rng);
  for (const auto& b : p.layout.trunk_b)
    for (int i = 0; i < b.size(); ++i) CHECK(p.flat[b.offset + i] == 0.0);
  for (int i = 0; i < p.spec.gaussian_dim; ++i)
    CHECK(p.flat[p.layout.log_std.offset + i] ==
          doctest::Approx(std::log(0.5)).epsilon(1e-15));
}

TEST_CASE("gaussian log-prob and entropy match the closed forms") {
  Rng rng(17);
  PolicyParams p = PolicyParams::init(gaussian_spec(), rng);
  std::vector<double> obs = random_obs(10, rng);
  ForwardResult f = forward(p, obs);
  Action a = sample(f.dist, rng);

  double lp = 0.0;
  const double half_log_2pi = 0.5 * std::log(2.0 * M_PI);
  for (size_t i = 0; i < f.dist.mean.size(); ++i) {
    double s = std::exp(f.dist.log_std[i]);
    double z = (a.continuous[i] - f.dist.mean[i]) / s;
    lp += -0.5 * z * z - f.dist.log_std[i] - half_log_2pi;
  }
  CHECK(log_prob(f.dist, a) == doctest::Approx(lp).epsilon(1e-12));

  double h = 0.0;
  for (double ls : f.dist.log_std) h += ls + 0.5 + half_log_2pi;
  CHECK(entropy(f.dist) == doctest::Approx(h).epsilon(1e-12));
}

TEST_CASE("categorical distribution is a proper softmax per head") {
  Rng rng(23);
  PolicyParams p = PolicyParams::init(categorical_spec(), rng);
  std::vector<double> obs = random_obs(12, rng);
  ForwardResult f = forward(p, obs);
  REQUIRE(f.dist.probs.size() == 3);
  for (size_t h = 0; h < f.dist.probs.size(); ++h) {
    double total = std::accumulate(f.dist.probs[h].begin(),
                                   f.dist.probs[h].end(), 0.0);
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    // softmax is consistent with the logits
    for (size_t i = 1; i < f.dist.probs[h].size(); ++i) {
      double ratio = f.dist.probs[h][i] / f.dist.probs[h][0];
      double expect = std::exp(f.dist.logits[h][i] - f.dist.logits[h][0]);
      CHECK(ratio == doctest::Approx(expect).epsilon(1e-10));
    }
  }

  Action a = sample(f.dist, rng);
  REQUIRE(a.categorical.size() == 3);
  double lp = 0.0;
  for (size_t h = 0; h < 3; ++h) lp += std::log(f.dist.probs[h][a.categorical[h]]);
  CHECK(log_prob(f.dist, a) == doctest::Approx(lp).epsilon(1e-12));

  double ent = 0.0;
  for (const auto& probs : f.dist.probs)
    for (double q : probs) ent -= q * std::log(q);
  CHECK(entropy(f.dist) == doctest::Approx(ent).epsilon(1e-12));
}

TEST_CASE("categorical sampling follows the distribution") {
  ActionDistribution d;
  d.kind = HeadKind::MultiCategorical;
  d.logits = {{0.0, 0.0}};
  d.probs = {{0.25, 0.75}};
  Rng rng(99);
  int ones = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) ones += sample(d, rng).categorical[0];
  CHECK(std::abs(ones / double(n) - 0.75) < 0.01);
}

TEST_CASE("squashed actions live in the unit interval") {
  Action a;
  a.continuous = {-40.0, -1.0, 0.0, 2.0, 50.0};
  auto s = a.squashed();
  for (double v : s) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  CHECK(s[2] == doctest::Approx(0.5));
  CHECK(s[0] < 1e-12);
  CHECK(s[4] > 1.0 - 1e-12);
}

TEST_CASE("expanding a head with the mean keeps old logits and averages new ones") {
  Rng rng(41);
  PolicyParams p = PolicyParams::init(categorical_spec(), rng);
  std::vector<double> obs = random_obs(12, rng);
  ForwardResult before = forward(p, obs);

  PolicyParams q = expand_heads(p, {3, 7, 2}, HeadInitMode::MeanOfExisting, rng);
  ForwardResult after = forward(q, obs);
  CHECK(after.value == doctest::Approx(before.value).epsilon(1e-14));
  // untouched heads produce identical logits
  for (int i = 0; i < 3; ++i)
    CHECK(after.dist.logits[0][i] ==
          doctest::Approx(before.dist.logits[0][i]).epsilon(1e-14));
  for (int i = 0; i < 2; ++i)
    CHECK(after.dist.logits[2][i] ==
          doctest::Approx(before.dist.logits[2][i]).epsilon(1e-14));
  // grown head keeps its old rows and fills new rows with their mean
  double mean = 0.0;
  for (int i = 0; i < 5; ++i) {
    CHECK(after.dist.logits[1][i] ==
          doctest::Approx(before.dist.logits[1][i]).epsilon(1e-14));
    mean += before.dist.logits[1][i];
  }
  mean /= 5.0;
  CHECK(after.dist.logits[1][5] == doctest::Approx(mean).epsilon(1e-12));
  CHECK(after.dist.logits[1][6] == doctest::Approx(mean).epsilon(1e-12));
}

TEST_CASE("expand_heads rejects shrinking") {
  Rng rng(1);
  PolicyParams p = PolicyParams::init(categorical_spec(), rng);
  CHECK_THROWS_AS(expand_heads(p, {2, 5, 2}, HeadInitMode::MeanOfExisting, rng),
                  std::invalid_argument);
}

TEST_CASE("checkpoints round-trip bit-exactly with metadata") {
  Rng rng(77);
  PolicyParams p = PolicyParams::init(gaussian_spec(), rng);
  std::map<std::string, std::string> meta{{"kind", "skill"}, {"name", "goto"}};
  const std::string path = "/tmp/hcsp_test_ckpt.bin";
  save_checkpoint(path, p, meta);
  std::map<std::string, std::string> loaded_meta;
  PolicyParams q = load_checkpoint(path, &loaded_meta);
  std::remove(path.c_str());

  CHECK(q.spec == p.spec);
  REQUIRE(q.flat.size() == p.flat.size());
  for (size_t i = 0; i < p.flat.size(); ++i) CHECK(q.flat[i] == p.flat[i]);
  CHECK(loaded_meta == meta);
}

TEST_CASE("value normalization matches a hand-rolled debiased EMA") {
  const double beta = 0.9;
  ValueNormState vn(beta, 1e-8);
  CHECK(!vn.warmed_up());

  double rm = 0.0, rmsq = 0.0, debias = 0.0;
  Rng rng(55);
  for (int round = 0; round < 20; ++round) {
    std::vector<double> batch(32);
    for (double& v : batch) v = 3.0 + 2.0 * rng.normal();
    double m = 0.0, msq = 0.0;
    for (double v : batch) {
      m += v;
      msq += v * v;
    }
    m /= batch.size();
    msq /= batch.size();
    rm = beta * rm + (1 - beta) * m;
    rmsq = beta * rmsq + (1 - beta) * msq;
    debias = beta * debias + (1 - beta);
    vn.update(batch);
    CHECK(vn.mean() == doctest::Approx(rm / debias).epsilon(1e-12));
    double var = rmsq / debias - (rm / debias) * (rm / debias);
    CHECK(vn.variance() == doctest::Approx(var).epsilon(1e-9));
  }
  CHECK(vn.warmed_up());

  // normalize/denormalize are inverses
  double x = 7.25;
  CHECK(vn.denormalize(vn.normalize(x)) == doctest::Approx(x).epsilon(1e-12));
}

TEST_CASE("forward is deterministic and matches the cached pass") {
  Rng rng(8);
  PolicyParams p = PolicyParams::init(gaussian_spec(), rng);
  std::vector<double> obs = random_obs(10, rng);
  ForwardResult a = forward(p, obs);
  ForwardResult b = forward(p, obs);
  ForwardCache c = forward_cache(p, obs);
  CHECK(a.value == b.value);
  CHECK(a.value == c.value);
  for (size_t i = 0; i < a.dist.mean.size(); ++i)
    CHECK(a.dist.mean[i] == c.policy_out[i]);
}

TEST_CASE("forward rejects wrong observation sizes") {
  Rng rng(2);
  PolicyParams p = PolicyParams::init(gaussian_spec(), rng);
  CHECK_THROWS_AS(forward(p, std::vector<double>(9, 0.0)),
                  std::invalid_argument);
}
