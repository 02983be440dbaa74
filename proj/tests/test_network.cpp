#include <catch2/catch_amalgamated.hpp>

#include <filesystem>

#include "test_util.hpp"
#include "wotfprobe/datasets.hpp"
#include "wotfprobe/network.hpp"

using namespace wotf;

namespace {

Tensor random_batch(uint64_t seed, int b, int side, double lo = 0.0, double hi = 1.0) {
  Rng rng(seed);
  Tensor t = Tensor::zeros({b, 1, side, side});
  for (auto& v : t.values) v = rng.uniform(lo, hi);
  return t;
}

NetworkConfig tiny_config() {
  NetworkConfig cfg;
  cfg.n_down_blocks = 2;
  cfg.n_up_blocks = 2;
  cfg.n_res_blocks = 1;
  cfg.base_channels = 4;
  cfg.input_side = 8;
  return cfg;
}

}  // namespace

TEST_CASE("network config validation") {
  NetworkConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.n_up_blocks = 3;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = NetworkConfig{};
  cfg.input_side = 30;  // 30 -> 15, not divisible again
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = NetworkConfig{};
  cfg.base_channels = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("shape algebra: every valid config returns the input size") {
  for (auto [blocks, side, base] : {std::tuple{1, 8, 3}, {2, 32, 6}, {3, 24, 4}, {2, 16, 5}}) {
    NetworkConfig cfg;
    cfg.n_down_blocks = cfg.n_up_blocks = blocks;
    cfg.n_res_blocks = 1;
    cfg.base_channels = base;
    cfg.input_side = side;
    Network net(cfg, 1);
    Tensor in = random_batch(2, 2, side);
    const Tensor& out = net.forward(in);
    CHECK(out.shape == std::vector<int>{2, 1, side, side});
    for (double v : out.values) CHECK(std::isfinite(v));
  }
}

TEST_CASE("deterministic initialization from seed") {
  NetworkConfig cfg = tiny_config();
  Network a(cfg, 42), b(cfg, 42), c(cfg, 43);
  auto &pa = a.parameters(), &pb = b.parameters(), &pc = c.parameters();
  REQUIRE(pa.size() == pb.size());
  bool all_equal = true, differs_from_c = false;
  for (size_t i = 0; i < pa.size(); ++i) {
    if (pa[i]->values != pb[i]->values) all_equal = false;
    if (pa[i]->values != pc[i]->values) differs_from_c = true;
  }
  CHECK(all_equal);
  CHECK(differs_from_c);
}

TEST_CASE("no cross-sample coupling in a batch") {
  Network net(tiny_config(), 5);
  Tensor single = random_batch(9, 1, 8);
  Tensor doubled = Tensor::zeros({2, 1, 8, 8});
  std::copy_n(single.values.data(), 64, doubled.values.data());
  std::copy_n(single.values.data(), 64, doubled.values.data() + 64);
  const Tensor out2 = net.forward(doubled);
  for (int i = 0; i < 64; ++i) CHECK(out2.values[size_t(i)] == out2.values[size_t(64 + i)]);
  const Tensor& out1 = net.forward(single);
  for (int i = 0; i < 64; ++i) CHECK(out1.values[size_t(i)] == out2.values[size_t(i)]);
}

TEST_CASE("forward rejects wrong shapes") {
  Network net(tiny_config(), 5);
  CHECK_THROWS_AS(net.forward(random_batch(1, 1, 16)), std::invalid_argument);
  Tensor two_ch = Tensor::zeros({1, 2, 8, 8});
  CHECK_THROWS_AS(net.forward(two_ch), std::invalid_argument);
}

TEST_CASE("every parameter tensor reaches the output") {
  Network net(tiny_config(), 7);
  Tensor in = random_batch(3, 1, 8);
  Tensor base = net.forward(in);
  for (auto* p : net.parameters()) {
    double saved = p->values[0];
    p->values[0] = saved + 0.05;
    const Tensor& probe = net.forward(in);
    double delta = 0;
    for (size_t i = 0; i < probe.values.size(); ++i)
      delta = std::max(delta, std::abs(probe.values[i] - base.values[i]));
    p->values[0] = saved;
    CHECK(delta > 0.0);
  }
}

TEST_CASE("npcc loss values and affine invariance") {
  Rng rng(11);
  Tensor truth = random_batch(12, 1, 8);
  CHECK(npcc_loss(truth, truth) == Catch::Approx(-1.0).margin(1e-12));

  Tensor neg = truth;
  for (auto& v : neg.values) v = -v;
  CHECK(npcc_loss(neg, truth) == Catch::Approx(1.0).margin(1e-12));

  for (int trial = 0; trial < 5; ++trial) {
    double a = rng.uniform(0.1, 10.0), b = rng.uniform(-5.0, 5.0);
    Tensor scaled = truth;
    for (auto& v : scaled.values) v = a * v + b;
    CHECK(npcc_loss(scaled, truth) == Catch::Approx(-1.0).margin(1e-12));
  }

  Tensor constant = Tensor::zeros({1, 1, 8, 8});
  CHECK_THROWS_AS(npcc_loss(constant, truth), std::domain_error);
  CHECK_THROWS_AS(npcc_loss(truth, constant), std::domain_error);
}

TEST_CASE("npcc gradient vanishes at perfect reconstruction") {
  Tensor truth = random_batch(13, 2, 8);
  Tensor g = npcc_loss_grad(truth, truth);
  for (double v : g.values) CHECK(std::abs(v) < 1e-8);
}

TEST_CASE("npcc gradient scales linearly with the loss") {
  Network net(tiny_config(), 3);
  Tensor in = random_batch(14, 2, 8);
  Tensor truth = random_batch(15, 2, 8);
  const Tensor est = net.forward(in);
  Tensor g = npcc_loss_grad(est, truth);
  net.backward(g);
  std::vector<std::vector<double>> grads1;
  for (auto* p : net.parameters()) grads1.push_back(p->grad);
  Tensor g2 = g;
  for (auto& v : g2.values) v *= 2.0;
  net.forward(in);
  net.backward(g2);
  size_t pi = 0;
  for (auto* p : net.parameters()) {
    for (size_t i = 0; i < p->grad.size(); ++i)
      CHECK(p->grad[i] == Catch::Approx(2.0 * grads1[pi][i]).margin(1e-14));
    ++pi;
  }
}

TEST_CASE("backward before forward is an error") {
  Network net(tiny_config(), 3);
  Tensor g = Tensor::zeros({1, 1, 8, 8});
  CHECK_THROWS_AS(net.backward(g), std::logic_error);
}

TEST_CASE("gradients match central finite differences") {
  for (uint64_t seed : {1u, 2u}) {
    Network net(tiny_config(), seed);
    Tensor in = random_batch(seed * 100 + 1, 2, 8, 0.5, 1.5);
    Tensor truth = random_batch(seed * 100 + 2, 2, 8);
    auto res = testutil::gradcheck(net, in, truth);
    INFO("seed " << seed << ": max rel err " << res.max_rel_err << " over " << res.n_checked
                 << " params, " << res.n_kink_skips << " kink skips");
    CHECK(res.max_rel_err < 1e-4);
    CHECK(res.n_checked > 1000);
    CHECK(res.n_kink_skips < res.n_checked / 100);
  }
}

TEST_CASE("adam: zero gradient leaves parameters unchanged") {
  Network net(tiny_config(), 21);
  auto& params = net.parameters();
  std::vector<std::vector<double>> before;
  for (auto* p : params) {
    p->zero_grad();
    before.push_back(p->values);
  }
  AdamState state;
  TrainConfig tcfg;
  adam_step(params, state, tcfg);
  for (size_t i = 0; i < params.size(); ++i) CHECK(params[i]->values == before[i]);
}

TEST_CASE("adam: first step moves each coordinate by about the learning rate") {
  Tensor p = Tensor::zeros({4});
  p.values = {1.0, -2.0, 3.0, 0.5};
  p.grad = {0.3, -0.7, 1.5, -2.0};
  std::vector<Tensor*> params{&p};
  AdamState state;
  TrainConfig tcfg;
  adam_step(params, state, tcfg);
  std::vector<double> expect = {1.0 - 1e-3, -2.0 + 1e-3, 3.0 - 1e-3, 0.5 + 1e-3};
  for (int i = 0; i < 4; ++i)
    CHECK(p.values[size_t(i)] == Catch::Approx(expect[size_t(i)]).margin(1e-7));
}

TEST_CASE("adam: deterministic and shape-checked") {
  auto run = [] {
    Tensor p = Tensor::zeros({3});
    p.values = {0.1, 0.2, 0.3};
    std::vector<Tensor*> params{&p};
    AdamState st;
    TrainConfig tcfg;
    for (int i = 0; i < 5; ++i) {
      p.grad = {0.01 * (i + 1), -0.02, 0.5};
      adam_step(params, st, tcfg);
    }
    return p.values;
  };
  CHECK(run() == run());

  Tensor p = Tensor::zeros({3});
  p.grad = {1.0};  // wrong length
  std::vector<Tensor*> params{&p};
  AdamState st;
  TrainConfig tcfg;
  CHECK_THROWS_AS(adam_step(params, st, tcfg), std::invalid_argument);
}

TEST_CASE("training memorizes a single repeated sample") {
  OpticalConfig optics;
  optics.grid_n = 16;
  NetworkConfig ncfg;
  ncfg.n_down_blocks = ncfg.n_up_blocks = 2;
  ncfg.n_res_blocks = 1;
  ncfg.base_channels = 8;
  ncfg.input_side = 16;
  Network net(ncfg, 77);
  auto data = gen_texture_dataset(123, 1, 16);
  TrainConfig tcfg;
  tcfg.epochs = 150;
  tcfg.seed = 5;
  auto result = train_network(net, data, optics, tcfg);
  REQUIRE(result.epoch_loss.size() == 150);
  CHECK(result.epoch_loss.back() < -0.95);
  // trend: the tail of the history sits well below the head
  double head = 0, tail = 0;
  for (int i = 0; i < 10; ++i) {
    head += result.epoch_loss[size_t(i)];
    tail += result.epoch_loss[result.epoch_loss.size() - 1 - size_t(i)];
  }
  CHECK(tail / 10 < head / 10 - 0.1);
}

TEST_CASE("training is reproducible for a fixed seed") {
  OpticalConfig optics;
  optics.grid_n = 16;
  NetworkConfig ncfg;
  ncfg.n_down_blocks = ncfg.n_up_blocks = 1;
  ncfg.n_res_blocks = 0;
  ncfg.base_channels = 4;
  ncfg.input_side = 16;
  auto data = gen_texture_dataset(9, 10, 16);
  TrainConfig tcfg;
  tcfg.epochs = 3;
  tcfg.seed = 31;
  auto run = [&] {
    Network net(ncfg, 55);
    return train_network(net, data, optics, tcfg).epoch_loss;
  };
  auto h1 = run();
  auto h2 = run();
  CHECK(h1 == h2);
}

TEST_CASE("training aborts on divergence with diagnostics") {
  OpticalConfig optics;
  optics.grid_n = 16;
  NetworkConfig ncfg;
  ncfg.n_down_blocks = ncfg.n_up_blocks = 1;
  ncfg.n_res_blocks = 0;
  ncfg.base_channels = 4;
  ncfg.input_side = 16;
  Network net(ncfg, 1);
  auto data = gen_texture_dataset(2, 4, 16);
  TrainConfig tcfg;
  tcfg.epochs = 5;
  tcfg.learning_rate = 1e290;
  CHECK_THROWS_WITH(train_network(net, data, optics, tcfg),
                    Catch::Matchers::ContainsSubstring("non-finite"));
}

TEST_CASE("training requires a non-empty split and matching grids") {
  OpticalConfig optics;
  optics.grid_n = 16;
  NetworkConfig ncfg;
  ncfg.n_down_blocks = ncfg.n_up_blocks = 1;
  ncfg.n_res_blocks = 0;
  ncfg.base_channels = 4;
  ncfg.input_side = 16;
  Network net(ncfg, 1);
  auto data = gen_texture_dataset(2, 4, 16);
  DatasetManifest empty = data;
  for (auto& e : empty.entries) e.split = Split::test;
  TrainConfig tcfg;
  CHECK_THROWS_AS(train_network(net, empty, optics, tcfg), std::invalid_argument);
  auto wrong = gen_texture_dataset(2, 4, 32);
  CHECK_THROWS_AS(train_network(net, wrong, optics, tcfg), std::invalid_argument);
}

TEST_CASE("checkpoint round trip preserves behavior") {
  namespace fs = std::filesystem;
  auto dir = fs::temp_directory_path() / "wotfprobe_test_net";
  fs::create_directories(dir);
  auto path = (dir / "net.wpnn").string();

  Network net(tiny_config(), 99);
  net.save_checkpoint(path);
  Network back = Network::load_checkpoint(path);
  Tensor in = random_batch(4, 2, 8);
  const Tensor a = net.forward(in);
  const Tensor& b = back.forward(in);
  CHECK(a.values == b.values);

  // corrupted magic is rejected
  auto bad = (dir / "bad.wpnn").string();
  {
    std::ofstream f(bad, std::ios::binary);
    f << "NOPE" << std::string(64, '\0');
  }
  CHECK_THROWS_WITH(Network::load_checkpoint(bad), Catch::Matchers::ContainsSubstring("magic"));
}
