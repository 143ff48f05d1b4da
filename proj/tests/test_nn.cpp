#include "qlabgrad/nn.hpp"

#include <doctest.h>
#include <zlib.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

#include <unistd.h>

using namespace qlabgrad;
using namespace qlabgrad::nn;

namespace {

Dataset dataset_from(const Eigen::MatrixXd& x, std::vector<int> labels, int k) {
  Dataset d;
  d.features = x;
  d.labels = std::move(labels);
  d.num_classes = k;
  return d;
}

// Straight-loop forward pass used as the reference implementation.
double reference_loss(const Mlp& net, const ParamVector& p, const Eigen::MatrixXd& x, const std::vector<int>& y) {
  const auto& w = net.spec().layer_widths;
  double total = 0.0;
  for (Eigen::Index s = 0; s < x.rows(); ++s) {
    std::vector<double> a;
    for (Eigen::Index j = 0; j < x.cols(); ++j) a.push_back(x(s, j));
    Eigen::Index off = 0;
    for (std::size_t l = 0; l + 1 < w.size(); ++l) {
      const Eigen::Index in = w[l], out = w[l + 1];
      std::vector<double> z(static_cast<std::size_t>(out), 0.0);
      for (Eigen::Index o = 0; o < out; ++o) {
        double acc = p[off + in * out + o];
        for (Eigen::Index i = 0; i < in; ++i) acc += p[off + i * out + o] * a[static_cast<std::size_t>(i)];
        z[static_cast<std::size_t>(o)] = (l + 2 < w.size()) ? std::max(acc, 0.0) : acc;
      }
      off += in * out + out;
      a = z;
    }
    double mx = a[0];
    for (double v : a) mx = std::max(mx, v);
    double sum = 0.0;
    for (double v : a) sum += std::exp(v - mx);
    total += std::log(sum) + mx - a[static_cast<std::size_t>(y[static_cast<std::size_t>(s)])];
  }
  return total / static_cast<double>(x.rows());
}

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    path = std::filesystem::temp_directory_path() / ("qlabgrad_nn_" + std::to_string(::getpid()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

void put_be32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<unsigned char>(v >> s));
}

void write_bytes(const std::filesystem::path& p, const std::vector<unsigned char>& bytes) {
  std::ofstream(p, std::ios::binary).write(reinterpret_cast<const char*>(bytes.data()),
                                           static_cast<std::streamsize>(bytes.size()));
}

std::vector<unsigned char> idx_images(std::uint32_t magic, std::uint32_t n, std::uint32_t rows, std::uint32_t cols) {
  std::vector<unsigned char> b;
  put_be32(b, magic);
  put_be32(b, n);
  put_be32(b, rows);
  put_be32(b, cols);
  for (std::uint32_t i = 0; i < n * rows * cols; ++i) b.push_back(static_cast<unsigned char>(i % 256));
  return b;
}

std::vector<unsigned char> idx_labels(std::uint32_t n) {
  std::vector<unsigned char> b;
  put_be32(b, 0x801);
  put_be32(b, n);
  for (std::uint32_t i = 0; i < n; ++i) b.push_back(static_cast<unsigned char>(i % 10));
  return b;
}

}  // namespace

TEST_CASE("loss at uniform logits is ln k") {
  Mlp net(MlpSpec{{5, 7, 10}});
  Dataset d = dataset_from(Eigen::MatrixXd::Random(4, 5), {0, 3, 9, 2}, 10);
  CHECK(net.forward_loss(ParamVector::Zero(net.param_count()), full_batch(d)).loss ==
        doctest::Approx(std::log(10.0)).epsilon(1e-15));
}

TEST_CASE("confident correct logits give vanishing loss") {
  Mlp net(MlpSpec{{1, 1, 2}});
  // Hidden unit passes x through; output logit 1 gets +50, logit 0 gets 0.
  ParamVector p = ParamVector::Zero(net.param_count());
  p[0] = 1.0;   // hidden weight
  p[3] = 50.0;  // output weight row 1
  Dataset d = dataset_from(Eigen::MatrixXd::Constant(1, 1, 1.0), {1}, 2);
  const double loss = net.forward_loss(p, full_batch(d)).loss;
  CHECK(loss >= 0.0);
  CHECK(loss < 1e-20);
}

TEST_CASE("seeded 2-4-2 net matches the reference forward pass") {
  Mlp net(MlpSpec{{2, 4, 2}});
  const ParamVector p = net.init_params(42);
  Eigen::MatrixXd x(3, 2);
  x << 0.5, -1.0, 1.5, 0.25, -0.75, 2.0;
  const std::vector<int> y{0, 1, 1};
  Dataset d = dataset_from(x, y, 2);
  ParamVector q = p;
  for (Eigen::Index i = 0; i < q.size(); ++i) q[i] += 0.01 * static_cast<double>(i % 5);  // nonzero biases
  CHECK(std::abs(net.forward_loss(q, full_batch(d)).loss - reference_loss(net, q, x, y)) <= 1e-12);
}

TEST_CASE("backprop matches central differences on a 2-4-2 net") {
  Mlp net(MlpSpec{{2, 4, 2}});
  Eigen::MatrixXd x(3, 2);
  x << 0.5, -1.0, 1.5, 0.25, -0.75, 2.0;
  auto data = std::make_shared<const Dataset>(dataset_from(x, {0, 1, 1}, 2));
  MinibatchOracle o(net, data, 3, 0);
  const GradientCheck c = check_gradient(o, net.init_params(42), 1e-5);
  INFO("max relative error " << c.max_relative_error);
  CHECK(c.passed);
}

TEST_CASE("zero inputs kill first-layer weight gradients") {
  Mlp net(MlpSpec{{3, 4, 2}});
  ParamVector p = net.init_params(1);
  for (Eigen::Index i = 0; i < 4; ++i) p[net.layers()[0].offset + 12 + i] = 0.1;  // positive hidden biases
  Dataset d = dataset_from(Eigen::MatrixXd::Zero(2, 3), {0, 1}, 2);
  const ForwardCache c = net.forward_loss(p, full_batch(d));
  const ParamVector g = net.backward(p, c);
  CHECK(g.segment(0, 12).isZero(0.0));
  const auto& out = net.layers()[1];
  CHECK(g.segment(out.offset + out.rows * out.cols, out.rows).norm() > 0.0);
}

TEST_CASE("duplicated samples give the single-sample gradient") {
  Mlp net(MlpSpec{{3, 5, 3}});
  const ParamVector p = net.init_params(9);
  Eigen::MatrixXd one(1, 3), two(2, 3);
  one << 0.2, -0.4, 0.9;
  two << 0.2, -0.4, 0.9, 0.2, -0.4, 0.9;
  const Dataset a = dataset_from(one, {2}, 3), b = dataset_from(two, {2, 2}, 3);
  const ParamVector ga = net.backward(p, net.forward_loss(p, full_batch(a)));
  const ParamVector gb = net.backward(p, net.forward_loss(p, full_batch(b)));
  CHECK((ga - gb).cwiseAbs().maxCoeff() <= 1e-15);
}

TEST_CASE("flatten round trip and layout") {
  Mlp net(MlpSpec{{4, 6, 5, 3}});
  const ParamVector p = net.init_params(3);
  CHECK(net.param_count() == 4 * 6 + 6 + 6 * 5 + 5 + 5 * 3 + 3);
  CHECK(net.flatten(net.unflatten(p)) == p);
  const auto parts = net.unflatten(p);
  CHECK(parts[0].first(1, 0) == p[1]);  // column-major out × in
  CHECK(parts[1].second.isZero(0.0));
  CHECK_THROWS_AS(net.forward_loss(ParamVector::Zero(3), Batch{Eigen::MatrixXd::Zero(1, 4), {0}}),
                  std::invalid_argument);
  CHECK_THROWS_AS(net.forward_loss(p, Batch{Eigen::MatrixXd::Zero(1, 5), {0}}), std::invalid_argument);
  CHECK_THROWS_AS(Mlp(MlpSpec{{4, 3}}), std::invalid_argument);
}

TEST_CASE("init is seeded") {
  Mlp net(MlpSpec{{10, 8, 4}});
  CHECK(net.init_params(5) == net.init_params(5));
  CHECK(net.init_params(5) != net.init_params(6));
  const ParamVector p = net.init_params(5);
  CHECK(p.segment(0, 80).cwiseAbs().maxCoeff() <= std::sqrt(0.6));
}

TEST_CASE("synthetic data") {
  const Dataset a = synth_dataset(7, 100, 2, 2, 0.1);
  const Dataset b = synth_dataset(7, 100, 2, 2, 0.1);
  CHECK(a.features == b.features);
  CHECK(a.labels == b.labels);
  CHECK(std::count(a.labels.begin(), a.labels.end(), 0) == 50);

  // Perceptron with bias reaches zero training errors, so the blobs are separable.
  Eigen::Vector3d w = Eigen::Vector3d::Zero();
  int errors = 1;
  for (int epoch = 0; epoch < 1000 && errors > 0; ++epoch) {
    errors = 0;
    for (Eigen::Index i = 0; i < a.size(); ++i) {
      const Eigen::Vector3d x(a.features(i, 0), a.features(i, 1), 1.0);
      const double y = a.labels[static_cast<std::size_t>(i)] == 1 ? 1.0 : -1.0;
      if (y * w.dot(x) <= 0.0) {
        w += y * x;
        ++errors;
      }
    }
  }
  CHECK(errors == 0);

  const Dataset c = synth_dataset(1, 4, 3, 4, 0.5);
  CHECK(c.labels == std::vector<int>{0, 1, 2, 3});
  CHECK_THROWS_AS(synth_dataset(1, 3, 3, 4, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(synth_dataset(1, 10, 3, 1, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(synth_dataset(1, 10, 3, 2, 0.0), std::invalid_argument);
}

TEST_CASE("minibatch oracle binding") {
  auto data = std::make_shared<const Dataset>(synth_dataset(7, 64, 4, 3, 0.3));
  Mlp net(MlpSpec{{4, 6, 3}});
  const ParamVector p = net.init_params(2);

  MinibatchOracle full(net, data, 64, 0);
  CHECK_FALSE(full.is_stochastic());
  CHECK(full.eval_loss(p) == doctest::Approx(net.mean_loss(p, *data)).epsilon(1e-14));

  MinibatchOracle mb(net, data, 16, 3);
  const double l1 = mb.eval_loss(p);
  CHECK(mb.eval_loss(p) == l1);
  CHECK(mb.eval_full(p).loss == l1);
  mb.next_batch();
  CHECK(mb.eval_loss(p) != l1);

  MinibatchOracle again(net, data, 16, 3);
  CHECK(again.eval_loss(p) == l1);

  // Four batches per epoch, then a fresh permutation covering every sample.
  MinibatchOracle cyc(net, data, 16, 3);
  std::vector<int> seen(64, 0);
  for (int b = 0; b < 4; ++b) {
    for (Eigen::Index r : cyc.current_rows()) ++seen[static_cast<std::size_t>(r)];
    cyc.next_batch();
  }
  CHECK(std::all_of(seen.begin(), seen.end(), [](int s) { return s == 1; }));

  MinibatchOracle drop(net, data, 20, 3);  // 3 full batches, 4 samples dropped per epoch
  for (int b = 0; b < 3; ++b) drop.next_batch();
  CHECK(drop.current_rows().size() == 20);

  CHECK_THROWS_AS(MinibatchOracle(net, data, 65, 0), std::invalid_argument);
  CHECK_THROWS_AS(MinibatchOracle(Mlp(MlpSpec{{5, 6, 3}}), data, 8, 0), std::invalid_argument);
}

TEST_CASE("IDX parsing") {
  TempDir tmp;
  const auto img = tmp.path / "img.idx", lab = tmp.path / "lab.idx";
  write_bytes(img, idx_images(0x803, 2, 28, 28));
  write_bytes(lab, idx_labels(2));
  const Dataset d = load_idx(img, lab);
  CHECK(d.size() == 2);
  CHECK(d.feature_dim() == 784);
  CHECK(d.features(0, 1) == 1.0 / 255.0);
  CHECK(d.features(1, 0) == (784 % 256) / 255.0);
  CHECK(d.labels == std::vector<int>{0, 1});

  write_bytes(tmp.path / "bad.idx", idx_images(0x802, 2, 28, 28));
  try {
    load_idx(tmp.path / "bad.idx", lab);
    FAIL("expected IdxError");
  } catch (const IdxError& e) {
    CHECK(e.offset == 0);
  }

  write_bytes(tmp.path / "lab3.idx", idx_labels(3));
  try {
    load_idx(img, tmp.path / "lab3.idx");
    FAIL("expected IdxError");
  } catch (const IdxError& e) {
    const std::string msg = e.what();
    CHECK(msg.find('2') != std::string::npos);
    CHECK(msg.find('3') != std::string::npos);
  }

  auto cut = idx_images(0x803, 2, 28, 28);
  cut.resize(cut.size() - 10);
  write_bytes(tmp.path / "cut.idx", cut);
  try {
    load_idx(tmp.path / "cut.idx", lab);
    FAIL("expected IdxError");
  } catch (const IdxError& e) {
    CHECK(e.offset == cut.size());
  }

  const auto bytes = idx_images(0x803, 2, 28, 28);
  gzFile gz = gzopen((tmp.path / "img.idx.gz").string().c_str(), "wb");
  gzwrite(gz, bytes.data(), static_cast<unsigned>(bytes.size()));
  gzclose(gz);
  const Dataset z = load_idx(tmp.path / "img.idx.gz", lab);
  CHECK(z.features == d.features);
  CHECK_THROWS_AS(load_idx(tmp.path / "missing.idx", lab), IdxError);
}

TEST_CASE("gradient check on random nets") {
  std::mt19937_64 rng(7);
  int failures = 0;
  double worst = 0.0;
  for (int c = 0; c < 20; ++c) {
    std::uniform_int_distribution<int> width(2, 6), depth(1, 3), batch(1, 8);
    MlpSpec spec;
    spec.layer_widths.push_back(width(rng));
    const int hidden = depth(rng);
    for (int h = 0; h < hidden; ++h) spec.layer_widths.push_back(width(rng));
    const int k = width(rng);
    spec.layer_widths.push_back(k);
    Mlp net(spec);
    const int n = batch(rng);
    Eigen::MatrixXd x(n, spec.layer_widths[0]);
    std::normal_distribution<double> nd(0.0, 1.0);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = nd(rng);
    std::vector<int> y;
    for (int i = 0; i < n; ++i) y.push_back(std::uniform_int_distribution<int>(0, k - 1)(rng));
    auto data = std::make_shared<const Dataset>(dataset_from(x, y, k));
    ParamVector p = net.init_params(rng());
    for (Eigen::Index i = 0; i < p.size(); ++i) p[i] += 0.1 * nd(rng);
    MinibatchOracle o(net, data, n, 0);
    const GradientCheck r = check_gradient(o, p, 1e-5);
    failures += r.passed ? 0 : 1;
    worst = std::max(worst, r.max_relative_error);
    INFO("case " << c << " max relative error " << r.max_relative_error);
    CHECK(r.passed);
  }
  MESSAGE("worst relative error " << worst);
}
