#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "mpipn/autodiff/derivatives.hpp"
#include "mpipn/error.hpp"
#include "mpipn/network.hpp"
#include "mpipn/rng.hpp"

using namespace mpipn;
using namespace mpipn::net;
using geometry::DomainTag;

namespace {

Tensor random_cloud(std::uint64_t seed, std::size_t n) {
  Rng rng(seed);
  Tensor t({n, 3});
  for (std::size_t i = 0; i < n; ++i) {
    t(i, 0) = rng.uniform(-10.0, 10.0);
    t(i, 1) = rng.uniform(-4.0, 11.0);
    t(i, 2) = rng.uniform(300.0, 500.0);
  }
  return t;
}

ModelParams ready_model(std::uint64_t seed) {
  ModelParams m = init_params(seed);
  set_input_normalization(m, {-10.0, -4.0, 10.0, 11.0}, 300.0, 500.0);
  return m;
}

// Randomizes T-Net output layers so transforms are no longer the identity.
void perturb_tnets(ModelParams& m, std::uint64_t seed) {
  Rng rng(seed);
  for (auto& t : m.tensors) {
    if (t.name.find(".out.") != std::string::npos) {
      for (auto& v : t.value.storage()) v = rng.uniform(-0.05, 0.05);
    }
  }
}

std::vector<double> code(std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> c(50);
  for (auto& v : c) v = rng.uniform(-1.5, 1.5);
  return c;
}

Tensor permute_rows(const Tensor& t, const std::vector<std::size_t>& perm) {
  Tensor out(t.shape());
  for (std::size_t i = 0; i < perm.size(); ++i) {
    for (std::size_t c = 0; c < t.cols(); ++c) out(i, c) = t(perm[i], c);
  }
  return out;
}

}  // namespace

TEST_CASE("stack_quantities") {
  const Tensor s = stack_quantities(Tensor::from_rows({{1.0, 2.0}}), Tensor::from_rows({{300.0}}));
  CHECK(s == Tensor::from_rows({{1.0, 2.0, 300.0}}));
  CHECK(stack_quantities(Tensor{}, Tensor{}).empty());
  CHECK_THROWS_AS(stack_quantities(Tensor::zeros(2, 2), Tensor::zeros(3, 1)), ShapeError);
}

TEST_CASE("feature transforms") {
  const ModelParams m = ready_model(1);
  const Tensor x = random_cloud(2, 9).reshaped({9, 3});
  Tape tape;
  const Bound p = bind(tape, m, false);
  CHECK(feature_transform(tape.leaf(x), p, "tnet_in").value() == x);

  ModelParams forced = m;
  auto& bias = forced.at("tnet_in.out.b");
  for (std::size_t i = 0; i < 3; ++i) bias[i * 3 + i] = 1.0;  // T = I + I
  Tape t2;
  const Bound p2 = bind(t2, forced, false);
  const Tensor doubled = feature_transform(t2.leaf(x), p2, "tnet_in").value();
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(doubled[i] == 2.0 * x[i]);

  perturb_tnets(forced, 3);
  Tape t3;
  const Bound p3 = bind(t3, forced, false);
  const Var out = feature_transform(t3.leaf(x), p3, "tnet_in");
  CHECK(out.value().shape() == x.shape());
  for (double v : out.value().data()) CHECK(std::isfinite(v));
  CHECK_THROWS_AS(feature_transform(t3.leaf(Tensor::zeros(4, 5)), p3, "tnet_in"), ShapeError);
}

TEST_CASE("matrix_mlp") {
  Tape tape;
  const Var w = tape.leaf(Tensor::zeros(3, 4)), b = tape.leaf(Tensor::zeros(1, 4));
  const Var out = matrix_mlp(tape.leaf(random_cloud(1, 5)), {{w, b}});
  for (double v : out.value().data()) CHECK(v == 0.0);
  const Var one = matrix_mlp(tape.leaf(Tensor::scalar(0.0)), {{tape.leaf(Tensor::scalar(1.0)), tape.leaf(Tensor::scalar(0.0))}});
  CHECK(one.value().item() == 0.0);

  const ModelParams m = ready_model(1);
  Tape t2;
  const Bound p = bind(t2, m, false);
  CHECK(matrix_mlp(t2.leaf(random_cloud(3, 7)), layers(p, "local_pre")).value().shape() ==
        std::vector<std::size_t>{7, 64});
  CHECK_THROWS_AS(matrix_mlp(t2.leaf(Tensor::zeros(2, 4)), layers(p, "local_pre")), ShapeError);
}

TEST_CASE("local extractor") {
  ModelParams m = ready_model(4);
  const Tensor x = random_cloud(5, 12);
  Tape tape;
  const Bound p = bind(tape, m, false);
  const Tensor sl = local_extractor(tape.leaf(x), p).value();
  CHECK(sl.shape() == std::vector<std::size_t>{12, 32});

  ModelParams zero = m;
  for (auto& t : zero.tensors) {
    if (t.trainable && (t.name.rfind("local_", 0) == 0)) std::fill(t.value.storage().begin(), t.value.storage().end(), 0.0);
  }
  Tape tz;
  for (double v : local_extractor(tz.leaf(x), bind(tz, zero, false)).value().data()) CHECK(v == 0.0);

  // Permuting points permutes rows, also with non-identity transforms.
  perturb_tnets(m, 9);
  std::vector<std::size_t> perm(12);
  for (std::size_t i = 0; i < 12; ++i) perm[i] = (i * 5 + 3) % 12;
  Tape ta, tb;
  const Tensor base = local_extractor(ta.leaf(x), bind(ta, m, false)).value();
  const Tensor permuted = local_extractor(tb.leaf(permute_rows(x, perm)), bind(tb, m, false)).value();
  CHECK(permuted == permute_rows(base, perm));
}

TEST_CASE("local rows depend only on their own point under identity transforms") {
  const ModelParams m = ready_model(6);
  Tensor x = random_cloud(7, 10);
  Tape ta;
  const Tensor before = local_extractor(ta.leaf(x), bind(ta, m, false)).value();
  x(4, 0) += 0.75;
  x(4, 1) -= 0.5;
  Tape tb;
  const Tensor after = local_extractor(tb.leaf(x), bind(tb, m, false)).value();
  for (std::size_t r = 0; r < 10; ++r) {
    bool same = true;
    for (std::size_t c = 0; c < 32; ++c) same = same && before(r, c) == after(r, c);
    CHECK(same == (r != 4));
  }
}

TEST_CASE("global extractor") {
  ModelParams m = ready_model(8);
  perturb_tnets(m, 2);
  {
    Tape tape;
    const Bound p = bind(tape, m, false);
    const Var local = local_extractor(tape.leaf(random_cloud(1, 1)), p);
    const Var g = global_extractor(local, p);
    CHECK(g.value().shape() == std::vector<std::size_t>{1, 128});
    CHECK(g.value() == matrix_mlp(local, layers(p, "global")).value());
  }
  const Tensor x = random_cloud(3, 20);
  Tape tape;
  const Tensor ref = global_feature(local_extractor(tape.leaf(x), bind(tape, m, false)), bind(tape, m, false)).value();
  Rng rng(12);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<std::size_t> perm(20);
    for (std::size_t i = 0; i < 20; ++i) perm[i] = i;
    rng.shuffle(perm.begin(), perm.end());
    Tape t;
    const Bound p = bind(t, m, false);
    CHECK(global_feature(local_extractor(t.leaf(permute_rows(x, perm)), p), p).value() == ref);
  }
}

TEST_CASE("encode_implicit") {
  const std::vector<double> q = {1.0, 2.0, 3.0};
  const double mu = 2.0, sd = std::sqrt(2.0 / 3.0);
  const auto z = encode_implicit(q, {mu, mu, mu}, {sd, sd, sd});
  CHECK(z[0] == doctest::Approx(-1.2247448713915890));
  CHECK(z[1] == 0.0);
  CHECK(z[2] == doctest::Approx(1.2247448713915890));
  const auto outside = encode_implicit({100.0}, {0.0}, {1.0});
  CHECK(outside[0] == 100.0);
  CHECK_THROWS_AS(encode_implicit({1.0}, {1.0}, {0.0}), NumericError);
  CHECK_THROWS_AS(encode_implicit({1.0, 2.0}, {1.0}, {1.0}), ShapeError);
  // Affine: encode(a q + b) = a encode(q) + (b + (a - 1) mu) / sd.
  const double a = 3.0, b = -0.5;
  const auto lhs = encode_implicit({a * 1.7 + b}, {0.4}, {2.0});
  CHECK(lhs[0] == doctest::Approx(a * encode_implicit({1.7}, {0.4}, {2.0})[0] + (b + (a - 1.0) * 0.4) / 2.0));
}

TEST_CASE("criteria solver") {
  ModelParams m = ready_model(10);
  const Tensor x = random_cloud(11, 6);
  const auto c = code(1);
  Tape tape;
  const Bound p = bind(tape, m, false);
  const Var local = local_extractor(tape.leaf(x), p);
  const Var crit = criteria_sequence(tape.leaf(Tensor({1, 50}, c)), local, global_feature(local, p));
  CHECK(crit.cols() == 210);
  CHECK(m.at("head0.l0.w").shape() == std::vector<std::size_t>{210, 128});
  CHECK(m.at("head0.l1.w").shape() == std::vector<std::size_t>{128, 64});
  CHECK(m.at("head0.l2.w").shape() == std::vector<std::size_t>{64, 32});
  CHECK(m.at("head0.l3.w").shape() == std::vector<std::size_t>{32, 2});
  CHECK_THROWS_AS(criteria_solver(local, DomainTag::PressureAcoustic, p), ShapeError);

  ModelParams zeroed = m;
  std::fill(zeroed.at("head1.l3.w").storage().begin(), zeroed.at("head1.l3.w").storage().end(), 0.0);
  std::fill(zeroed.at("head1.l3.b").storage().begin(), zeroed.at("head1.l3.b").storage().end(), 0.0);
  Tape tz;
  const Tensor zero_out = forward_domain(tz.leaf(x), c, DomainTag::PlaneWaveRadiation, bind(tz, zeroed, false)).value();
  for (double v : zero_out.data()) CHECK(v == 0.0);

  // Changing head 1 leaves heads 0 and 2 untouched.
  Tape ta, tb;
  const Bound pa = bind(ta, m, false), pb = bind(tb, zeroed, false);
  CHECK(forward_domain(ta.leaf(x), c, DomainTag::PressureAcoustic, pa).value() ==
        forward_domain(tb.leaf(x), c, DomainTag::PressureAcoustic, pb).value());
  CHECK(forward_domain(ta.leaf(x), c, DomainTag::AcousticStructureCoupling, pa).value() ==
        forward_domain(tb.leaf(x), c, DomainTag::AcousticStructureCoupling, pb).value());

  ArchConfig two_heads;
  two_heads.heads = 2;
  const ModelParams small = init_params(1, two_heads);
  Tape ts;
  const Bound ps = bind(ts, small, false);
  CHECK_THROWS_AS(forward_domain(ts.leaf(x), c, DomainTag::AcousticStructureCoupling, ps), ConfigError);
}

TEST_CASE("split first head layer equals the concatenated form") {
  ModelParams m = ready_model(13);
  perturb_tnets(m, 4);
  const Tensor x = random_cloud(14, 15);
  const auto c = code(2);
  for (auto tag : geometry::kAllDomains) {
    Tape tape;
    const Bound p = bind(tape, m, false);
    const Tensor fused = forward_domain(tape.leaf(x), c, tag, p).value();
    const Tensor literal = forward_domain_literal(tape.leaf(x), c, tag, p).value();
    for (std::size_t i = 0; i < fused.size(); ++i) CHECK(fused[i] == doctest::Approx(literal[i]).epsilon(1e-12));
  }
}

TEST_CASE("forward runs end to end and is deterministic") {
  const ModelParams m = ready_model(15);
  geometry::PointCloudSet one;
  one.interior = {{0.5, 0.5}};
  const auto out = forward(m, one, 400.0, std::vector<double>(50, 1.0));
  CHECK(out[0].shape() == std::vector<std::size_t>{1, 2});
  CHECK(out[1].empty());

  const auto cloud = geometry::build_case_geometry(geometry::case_config("degenerate"), 1);
  const auto a = forward(m, cloud, 350.0, std::vector<double>(50, 0.3));
  const auto b = forward(m, cloud, 350.0, std::vector<double>(50, 0.3));
  CHECK(a == b);
  CHECK(forward(m, cloud, 450.0, std::vector<double>(50, 0.3)) != a);
}

TEST_CASE("outputs are sensitive to frequency") {
  const ModelParams m = ready_model(16);
  const Tensor x = random_cloud(17, 8);
  Tape tape;
  const Var in = tape.leaf(x, true);
  tape.backward(ad::sum(forward_domain(in, code(3), DomainTag::PressureAcoustic, bind(tape, m, false))));
  const Tensor g = tape.grad(in);
  double norm = 0.0;
  for (std::size_t r = 0; r < 8; ++r) norm += g(r, 2) * g(r, 2);
  CHECK(norm > 0.0);
}

TEST_CASE("initialization") {
  const ModelParams a = init_params(5), b = init_params(5), c = init_params(6);
  REQUIRE(a.tensors.size() == b.tensors.size());
  bool all_equal = true, any_diff = false;
  for (std::size_t i = 0; i < a.tensors.size(); ++i) {
    all_equal = all_equal && a.tensors[i].value == b.tensors[i].value;
    any_diff = any_diff || a.tensors[i].value != c.tensors[i].value;
  }
  CHECK(all_equal);
  CHECK(any_diff);
  for (const auto& t : a.tensors) {
    if (!t.trainable || t.name.find(".out.") != std::string::npos) continue;
    const double bound = 1.0 / std::sqrt(static_cast<double>(t.name.back() == 'w' ? t.value.rows() : a.at(t.name.substr(0, t.name.size() - 1) + "w").rows()));
    for (double v : t.value.data()) CHECK(std::abs(v) <= bound);
  }
}

TEST_CASE("jets through the full pipeline agree with finite differences") {
  ModelParams m = ready_model(18);
  perturb_tnets(m, 5);
  const auto c = code(4);
  const Tensor x = random_cloud(19, 5);
  const ad::PointwiseComputation f = [&](Tape& tape, Var in) {
    return forward_domain(in, c, DomainTag::PressureAcoustic, bind(tape, m, false));
  };
  CHECK(ad::fd_check(f, x, 1e-4).worst() < 1e-5);
}

TEST_CASE("checkpoint round trip") {
  ModelParams m = ready_model(20);
  perturb_tnets(m, 6);
  const std::string bytes = serialize(m);
  const ModelParams back = deserialize(bytes);
  CHECK(back.arch == m.arch);
  REQUIRE(back.tensors.size() == m.tensors.size());
  for (std::size_t i = 0; i < m.tensors.size(); ++i) {
    CHECK(back.tensors[i].name == m.tensors[i].name);
    CHECK(back.tensors[i].value == m.tensors[i].value);
  }
  CHECK(serialize(back) == bytes);

  std::string corrupt = bytes;
  corrupt[100] ^= 0x1;
  CHECK_THROWS_AS(deserialize(corrupt), IoError);
  CHECK_THROWS_AS(deserialize("garbage"), IoError);
  CHECK_THROWS_AS(load_checkpoint("/nonexistent/ckpt_0.bin"), IoError);

  ArchConfig real_only;
  real_only.output_channels = 1;
  const ModelParams r = init_params(1, real_only);
  CHECK(deserialize(serialize(r)).arch.output_channels == 1);
}
