#include <random>

#include <gtest/gtest.h>

#include "embchan/model.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace embchan;

namespace {

const char* kChainModel = R"({
  "lead_left": {"preset": "chain", "params": {"t": 1, "eps": 0}},
  "lead_right": {"preset": "chain", "params": {"t": 1, "eps": 0}},
  "device": {"h": [[0]], "coupling_left": [[1]], "coupling_right": [[1]]}
})";

std::string with_left_lead(const std::string& lead) {
  return R"({"lead_left": )" + lead + R"(,
    "lead_right": {"preset": "chain"},
    "device": {"layers": 1}})";
}

std::string error_of(const std::string& text) {
  try {
    parse_model(text);
  } catch (const ValidationError& e) {
    return e.what();
  }
  return "";
}

void expect_same(const CMatrix& a, const CMatrix& b) {
  ASSERT_EQ(a.rows(), b.rows());
  ASSERT_EQ(a.cols(), b.cols());
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < a.cols(); ++j) EXPECT_EQ(a(i, j), b(i, j)) << "(" << i << "," << j << ")";
}

}  // namespace

TEST(Model, ChainPresetBlocks) {
  const auto m = parse_model(kChainModel);
  const auto b = build_lead_blocks(m.lead_left);
  expect_same(b.h00, CMatrix::Constant(1, 1, 0.0));
  expect_same(b.h01, CMatrix::Constant(1, 1, -1.0));
  EXPECT_FALSE(b.k.has_value());
}

TEST(Model, LadderPresetBlocks) {
  const std::string lead = R"({"preset": "ladder", "params": {"t": 1, "t_perp": 0.5}})";
  const auto m = parse_model(R"({"lead_left": )" + lead + R"(, "lead_right": )" + lead +
                             R"(, "device": {"layers": 1}})");
  const auto b = build_lead_blocks(m.lead_left);
  CMatrix h00(2, 2), h01(2, 2);
  h00 << 0, -0.5, -0.5, 0;
  h01 << -1, 0, 0, -1;
  expect_same(b.h00, h00);
  expect_same(b.h01, h01);
}

TEST(Model, ExplicitHermiticityViolationNamesEntry) {
  const auto msg = error_of(with_left_lead(R"({"h00": [[0, [0, 1]], [[0, 1], 0]], "h01": [[1, 0], [0, 1]]})"));
  EXPECT_NE(msg.find("hermiticity violation at (0,1)"), std::string::npos) << msg;
  EXPECT_NE(msg.find("lead_left.h00"), std::string::npos) << msg;
}

TEST(Model, DimensionMismatchNamesBothBlocks) {
  const auto msg = error_of(with_left_lead(R"({"h00": [[0, 1], [1, 0]], "h01": [[1]]})"));
  EXPECT_NE(msg.find("h00 (2x2)"), std::string::npos) << msg;
  EXPECT_NE(msg.find("h01 (1x1)"), std::string::npos) << msg;
}

TEST(Model, ParseErrorReportsLineAndColumn) {
  const auto msg = error_of("{\n  \"lead_left\": {\"preset\": \"chain\",,}\n}");
  EXPECT_NE(msg.find("line 2"), std::string::npos) << msg;
  EXPECT_NE(msg.find("column"), std::string::npos) << msg;
}

TEST(Model, FieldPathsInErrors) {
  EXPECT_NE(error_of(with_left_lead(R"({"preset": "chain", "params": {"t": "x"}})")).find("lead_left.params.t"),
            std::string::npos);
  EXPECT_NE(error_of(with_left_lead(R"({"preset": "chain", "params": {"tt": 1}})")).find("unknown parameter"),
            std::string::npos);
  EXPECT_NE(error_of(with_left_lead(R"({"preset": "chain", "colour": 1})")).find("lead_left.colour"),
            std::string::npos);
  EXPECT_NE(error_of(with_left_lead(R"({"preset": "hexagon"})")).find("unknown preset"), std::string::npos);
  EXPECT_NE(error_of(with_left_lead(R"({"h00": [[0, 1], [1]], "h01": [[1, 0], [0, 1]]})")).find("ragged"),
            std::string::npos);
  EXPECT_NE(error_of(R"({"lead_left": {"preset": "chain"}, "device": {"layers": 1}})").find("model.lead_right"),
            std::string::npos);
}

TEST(Model, PositivityRules) {
  EXPECT_FALSE(error_of(with_left_lead(R"({"preset": "chain", "params": {"t": 0}})")).empty());
  EXPECT_FALSE(error_of(with_left_lead(R"({"preset": "chain", "params": {"t": -1}})")).empty());
  EXPECT_FALSE(error_of(with_left_lead(R"({"preset": "dimer_chain", "params": {"t1": 1, "t2": 0}})")).empty());
  EXPECT_FALSE(error_of(with_left_lead(R"({"preset": "ladder", "params": {"t_perp": -0.1}})")).empty());
  EXPECT_FALSE(error_of(with_left_lead(R"({"preset": "square_strip", "transverse": {"width": 0}})")).empty());
  EXPECT_FALSE(error_of(with_left_lead(R"({"preset": "square_strip"})")).empty());
  EXPECT_FALSE(error_of(with_left_lead(R"({"preset": "chain", "transverse": {"width": 2}})")).empty());
}

TEST(Model, MissingFileIsValidationError) {
  EXPECT_THROW(load_model("/nonexistent/model.json"), ValidationError);
}

TEST(Model, PeriodicStripPerMomentumBlocks) {
  const auto spec = strip_spec(2, true);
  const auto b0 = build_lead_blocks(spec, 0.0);
  EXPECT_NEAR(std::abs(b0.h00(0, 0) - cplx(-2.0, 0.0)), 0.0, 1e-15);
  EXPECT_EQ(b0.h01(0, 0), cplx(-1.0));
  const auto bpi = build_lead_blocks(spec, kPi);
  EXPECT_NEAR(std::abs(bpi.h00(0, 0) - cplx(2.0, 0.0)), 0.0, 1e-15);
  EXPECT_NEAR(*bpi.k, -kPi, 1e-15);  // folded into [-pi, pi)
}

TEST(Model, MomentumRequiredExactlyForPeriodicLeads) {
  EXPECT_THROW(build_lead_blocks(strip_spec(2, true)), ValidationError);
  EXPECT_THROW(build_lead_blocks(chain_spec(), 0.3), ValidationError);
  EXPECT_THROW(build_lead_blocks(strip_spec(3, false), 0.3), ValidationError);
  const auto b = build_lead_blocks(chain_spec());
  expect_same(b.h00, build_lead_blocks(chain_spec()).h00);
}

TEST(Model, MomentumFolding) {
  const auto spec = strip_spec(3, true, 1.3, 0.2);
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-10.0, 10.0);
  for (int i = 0; i < 100; ++i) {
    const double k = u(rng);
    const auto a = build_lead_blocks(spec, k);
    const auto b = build_lead_blocks(spec, k + 2.0 * kPi);
    EXPECT_NEAR(max_abs(CMatrix(a.h00 - b.h00)), 0.0, 1e-12);
    EXPECT_NEAR(max_abs(CMatrix(a.h01 - b.h01)), 0.0, 1e-12);
    EXPECT_GE(*a.k, -kPi);
    EXPECT_LT(*a.k, kPi);
    // Real-space model: h00(-K) = conj(h00(K)).
    const auto m = build_lead_blocks(spec, -k);
    EXPECT_NEAR(max_abs(CMatrix(m.h00 - a.h00.conjugate())), 0.0, 1e-12);
  }
}

TEST(Model, NaturalMomentaAndSupercell) {
  const auto ks = natural_momenta(strip_spec(4, true));
  ASSERT_EQ(ks.size(), 4u);
  EXPECT_NEAR(ks[0], -kPi, 1e-15);
  EXPECT_NEAR(ks[1], -kPi / 2, 1e-15);
  EXPECT_NEAR(ks[2], 0.0, 1e-15);
  EXPECT_NEAR(ks[3], kPi / 2, 1e-15);
  const auto w2 = supercell_blocks(strip_spec(2, true));
  EXPECT_EQ(w2.h00(0, 1), cplx(-2.0));
  const auto w1 = supercell_blocks(strip_spec(1, true));
  EXPECT_EQ(w1.h00(0, 0), cplx(-2.0));
  // The ring spectrum is the set of per-K on-site energies.
  const auto w4 = supercell_blocks(strip_spec(4, true));
  Eigen::SelfAdjointEigenSolver<CMatrix> es(w4.h00);
  std::vector<double> expected;
  for (double k : ks) expected.push_back(build_lead_blocks(strip_spec(4, true), k).h00(0, 0).real());
  std::sort(expected.begin(), expected.end());
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(es.eigenvalues()(i), expected[i], 1e-12);
}

TEST(Model, DimerTerminationsDescribeOneMaterial) {
  const auto a = build_lead_blocks(dimer_spec(1.5, 0.5, 0.3, -0.2, Termination::a));
  const auto b = build_lead_blocks(dimer_spec(1.5, 0.5, 0.3, -0.2, Termination::b));
  for (double k : {0.0, 0.7, 2.0, kPi}) {
    auto bands = [&](const HamiltonianBlocks& h) {
      const CMatrix hk = h.h00 + h.h01 * std::exp(kI * k) + h.h10() * std::exp(-kI * k);
      return Eigen::SelfAdjointEigenSolver<CMatrix>(hk).eigenvalues().eval();
    };
    EXPECT_NEAR((bands(a) - bands(b)).cwiseAbs().maxCoeff(), 0.0, 1e-12);
  }
  // The surface site of termination b (index 0 of layer 1) hangs on the t2 bond.
  EXPECT_EQ(b.h00(0, 1), cplx(-0.5));
  EXPECT_EQ(b.h01(1, 0), cplx(-1.5));
}

TEST(Model, RandomPresetsAreHermitian) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> ku(-kPi, kPi);
  for (int i = 0; i < 300; ++i) {
    const auto spec = oracle::random_lattice(rng);
    const auto b = build_lead_blocks(spec, spec.periodic() ? std::optional<double>(ku(rng)) : std::nullopt);
    EXPECT_LE(max_abs(CMatrix(b.h00 - b.h00.adjoint())), 1e-12);
    EXPECT_EQ(b.h01.rows(), b.h00.rows());
  }
}

TEST(Model, RoundTripShippedModels) {
  for (const char* name : {"chain_perfect.json", "chain_impurity.json", "ladder_perfect.json",
                           "ladder_asymmetric.json", "strip_periodic.json",
                           "dimer_surface_state.json", "dimer_ionic_a.json", "dimer_ionic_b.json"}) {
    SCOPED_TRACE(name);
    const auto m = shipped_model(name);
    const auto text = serialize_model(m);
    const auto again = parse_model(text);
    EXPECT_EQ(serialize_model(again), text);
    EXPECT_EQ(model_hash(again), model_hash(m));
    const std::optional<double> k =
        m.lead_left.periodic() ? std::optional<double>(natural_momenta(m.lead_left).back()) : std::nullopt;
    expect_same(build_lead_blocks(m.lead_left, k).h00, build_lead_blocks(again.lead_left, k).h00);
    expect_same(build_lead_blocks(m.lead_right, k).h01, build_lead_blocks(again.lead_right, k).h01);
    expect_same(build_device(m, k).h, build_device(again, k).h);
  }
}

TEST(Model, RoundTripRandomExplicitBlocks) {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 50; ++i) {
    ModelConfig m{oracle::random_lattice(rng), chain_spec(), LayeredDevice{}};
    if (m.lead_left.periodic()) m.lead_left.transverse->periodic = false;
    m.device = DeviceSpec{};
    const auto left = build_lead_blocks(m.lead_left);
    DeviceSpec dev;
    const Index n = left.dim();
    dev.h = oracle::random_hermitian(rng, static_cast<int>(n + 1));
    dev.coupling_left = CMatrix::Zero(n, n + 1);
    dev.coupling_left.leftCols(n) = CMatrix::Identity(n, n);
    dev.coupling_right = CMatrix::Zero(1, n + 1);
    dev.coupling_right(0, n) = 1.0;
    m.device = dev;
    const auto again = parse_model(serialize_model(m));
    expect_same(build_lead_blocks(again.lead_left).h00, left.h00);
    expect_same(build_lead_blocks(again.lead_left).h01, left.h01);
    expect_same(std::get<DeviceSpec>(again.device).h, dev.h);
  }
}

TEST(Model, LayeredDeviceStructure) {
  const auto m = parse_model(R"({
    "lead_left": {"preset": "ladder", "params": {"t": 1, "t_perp": 0.5, "t_diag": 0.2}},
    "lead_right": {"preset": "ladder", "params": {"t": 1, "t_perp": 0.5, "t_diag": 0.2}},
    "device": {"layers": 3, "onsite": [[4, 0.25]]}})");
  const auto d = build_device(m);
  const auto b = build_lead_blocks(m.lead_left);
  ASSERT_EQ(d.size(), 6);
  expect_same(d.h.block(2, 0, 2, 2), b.h01);
  expect_same(d.h.block(0, 2, 2, 2), b.h01.adjoint());
  EXPECT_EQ(d.h(4, 4), cplx(0.25));
  EXPECT_EQ(d.surface_left(), (std::vector<Index>{0, 1}));
  EXPECT_EQ(d.surface_right(), (std::vector<Index>{4, 5}));
}

TEST(Model, DeviceValidation) {
  // Partially overlapping surfaces.
  EXPECT_NE(error_of(R"({"lead_left": {"preset": "ladder"}, "lead_right": {"preset": "chain"},
    "device": {"h": [[0, 1], [1, 0]], "coupling_left": [[1, 0], [0, 1]], "coupling_right": [[1, 0]]}})")
                .find("overlap"),
            std::string::npos);
  // Coupling of the wrong shape.
  EXPECT_NE(error_of(R"({"lead_left": {"preset": "ladder"}, "lead_right": {"preset": "chain"},
    "device": {"h": [[0, 1], [1, 0]], "coupling_left": [[1, 0]], "coupling_right": [[0, 1]]}})")
                .find("coupling_left: expected 2x2"),
            std::string::npos);
  // Explicit device against wide K-resolved leads.
  EXPECT_NE(error_of(R"({"lead_left": {"preset": "square_strip", "transverse": {"width": 2, "periodic": true}},
    "lead_right": {"preset": "square_strip", "transverse": {"width": 2, "periodic": true}},
    "device": {"h": [[0]], "coupling_left": [[1]], "coupling_right": [[1]]}})")
                .find("layers"),
            std::string::npos);
  // Layered device needs equal lead widths.
  EXPECT_FALSE(error_of(R"({"lead_left": {"preset": "ladder"}, "lead_right": {"preset": "chain"},
    "device": {"layers": 2}})").empty());
  // A shared single site is fine.
  EXPECT_NO_THROW(parse_model(kChainModel));
}
