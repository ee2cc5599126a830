#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <queue>
#include <set>

#include "gridmc/error.hpp"
#include "gridmc/gridmodel.hpp"
#include "support.hpp"

namespace fs = std::filesystem;
using namespace gridmc;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "gridmc_grid_test" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

// Four single-phase buses in a chain behind the slack.
void write_chain_manifest(const fs::path& dir, const std::string& y_ll_body, const std::string& areas) {
  write_text(dir / "y_ll.mtx", "%%MatrixMarket matrix coordinate complex general\n" + y_ll_body);
  write_text(dir / "y_l0.mtx",
             "%%MatrixMarket matrix coordinate complex general\n4 1 1\n1 1 -10 10\n");
  write_text(dir / "phases.csv", "bus_id,phase\n2,a\n3,a\n4,a\n5,a\n");
  write_text(dir / "areas.csv", "phase_index,area_id\n" + areas);
  write_text(dir / "manifest.json",
             R"({"y_ll": "y_ll.mtx", "y_l0": "y_l0.mtx", "v0": [[1.0, 0.0]], "phases": "phases.csv",
                 "areas": "areas.csv"})");
}

const char* kChainYll =
    "4 4 10\n"
    "1 1 20 -20\n1 2 -10 10\n2 1 -10 10\n2 2 20 -20\n2 3 -10 10\n"
    "3 2 -10 10\n3 3 20 -20\n3 4 -10 10\n4 3 -10 10\n4 4 10 -10\n";

// Newton on the real and imaginary parts of v conj(Y_LL v + Y_L0 v0) - s with
// a finite-difference Jacobian.
cplx newton_two_bus(const NetworkModel& net, cplx s) {
  auto mismatch = [&](const Eigen::Vector2d& x) {
    const cplx v(x(0), x(1));
    const cplx i = net.y_ll(0, 0) * v + net.y_l0(0, 0) * net.v0(0);
    const cplx f = v * std::conj(i) - s;
    return Eigen::Vector2d(f.real(), f.imag());
  };
  Eigen::Vector2d x(1.0, 0.0);
  for (int it = 0; it < 50; ++it) {
    const Eigen::Vector2d f = mismatch(x);
    if (f.norm() < 1e-15) break;
    Eigen::Matrix2d jac;
    for (int k = 0; k < 2; ++k) {
      Eigen::Vector2d xp = x, xm = x;
      xp(k) += 1e-7;
      xm(k) -= 1e-7;
      jac.col(k) = (mismatch(xp) - mismatch(xm)) / 2e-7;
    }
    x -= jac.partialPivLu().solve(f);
  }
  return {x(0), x(1)};
}

std::vector<std::set<Index>> coupling_graph(const NetworkModel& net) {
  const Index p = net.n_phases();
  std::vector<std::set<Index>> g(static_cast<std::size_t>(p));
  for (Index i = 0; i < p; ++i)
    for (Index j = 0; j < p; ++j)
      if (i != j && net.y_ll(i, j) != cplx(0.0, 0.0)) g[i].insert(j);
  return g;
}

}  // namespace

TEST(LoadNetwork, HandWrittenChain) {
  const auto dir = fresh_dir("chain");
  write_chain_manifest(dir, kChainYll, "0,1\n1,1\n2,2\n3,2\n");
  const auto loaded = load_network(dir / "manifest.json");
  EXPECT_EQ(loaded.network.n_phases(), 4);
  EXPECT_EQ(loaded.network.index.entries[2].bus_id, "4");
  EXPECT_EQ(loaded.partition.n_areas, 2);
  EXPECT_TRUE(loaded.partition.adjacent(0, 1));
  EXPECT_EQ(loaded.network.y_ll(1, 2), cplx(-10.0, 10.0));
}

TEST(LoadNetwork, ZeroAdmittanceIsSingular) {
  const auto dir = fresh_dir("zero");
  write_chain_manifest(dir, "4 4 0\n", "0,1\n1,1\n2,1\n3,1\n");
  try {
    load_network(dir / "manifest.json");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::singular_admittance);
  }
}

TEST(LoadNetwork, AreaFileMissingAPhase) {
  const auto dir = fresh_dir("unassigned");
  write_chain_manifest(dir, kChainYll, "0,1\n1,1\n3,2\n");
  try {
    load_network(dir / "manifest.json");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::unassigned_phase);
  }
}

TEST(LoadNetwork, AreaFileNamesUnknownPhase) {
  const auto dir = fresh_dir("unknown");
  write_chain_manifest(dir, kChainYll, "0,1\n1,1\n2,1\n3,1\n7,2\n");
  try {
    load_network(dir / "manifest.json");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::unknown_phase);
  }
}

TEST(LoadNetwork, SaveLoadRoundTrip) {
  FeederSpec spec = test::small_feeder(9, 2);
  spec.time_steps = 3;
  const Feeder f = generate_radial_feeder(spec);
  const AreaPartition part = partition_contiguous(f.network, 3);
  const auto dir = fresh_dir("roundtrip");
  const auto manifest = save_network(dir, f.network, f.loads, part);
  const auto back = load_network(manifest);
  EXPECT_EQ((back.network.y_ll - f.network.y_ll).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ((back.network.y_l0 - f.network.y_l0).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ((back.loads.s - f.loads.s).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(back.partition.assignment, part.assignment);
  EXPECT_EQ(back.partition.adjacency, part.adjacency);
  EXPECT_EQ(back.network.index.entries, f.network.index.entries);
}

TEST(Generator, TwoBusIsASingleLine) {
  FeederSpec spec;
  spec.n_buses = 2;
  spec.seed = 7;
  const Feeder f = generate_radial_feeder(spec);
  ASSERT_EQ(f.network.y_ll.rows(), 1);
  EXPECT_GT(std::abs(f.network.y_ll(0, 0)), 0.0);
}

TEST(Generator, SameSeedSameFeeder) {
  const Feeder a = generate_radial_feeder(test::small_feeder(20, 9));
  const Feeder b = generate_radial_feeder(test::small_feeder(20, 9));
  EXPECT_EQ((a.network.y_ll - b.network.y_ll).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ((a.loads.s - b.loads.s).cwiseAbs().maxCoeff(), 0.0);
  const Feeder c = generate_radial_feeder(test::small_feeder(20, 10));
  EXPECT_GT((a.network.y_ll - c.network.y_ll).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Generator, RadialTreeHasOneBranchPerBus) {
  for (Seed seed : {1u, 2u, 3u, 4u}) {
    FeederSpec spec;
    spec.seed = seed;
    const Feeder f = generate_radial_feeder(spec);
    const auto& y = f.network.y_ll;
    Index branches = 0;
    for (Index i = 0; i < y.rows(); ++i)
      for (Index j = i + 1; j < y.cols(); ++j)
        if (y(i, j) != cplx(0.0, 0.0)) ++branches;
    for (Index i = 0; i < y.rows(); ++i)
      if (f.network.y_l0(i, 0) != cplx(0.0, 0.0)) ++branches;
    EXPECT_EQ(branches, spec.n_buses - 1);
  }
}

TEST(Generator, ThreePhaseCoupledBlocks) {
  FeederSpec spec = test::small_feeder(6, 4);
  spec.three_phase = true;
  const Feeder f = generate_radial_feeder(spec);
  EXPECT_EQ(f.network.n_phases(), 15);
  EXPECT_EQ(f.network.v0.size(), 3);
  EXPECT_NEAR(std::arg(f.network.v0(1)) * 180.0 / M_PI, -120.0, 1e-12);
  EXPECT_NE(f.network.y_ll(0, 1), cplx(0.0, 0.0));
  const CMatrix v = solve_exact_flow_series(f.network, f.loads);
  EXPECT_TRUE(v.allFinite());
}

TEST(ExactFlow, ZeroInjectionGivesNoLoadVoltage) {
  const Feeder f = generate_radial_feeder(FeederSpec{});
  const CVector w = no_load_voltage(f.network);
  const FlowSolution sol = solve_exact_flow(f.network, CVector::Zero(w.size()));
  EXPECT_EQ((sol.v - w).cwiseAbs().maxCoeff(), 0.0);
}

TEST(ExactFlow, DefaultFeederConverges) {
  FeederSpec spec;
  spec.seed = 1;
  const Feeder f = generate_radial_feeder(spec);
  EXPECT_EQ(f.network.n_phases(), 32);
  const FlowSolution sol = solve_exact_flow(f.network, f.loads.s.row(0).transpose());
  EXPECT_LT(sol.residual, 1e-10);
  // Direct check of the power balance at the returned point.
  const CVector i = f.network.y_ll * sol.v + f.network.y_l0 * f.network.v0;
  const CVector s = sol.v.cwiseProduct(i.conjugate());
  EXPECT_LT((s - f.loads.s.row(0).transpose()).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(ExactFlow, TwoBusMatchesNewton) {
  const NetworkModel net = test::two_bus(cplx(0.02, 0.04));
  for (cplx s : {cplx(-0.3, -0.1), cplx(-1.0, -0.5), cplx(0.4, 0.2)}) {
    const FlowSolution sol = solve_exact_flow(net, CVector::Constant(1, s));
    EXPECT_LT(std::abs(sol.v(0) - newton_two_bus(net, s)), 1e-8) << s;
  }
}

TEST(ExactFlow, HugeLoadDiverges) {
  const NetworkModel net = test::two_bus(cplx(0.02, 0.04));
  try {
    solve_exact_flow(net, CVector::Constant(1, cplx(-100.0, -50.0)));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::diverged_flow);
  }
}

TEST(Partition, ContiguousAreasAreConnectedAndBalanced) {
  for (Seed seed : {1u, 3u, 8u}) {
    FeederSpec spec;
    spec.seed = seed;
    const Feeder f = generate_radial_feeder(spec);
    for (int n_areas : {2, 3, 4, 5}) {
      const AreaPartition part = partition_contiguous(f.network, n_areas);
      ASSERT_NO_THROW(part.validate(f.network.n_phases()));
      const auto members = part.members();
      const auto g = coupling_graph(f.network);
      for (int a = 0; a < n_areas; ++a) {
        // Slack-fed buses are linked through the substation, so the first area
        // is allowed to reach its members through them.
        std::set<Index> seen{members[a].front()};
        std::queue<Index> todo;
        todo.push(members[a].front());
        while (!todo.empty()) {
          const Index i = todo.front();
          todo.pop();
          std::vector<Index> next(g[i].begin(), g[i].end());
          if (f.network.y_l0(i, 0) != cplx(0.0, 0.0)) {
            for (Index k = 0; k < f.network.n_phases(); ++k)
              if (f.network.y_l0(k, 0) != cplx(0.0, 0.0)) next.push_back(k);
          }
          for (Index k : next)
            if (part.assignment[k] == a && seen.insert(k).second) todo.push(k);
        }
        EXPECT_EQ(seen.size(), members[a].size()) << "seed " << seed << " area " << a;
      }
      for (const auto& [a, b] : part.adjacency) EXPECT_LT(a, b);
    }
  }
}

TEST(Partition, SingleAreaAndErrors) {
  const AreaPartition one = AreaPartition::single(4);
  EXPECT_EQ(one.n_areas, 1);
  EXPECT_TRUE(one.adjacency.empty());
  const Feeder f = generate_radial_feeder(test::small_feeder(4, 1));
  EXPECT_THROW(partition_contiguous(f.network, 5), Error);
  AreaPartition bad = one;
  bad.assignment.pop_back();
  EXPECT_THROW(bad.validate(4), Error);
}
