#include <gtest/gtest.h>

#include <random>

#include "gridmc/error.hpp"
#include "gridmc/linflow.hpp"
#include "gridmc/simnet.hpp"
#include "support.hpp"

using namespace gridmc;

namespace {

std::vector<std::vector<int>> ring(int n) {
  std::vector<std::vector<int>> nb(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) {
    nb[k].push_back((k + 1) % n);
    nb[k].push_back((k + n - 1) % n);
  }
  return nb;
}

// Each node mixes what it received with a node-specific draw and forwards the
// result around the ring; the outputs depend on every delivery.
std::vector<double> ring_workload(int n, ExecutionPolicy policy, int rounds) {
  MessageBus bus(n, ring(n), policy);
  std::vector<double> state(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) state[k] = 1.0 + k;
  for (int r = 0; r < rounds; ++r) {
    auto out = bus.run_round(r, [&](int node, const Inbox& in, Outbox& box) {
      double acc = state[node];
      for (const auto& m : in.messages()) acc = 0.5 * acc + 0.25 * m.payload[0] * (m.from + 1);
      for (int j : bus.neighbors(node)) box.send(j, MessageTag::factor, {acc + 0.01 * j});
      return acc;
    });
    for (int k = 0; k < n; ++k) state[k] = out[k];
  }
  return state;
}

}  // namespace

TEST(MessageBus, SingleNodeLeavesLedgerEmpty) {
  MessageBus bus(1, {{}});
  const auto out = bus.run_round(0, [](int node, const Inbox& in, Outbox&) { return node + 41 + in.empty(); });
  EXPECT_EQ(out.at(0), 42);
  EXPECT_EQ(bus.ledger().total(), 0);
}

TEST(MessageBus, EchoDeliversPayloadsExactly) {
  MessageBus bus(2, {{1}, {0}});
  const std::vector<double> a{1.5, -2.0, 3.25};
  const std::vector<double> b{7.0};
  bus.run_round(0, [&](int node, const Inbox&, Outbox& out) { out.send(1 - node, MessageTag::q_term, node ? b : a); });
  std::vector<std::vector<double>> got(2);
  bus.run_round(1, [&](int node, const Inbox& in, Outbox&) { got[node] = in.get(1 - node, MessageTag::q_term); });
  EXPECT_EQ(got[0], b);
  EXPECT_EQ(got[1], a);
  EXPECT_EQ(bus.ledger().count(0, 1, 0), 4);
  EXPECT_EQ(bus.ledger().count(1, 0, 0, MessageTag::q_term), 4);
  EXPECT_EQ(bus.ledger().count(0, 1, 1), 0);
}

TEST(MessageBus, NonNeighborSendIsAProtocolViolation) {
  MessageBus bus(3, {{1}, {0, 2}, {1}});
  try {
    bus.run_round(0, [](int node, const Inbox&, Outbox& out) {
      if (node == 0) out.send(2, MessageTag::factor, {1.0});
    });
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::protocol_violation);
  }
}

TEST(MessageBus, MissingMessageIsAProtocolViolation) {
  MessageBus bus(2, {{1}, {0}});
  bus.run_round(0, [](int, const Inbox&, Outbox&) {});
  EXPECT_THROW(bus.run_round(1, [](int, const Inbox& in, Outbox&) { in.get(0, MessageTag::factor); }), Error);
}

TEST(MessageBus, RejectsAsymmetricNeighbors) {
  EXPECT_THROW(MessageBus(2, {{1}, {}}), Error);
  EXPECT_THROW(MessageBus(2, {{0}, {}}), Error);
}

TEST(MessageBus, ScheduleDoesNotChangeOutputs) {
  const auto reference = ring_workload(5, ExecutionPolicy::sequential(), 12);
  for (Seed s = 1; s <= 10; ++s) {
    EXPECT_EQ(ring_workload(5, ExecutionPolicy::shuffled(s * 7919), 12), reference) << "schedule " << s;
  }
  EXPECT_EQ(ring_workload(5, ExecutionPolicy::threaded(), 12), reference);
}

TEST(CommLedger, PairKeysAreSymmetricAndCsvIsOneBased) {
  CommLedger ledger;
  ledger.record(2, 0, 0, MessageTag::factor, 10);
  ledger.record(0, 2, 0, MessageTag::factor, 10);
  ledger.record(0, 2, 1, MessageTag::flow_term, 3);
  EXPECT_EQ(ledger.count(0, 2, 0), 20);
  EXPECT_EQ(ledger.count(2, 0, 1), 3);
  EXPECT_EQ(ledger.total(), 23);
  EXPECT_TRUE(ledger.has_pair(2, 0));
  EXPECT_FALSE(ledger.has_pair(0, 1));
  EXPECT_THROW(ledger.record(0, 1, 0, MessageTag::factor, -1), Error);
}

TEST(CommCount, NoExchangeInAnIterationCountsZero) {
  CommLedger ledger;
  ledger.record(0, 1, 0, MessageTag::factor, 5);
  const CommShape shape{25, 5, 5, 40, 60, true};
  EXPECT_EQ(comm_count(ledger, 0, 1, 3, shape).measured, 0);
  EXPECT_THROW(comm_count(ledger, 0, 2, 0, shape), Error);
}

TEST(CommCount, PaperFormulaExample) {
  CommLedger ledger;
  ledger.record(0, 1, 0, MessageTag::factor, 1);
  const CommShape shape{25, 5, 5, 40, 60, true};
  const auto c = comm_count(ledger, 0, 1, 0, shape);
  EXPECT_EQ(c.paper_formula, 225);
  EXPECT_EQ(c.full_exchange, 2500);
  // U both ways, V both ways, two power rows per step for every column both ways.
  EXPECT_EQ(c.protocol_formula, 2 * 25 * 5 + 5 * 100 + 2 * 5 * 100);
  EXPECT_EQ(protocol_count({25, 5, 5, 40, 60, false}), 250);
}

TEST(CommCount, LinearFlowRoundSendsThreeRealsPerStepAndTerm) {
  FeederSpec spec = test::small_feeder(16, 4);
  const Feeder f = generate_radial_feeder(spec);
  const auto model = build_linear_model(f.network, 2);
  const auto part = partition_contiguous(f.network, 3);
  const auto tm = truncate_model(model, part);
  std::mt19937_64 rng(3);
  const RMatrix h = 0.01 * test::random_matrix(2 * model.n_phases(), 2, rng);
  MessageBus bus(3, part.neighbors());
  decentralized_flow(tm, h, bus);
  const auto members = part.members();
  for (const auto& [a, b] : part.adjacency) {
    // Terms for every phase of the receiving area: phasor (re, im) and magnitude.
    const Index expected = 2 * 3 * static_cast<Index>(members[a].size() + members[b].size());
    EXPECT_EQ(bus.ledger().count(a, b, 0), expected) << a << "-" << b;
  }
}
