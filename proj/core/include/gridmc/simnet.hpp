#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <type_traits>
#include <utility>
#include <vector>

#include "gridmc/types.hpp"

namespace gridmc {

enum class MessageTag { factor = 0, flow_term = 1, q_term = 2 };

const char* to_string(MessageTag tag) noexcept;

struct Message {
  int from = 0;
  int to = 0;
  MessageTag tag = MessageTag::factor;
  std::vector<double> payload;
};

// Messages a node emits during one round.
class Outbox {
 public:
  explicit Outbox(int self) : self_(self) {}

  void send(int to, MessageTag tag, std::vector<double> payload);
  int self() const { return self_; }
  const std::vector<Message>& messages() const { return messages_; }
  std::vector<Message>& messages() { return messages_; }

 private:
  int self_;
  std::vector<Message> messages_;
};

// Messages delivered to a node at the last barrier, ordered by (from, tag).
class Inbox {
 public:
  Inbox() = default;
  explicit Inbox(std::vector<Message> messages);

  const std::vector<double>* find(int from, MessageTag tag) const;
  const std::vector<double>& get(int from, MessageTag tag) const;  // throws if absent
  const std::vector<Message>& messages() const { return messages_; }
  bool empty() const { return messages_.empty(); }

 private:
  std::vector<Message> messages_;
};

struct CommRecord {
  int a = 0;  // a < b
  int b = 0;
  Index iteration = 0;
  MessageTag tag = MessageTag::factor;
  Index count = 0;  // real numbers, both directions
};

class CommLedger {
 public:
  void record(int from, int to, Index iteration, MessageTag tag, Index count);

  Index count(int a, int b, Index iteration) const;
  Index count(int a, int b, Index iteration, MessageTag tag) const;
  Index total() const;
  bool has_pair(int a, int b) const;
  std::vector<CommRecord> records() const;  // sorted by pair, iteration, tag
  void write_csv(const std::filesystem::path& path) const;
  void clear() { counts_.clear(); }

 private:
  using Key = std::tuple<int, int, Index, int>;
  std::map<Key, Index> counts_;
};

struct ExecutionPolicy {
  enum class Kind { sequential, shuffled, threaded };
  Kind kind = Kind::sequential;
  Seed seed = 0;

  static ExecutionPolicy sequential() { return {Kind::sequential, 0}; }
  static ExecutionPolicy shuffled(Seed seed) { return {Kind::shuffled, seed}; }
  static ExecutionPolicy threaded() { return {Kind::threaded, 0}; }
};

// Bulk-synchronous in-process bus. Each round every node runs once against the
// inbox delivered at the previous barrier; the outputs of the round are
// validated against the adjacency, logged, and delivered at the next barrier.
class MessageBus {
 public:
  MessageBus(int n_nodes, std::vector<std::vector<int>> neighbors,
             ExecutionPolicy policy = ExecutionPolicy::sequential());

  int size() const { return n_nodes_; }
  const std::vector<int>& neighbors(int node) const { return neighbors_[node]; }
  const CommLedger& ledger() const { return ledger_; }
  CommLedger& ledger() { return ledger_; }
  const ExecutionPolicy& policy() const { return policy_; }

  // step(node, inbox, outbox) -> R. Returns the per-node results in node order.
  template <class Step>
  auto run_round(Index iteration, Step&& step) {
    using R = std::invoke_result_t<Step&, int, const Inbox&, Outbox&>;
    std::vector<Outbox> outboxes;
    outboxes.reserve(static_cast<std::size_t>(n_nodes_));
    for (int n = 0; n < n_nodes_; ++n) outboxes.emplace_back(n);
    if constexpr (std::is_void_v<R>) {
      execute([&](int n) { step(n, inboxes_[n], outboxes[n]); });
      barrier(iteration, outboxes);
    } else {
      std::vector<std::optional<R>> slots(static_cast<std::size_t>(n_nodes_));
      execute([&](int n) { slots[n].emplace(step(n, inboxes_[n], outboxes[n])); });
      barrier(iteration, outboxes);
      std::vector<R> results;
      results.reserve(slots.size());
      for (auto& s : slots) results.push_back(std::move(*s));
      return results;
    }
  }

 private:
  void execute(const std::function<void(int)>& body);
  void barrier(Index iteration, std::vector<Outbox>& outboxes);

  int n_nodes_;
  std::vector<std::vector<int>> neighbors_;
  ExecutionPolicy policy_;
  std::vector<Inbox> inboxes_;
  CommLedger ledger_;
  Index rounds_ = 0;
};

struct CommComparison {
  Index measured = 0;         // real numbers on the pair in the iteration
  Index paper_formula = 0;    // n_l + n_j + m r
  Index protocol_formula = 0; // exact count of the implemented exchange
  Index full_exchange = 0;    // (n_l + n_j) m
};

struct CommShape {
  Index m = 0;        // rows of the data matrix
  Index r = 0;        // factor rank
  Index time_steps = 0;
  Index n_l = 0;
  Index n_j = 0;
  bool flow_terms = true;  // false when no load-flow coupling is exchanged
};

// Per-iteration real count of the decentralized solver's exchange on one pair:
// factor U both ways (2 m r), coefficient block V and the q-term both ways.
Index protocol_count(const CommShape& shape);

CommComparison comm_count(const CommLedger& ledger, int a, int b, Index iteration,
                          const CommShape& shape);

}  // namespace gridmc
