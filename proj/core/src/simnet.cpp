#include "gridmc/simnet.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <thread>

#include "gridmc/error.hpp"
#include "gridmc/io.hpp"

namespace gridmc {

const char* to_string(MessageTag tag) noexcept {
  switch (tag) {
    case MessageTag::factor: return "factor";
    case MessageTag::flow_term: return "flow-term";
    case MessageTag::q_term: return "q-term";
  }
  return "unknown";
}

void Outbox::send(int to, MessageTag tag, std::vector<double> payload) {
  messages_.push_back(Message{self_, to, tag, std::move(payload)});
}

Inbox::Inbox(std::vector<Message> messages) : messages_(std::move(messages)) {
  std::stable_sort(messages_.begin(), messages_.end(), [](const Message& x, const Message& y) {
    return std::make_pair(x.from, static_cast<int>(x.tag)) < std::make_pair(y.from, static_cast<int>(y.tag));
  });
}

const std::vector<double>* Inbox::find(int from, MessageTag tag) const {
  for (const auto& m : messages_)
    if (m.from == from && m.tag == tag) return &m.payload;
  return nullptr;
}

const std::vector<double>& Inbox::get(int from, MessageTag tag) const {
  const auto* p = find(from, tag);
  if (!p) {
    throw Error(ErrorCode::protocol_violation, std::string("expected ") + to_string(tag) +
                                                   " message from node " + std::to_string(from));
  }
  return *p;
}

void CommLedger::record(int from, int to, Index iteration, MessageTag tag, Index count) {
  if (count < 0) throw Error(ErrorCode::invalid_argument, "negative message size");
  const int a = std::min(from, to);
  const int b = std::max(from, to);
  counts_[Key{a, b, iteration, static_cast<int>(tag)}] += count;
}

Index CommLedger::count(int a, int b, Index iteration) const {
  Index total = 0;
  for (int t = 0; t < 3; ++t) total += count(a, b, iteration, static_cast<MessageTag>(t));
  return total;
}

Index CommLedger::count(int a, int b, Index iteration, MessageTag tag) const {
  if (a > b) std::swap(a, b);
  auto it = counts_.find(Key{a, b, iteration, static_cast<int>(tag)});
  return it == counts_.end() ? 0 : it->second;
}

Index CommLedger::total() const {
  Index total = 0;
  for (const auto& [k, v] : counts_) total += v;
  return total;
}

bool CommLedger::has_pair(int a, int b) const {
  if (a > b) std::swap(a, b);
  for (const auto& [k, v] : counts_)
    if (std::get<0>(k) == a && std::get<1>(k) == b) return true;
  return false;
}

std::vector<CommRecord> CommLedger::records() const {
  std::vector<CommRecord> out;
  out.reserve(counts_.size());
  for (const auto& [k, v] : counts_) {
    out.push_back({std::get<0>(k), std::get<1>(k), std::get<2>(k), static_cast<MessageTag>(std::get<3>(k)), v});
  }
  return out;
}

void CommLedger::write_csv(const std::filesystem::path& path) const {
  std::vector<io::CsvRow> rows;
  for (const auto& r : records()) {
    rows.push_back({std::to_string(r.a + 1) + "-" + std::to_string(r.b + 1), std::to_string(r.iteration),
                    to_string(r.tag), std::to_string(r.count)});
  }
  io::write_csv(path, {"pair", "iteration", "tag", "count"}, rows);
}

MessageBus::MessageBus(int n_nodes, std::vector<std::vector<int>> neighbors, ExecutionPolicy policy)
    : n_nodes_(n_nodes), neighbors_(std::move(neighbors)), policy_(policy),
      inboxes_(static_cast<std::size_t>(n_nodes)) {
  if (n_nodes < 1) throw Error(ErrorCode::invalid_argument, "message bus needs at least one node");
  if (static_cast<int>(neighbors_.size()) != n_nodes) {
    throw Error(ErrorCode::dimension_mismatch, "neighbor table size differs from node count");
  }
  for (int n = 0; n < n_nodes; ++n) {
    auto& nb = neighbors_[n];
    std::sort(nb.begin(), nb.end());
    for (int k : nb) {
      if (k < 0 || k >= n_nodes || k == n) {
        throw Error(ErrorCode::invalid_argument, "invalid neighbor " + std::to_string(k) + " of node " +
                                                     std::to_string(n));
      }
    }
  }
  for (int n = 0; n < n_nodes; ++n) {
    for (int k : neighbors_[n]) {
      if (!std::binary_search(neighbors_[k].begin(), neighbors_[k].end(), n)) {
        throw Error(ErrorCode::invalid_argument, "neighbor relation is not symmetric");
      }
    }
  }
}

void MessageBus::execute(const std::function<void(int)>& body) {
  std::vector<int> order(static_cast<std::size_t>(n_nodes_));
  std::iota(order.begin(), order.end(), 0);
  switch (policy_.kind) {
    case ExecutionPolicy::Kind::sequential:
      for (int n : order) body(n);
      break;
    case ExecutionPolicy::Kind::shuffled: {
      std::mt19937_64 rng(policy_.seed + static_cast<Seed>(rounds_));
      std::shuffle(order.begin(), order.end(), rng);
      for (int n : order) body(n);
      break;
    }
    case ExecutionPolicy::Kind::threaded: {
      std::vector<std::exception_ptr> errors(order.size());
      std::vector<std::thread> workers;
      workers.reserve(order.size());
      for (int n : order) {
        workers.emplace_back([&, n] {
          try {
            body(n);
          } catch (...) {
            errors[n] = std::current_exception();
          }
        });
      }
      for (auto& w : workers) w.join();
      for (auto& e : errors)
        if (e) std::rethrow_exception(e);
      break;
    }
  }
  ++rounds_;
}

void MessageBus::barrier(Index iteration, std::vector<Outbox>& outboxes) {
  std::vector<std::vector<Message>> delivered(static_cast<std::size_t>(n_nodes_));
  for (auto& box : outboxes) {
    for (auto& msg : box.messages()) {
      const auto& nb = neighbors_[msg.from];
      if (!std::binary_search(nb.begin(), nb.end(), msg.to)) {
        throw Error(ErrorCode::protocol_violation, "node " + std::to_string(msg.from) +
                                                       " addressed non-neighbor " + std::to_string(msg.to));
      }
      ledger_.record(msg.from, msg.to, iteration, msg.tag, static_cast<Index>(msg.payload.size()));
      delivered[msg.to].push_back(std::move(msg));
    }
  }
  for (int n = 0; n < n_nodes_; ++n) inboxes_[n] = Inbox(std::move(delivered[n]));
}

Index protocol_count(const CommShape& s) {
  Index count = 2 * s.m * s.r;
  if (s.flow_terms) count += (s.r + 2 * s.time_steps) * (s.n_l + s.n_j);
  return count;
}

CommComparison comm_count(const CommLedger& ledger, int a, int b, Index iteration, const CommShape& shape) {
  if (!ledger.has_pair(a, b)) {
    throw Error(ErrorCode::invalid_argument, "pair " + std::to_string(a + 1) + "-" + std::to_string(b + 1) +
                                                 " was not simulated");
  }
  CommComparison c;
  c.measured = ledger.count(a, b, iteration);
  c.paper_formula = shape.n_l + shape.n_j + shape.m * shape.r;
  c.protocol_formula = protocol_count(shape);
  c.full_exchange = (shape.n_l + shape.n_j) * shape.m;
  return c;
}

}  // namespace gridmc
