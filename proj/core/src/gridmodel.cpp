#include "gridmc/gridmodel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <deque>
#include <limits>
#include <map>
#include <numeric>
#include <numbers>
#include <queue>
#include <random>
#include <set>

#include <nlohmann/json.hpp>

#include "gridmc/error.hpp"
#include "gridmc/io.hpp"

namespace gridmc {

namespace fs = std::filesystem;
using nlohmann::json;

void PhaseIndex::validate() const {
  if (entries.empty()) throw Error(ErrorCode::invalid_argument, "phase index is empty");
  if (slack_phases != 1 && slack_phases != 3) {
    throw Error(ErrorCode::invalid_argument, "slack phase count must be 1 or 3");
  }
  std::set<std::pair<std::string, char>> seen;
  for (const auto& e : entries) {
    if (e.phase != 'a' && e.phase != 'b' && e.phase != 'c') {
      throw Error(ErrorCode::invalid_argument, "phase label must be a, b or c (bus " + e.bus_id + ")");
    }
    if (!seen.emplace(e.bus_id, e.phase).second) {
      throw Error(ErrorCode::invalid_argument, "duplicate phase " + e.bus_id + "." + e.phase);
    }
  }
}

void NetworkModel::validate() const {
  const Index p = y_ll.rows();
  if (p == 0 || y_ll.cols() != p) {
    throw Error(ErrorCode::dimension_mismatch, "Y_LL must be square and non-empty");
  }
  if (y_l0.rows() != p || y_l0.cols() != v0.size()) {
    throw Error(ErrorCode::dimension_mismatch, "Y_L0 must be |P| x n_slack matching v0");
  }
  if (index.size() != p) {
    throw Error(ErrorCode::dimension_mismatch, "phase index has " + std::to_string(index.size()) +
                                                   " entries, Y_LL has " + std::to_string(p));
  }
  index.validate();
  if (v0.size() != index.slack_phases) {
    throw Error(ErrorCode::dimension_mismatch, "v0 length does not match slack phase count");
  }
  Eigen::FullPivLU<CMatrix> lu(y_ll);
  if (!lu.isInvertible()) throw Error(ErrorCode::singular_admittance, "Y_LL is singular");
}

AreaPartition AreaPartition::single(Index n_phases) {
  AreaPartition p;
  p.assignment.assign(static_cast<std::size_t>(n_phases), 0);
  p.n_areas = 1;
  return p;
}

bool AreaPartition::adjacent(int a, int b) const {
  if (a > b) std::swap(a, b);
  return std::find(adjacency.begin(), adjacency.end(), std::make_pair(a, b)) != adjacency.end();
}

std::vector<std::vector<int>> AreaPartition::neighbors() const {
  std::vector<std::vector<int>> out(static_cast<std::size_t>(n_areas));
  for (auto [a, b] : adjacency) {
    out[a].push_back(b);
    out[b].push_back(a);
  }
  for (auto& n : out) {
    std::sort(n.begin(), n.end());
    n.erase(std::unique(n.begin(), n.end()), n.end());
  }
  return out;
}

std::vector<std::vector<Index>> AreaPartition::members() const {
  std::vector<std::vector<Index>> out(static_cast<std::size_t>(n_areas));
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    out[assignment[i]].push_back(static_cast<Index>(i));
  }
  return out;
}

void AreaPartition::validate(Index n_phases) const {
  if (n_areas < 1) throw Error(ErrorCode::invalid_argument, "partition needs at least one area");
  if (static_cast<Index>(assignment.size()) != n_phases) {
    throw Error(ErrorCode::unassigned_phase, "partition covers " + std::to_string(assignment.size()) +
                                                 " of " + std::to_string(n_phases) + " phases");
  }
  std::vector<int> count(static_cast<std::size_t>(n_areas), 0);
  for (int a : assignment) {
    if (a < 0 || a >= n_areas) throw Error(ErrorCode::invalid_argument, "area id out of range");
    ++count[a];
  }
  for (int a = 0; a < n_areas; ++a) {
    if (count[a] == 0) throw Error(ErrorCode::invalid_argument, "area " + std::to_string(a + 1) + " is empty");
  }
  for (auto [a, b] : adjacency) {
    if (a == b) throw Error(ErrorCode::invalid_argument, "adjacency contains a self pair");
    if (a < 0 || b < 0 || a >= n_areas || b >= n_areas || a > b) {
      throw Error(ErrorCode::invalid_argument, "adjacency pair out of range");
    }
  }
}

namespace {

fs::path resolve(const fs::path& base, const std::string& rel) {
  fs::path p(rel);
  return p.is_absolute() ? p : base / p;
}

const json& field(const json& j, const char* name, const fs::path& where) {
  if (!j.contains(name)) {
    throw Error(ErrorCode::parse_error, where.string() + ": manifest lacks field '" + name + "'");
  }
  return j.at(name);
}

std::vector<std::pair<int, int>> normalized_pairs(std::vector<std::pair<int, int>> pairs) {
  for (auto& [a, b] : pairs)
    if (a > b) std::swap(a, b);
  std::sort(pairs.begin(), pairs.end());
  pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());
  return pairs;
}

std::vector<std::pair<int, int>> coupling_adjacency(const CMatrix& y_ll, const std::vector<int>& assign) {
  std::vector<std::pair<int, int>> pairs;
  for (Index j = 0; j < y_ll.cols(); ++j)
    for (Index i = 0; i < y_ll.rows(); ++i)
      if (y_ll(i, j) != cplx(0.0, 0.0) && assign[i] != assign[j]) pairs.emplace_back(assign[i], assign[j]);
  return normalized_pairs(std::move(pairs));
}

}  // namespace

LoadedNetwork load_network(const fs::path& manifest_path) {
  io::require_file(manifest_path);
  const fs::path base = manifest_path.parent_path();
  json manifest;
  try {
    std::ifstream in(manifest_path);
    manifest = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::parse_error, manifest_path.string() + ": " + e.what());
  }

  LoadedNetwork out;
  NetworkModel& net = out.network;
  try {
    net.y_ll = io::read_matrix_market(resolve(base, field(manifest, "y_ll", manifest_path).get<std::string>()));
    net.y_l0 = io::read_matrix_market(resolve(base, field(manifest, "y_l0", manifest_path).get<std::string>()));
    const auto& v0 = field(manifest, "v0", manifest_path);
    net.v0.resize(static_cast<Index>(v0.size()));
    for (std::size_t k = 0; k < v0.size(); ++k) {
      net.v0(static_cast<Index>(k)) = cplx(v0[k].at(0).get<double>(), v0[k].at(1).get<double>());
    }
    net.index.slack_phases = static_cast<int>(net.v0.size());

    const auto phase_path = resolve(base, field(manifest, "phases", manifest_path).get<std::string>());
    for (const auto& row : io::read_csv(phase_path, true)) {
      if (row.size() < 2 || row[1].size() != 1) {
        throw Error(ErrorCode::parse_error, phase_path.string() + ": expected bus_id,phase rows");
      }
      net.index.entries.push_back({row[0], row[1][0]});
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::parse_error, manifest_path.string() + ": " + e.what());
  }
  net.validate();
  const Index p = net.n_phases();

  // Areas: phase_index,area_id (both as written; phase index 0-based, area 1-based).
  AreaPartition& part = out.partition;
  if (manifest.contains("areas")) {
    const auto area_path = resolve(base, manifest.at("areas").get<std::string>());
    std::vector<int> assign(static_cast<std::size_t>(p), -1);
    int n_areas = 0;
    for (const auto& row : io::read_csv(area_path, true)) {
      if (row.size() < 2) throw Error(ErrorCode::parse_error, area_path.string() + ": expected phase_index,area_id");
      const long long idx = io::parse_integer(row[0], area_path.string());
      const long long area = io::parse_integer(row[1], area_path.string());
      if (idx < 0 || idx >= p) {
        throw Error(ErrorCode::unknown_phase, area_path.string() + ": phase " + std::to_string(idx) +
                                                  " is not in the phase index");
      }
      if (area < 1) throw Error(ErrorCode::invalid_argument, area_path.string() + ": area ids start at 1");
      if (assign[idx] != -1) {
        throw Error(ErrorCode::invalid_argument, area_path.string() + ": phase " + std::to_string(idx) +
                                                     " assigned twice");
      }
      assign[idx] = static_cast<int>(area - 1);
      n_areas = std::max(n_areas, static_cast<int>(area));
    }
    for (Index i = 0; i < p; ++i) {
      if (assign[i] == -1) {
        throw Error(ErrorCode::unassigned_phase, area_path.string() + ": phase " + std::to_string(i) +
                                                     " has no area");
      }
    }
    part.assignment = std::move(assign);
    part.n_areas = n_areas;
    if (manifest.contains("adjacency")) {
      std::vector<std::pair<int, int>> pairs;
      for (const auto& pr : manifest.at("adjacency")) {
        pairs.emplace_back(pr.at(0).get<int>() - 1, pr.at(1).get<int>() - 1);
      }
      part.adjacency = normalized_pairs(std::move(pairs));
    } else {
      part.adjacency = coupling_adjacency(net.y_ll, part.assignment);
    }
  } else {
    part = AreaPartition::single(p);
  }
  part.validate(p);

  if (manifest.contains("loads")) {
    const auto load_path = resolve(base, manifest.at("loads").get<std::string>());
    const auto rows = io::read_csv(load_path, true);
    out.loads.s.resize(static_cast<Index>(rows.size()), p);
    for (std::size_t t = 0; t < rows.size(); ++t) {
      if (static_cast<Index>(rows[t].size()) != 2 * p) {
        throw Error(ErrorCode::dimension_mismatch, load_path.string() + ": row " + std::to_string(t) +
                                                       " has " + std::to_string(rows[t].size()) +
                                                       " columns, expected " + std::to_string(2 * p));
      }
      for (Index i = 0; i < p; ++i) {
        out.loads.s(static_cast<Index>(t), i) =
            cplx(io::parse_double(rows[t][2 * i], load_path.string()),
                 io::parse_double(rows[t][2 * i + 1], load_path.string()));
      }
    }
  } else {
    out.loads.s = CMatrix::Zero(1, p);
  }
  return out;
}

fs::path save_network(const fs::path& dir, const NetworkModel& net, const LoadScenario& loads,
                      const AreaPartition& partition) {
  fs::create_directories(dir);
  io::write_matrix_market(dir / "y_ll.mtx", net.y_ll);
  io::write_matrix_market(dir / "y_l0.mtx", net.y_l0);

  std::vector<io::CsvRow> phase_rows;
  for (const auto& e : net.index.entries) phase_rows.push_back({e.bus_id, std::string(1, e.phase)});
  io::write_csv(dir / "phases.csv", {"bus_id", "phase"}, phase_rows);

  std::vector<io::CsvRow> area_rows;
  for (std::size_t i = 0; i < partition.assignment.size(); ++i) {
    area_rows.push_back({std::to_string(i), std::to_string(partition.assignment[i] + 1)});
  }
  io::write_csv(dir / "areas.csv", {"phase_index", "area_id"}, area_rows);

  io::CsvRow header;
  for (Index i = 0; i < net.n_phases(); ++i) {
    header.push_back("re_" + std::to_string(i));
    header.push_back("im_" + std::to_string(i));
  }
  std::vector<io::CsvRow> load_rows;
  for (Index t = 0; t < loads.s.rows(); ++t) {
    io::CsvRow row;
    for (Index i = 0; i < loads.s.cols(); ++i) {
      row.push_back(io::format_double(loads.s(t, i).real()));
      row.push_back(io::format_double(loads.s(t, i).imag()));
    }
    load_rows.push_back(std::move(row));
  }
  io::write_csv(dir / "loads.csv", header, load_rows);

  json manifest;
  manifest["y_ll"] = "y_ll.mtx";
  manifest["y_l0"] = "y_l0.mtx";
  manifest["phases"] = "phases.csv";
  manifest["areas"] = "areas.csv";
  manifest["loads"] = "loads.csv";
  manifest["v0"] = json::array();
  for (Index k = 0; k < net.v0.size(); ++k) manifest["v0"].push_back({net.v0(k).real(), net.v0(k).imag()});
  manifest["adjacency"] = json::array();
  for (auto [a, b] : partition.adjacency) manifest["adjacency"].push_back({a + 1, b + 1});

  const fs::path path = dir / "manifest.json";
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::missing_file, "cannot write " + path.string());
  out << manifest.dump(2) << '\n';
  return path;
}

namespace {

cplx uniform_complex(std::mt19937_64& rng, cplx lo, cplx hi) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double a = u(rng);
  const double b = u(rng);
  return {lo.real() + a * (hi.real() - lo.real()), lo.imag() + b * (hi.imag() - lo.imag())};
}

}  // namespace

LoadScenario generate_loads(const NetworkModel& net, const FeederSpec& spec) {
  if (spec.time_steps < 1) throw Error(ErrorCode::invalid_argument, "time_steps must be >= 1");
  // Separate stream from the topology so the same seed gives the same base loads
  // regardless of time_steps.
  std::mt19937_64 rng(spec.seed ^ 0x9e3779b97f4a7c15ULL);
  const Index p = net.n_phases();
  CVector base(p);
  for (Index i = 0; i < p; ++i) base(i) = uniform_complex(rng, spec.load_min, spec.load_max);
  std::normal_distribution<double> noise(0.0, 1.0);
  LoadScenario loads;
  loads.s.resize(spec.time_steps, p);
  for (Index t = 0; t < spec.time_steps; ++t) {
    const double trend = 1.0 + spec.ramp * static_cast<double>(t);
    for (Index i = 0; i < p; ++i) {
      loads.s(t, i) = -base(i) * trend * (1.0 + spec.process_noise * noise(rng));
    }
  }
  return loads;
}

Feeder generate_radial_feeder(const FeederSpec& spec) {
  if (spec.n_buses < 2) throw Error(ErrorCode::invalid_argument, "n_buses must be >= 2");
  if (!(spec.branching > 0.0 && spec.branching <= 1.0)) {
    throw Error(ErrorCode::invalid_argument, "branching must lie in (0, 1]");
  }
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);

  Feeder feeder;
  feeder.parent.assign(static_cast<std::size_t>(spec.n_buses), -1);
  std::vector<cplx> z(static_cast<std::size_t>(spec.n_buses), cplx{});
  for (int k = 1; k < spec.n_buses; ++k) {
    if (k > 1 && u(rng) < spec.branching) {
      std::uniform_int_distribution<int> pick(0, k - 2);
      feeder.parent[k] = pick(rng);
    } else {
      feeder.parent[k] = k - 1;
    }
    z[k] = uniform_complex(rng, spec.z_min, spec.z_max);
  }

  const int nph = spec.three_phase ? 3 : 1;
  const Index p = static_cast<Index>(spec.n_buses - 1) * nph;
  NetworkModel& net = feeder.network;
  net.y_ll = CMatrix::Zero(p, p);
  net.y_l0 = CMatrix::Zero(p, nph);
  net.v0.resize(nph);
  net.index.slack_phases = nph;
  if (nph == 1) {
    net.v0(0) = 1.0;
  } else {
    const double shift = 2.0 * std::numbers::pi / 3.0;
    for (int ph = 0; ph < 3; ++ph) net.v0(ph) = std::polar(1.0, -shift * ph);
  }
  for (int k = 1; k < spec.n_buses; ++k) {
    for (int ph = 0; ph < nph; ++ph) {
      net.index.entries.push_back({std::to_string(k), static_cast<char>('a' + ph)});
    }
  }

  auto col = [nph](int bus, int ph) { return static_cast<Index>(bus - 1) * nph + ph; };
  for (int k = 1; k < spec.n_buses; ++k) {
    CMatrix zb = CMatrix::Constant(nph, nph, spec.phase_coupling * z[k]);
    zb.diagonal().setConstant(z[k]);
    const CMatrix yb = zb.inverse();
    const int par = feeder.parent[k];
    for (int a = 0; a < nph; ++a) {
      for (int b = 0; b < nph; ++b) {
        net.y_ll(col(k, a), col(k, b)) += yb(a, b);
        if (par == 0) {
          net.y_l0(col(k, a), b) -= yb(a, b);
        } else {
          net.y_ll(col(par, a), col(par, b)) += yb(a, b);
          net.y_ll(col(k, a), col(par, b)) -= yb(a, b);
          net.y_ll(col(par, a), col(k, b)) -= yb(a, b);
        }
      }
    }
  }
  net.validate();
  feeder.loads = generate_loads(net, spec);
  return feeder;
}

AreaPartition partition_contiguous(const NetworkModel& net, int n_areas) {
  const Index p = net.n_phases();
  if (n_areas < 1) throw Error(ErrorCode::invalid_argument, "n_areas must be >= 1");

  // Group phases by bus so that a bus is never split between areas.
  std::map<std::string, int> bus_of_name;
  std::vector<int> bus_of(static_cast<std::size_t>(p));
  std::vector<std::vector<Index>> phases_of;
  for (Index i = 0; i < p; ++i) {
    auto [it, inserted] = bus_of_name.emplace(net.index.entries[i].bus_id, static_cast<int>(phases_of.size()));
    if (inserted) phases_of.emplace_back();
    bus_of[i] = it->second;
    phases_of[it->second].push_back(i);
  }
  const int n_bus = static_cast<int>(phases_of.size());
  if (n_areas > n_bus) throw Error(ErrorCode::invalid_argument, "more areas than buses");

  std::vector<std::set<int>> graph(static_cast<std::size_t>(n_bus));
  std::vector<bool> is_root(static_cast<std::size_t>(n_bus), false);
  for (Index j = 0; j < p; ++j) {
    for (Index i = 0; i < p; ++i) {
      if (i != j && net.y_ll(i, j) != cplx(0.0, 0.0) && bus_of[i] != bus_of[j]) {
        graph[bus_of[i]].insert(bus_of[j]);
      }
    }
    if (net.y_l0.row(j).cwiseAbs().maxCoeff() > 0.0) is_root[bus_of[j]] = true;
  }

  // Buses fed directly from the slack are mutually reachable through it.
  for (int a = 0; a < n_bus; ++a)
    for (int b = 0; b < n_bus; ++b)
      if (a != b && is_root[a] && is_root[b]) graph[a].insert(b);

  // Seeds by farthest-point sampling in hop distance, starting at the
  // slack-connected bus; areas then grow breadth-first, smallest area first,
  // so every area stays connected.
  auto hop_distance = [&](const std::vector<int>& sources) {
    std::vector<int> dist(static_cast<std::size_t>(n_bus), -1);
    std::queue<int> queue;
    for (int s : sources) {
      dist[s] = 0;
      queue.push(s);
    }
    while (!queue.empty()) {
      const int u = queue.front();
      queue.pop();
      for (int v : graph[u]) {
        if (dist[v] == -1) {
          dist[v] = dist[u] + 1;
          queue.push(v);
        }
      }
    }
    return dist;
  };
  int first = 0;
  for (int b = 0; b < n_bus; ++b) {
    if (is_root[b]) {
      first = b;
      break;
    }
  }
  std::vector<int> seeds{first};
  while (static_cast<int>(seeds.size()) < n_areas) {
    const auto dist = hop_distance(seeds);
    int best = -1;
    for (int b = 0; b < n_bus; ++b) {
      if (std::find(seeds.begin(), seeds.end(), b) != seeds.end()) continue;
      // Unreachable buses (islands) are taken first.
      const int d = dist[b] == -1 ? std::numeric_limits<int>::max() : dist[b];
      const int bd = best == -1 ? -1 : (dist[best] == -1 ? std::numeric_limits<int>::max() : dist[best]);
      if (d > bd) best = b;
    }
    seeds.push_back(best);
  }

  std::vector<int> bus_area(static_cast<std::size_t>(n_bus), -1);
  std::vector<Index> size(static_cast<std::size_t>(n_areas), 0);
  std::vector<std::deque<int>> frontier(static_cast<std::size_t>(n_areas));
  int remaining = n_bus;
  for (int a = 0; a < n_areas; ++a) {
    bus_area[seeds[a]] = a;
    size[a] = static_cast<Index>(phases_of[seeds[a]].size());
    frontier[a].push_back(seeds[a]);
    --remaining;
  }
  auto grow = [&](int a) {
    auto& q = frontier[a];
    while (!q.empty()) {
      for (int v : graph[q.front()]) {
        if (bus_area[v] == -1) {
          bus_area[v] = a;
          size[a] += static_cast<Index>(phases_of[v].size());
          q.push_back(v);
          return true;
        }
      }
      q.pop_front();
    }
    return false;
  };
  while (remaining > 0) {
    std::vector<int> order(static_cast<std::size_t>(n_areas));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int x, int y) { return size[x] < size[y]; });
    bool grew = false;
    for (int a : order) {
      if (grow(a)) {
        grew = true;
        break;
      }
    }
    if (!grew) {
      throw Error(ErrorCode::invalid_argument, "network graph is disconnected; cannot form contiguous areas");
    }
    --remaining;
  }

  AreaPartition part;
  part.n_areas = n_areas;
  part.assignment.resize(static_cast<std::size_t>(p));
  for (Index i = 0; i < p; ++i) part.assignment[i] = bus_area[bus_of[i]];
  part.adjacency = coupling_adjacency(net.y_ll, part.assignment);
  part.validate(p);
  return part;
}

CVector no_load_voltage(const NetworkModel& net) {
  return -net.y_ll.partialPivLu().solve(net.y_l0 * net.v0);
}

FlowSolution solve_exact_flow(const NetworkModel& net, const CVector& s, FlowOptions options) {
  const Index p = net.n_phases();
  if (s.size() != p) throw Error(ErrorCode::dimension_mismatch, "injection vector length differs from |P|");
  const auto lu = net.y_ll.partialPivLu();
  const CVector w = -lu.solve(net.y_l0 * net.v0);

  FlowSolution sol;
  sol.v = w;
  double residual = 0.0;
  for (int it = 0; it <= options.max_iters; ++it) {
    const CVector rhs = (s.conjugate().array() / sol.v.conjugate().array()).matrix();
    const CVector next = w + lu.solve(rhs);
    residual = (next - sol.v).cwiseAbs().maxCoeff();
    if (!std::isfinite(residual)) {
      throw Error(ErrorCode::diverged_flow, "non-finite iterate at iteration " + std::to_string(it));
    }
    if (residual <= options.tol) {
      sol.iterations = it;
      sol.residual = residual;
      return sol;
    }
    if (it == options.max_iters) break;
    sol.v = next;
  }
  throw Error(ErrorCode::diverged_flow, "no convergence after " + std::to_string(options.max_iters) +
                                            " iterations, residual " + io::format_double(residual));
}

CMatrix solve_exact_flow_series(const NetworkModel& net, const LoadScenario& loads, FlowOptions options) {
  CMatrix v(loads.time_steps(), net.n_phases());
  for (Index t = 0; t < loads.time_steps(); ++t) {
    v.row(t) = solve_exact_flow(net, loads.s.row(t).transpose(), options).v.transpose();
  }
  return v;
}

}  // namespace gridmc
