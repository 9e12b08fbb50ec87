#include "opfc/grid.hpp"

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>

#include "opfc/io.hpp"

namespace opfc {

namespace {

struct MatrixBlock {
  std::vector<std::vector<double>> rows;
  std::vector<std::size_t> lines;  // source line of each row
};

std::string_view trim(std::string_view s) {
  const auto ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

std::vector<double> parse_row(std::string_view row, std::size_t line) {
  std::vector<double> out;
  std::string buf(row);
  for (auto& c : buf)
    if (c == ',' || c == '\t') c = ' ';
  std::istringstream is(buf);
  std::string tok;
  while (is >> tok) {
    char* end = nullptr;
    const double v = std::strtod(tok.c_str(), &end);
    if (end == tok.c_str() || *end != '\0')
      throw ParseError(line, "malformed matrix entry '" + tok + "'");
    out.push_back(v);
  }
  return out;
}

// Extracts `mpc.<name> = [ ... ];` matrices and scalar assignments.
struct CaseText {
  std::map<std::string, MatrixBlock> matrices;
  std::map<std::string, double> scalars;
};

CaseText scan(std::string_view text) {
  CaseText out;
  std::size_t line_no = 0;
  std::optional<std::string> open;  // name of the matrix being collected
  bool in_cell = false;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;

    if (const auto pct = line.find('%'); pct != std::string_view::npos) line = line.substr(0, pct);
    line = trim(line);
    if (line.empty()) {
      if (nl == text.size()) break;
      continue;
    }

    if (in_cell) {
      if (line.find("};") != std::string_view::npos || line == "}") in_cell = false;
      continue;
    }

    if (!open) {
      if (line.rfind("mpc.", 0) != 0) continue;
      const auto eq = line.find('=');
      if (eq == std::string_view::npos) continue;
      const std::string name(trim(line.substr(4, eq - 4)));
      std::string_view rhs = trim(line.substr(eq + 1));
      if (!rhs.empty() && rhs.front() == '{') {
        in_cell = rhs.find('}') == std::string_view::npos;
        continue;
      }
      if (!rhs.empty() && rhs.front() == '[') {
        open = name;
        out.matrices[name];
        line = rhs.substr(1);
      } else {
        if (!rhs.empty() && rhs.back() == ';') rhs.remove_suffix(1);
        rhs = trim(rhs);
        if (!rhs.empty() && rhs.front() == '\'') continue;  // string-valued field
        char* end = nullptr;
        const std::string s(rhs);
        const double v = std::strtod(s.c_str(), &end);
        if (end != s.c_str() && *end == '\0') out.scalars[name] = v;
        continue;
      }
    }

    // Inside an open matrix: rows are separated by ';' or newlines.
    bool closes = false;
    if (const auto rb = line.find(']'); rb != std::string_view::npos) {
      closes = true;
      line = line.substr(0, rb);
    }
    auto& block = out.matrices[*open];
    std::size_t start = 0;
    while (start <= line.size()) {
      auto semi = line.find(';', start);
      if (semi == std::string_view::npos) semi = line.size();
      const auto piece = trim(line.substr(start, semi - start));
      if (!piece.empty()) {
        block.rows.push_back(parse_row(piece, line_no));
        block.lines.push_back(line_no);
      }
      start = semi + 1;
    }
    if (closes) open.reset();
    if (nl == text.size()) break;
  }
  if (open) throw ParseError(line_no, "unterminated matrix mpc." + *open);
  return out;
}

void require_columns(const MatrixBlock& m, std::size_t row, std::size_t ncol, const char* what) {
  if (m.rows[row].size() < ncol)
    throw ParseError(m.lines[row], std::string(what) + " row has " + std::to_string(m.rows[row].size()) +
                                       " columns, expected at least " + std::to_string(ncol));
}

void note(std::vector<std::string>* warnings, std::size_t count, const std::string& what) {
  if (warnings && count > 0) warnings->push_back("ignored " + what + " on " + std::to_string(count) + " element(s)");
}

}  // namespace

std::size_t Network::num_limited_branches() const {
  std::size_t n = 0;
  for (const auto& br : branches) n += br.has_thermal_limit() ? 1 : 0;
  return n;
}

void Network::validate() const {
  if (!(base_mva > 0.0)) throw Error("base_mva must be positive");
  if (buses.empty()) throw Error("network has no buses");
  std::size_t slack_count = 0;
  for (std::size_t i = 0; i < buses.size(); ++i) {
    const auto& b = buses[i];
    if (!(b.v_min > 0.0 && b.v_min <= b.v_max))
      throw Error("bus " + std::to_string(b.index) + ": voltage bounds must satisfy 0 < v_min <= v_max");
    if (b.bus_type == BusType::slack) {
      ++slack_count;
      if (i != slack_bus) throw Error("slack_bus does not point at the slack-type bus");
    }
  }
  if (slack_count != 1) throw Error("network must have exactly one slack bus, found " + std::to_string(slack_count));
  for (const auto& br : branches) {
    if (br.from >= buses.size() || br.to >= buses.size()) throw Error("branch endpoint references a missing bus");
    if (br.g == 0.0 && br.b == 0.0) throw Error("branch has zero series admittance");
    if (br.s_max < 0.0) throw Error("branch has negative thermal limit");
  }
  for (const auto& g : generators) {
    if (g.bus >= buses.size()) throw Error("generator references a missing bus");
    if (g.pg_min > g.pg_max || g.qg_min > g.qg_max) throw Error("generator bounds are inverted");
    if (g.cost.c2 < 0.0) throw Error("generator cost has negative quadratic coefficient");
  }
  for (const auto& l : loads)
    if (l.bus >= buses.size() || !std::isfinite(l.pd_base) || !std::isfinite(l.qd_base))
      throw Error("invalid load");
  if (gens_at_bus.size() != buses.size()) throw Error("gens_at_bus size mismatch");
  std::vector<int> seen(generators.size(), 0);
  for (std::size_t i = 0; i < gens_at_bus.size(); ++i)
    for (auto k : gens_at_bus[i]) {
      if (k >= generators.size() || generators[k].bus != i) throw Error("gens_at_bus is inconsistent");
      ++seen[k];
    }
  for (int s : seen)
    if (s != 1) throw Error("gens_at_bus does not partition the generators");
}

std::string Network::fingerprint() const { return fnv1a_hex(to_json(*this).dump()); }

std::pair<double, double> series_admittance(double r, double x) {
  const double den = r * r + x * x;
  if (den == 0.0) throw Error("zero series impedance");
  return {r / den, -x / den};
}

Network parse_matpower(std::string_view text, std::vector<std::string>* warnings) {
  const CaseText ct = scan(text);
  const auto need = [&](const char* name) -> const MatrixBlock& {
    auto it = ct.matrices.find(name);
    if (it == ct.matrices.end()) throw Error(std::string("case file is missing mpc.") + name);
    return it->second;
  };

  Network net;
  if (auto it = ct.scalars.find("baseMVA"); it != ct.scalars.end()) net.base_mva = it->second;
  else throw Error("case file is missing mpc.baseMVA");
  if (!(net.base_mva > 0.0)) throw Error("baseMVA must be positive");
  const double base = net.base_mva;

  const auto& bus = need("bus");
  const auto& gen = need("gen");
  const auto& branch = need("branch");
  if (!ct.matrices.contains("gencost")) throw Error("case file is missing mpc.gencost");
  const auto& gencost = ct.matrices.at("gencost");

  std::map<int, std::size_t> bus_pos;
  std::size_t shunts = 0, isolated = 0;
  bool have_slack = false;
  for (std::size_t r = 0; r < bus.rows.size(); ++r) {
    require_columns(bus, r, 13, "bus");
    const auto& row = bus.rows[r];
    Bus b;
    b.index = static_cast<int>(row[0]);
    const int type = static_cast<int>(row[1]);
    switch (type) {
      case 1: b.bus_type = BusType::pq; break;
      case 2: b.bus_type = BusType::pv; break;
      case 3: b.bus_type = BusType::slack; break;
      case 4: b.bus_type = BusType::pq; ++isolated; break;
      default: throw ParseError(bus.lines[r], "unknown bus type " + std::to_string(type));
    }
    if (type == 3) {
      if (have_slack) throw ParseError(bus.lines[r], "more than one slack bus");
      have_slack = true;
      net.slack_bus = net.buses.size();
    }
    b.v_max = row[11];
    b.v_min = row[12];
    if (row[4] != 0.0 || row[5] != 0.0) ++shunts;
    if (!bus_pos.emplace(b.index, net.buses.size()).second)
      throw ParseError(bus.lines[r], "duplicate bus number " + std::to_string(b.index));
    if (row[2] != 0.0 || row[3] != 0.0) net.loads.push_back({net.buses.size(), row[2] / base, row[3] / base});
    net.buses.push_back(b);
  }
  if (!have_slack) throw Error("case file has no slack (type 3) bus");
  note(warnings, shunts, "bus shunts");
  note(warnings, isolated, "isolated bus type (treated as PQ)");

  const auto lookup = [&](double id, std::size_t line) {
    auto it = bus_pos.find(static_cast<int>(id));
    if (it == bus_pos.end()) throw ParseError(line, "reference to unknown bus " + std::to_string(static_cast<int>(id)));
    return it->second;
  };

  std::vector<std::size_t> online;
  for (std::size_t r = 0; r < gen.rows.size(); ++r) {
    require_columns(gen, r, 10, "gen");
    const auto& row = gen.rows[r];
    const std::size_t at = lookup(row[0], gen.lines[r]);
    if (row[7] <= 0.0) continue;
    Generator g;
    g.bus = at;
    g.qg_max = row[3] / base;
    g.qg_min = row[4] / base;
    g.pg_max = row[8] / base;
    g.pg_min = row[9] / base;
    net.generators.push_back(g);
    online.push_back(r);
  }

  if (gencost.rows.size() < gen.rows.size())
    throw Error("mpc.gencost has " + std::to_string(gencost.rows.size()) + " rows for " +
                std::to_string(gen.rows.size()) + " generators");
  if (gencost.rows.size() > gen.rows.size()) note(warnings, gencost.rows.size() - gen.rows.size(), "reactive cost rows");
  for (std::size_t k = 0; k < online.size(); ++k) {
    const std::size_t r = online[k];
    require_columns(gencost, r, 4, "gencost");
    const auto& row = gencost.rows[r];
    const int model = static_cast<int>(row[0]);
    if (model == 1) throw UnsupportedFeature("piecewise-linear generator costs are not supported");
    if (model != 2) throw ParseError(gencost.lines[r], "unknown cost model " + std::to_string(model));
    const auto n = static_cast<std::size_t>(row[3]);
    require_columns(gencost, r, 4 + n, "gencost");
    if (n > 3) throw UnsupportedFeature("polynomial costs above degree 2 are not supported");
    double c[3] = {0.0, 0.0, 0.0};  // c2, c1, c0 in $/MW units
    for (std::size_t i = 0; i < n; ++i) c[3 - n + i] = row[4 + i];
    net.generators[k].cost = {c[0] * base * base, c[1] * base, c[2]};
  }

  std::size_t charging = 0, taps = 0, shifts = 0;
  for (std::size_t r = 0; r < branch.rows.size(); ++r) {
    require_columns(branch, r, 11, "branch");
    const auto& row = branch.rows[r];
    const std::size_t f = lookup(row[0], branch.lines[r]);
    const std::size_t t = lookup(row[1], branch.lines[r]);
    if (row[10] <= 0.0) continue;
    if (row[2] == 0.0 && row[3] == 0.0) throw ParseError(branch.lines[r], "branch with zero impedance");
    const auto [g, b] = series_admittance(row[2], row[3]);
    Branch br;
    br.from = f;
    br.to = t;
    br.g = g;
    br.b = b;
    br.s_max = row[5] > 0.0 ? row[5] / base : 0.0;
    br.status = true;
    if (row[4] != 0.0) ++charging;
    if (row[8] != 0.0 && row[8] != 1.0) ++taps;
    if (row[9] != 0.0) ++shifts;
    net.branches.push_back(br);
  }
  note(warnings, charging, "line charging");
  note(warnings, taps, "transformer tap ratio");
  note(warnings, shifts, "phase shift");

  net.gens_at_bus.assign(net.buses.size(), {});
  for (std::size_t k = 0; k < net.generators.size(); ++k) net.gens_at_bus[net.generators[k].bus].push_back(k);
  net.validate();
  return net;
}

Network load_matpower_file(const std::string& path, std::vector<std::string>* warnings) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open case file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_matpower(ss.str(), warnings);
}

std::string bus_type_name(BusType t) {
  switch (t) {
    case BusType::slack: return "slack";
    case BusType::pv: return "pv";
    case BusType::pq: return "pq";
  }
  return "pq";
}

namespace {
BusType bus_type_from(const std::string& s) {
  if (s == "slack") return BusType::slack;
  if (s == "pv") return BusType::pv;
  if (s == "pq") return BusType::pq;
  throw Error("unknown bus_type '" + s + "'");
}
}  // namespace

nlohmann::json to_json(const Network& net) {
  using nlohmann::json;
  json j;
  j["base_mva"] = net.base_mva;
  json buses = json::array();
  for (const auto& b : net.buses)
    buses.push_back({{"index", b.index}, {"v_min", b.v_min}, {"v_max", b.v_max}, {"bus_type", bus_type_name(b.bus_type)}});
  j["buses"] = std::move(buses);
  json gens = json::array();
  for (const auto& g : net.generators)
    gens.push_back({{"bus", g.bus},
                    {"pg_min", g.pg_min},
                    {"pg_max", g.pg_max},
                    {"qg_min", g.qg_min},
                    {"qg_max", g.qg_max},
                    {"cost", {{"c2", g.cost.c2}, {"c1", g.cost.c1}, {"c0", g.cost.c0}}}});
  j["generators"] = std::move(gens);
  json loads = json::array();
  for (const auto& l : net.loads) loads.push_back({{"bus", l.bus}, {"pd_base", l.pd_base}, {"qd_base", l.qd_base}});
  j["loads"] = std::move(loads);
  json branches = json::array();
  for (const auto& br : net.branches)
    branches.push_back({{"from", br.from}, {"to", br.to}, {"g", br.g}, {"b", br.b}, {"s_max", br.s_max},
                        {"status", br.status ? "on" : "off"}});
  j["branches"] = std::move(branches);
  j["gens_at_bus"] = net.gens_at_bus;
  j["slack_bus"] = net.slack_bus;
  return j;
}

Network network_from_json(const nlohmann::json& j) {
  Network net;
  net.base_mva = j.at("base_mva").get<double>();
  for (const auto& b : j.at("buses"))
    net.buses.push_back({b.at("index").get<int>(), b.at("v_min").get<double>(), b.at("v_max").get<double>(),
                         bus_type_from(b.at("bus_type").get<std::string>())});
  for (const auto& g : j.at("generators")) {
    const auto& c = g.at("cost");
    net.generators.push_back({g.at("bus").get<std::size_t>(), g.at("pg_min").get<double>(), g.at("pg_max").get<double>(),
                              g.at("qg_min").get<double>(), g.at("qg_max").get<double>(),
                              {c.at("c2").get<double>(), c.at("c1").get<double>(), c.at("c0").get<double>()}});
  }
  for (const auto& l : j.at("loads"))
    net.loads.push_back({l.at("bus").get<std::size_t>(), l.at("pd_base").get<double>(), l.at("qd_base").get<double>()});
  for (const auto& br : j.at("branches"))
    net.branches.push_back({br.at("from").get<std::size_t>(), br.at("to").get<std::size_t>(), br.at("g").get<double>(),
                            br.at("b").get<double>(), br.at("s_max").get<double>(),
                            br.at("status").get<std::string>() == "on"});
  net.gens_at_bus = j.at("gens_at_bus").get<std::vector<std::vector<std::size_t>>>();
  net.slack_bus = j.at("slack_bus").get<std::size_t>();
  net.validate();
  return net;
}

}  // namespace opfc
