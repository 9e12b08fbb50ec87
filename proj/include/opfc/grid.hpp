#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

namespace opfc {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class UnsupportedFeature : public Error {
 public:
  using Error::Error;
};

enum class BusType { slack, pv, pq };

struct Bus {
  int index = 0;  // external bus number from the case file
  double v_min = 0.9;
  double v_max = 1.1;
  BusType bus_type = BusType::pq;

  bool operator==(const Bus&) const = default;
};

/// Quadratic generation cost c2*p^2 + c1*p + c0 with p in per unit.
struct CostCurve {
  double c2 = 0.0;
  double c1 = 0.0;
  double c0 = 0.0;

  double operator()(double p) const { return (c2 * p + c1) * p + c0; }
  double derivative(double p) const { return 2.0 * c2 * p + c1; }
  bool operator==(const CostCurve&) const = default;
};

struct Generator {
  std::size_t bus = 0;  // position in Network::buses
  double pg_min = 0.0;
  double pg_max = 0.0;
  double qg_min = 0.0;
  double qg_max = 0.0;
  CostCurve cost;

  bool operator==(const Generator&) const = default;
};

struct Load {
  std::size_t bus = 0;
  double pd_base = 0.0;
  double qd_base = 0.0;

  bool operator==(const Load&) const = default;
};

struct Branch {
  std::size_t from = 0;
  std::size_t to = 0;
  double g = 0.0;
  double b = 0.0;
  double s_max = 0.0;  // 0 means no thermal limit
  bool status = true;

  bool has_thermal_limit() const { return s_max > 0.0; }
  bool operator==(const Branch&) const = default;
};

/// Per-unit network model. Bus references in generators, loads and branches
/// are positions into `buses`, not the external bus numbers.
struct Network {
  double base_mva = 100.0;
  std::vector<Bus> buses;
  std::vector<Generator> generators;
  std::vector<Load> loads;
  std::vector<Branch> branches;
  std::vector<std::vector<std::size_t>> gens_at_bus;
  std::size_t slack_bus = 0;

  std::size_t num_buses() const { return buses.size(); }
  std::size_t num_generators() const { return generators.size(); }
  std::size_t num_loads() const { return loads.size(); }
  std::size_t num_branches() const { return branches.size(); }
  std::size_t num_limited_branches() const;

  /// Throws Error when any structural invariant is broken.
  void validate() const;

  /// Stable 64-bit FNV-1a hash of the canonical JSON form, hex encoded.
  std::string fingerprint() const;

  bool operator==(const Network&) const = default;
};

/// Parses MATPOWER case text. Features outside the simplified model (shunts,
/// line charging, taps, phase shifters) are ignored; a note for each is pushed
/// into `warnings` when provided.
Network parse_matpower(std::string_view text, std::vector<std::string>* warnings = nullptr);
Network load_matpower_file(const std::string& path, std::vector<std::string>* warnings = nullptr);

/// g + jb = 1 / (r + jx).
std::pair<double, double> series_admittance(double r, double x);

nlohmann::json to_json(const Network& net);
Network network_from_json(const nlohmann::json& j);

std::string bus_type_name(BusType t);

}  // namespace opfc
