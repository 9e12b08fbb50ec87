#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

namespace opfc {

/// Decimal text in the shortest form that round-trips.
std::string format_double(double v);
/// JSON array text of a vector with format_double entries.
std::string json_array(const Eigen::VectorXd& v);

Eigen::VectorXd vector_from_json(const nlohmann::json& j);
std::vector<double> to_std(const Eigen::VectorXd& v);

/// Row-major matrix <-> flat JSON array.
nlohmann::json matrix_to_json(const Eigen::MatrixXd& m);
Eigen::MatrixXd matrix_from_json(const nlohmann::json& j, Eigen::Index rows, Eigen::Index cols);

std::string read_text_file(const std::string& path);
/// Writes through a temporary file and renames it into place.
void write_text_file(const std::string& path, const std::string& text);

/// FNV-1a 64-bit hash, hex encoded.
std::string fnv1a_hex(const std::string& bytes);
std::string file_hash(const std::string& path);

}  // namespace opfc
