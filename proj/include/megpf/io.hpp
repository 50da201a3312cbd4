#ifndef MEGPF_IO_HPP
#define MEGPF_IO_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

namespace megpf {

/// FNV-1a (64-bit) over a byte range.
std::uint64_t fnv1a64(const void* data, std::size_t n_bytes);
std::uint64_t fnv1a64_file(const std::string& path);
std::string hash_hex(std::uint64_t h);

/// Row-major text matrix with a header line of column names.  Values are
/// written with enough digits to round-trip doubles exactly.
void write_csv(const std::string& path, const Eigen::MatrixXd& m,
               const std::vector<std::string>& columns);
Eigen::MatrixXd read_csv(const std::string& path,
                         std::vector<std::string>* columns = nullptr);

/// Little-endian binary matrix: two int64 dims then column-major doubles.
void write_matrix_binary(const std::string& path, const Eigen::MatrixXd& m);
Eigen::MatrixXd read_matrix_binary(const std::string& path);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

/// Fixed-format double for reproducible text output ("%.17g").
std::string format_double(double x);

}  // namespace megpf

#endif  // MEGPF_IO_HPP
