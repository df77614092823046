#ifndef NETGSA_IO_HPP
#define NETGSA_IO_HPP

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "netgsa/graph.hpp"

namespace netgsa::io {

// Parse/validation failure with a file and 1-based line position.
class ParseError : public std::runtime_error {
  public:
    ParseError(const std::string& file, int line, const std::string& message)
        : std::runtime_error(file + ":" + std::to_string(line) + ": " + message),
          file_(file),
          line_(line) {}

    const std::string& file() const { return file_; }
    int line() const { return line_; }

  private:
    std::string file_;
    int line_;
};

// TSV expression table. On disk: header row of variable names (first cell is
// the sample-id column label), one row per sample. With transpose=true the
// file is variables x samples and is flipped on read.
struct DataMatrix {
    std::vector<std::string> sample_ids;
    std::vector<std::string> variables;
    Eigen::MatrixXd values;  // samples x variables
};

DataMatrix read_data_matrix(const std::string& path, bool transpose = false);
void write_data_matrix(const std::string& path, const DataMatrix& data);

// Sidecar labels: `sample_id<TAB>condition` with condition in {1,2}.
// Returned in the data matrix's sample order.
std::vector<int> read_condition_labels(const std::string& path,
                                       const std::vector<std::string>& sample_ids);

// Constraint file: `node_a<TAB>node_b<TAB>status`, status 1 = known edge,
// 0 = known non-edge. An optional header line is skipped.
graph::EdgeConstraints read_constraints(const std::string& path,
                                        const std::vector<std::string>& variables);

// Weighted edge list `node_a<TAB>node_b<TAB>weight`; returns the symmetric
// zero-diagonal adjacency matrix.
Eigen::MatrixXd read_edge_list(const std::string& path,
                               const std::vector<std::string>& variables);
void write_edge_list(const std::string& path, const std::vector<std::string>& variables,
                     const Eigen::MatrixXd& matrix, const graph::EdgeSet& support);

// GMT pathway file: `name<TAB>description<TAB>member...`. Unknown members are
// reported, not fatal.
struct PathwayRecord {
    std::string name, description;
    std::vector<int> members;                  // resolved variable indices
    std::vector<std::string> unknown_members;  // names that did not resolve
};
std::vector<PathwayRecord> read_gmt(const std::string& path,
                                    const std::vector<std::string>& variables);

// Write-to-temp + rename so failed runs leave no partial output behind.
void atomic_write(const std::string& path, const std::string& content);

std::string format_value(double v);  // 17 significant digits
std::string format_rounded(double v, int digits = 3);

}  // namespace netgsa::io

#endif
