#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

namespace retc {

// 12 significant digits, C locale, shortest form ("%.12g"); NaN prints "nan".
std::string format_double(double v);

// Writes header + rows, comma-separated, one trailing newline per row.
// Cells must not contain commas or newlines (all emitted names are plain).
void write_csv_file(const std::string& path, const std::vector<std::string>& header,
                    const std::vector<std::vector<std::string>>& rows);

// Matrix entries flattened row-major, each formatted with format_double.
std::vector<std::string> matrix_cells_row_major(const Eigen::MatrixXd& M);

}  // namespace retc
