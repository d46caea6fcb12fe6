#include "retc/csv.hpp"

#include <cstdio>
#include <fstream>

#include "retc/errors.hpp"

namespace retc {

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

void write_csv_file(const std::string& path, const std::vector<std::string>& header,
                    const std::vector<std::vector<std::string>>& rows) {
    std::ofstream out(path, std::ios::binary);  // binary: byte-identical across platforms
    if (!out) throw ValidationError("cannot open '" + path + "' for writing");
    for (size_t i = 0; i < header.size(); ++i) {
        if (i) out << ',';
        out << header[i];
    }
    out << '\n';
    for (const auto& row : rows) {
        for (size_t i = 0; i < row.size(); ++i) {
            if (i) out << ',';
            out << row[i];
        }
        out << '\n';
    }
    if (!out) throw ValidationError("failed while writing '" + path + "'");
}

std::vector<std::string> matrix_cells_row_major(const Eigen::MatrixXd& M) {
    std::vector<std::string> cells;
    cells.reserve(static_cast<size_t>(M.size()));
    for (Eigen::Index r = 0; r < M.rows(); ++r) {
        for (Eigen::Index c = 0; c < M.cols(); ++c) {
            cells.push_back(format_double(M(r, c)));
        }
    }
    return cells;
}

}  // namespace retc
