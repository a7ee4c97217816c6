#ifndef IABSDE_CSV_HPP
#define IABSDE_CSV_HPP

#include <charconv>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "iabsde/errors.hpp"

/**
 * @file csv.hpp
 * @brief Minimal CSV emission with lossless double formatting.
 *
 * Every result file the experiment runners produce is a comma-separated
 * table: one header row naming the columns, then data rows.  Numbers are
 * rendered with 17 significant digits through std::to_chars, which is
 * locale-free and round-trips every finite double bit-exactly — the property
 * the reproducibility checks lean on ("same config + seed, same bytes").
 *
 * Reading is only needed by tests and stays equally simple: no quoting, no
 * embedded commas, no escapes.  Cell content is restricted accordingly at
 * write time.
 */

namespace iabsde {

/// Render one double with 17 significant digits (general format, '.' decimal
/// separator, no locale involvement).  strtod on the result restores the
/// exact bit pattern for every finite input.
inline std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
    if (res.ec != std::errc{})
        throw Error(ErrorCode::NonFiniteValue, "double formatting failed");
    return std::string(buf, res.ptr);
}

/// In-memory CSV table with a fixed header.  Cells may be appended as raw
/// strings (identifiers, flags) or as doubles (formatted losslessly); every
/// row must match the header width.
class CsvTable {
public:
    explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {
        if (header_.empty())
            throw Error(ErrorCode::ValidationError, "CSV header must name at least one column");
        for (const std::string& h : header_) check_cell(h);
    }

    std::size_t columns() const noexcept { return header_.size(); }
    std::size_t rows() const noexcept { return rows_.size(); }

    void append_row(std::vector<std::string> cells) {
        if (cells.size() != header_.size())
            throw Error(ErrorCode::RangeMismatch,
                        "CSV row has " + std::to_string(cells.size()) + " cells, header has " +
                            std::to_string(header_.size()));
        for (const std::string& c : cells) check_cell(c);
        rows_.push_back(std::move(cells));
    }

    void append_row(std::span<const double> cells) {
        std::vector<std::string> rendered;
        rendered.reserve(cells.size());
        for (double v : cells) rendered.push_back(format_double(v));
        append_row(std::move(rendered));
    }

    /// Serialized table: header line, then rows, '\n' separated, trailing
    /// newline included.
    std::string str() const {
        std::string out = join(header_);
        out += '\n';
        for (const auto& row : rows_) {
            out += join(row);
            out += '\n';
        }
        return out;
    }

    /// Write the table to disk, replacing any previous content wholesale so
    /// repeated runs cannot interleave.
    void write_file(const std::filesystem::path& path) const {
        std::ofstream f(path, std::ios::binary | std::ios::trunc);
        if (!f) throw Error(ErrorCode::ValidationError, "cannot open '" + path.string() + "' for writing");
        const std::string body = str();
        f.write(body.data(), static_cast<std::streamsize>(body.size()));
        if (!f) throw Error(ErrorCode::ValidationError, "short write to '" + path.string() + "'");
    }

private:
    static void check_cell(const std::string& cell) {
        for (char c : cell)
            if (c == ',' || c == '\n' || c == '\r' || c == '"')
                throw Error(ErrorCode::ValidationError,
                            "CSV cells must not contain commas, quotes, or line breaks: '" + cell +
                                "'");
    }

    static std::string join(const std::vector<std::string>& cells) {
        std::string line;
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) line += ',';
            line += cells[i];
        }
        return line;
    }

    std::vector<std::string> header_;
    std::vector<std::vector<std::string>> rows_;
};

/// Parsed CSV content, header plus string cells — just enough for tests to
/// round-trip files and diff cell values.
struct CsvContent {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

inline CsvContent parse_csv(const std::string& text) {
    CsvContent out;
    std::size_t pos = 0;
    bool first = true;
    while (pos < text.size()) {
        std::size_t nl = text.find('\n', pos);
        if (nl == std::string::npos) nl = text.size();
        std::string_view line(text.data() + pos, nl - pos);
        pos = nl + 1;
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::size_t cell_begin = 0;
        for (std::size_t i = 0; i <= line.size(); ++i) {
            if (i == line.size() || line[i] == ',') {
                cells.emplace_back(line.substr(cell_begin, i - cell_begin));
                cell_begin = i + 1;
            }
        }
        if (first) {
            out.header = std::move(cells);
            first = false;
        } else {
            if (cells.size() != out.header.size())
                throw Error(ErrorCode::RangeMismatch, "CSV row width differs from header");
            out.rows.push_back(std::move(cells));
        }
    }
    if (first) throw Error(ErrorCode::ValidationError, "CSV text has no header row");
    return out;
}

inline CsvContent read_csv_file(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error(ErrorCode::ValidationError, "cannot read '" + path.string() + "'");
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return parse_csv(text);
}

}  // namespace iabsde

#endif  // IABSDE_CSV_HPP
