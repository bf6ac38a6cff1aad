#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace ckoop::csv {

// Minimal CSV table: `# key=value` metadata lines, one header row, data rows.
// Fields never contain commas or quotes in the files this project writes.
struct Table {
    std::map<std::string, std::string> metadata;
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    // Index of a header column; throws InputError when absent.
    [[nodiscard]] std::size_t column(std::string_view name) const;
};

[[nodiscard]] std::vector<std::string> split(std::string_view line, char sep = ',');
[[nodiscard]] std::string join(const std::vector<std::string>& fields, char sep = ',');

[[nodiscard]] Table read(std::istream& in);
[[nodiscard]] Table read_file(const std::string& path);

// Writes metadata lines (in map order), header, rows.
void write(const Table& table, std::ostream& out);
void write_file(const Table& table, const std::string& path);

// Writes `content` to `path`, creating parent directories. Throws IoError.
void write_text_file(const std::string& path, const std::string& content);
[[nodiscard]] std::string read_text_file(const std::string& path);

}  // namespace ckoop::csv
