#include "ckoop/csv.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "ckoop/errors.hpp"

namespace ckoop::csv {

std::size_t Table::column(std::string_view name) const {
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (header[i] == name) return i;
    }
    throw InputError("csv: missing column '" + std::string(name) + "'");
}

std::vector<std::string> split(std::string_view line, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(sep, start);
        if (pos == std::string_view::npos) {
            out.emplace_back(line.substr(start));
            break;
        }
        out.emplace_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

std::string join(const std::vector<std::string>& fields, char sep) {
    std::string out;
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) out.push_back(sep);
        out += fields[i];
    }
    return out;
}

Table read(std::istream& in) {
    Table t;
    std::string line;
    bool have_header = false;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line.front() == '#') {
            std::string_view body(line);
            body.remove_prefix(1);
            while (!body.empty() && body.front() == ' ') body.remove_prefix(1);
            const auto eq = body.find('=');
            if (eq != std::string_view::npos) {
                t.metadata[std::string(body.substr(0, eq))] = std::string(body.substr(eq + 1));
            }
            continue;
        }
        if (!have_header) {
            t.header = split(line);
            have_header = true;
            continue;
        }
        auto fields = split(line);
        if (fields.size() != t.header.size()) {
            throw InputError("csv line " + std::to_string(lineno) + ": expected " + std::to_string(t.header.size()) +
                             " fields, got " + std::to_string(fields.size()));
        }
        t.rows.push_back(std::move(fields));
    }
    if (!have_header) throw InputError("csv: missing header row");
    return t;
}

Table read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    try {
        return read(in);
    } catch (const InputError& e) {
        throw InputError(path + ": " + e.what());
    }
}

void write(const Table& table, std::ostream& out) {
    for (const auto& [k, v] : table.metadata) out << "# " << k << '=' << v << '\n';
    out << join(table.header) << '\n';
    for (const auto& row : table.rows) out << join(row) << '\n';
}

void write_file(const Table& table, const std::string& path) {
    std::ostringstream os;
    write(table, os);
    write_text_file(path, os.str());
}

void write_text_file(const std::string& path, const std::string& content) {
    namespace fs = std::filesystem;
    std::error_code ec;
    const fs::path p(path);
    if (p.has_parent_path()) {
        fs::create_directories(p.parent_path(), ec);
        if (ec) throw IoError("cannot create directory '" + p.parent_path().string() + "': " + ec.message());
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << content;
    if (!out) throw IoError("write failed for '" + path + "'");
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

}  // namespace ckoop::csv
