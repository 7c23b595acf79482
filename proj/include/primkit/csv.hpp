#pragma once

#include <charconv>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "primkit/errors.hpp"

namespace primkit::csv {

inline std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur += ch;
        }
    }
    out.push_back(cur);
    return out;
}

inline double parse_number(const std::string& cell, size_t row, size_t col,
                           const std::string& path) {
    double v = 0;
    const char* first = cell.data();
    const char* last = cell.data() + cell.size();
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last) {
        throw ParseError(path + ": non-numeric cell '" + cell + "' at row " +
                         std::to_string(row) + ", column " + std::to_string(col));
    }
    return v;
}

class Writer {
public:
    explicit Writer(const std::string& path) : out_(path) {
        if (!out_) throw IoError("cannot open " + path + " for writing");
        path_ = path;
    }

    Writer& field(const std::string& s) {
        sep();
        out_ << s;
        return *this;
    }

    Writer& field(double v) {
        sep();
        char buf[48];
        auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v,
                                       std::chars_format::general, 17);
        out_.write(buf, ptr - buf);
        return *this;
    }

    Writer& field(float v) {
        sep();
        char buf[48];
        auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v,
                                       std::chars_format::general, 9);
        out_.write(buf, ptr - buf);
        return *this;
    }

    Writer& field(long v) {
        sep();
        out_ << v;
        return *this;
    }

    Writer& field(int v) { return field(long(v)); }

    void endrow() {
        out_ << '\n';
        first_ = true;
    }

    void close() {
        out_.close();
        if (!out_) throw IoError("write failed for " + path_);
    }

private:
    void sep() {
        if (!first_) out_ << ',';
        first_ = false;
    }

    std::ofstream out_;
    std::string path_;
    bool first_ = true;
};

}  // namespace primkit::csv
