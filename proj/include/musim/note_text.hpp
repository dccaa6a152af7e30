#pragma once

#include <charconv>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "musim/error.hpp"
#include "musim/note.hpp"

namespace musim {

// Plain-text note format so tests and fixtures need no binary files.
// One note per line: "onset_seconds duration_seconds pitch velocity",
// whitespace separated; '#' starts a comment; blank lines are ignored.

namespace note_text_detail {

inline bool parse_double(std::string_view s, double& out) {
    const char* end = s.data() + s.size();
    auto [p, ec] = std::from_chars(s.data(), end, out);
    return ec == std::errc{} && p == end;
}

inline bool parse_int(std::string_view s, int& out) {
    const char* end = s.data() + s.size();
    auto [p, ec] = std::from_chars(s.data(), end, out);
    return ec == std::errc{} && p == end;
}

}  // namespace note_text_detail

inline Piece parse_note_text(std::string_view text) {
    Piece piece;
    std::size_t line_no = 0;
    std::size_t start = 0;
    while (start <= text.size()) {
        std::size_t nl = text.find('\n', start);
        std::string_view line = text.substr(start, nl == std::string_view::npos ? text.size() - start
                                                                                : nl - start);
        start = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
        ++line_no;
        if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);

        std::vector<std::string_view> fields;
        std::size_t i = 0;
        while (i < line.size()) {
            while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
            std::size_t j = i;
            while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
            if (j > i) fields.push_back(line.substr(i, j - i));
            i = j;
        }
        if (fields.empty()) continue;

        auto fail = [&](const std::string& what) {
            throw Error(Errc::bad_field, what + " at line " + std::to_string(line_no));
        };
        if (fields.size() != 4) fail("expected 4 fields");
        Note n;
        using namespace note_text_detail;
        if (!parse_double(fields[0], n.onset_seconds)) fail("bad onset '" + std::string(fields[0]) + "'");
        if (!parse_double(fields[1], n.duration_seconds))
            fail("bad duration '" + std::string(fields[1]) + "'");
        if (!parse_int(fields[2], n.pitch)) fail("bad pitch '" + std::string(fields[2]) + "'");
        if (!parse_int(fields[3], n.velocity)) fail("bad velocity '" + std::string(fields[3]) + "'");
        if (!note_is_valid(n)) fail("note out of range (" + std::string(fields[0]) + " " +
                                    std::string(fields[1]) + " " + std::string(fields[2]) + " " +
                                    std::string(fields[3]) + ")");
        piece.notes.push_back(n);
    }
    sort_notes(piece.notes);
    return piece;
}

inline std::string write_note_text(const std::vector<Note>& notes) {
    std::ostringstream os;
    os.precision(17);
    for (const Note& n : notes) {
        os << n.onset_seconds << ' ' << n.duration_seconds << ' ' << n.pitch << ' ' << n.velocity
           << '\n';
    }
    return os.str();
}

}  // namespace musim
