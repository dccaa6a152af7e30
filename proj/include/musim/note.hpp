#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "musim/error.hpp"

namespace musim {

/// One performed note. Times are seconds; pitch/velocity are MIDI values.
struct Note {
    double onset_seconds = 0.0;
    double duration_seconds = 0.0;
    int pitch = 0;      // 0..127
    int velocity = 0;   // 1..127

    friend bool operator==(const Note&, const Note&) = default;
};

struct Piece {
    std::string piece_id;
    std::string composer_id;
    std::vector<Note> notes;  // sorted by (onset, pitch)
};

inline bool note_is_valid(const Note& n) {
    return n.onset_seconds >= 0.0 && n.duration_seconds > 0.0 &&
           n.pitch >= 0 && n.pitch <= 127 && n.velocity >= 1 && n.velocity <= 127;
}

inline void sort_notes(std::vector<Note>& notes) {
    std::sort(notes.begin(), notes.end(), [](const Note& a, const Note& b) {
        if (a.onset_seconds != b.onset_seconds) return a.onset_seconds < b.onset_seconds;
        if (a.pitch != b.pitch) return a.pitch < b.pitch;
        if (a.duration_seconds != b.duration_seconds) return a.duration_seconds < b.duration_seconds;
        return a.velocity < b.velocity;
    });
}

}  // namespace musim
