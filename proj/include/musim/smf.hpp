#pragma once

#include <cmath>
#include <cstdint>
#include <deque>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "musim/error.hpp"
#include "musim/note.hpp"

namespace musim {

// Standard MIDI File subset: format 0/1, note-on/off and set-tempo only.
// Chunk lengths and multi-byte header fields are big-endian per the SMF
// standard; everything else in the file (sysex, controllers, pedal, ...)
// is skipped. Division must be in ticks-per-quarter mode.

namespace smf_detail {

struct Reader {
    std::span<const std::uint8_t> data;
    std::size_t pos = 0;

    bool eof() const { return pos >= data.size(); }
    std::size_t remaining() const { return data.size() - pos; }

    std::uint8_t u8() {
        if (pos >= data.size()) throw Error(Errc::truncated_chunk, "unexpected end of file");
        return data[pos++];
    }
    std::uint16_t u16be() { return static_cast<std::uint16_t>(u8() << 8 | u8()); }
    std::uint32_t u32be() {
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v = v << 8 | u8();
        return v;
    }
    void skip(std::size_t n) {
        if (remaining() < n) throw Error(Errc::truncated_chunk, "skip past end of chunk");
        pos += n;
    }
    /// Variable-length quantity, at most 4 bytes.
    std::uint32_t vlq() {
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) {
            std::uint8_t b = u8();
            v = v << 7 | (b & 0x7F);
            if (!(b & 0x80)) return v;
        }
        throw Error(Errc::truncated_chunk, "variable-length quantity longer than 4 bytes");
    }
};

enum class NoteEventKind : std::uint8_t { off = 0, on = 1 };

struct NoteEvent {
    std::uint64_t tick;
    std::uint32_t track;
    std::uint32_t seq;  // order within the track
    NoteEventKind kind;
    std::uint8_t channel;
    std::uint8_t pitch;
    std::uint8_t velocity;
};

struct TempoEvent {
    std::uint64_t tick;
    std::uint32_t track;
    std::uint32_t seq;
    std::uint32_t microseconds_per_quarter;
};

/// Piecewise tick->seconds conversion from a sorted tempo list.
class TempoMap {
public:
    TempoMap(std::vector<TempoEvent> changes, std::uint16_t division) : division_(division) {
        std::stable_sort(changes.begin(), changes.end(), [](const TempoEvent& a, const TempoEvent& b) {
            if (a.tick != b.tick) return a.tick < b.tick;
            if (a.track != b.track) return a.track < b.track;
            return a.seq < b.seq;
        });
        ticks_.push_back(0);
        tempos_.push_back(500000);  // SMF default: 120 bpm
        seconds_.push_back(0.0);
        for (const auto& c : changes) {
            double sec = seconds_.back() +
                         static_cast<double>(c.tick - ticks_.back()) * tempos_.back() /
                             (static_cast<double>(division_) * 1e6);
            if (c.tick == ticks_.back()) {
                tempos_.back() = c.microseconds_per_quarter;
            } else {
                ticks_.push_back(c.tick);
                tempos_.push_back(c.microseconds_per_quarter);
                seconds_.push_back(sec);
            }
        }
    }

    double seconds_at(std::uint64_t tick) const {
        std::size_t i = ticks_.size() - 1;
        while (ticks_[i] > tick) --i;
        return seconds_[i] + static_cast<double>(tick - ticks_[i]) * tempos_[i] /
                                 (static_cast<double>(division_) * 1e6);
    }

private:
    std::uint16_t division_;
    std::vector<std::uint64_t> ticks_;
    std::vector<std::uint32_t> tempos_;
    std::vector<double> seconds_;
};

inline void parse_track(Reader& r, std::size_t track_len, std::uint32_t track_idx,
                        std::vector<NoteEvent>& notes, std::vector<TempoEvent>& tempos) {
    const std::size_t end = r.pos + track_len;
    std::uint64_t tick = 0;
    std::uint32_t seq = 0;
    int running_status = -1;
    while (r.pos < end) {
        tick += r.vlq();
        if (r.pos >= end) throw Error(Errc::truncated_chunk, "event cut off at end of track");
        std::uint8_t first = r.data[r.pos];
        std::uint8_t status;
        if (first & 0x80) {
            status = r.u8();
        } else if (running_status >= 0) {
            status = static_cast<std::uint8_t>(running_status);
        } else {
            throw Error(Errc::truncated_chunk, "data byte with no running status");
        }

        if (status == 0xFF) {
            std::uint8_t type = r.u8();
            std::uint32_t len = r.vlq();
            if (type == 0x2F) {
                r.skip(len);
                break;
            }
            if (type == 0x51) {
                if (len != 3) throw Error(Errc::truncated_chunk, "set-tempo meta event with bad length");
                std::uint32_t us = r.u8();
                us = us << 8 | r.u8();
                us = us << 8 | r.u8();
                tempos.push_back({tick, track_idx, seq++, us});
            } else {
                r.skip(len);
            }
            running_status = -1;
        } else if (status == 0xF0 || status == 0xF7) {
            r.skip(r.vlq());
            running_status = -1;
        } else if (status >= 0x80) {
            running_status = status;
            const std::uint8_t kind = status & 0xF0;
            const std::uint8_t channel = status & 0x0F;
            const int data_bytes = (kind == 0xC0 || kind == 0xD0) ? 1 : 2;
            std::uint8_t d0 = r.u8();
            std::uint8_t d1 = data_bytes == 2 ? r.u8() : 0;
            if (kind == 0x90 && d1 > 0) {
                notes.push_back({tick, track_idx, seq++, NoteEventKind::on, channel, d0, d1});
            } else if (kind == 0x80 || (kind == 0x90 && d1 == 0)) {
                // velocity-zero note-on is a note-off by convention
                notes.push_back({tick, track_idx, seq++, NoteEventKind::off, channel, d0, d1});
            }
        } else {
            throw Error(Errc::truncated_chunk, "invalid status byte");
        }
    }
    if (r.pos > end) throw Error(Errc::truncated_chunk, "event data ran past declared track length");
    r.pos = end;
}

}  // namespace smf_detail

/// Parse an SMF byte stream into a note list. Metadata fields of the
/// returned Piece are left empty; the caller attaches them from the corpus
/// manifest. Unmatched note events are skipped and reported to `warnings`.
inline Piece parse_smf(std::span<const std::uint8_t> bytes, WarningSink* warnings = nullptr) {
    using namespace smf_detail;
    Reader r{bytes};
    if (r.remaining() < 14 || r.data[0] != 'M' || r.data[1] != 'T' || r.data[2] != 'h' ||
        r.data[3] != 'd') {
        throw Error(Errc::malformed_header, "missing MThd chunk");
    }
    r.pos = 4;
    if (r.u32be() != 6) throw Error(Errc::malformed_header, "MThd length is not 6");
    const std::uint16_t format = r.u16be();
    if (format > 1) throw Error(Errc::malformed_header, "only SMF format 0 and 1 are supported");
    const std::uint16_t ntracks = r.u16be();
    if (format == 0 && ntracks != 1)
        throw Error(Errc::malformed_header, "format 0 file must contain exactly one track");
    const std::uint16_t division = r.u16be();
    if (division & 0x8000)
        throw Error(Errc::unsupported_division, "SMPTE timecode division is not supported");
    if (division == 0) throw Error(Errc::malformed_header, "division is zero");

    std::vector<NoteEvent> note_events;
    std::vector<TempoEvent> tempo_events;
    std::uint32_t track_idx = 0;
    while (track_idx < ntracks && !r.eof()) {
        if (r.remaining() < 8) throw Error(Errc::truncated_chunk, "chunk header cut off");
        char tag[4];
        for (auto& c : tag) c = static_cast<char>(r.u8());
        std::uint32_t len = r.u32be();
        if (len > r.remaining())
            throw Error(Errc::truncated_chunk, "declared chunk length exceeds file size");
        if (std::string_view(tag, 4) == "MTrk") {
            parse_track(r, len, track_idx, note_events, tempo_events);
            ++track_idx;
        } else {
            r.skip(len);  // unknown chunk types are skipped per the standard
        }
    }
    if (track_idx < ntracks)
        throw Error(Errc::truncated_chunk, "file ends before all declared tracks");

    TempoMap tempo_map(std::move(tempo_events), division);

    // Format-1 track union: merge note events in (tick, track, order) order,
    // then match on/off FIFO per (channel, pitch).
    std::stable_sort(note_events.begin(), note_events.end(),
                     [](const NoteEvent& a, const NoteEvent& b) {
                         if (a.tick != b.tick) return a.tick < b.tick;
                         if (a.track != b.track) return a.track < b.track;
                         return a.seq < b.seq;
                     });

    struct OpenNote {
        std::uint64_t tick;
        std::uint8_t velocity;
    };
    std::map<std::pair<std::uint8_t, std::uint8_t>, std::deque<OpenNote>> open;
    Piece piece;
    for (const auto& ev : note_events) {
        auto key = std::make_pair(ev.channel, ev.pitch);
        if (ev.kind == NoteEventKind::on) {
            open[key].push_back({ev.tick, ev.velocity});
        } else {
            auto it = open.find(key);
            if (it == open.end() || it->second.empty()) {
                warn(warnings, "unmatched note-off: channel " + std::to_string(ev.channel) +
                                   " pitch " + std::to_string(ev.pitch) + " at tick " +
                                   std::to_string(ev.tick));
                continue;
            }
            OpenNote on = it->second.front();
            it->second.pop_front();
            if (ev.tick <= on.tick) {
                warn(warnings, "zero-length note skipped: pitch " + std::to_string(ev.pitch) +
                                   " at tick " + std::to_string(on.tick));
                continue;
            }
            const double onset = tempo_map.seconds_at(on.tick);
            const double offset = tempo_map.seconds_at(ev.tick);
            piece.notes.push_back({onset, offset - onset, ev.pitch, on.velocity});
        }
    }
    for (const auto& [key, queue] : open) {
        for (std::size_t i = 0; i < queue.size(); ++i) {
            warn(warnings, "note-on never closed: channel " + std::to_string(key.first) +
                               " pitch " + std::to_string(key.second));
        }
    }
    sort_notes(piece.notes);
    return piece;
}

namespace smf_detail {

inline void put_vlq(std::vector<std::uint8_t>& out, std::uint32_t v) {
    std::uint8_t stack[5];
    int n = 0;
    do {
        stack[n++] = static_cast<std::uint8_t>(v & 0x7F);
        v >>= 7;
    } while (v);
    while (n > 1) out.push_back(stack[--n] | 0x80);
    out.push_back(stack[0]);
}

}  // namespace smf_detail

/// Serialize a note list as a format-0 SMF at a fixed tempo. Offs are
/// emitted before ons at equal ticks, and every event carries an explicit
/// status byte. Inverse of parse_smf for notes on the tick grid.
inline std::vector<std::uint8_t> write_smf(const std::vector<Note>& notes,
                                           std::uint16_t division = 480,
                                           std::uint32_t tempo_us = 500000) {
    struct Ev {
        std::uint64_t tick;
        int kind;  // 0 = off, 1 = on
        std::uint8_t pitch;
        std::uint8_t velocity;
    };
    std::vector<Ev> events;
    events.reserve(notes.size() * 2);
    const double ticks_per_second = static_cast<double>(division) * 1e6 / tempo_us;
    for (const Note& n : notes) {
        auto on = static_cast<std::uint64_t>(std::llround(n.onset_seconds * ticks_per_second));
        auto off = static_cast<std::uint64_t>(
            std::llround((n.onset_seconds + n.duration_seconds) * ticks_per_second));
        if (off <= on) off = on + 1;  // keep at least one tick of length
        events.push_back({on, 1, static_cast<std::uint8_t>(n.pitch),
                          static_cast<std::uint8_t>(n.velocity)});
        events.push_back({off, 0, static_cast<std::uint8_t>(n.pitch), 0});
    }
    std::sort(events.begin(), events.end(), [](const Ev& a, const Ev& b) {
        if (a.tick != b.tick) return a.tick < b.tick;
        if (a.kind != b.kind) return a.kind < b.kind;
        if (a.pitch != b.pitch) return a.pitch < b.pitch;
        return a.velocity < b.velocity;
    });

    std::vector<std::uint8_t> track;
    using smf_detail::put_vlq;
    // tempo meta at tick 0
    put_vlq(track, 0);
    track.insert(track.end(), {0xFF, 0x51, 0x03});
    track.push_back(static_cast<std::uint8_t>(tempo_us >> 16));
    track.push_back(static_cast<std::uint8_t>(tempo_us >> 8));
    track.push_back(static_cast<std::uint8_t>(tempo_us));
    std::uint64_t last_tick = 0;
    for (const Ev& e : events) {
        put_vlq(track, static_cast<std::uint32_t>(e.tick - last_tick));
        last_tick = e.tick;
        track.push_back(e.kind == 1 ? 0x90 : 0x80);
        track.push_back(e.pitch);
        track.push_back(e.kind == 1 ? e.velocity : 0x40);
    }
    put_vlq(track, 0);
    track.insert(track.end(), {0xFF, 0x2F, 0x00});

    std::vector<std::uint8_t> out;
    auto u16 = [&](std::uint16_t v) {
        out.push_back(static_cast<std::uint8_t>(v >> 8));
        out.push_back(static_cast<std::uint8_t>(v));
    };
    auto u32 = [&](std::uint32_t v) {
        for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(v >> s));
    };
    out.insert(out.end(), {'M', 'T', 'h', 'd'});
    u32(6);
    u16(0);
    u16(1);
    u16(division);
    out.insert(out.end(), {'M', 'T', 'r', 'k'});
    u32(static_cast<std::uint32_t>(track.size()));
    out.insert(out.end(), track.begin(), track.end());
    return out;
}

}  // namespace musim
