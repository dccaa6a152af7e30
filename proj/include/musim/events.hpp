#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "musim/error.hpp"
#include "musim/note.hpp"

namespace musim {

/// Atomic performance event. TimeShift and Velocity values are 1-based bin
/// indices; NoteOn/NoteOff values are MIDI pitches.
struct PerformanceEvent {
    enum class Kind : std::uint8_t { note_on, note_off, time_shift, velocity };
    Kind kind;
    std::uint16_t value;

    friend bool operator==(const PerformanceEvent&, const PerformanceEvent&) = default;
    friend auto operator<=>(const PerformanceEvent&, const PerformanceEvent&) = default;
};

struct TokenizerConfig {
    int time_shift_bin_ms = 10;
    int max_time_shift_bins = 100;
    int velocity_bins = 32;

    /// 128 note-ons + 128 note-offs + time-shift bins + velocity bins.
    int single_event_vocab_size() const { return 256 + max_time_shift_bins + velocity_bins; }

    void validate() const {
        if (time_shift_bin_ms <= 0 || max_time_shift_bins <= 0 || velocity_bins <= 0 ||
            velocity_bins > 128)
            throw Error(Errc::bad_config, "tokenizer config fields must be positive (velocity bins at most 128)");
    }

    friend bool operator==(const TokenizerConfig&, const TokenizerConfig&) = default;
};

inline int quantize_velocity(int velocity, const TokenizerConfig& config) {
    // ceil(v * bins / 128), giving bins 1..velocity_bins for v in 1..127
    return (velocity * config.velocity_bins + 127) / 128;
}

/// Short code used in vocabulary serialization: ON_60, OFF_60, TS_50, VEL_16.
inline std::string event_code(const PerformanceEvent& e) {
    switch (e.kind) {
        case PerformanceEvent::Kind::note_on: return "ON_" + std::to_string(e.value);
        case PerformanceEvent::Kind::note_off: return "OFF_" + std::to_string(e.value);
        case PerformanceEvent::Kind::time_shift: return "TS_" + std::to_string(e.value);
        case PerformanceEvent::Kind::velocity: return "VEL_" + std::to_string(e.value);
    }
    return "?";
}

inline PerformanceEvent event_from_code(const std::string& code) {
    auto sep = code.find('_');
    if (sep == std::string::npos) throw Error(Errc::bad_field, "bad event code '" + code + "'");
    const std::string tag = code.substr(0, sep);
    int value;
    try {
        value = std::stoi(code.substr(sep + 1));
    } catch (const std::exception&) {
        throw Error(Errc::bad_field, "bad event code value '" + code + "'");
    }
    PerformanceEvent::Kind kind;
    if (tag == "ON") kind = PerformanceEvent::Kind::note_on;
    else if (tag == "OFF") kind = PerformanceEvent::Kind::note_off;
    else if (tag == "TS") kind = PerformanceEvent::Kind::time_shift;
    else if (tag == "VEL") kind = PerformanceEvent::Kind::velocity;
    else throw Error(Errc::bad_field, "bad event code tag '" + code + "'");
    if (value < 0 || value > 0xFFFF) throw Error(Errc::bad_field, "event code value out of range");
    return {kind, static_cast<std::uint16_t>(value)};
}

/// Encode a piece as a time-ordered performance-event sequence.
///
/// Event times are quantized to the time-shift grid first, then gaps are
/// emitted as greedy largest-bin-first TimeShift runs, so rounding error
/// never accumulates across a piece. At equal quantized times note-offs
/// precede note-ons, each ordered by pitch. A Velocity event is emitted
/// before a note-on only when the quantized velocity differs from the last
/// one emitted.
inline std::vector<PerformanceEvent> events_from_notes(const Piece& piece,
                                                       const TokenizerConfig& config) {
    config.validate();
    struct TimedEvent {
        std::int64_t bin_time;
        int order;  // 0 = off, 1 = on
        int pitch;
        int velocity;
    };
    const double bins_per_second = 1000.0 / config.time_shift_bin_ms;
    std::vector<TimedEvent> timed;
    timed.reserve(piece.notes.size() * 2);
    for (const Note& n : piece.notes) {
        timed.push_back({std::llround(n.onset_seconds * bins_per_second), 1, n.pitch, n.velocity});
        timed.push_back({std::llround((n.onset_seconds + n.duration_seconds) * bins_per_second), 0,
                         n.pitch, 0});
    }
    std::sort(timed.begin(), timed.end(), [](const TimedEvent& a, const TimedEvent& b) {
        if (a.bin_time != b.bin_time) return a.bin_time < b.bin_time;
        if (a.order != b.order) return a.order < b.order;
        if (a.pitch != b.pitch) return a.pitch < b.pitch;
        return a.velocity < b.velocity;
    });

    std::vector<PerformanceEvent> events;
    std::int64_t clock = 0;
    int last_velocity_bin = -1;
    for (const TimedEvent& te : timed) {
        std::int64_t gap = te.bin_time - clock;
        while (gap > 0) {
            const int step = static_cast<int>(std::min<std::int64_t>(gap, config.max_time_shift_bins));
            events.push_back({PerformanceEvent::Kind::time_shift, static_cast<std::uint16_t>(step)});
            gap -= step;
        }
        clock = te.bin_time;
        if (te.order == 1) {
            const int vbin = quantize_velocity(te.velocity, config);
            if (vbin != last_velocity_bin) {
                events.push_back({PerformanceEvent::Kind::velocity, static_cast<std::uint16_t>(vbin)});
                last_velocity_bin = vbin;
            }
            events.push_back({PerformanceEvent::Kind::note_on, static_cast<std::uint16_t>(te.pitch)});
        } else {
            events.push_back({PerformanceEvent::Kind::note_off, static_cast<std::uint16_t>(te.pitch)});
        }
    }
    return events;
}

}  // namespace musim
