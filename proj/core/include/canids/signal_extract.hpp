#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <vector>

#include "canids/frame.hpp"
#include "canids/mat.hpp"

namespace canids {

// Payload bit addressing used throughout: bit 0 is the MSB of DATA[0],
// bit 63 the LSB of DATA[7]. Frames shorter than 8 bytes are treated as
// zero padded.
inline int payload_bit(const std::array<uint8_t, 8>& p, int bit) {
    return (p[static_cast<size_t>(bit >> 3)] >> (7 - (bit & 7))) & 1;
}

inline void set_payload_bit(std::array<uint8_t, 8>& p, int bit, int value) {
    uint8_t mask = static_cast<uint8_t>(1u << (7 - (bit & 7)));
    if (value)
        p[static_cast<size_t>(bit >> 3)] |= mask;
    else
        p[static_cast<size_t>(bit >> 3)] &= static_cast<uint8_t>(~mask);
}

// Fraction of consecutive-frame transitions where each payload bit toggled.
struct BitFlipProfile {
    uint16_t can_id = 0;
    size_t frame_count = 0;
    std::array<double, 64> rates{};
};

struct SignalSpan {
    int start_bit = 0;
    int bit_length = 0;
};

struct SignalStats {
    double min = 0.0;
    double max = 0.0;
};

// Recovered per-id payload structure: which bit ranges behave like physical
// signals, plus observed value ranges for scaling.
struct SignalLayout {
    uint16_t can_id = 0;
    std::vector<SignalSpan> spans;
    std::vector<SignalStats> stats; // same length as spans once computed
};

struct BoundaryOptions {
    double magnitude_base = 10.0; // log base for the flip-rate magnitude
    int min_signal_bits = 1;      // runs shorter than this are dropped
};

struct SelectionOptions {
    int min_total_bits = 15; // keep ids with strictly more signal bits
    double cv_max = 0.1;     // keep ids whose inter-arrival cv is below this
};

// rate(b) = flips(b) / (n - 1) over consecutive frames of one id.
// Requires at least 2 frames and a uniform id across the batch.
BitFlipProfile bit_flip_rates(const std::vector<CanFrame>& frames_same_id);

// Split the 64-bit payload into signal spans. Bits that never flip are
// excluded. Inside a run of active bits, a drop in floor(log_base(rate))
// from one bit to the next starts a new signal: within one physical value
// the flip rate only grows toward the LSB, so a drop marks a boundary.
SignalLayout find_boundaries(const BitFlipProfile& profile, const BoundaryOptions& opts = {});

// Unsigned big-endian decode of each span. Throws if a span leaves the
// 64-bit payload.
std::vector<double> decode_signals(const CanFrame& frame, const SignalLayout& layout);

// Inverse of decode_signals for synthetic payloads: writes each value into
// its span (values are clamped to the span's unsigned range), leaves other
// bits untouched.
void encode_signals(std::span<const double> values, const SignalLayout& layout,
                    std::array<uint8_t, 8>& payload);

// Fill layout.stats with per-signal min/max observed across frames.
void compute_layout_stats(const std::vector<CanFrame>& frames, SignalLayout& layout);

// Decode every frame of one id into an M x N series (signal x time).
Mat decode_series(const std::vector<CanFrame>& frames, const SignalLayout& layout);

// Keep ids that carry enough signal bits and transmit at a stable period:
// total bits > min_total_bits and coefficient of variation of inter-arrival
// times < cv_max. Ids with fewer than 3 frames are rejected.
std::vector<uint16_t> select_candidate_ids(
    const std::map<uint16_t, std::vector<CanFrame>>& grouped,
    const std::map<uint16_t, SignalLayout>& layouts,
    const SelectionOptions& opts = {});

// Plain-text layout manifest. Floats are printed with enough digits to
// round-trip bit exactly.
void save_layouts(const std::filesystem::path& path,
                  const std::map<uint16_t, SignalLayout>& layouts);
std::map<uint16_t, SignalLayout> load_layouts(const std::filesystem::path& path);

} // namespace canids
