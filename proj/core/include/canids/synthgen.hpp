#pragma once

#include <cstdint>
#include <vector>

#include "canids/frame.hpp"
#include "canids/mat.hpp"
#include "canids/signal_extract.hpp"

namespace canids {

// How one synthetic signal evolves frame to frame, in raw counter units of
// its bit span.
struct SineComponent {
    double amplitude = 0.0;
    double period = 1.0; // seconds
    double phase = 0.0;  // radians
};

struct SignalDynamic {
    enum class Kind { constant, counter, sine, random_walk };
    Kind kind = Kind::sine;

    double constant_value = 0.0;          // constant
    long modulo = 256;                    // counter: frame index mod modulo
    double offset = 0.0;                  // sine: center value
    std::vector<SineComponent> components; // sine: summed components
    double noise_sigma = 0.0;             // sine: gaussian jitter on the value
    double walk_sigma = 1.0;              // random_walk: per-step deviation
};

// One synthetic transmitter: a fixed period with bounded jitter and a signal
// per payload span.
struct SynthId {
    uint16_t can_id = 0;
    double period = 0.010;    // seconds between frames
    double jitter_frac = 0.01; // uniform timing jitter as a fraction of period
    std::vector<SignalSpan> spans;
    std::vector<SignalDynamic> dynamics; // one per span
};

struct SynthSpec {
    std::vector<SynthId> ids;
    double duration = 10.0; // seconds
    uint64_t seed = 0;
};

// Deterministic trace synthesis: same spec, same frames. Frames of all ids
// are merged in timestamp order.
std::vector<CanFrame> generate(const SynthSpec& spec);

// The trace the default pipeline configuration runs on: one rich periodic id
// that passes candidate selection plus two that should be filtered out
// (too few signal bits, unstable timing). Roughly 5k frames.
SynthSpec default_trace_spec(uint64_t seed = 0);

// Benchmark series used by the training tests: M signals in [0, 1], each a
// two-tone sine mixture plus gaussian noise, sampled once per step.
Mat benchmark_series(int signals, long steps, double noise_sigma, uint64_t seed);

} // namespace canids
