#include "canids/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace canids {

namespace {

double span_max(int bit_length) { return std::ldexp(1.0, bit_length) - 1.0; }

} // namespace

std::vector<CanFrame> generate(const SynthSpec& spec) {
    if (spec.duration <= 0.0) throw std::runtime_error("synthgen: duration must be positive");
    std::vector<CanFrame> all;

    for (size_t idx = 0; idx < spec.ids.size(); ++idx) {
        const auto& id = spec.ids[idx];
        if (id.spans.size() != id.dynamics.size())
            throw std::runtime_error("synthgen: span/dynamic count mismatch");
        if (id.period <= 0.0) throw std::runtime_error("synthgen: period must be positive");
        if (id.jitter_frac < 0.0 || id.jitter_frac >= 1.0)
            throw std::runtime_error("synthgen: jitter_frac must be in [0, 1)");

        // independent stream per id so adding an id never disturbs the others
        std::mt19937_64 rng(spec.seed * 0x9E3779B97F4A7C15ull + idx + 1);
        std::uniform_real_distribution<double> jitter(-id.jitter_frac, id.jitter_frac);
        std::normal_distribution<double> gauss(0.0, 1.0);

        SignalLayout layout;
        layout.can_id = id.can_id;
        layout.spans = id.spans;

        std::vector<double> walk_state(id.spans.size());
        for (size_t s = 0; s < id.spans.size(); ++s)
            walk_state[s] = span_max(id.spans[s].bit_length) / 2.0;

        long frames = static_cast<long>(std::floor(spec.duration / id.period));
        std::vector<double> values(id.spans.size());
        for (long k = 0; k < frames; ++k) {
            CanFrame f;
            f.can_id = id.can_id;
            f.dlc = 8;
            double t = (static_cast<double>(k) + jitter(rng)) * id.period;
            f.timestamp = std::max(0.0, t);

            for (size_t s = 0; s < id.spans.size(); ++s) {
                const auto& dyn = id.dynamics[s];
                double v = 0.0;
                switch (dyn.kind) {
                    case SignalDynamic::Kind::constant:
                        v = dyn.constant_value;
                        break;
                    case SignalDynamic::Kind::counter:
                        v = static_cast<double>(k % std::max<long>(1, dyn.modulo));
                        break;
                    case SignalDynamic::Kind::sine: {
                        v = dyn.offset;
                        double tk = static_cast<double>(k) * id.period; // nominal time
                        for (const auto& c : dyn.components)
                            v += c.amplitude *
                                 std::sin(2.0 * std::numbers::pi * tk / c.period + c.phase);
                        if (dyn.noise_sigma > 0.0) v += dyn.noise_sigma * gauss(rng);
                        break;
                    }
                    case SignalDynamic::Kind::random_walk:
                        walk_state[s] += dyn.walk_sigma * gauss(rng);
                        walk_state[s] = std::clamp(walk_state[s], 0.0,
                                                   span_max(id.spans[s].bit_length));
                        v = walk_state[s];
                        break;
                }
                values[s] = std::clamp(v, 0.0, span_max(id.spans[s].bit_length));
            }
            encode_signals(values, layout, f.payload);
            all.push_back(f);
        }
    }

    std::stable_sort(all.begin(), all.end(),
                     [](const CanFrame& a, const CanFrame& b) { return a.timestamp < b.timestamp; });
    return all;
}

SynthSpec default_trace_spec(uint64_t seed) {
    SynthSpec spec;
    spec.seed = seed;
    spec.duration = 35.0;

    // main transmitter: four 8-bit signals, mixes of tones plus a counter and
    // a bounded walk, 10 ms period
    SynthId main_id;
    main_id.can_id = 0x260;
    main_id.period = 0.010;
    main_id.jitter_frac = 0.01;
    main_id.spans = {{0, 8}, {8, 8}, {16, 8}, {40, 8}};

    SignalDynamic s0;
    s0.kind = SignalDynamic::Kind::sine;
    s0.offset = 128.0;
    s0.components = {{70.0, 0.31, 0.0}, {30.0, 2.7, 1.1}};
    s0.noise_sigma = 4.0;

    SignalDynamic s1;
    s1.kind = SignalDynamic::Kind::sine;
    s1.offset = 120.0;
    s1.components = {{60.0, 0.47, 0.7}, {40.0, 3.9, 2.3}};
    s1.noise_sigma = 4.0;

    SignalDynamic s2;
    s2.kind = SignalDynamic::Kind::counter;
    s2.modulo = 256;

    SignalDynamic s3;
    s3.kind = SignalDynamic::Kind::sine;
    s3.offset = 130.0;
    s3.components = {{55.0, 0.83, 0.2}, {35.0, 5.3, 0.9}};
    s3.noise_sigma = 4.0;

    main_id.dynamics = {s0, s1, s2, s3};
    spec.ids.push_back(main_id);

    // low-information chaff: a single byte counter, should fail the signal
    // bit threshold
    SynthId chaff;
    chaff.can_id = 0x130;
    chaff.period = 0.025;
    chaff.jitter_frac = 0.01;
    chaff.spans = {{0, 8}};
    SignalDynamic c0;
    c0.kind = SignalDynamic::Kind::counter;
    c0.modulo = 256;
    chaff.dynamics = {c0};
    spec.ids.push_back(chaff);

    // aperiodic chaff: plenty of bits but hopeless timing, should fail the
    // inter-arrival stability test
    SynthId unstable;
    unstable.can_id = 0x4A0;
    unstable.period = 0.070;
    unstable.jitter_frac = 0.9;
    unstable.spans = {{0, 16}, {16, 16}};
    SignalDynamic u0;
    u0.kind = SignalDynamic::Kind::random_walk;
    u0.walk_sigma = 900.0;
    SignalDynamic u1 = u0;
    unstable.dynamics = {u0, u1};
    spec.ids.push_back(unstable);

    return spec;
}

Mat benchmark_series(int signals, long steps, double noise_sigma, uint64_t seed) {
    if (signals < 1 || steps < 1)
        throw std::runtime_error("benchmark_series: need at least one signal and one step");
    Mat series(signals, static_cast<int>(steps));
    std::mt19937_64 rng(seed ^ 0xB5297A4D3F84C2A1ull);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    for (int m = 0; m < signals; ++m) {
        // one tone the input window can resolve, one slow tone it cannot, so
        // longer horizons are genuinely harder to forecast
        double fast_period = 18.0 + 7.0 * unif(rng);   // steps
        double slow_period = 220.0 + 160.0 * unif(rng);
        double fast_amp = 0.26 + 0.06 * unif(rng);
        double slow_amp = 0.10 + 0.05 * unif(rng);
        double fast_phase = 2.0 * std::numbers::pi * unif(rng);
        double slow_phase = 2.0 * std::numbers::pi * unif(rng);
        for (long n = 0; n < steps; ++n) {
            double v = 0.5 +
                       fast_amp * std::sin(2.0 * std::numbers::pi * static_cast<double>(n) / fast_period + fast_phase) +
                       slow_amp * std::sin(2.0 * std::numbers::pi * static_cast<double>(n) / slow_period + slow_phase);
            if (noise_sigma > 0.0) v += noise_sigma * gauss(rng);
            series(m, static_cast<int>(n)) = std::clamp(v, 0.0, 1.0);
        }
    }
    return series;
}

} // namespace canids
