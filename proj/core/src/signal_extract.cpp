#include "canids/signal_extract.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace canids {

namespace {

// floor(log_base(rate)) with a small nudge so rates that are exact powers of
// the base (0.01 and friends) do not land one bucket low from rounding.
int magnitude(double rate, double base) {
    return static_cast<int>(std::floor(std::log(rate) / std::log(base) + 1e-9));
}

double span_max_value(int bit_length) {
    return std::ldexp(1.0, bit_length) - 1.0; // 2^len - 1
}

} // namespace

BitFlipProfile bit_flip_rates(const std::vector<CanFrame>& frames) {
    if (frames.size() < 2)
        throw std::runtime_error("bit_flip_rates: need at least 2 frames");
    BitFlipProfile prof;
    prof.can_id = frames.front().can_id;
    prof.frame_count = frames.size();

    std::array<long, 64> flips{};
    for (size_t i = 1; i < frames.size(); ++i) {
        if (frames[i].can_id != prof.can_id)
            throw std::runtime_error("bit_flip_rates: mixed can ids in batch");
        for (int b = 0; b < 64; ++b)
            flips[static_cast<size_t>(b)] +=
                payload_bit(frames[i - 1].payload, b) != payload_bit(frames[i].payload, b);
    }
    const double denom = static_cast<double>(frames.size() - 1);
    for (int b = 0; b < 64; ++b)
        prof.rates[static_cast<size_t>(b)] = static_cast<double>(flips[static_cast<size_t>(b)]) / denom;
    return prof;
}

SignalLayout find_boundaries(const BitFlipProfile& profile, const BoundaryOptions& opts) {
    SignalLayout layout;
    layout.can_id = profile.can_id;

    auto emit = [&](int start, int end) { // [start, end)
        if (end - start >= opts.min_signal_bits)
            layout.spans.push_back({start, end - start});
    };

    int run_start = -1;
    int prev_mag = 0;
    for (int b = 0; b <= 64; ++b) {
        bool active = b < 64 && profile.rates[static_cast<size_t>(b)] > 0.0;
        if (!active) {
            if (run_start >= 0) emit(run_start, b);
            run_start = -1;
            continue;
        }
        int mag = magnitude(profile.rates[static_cast<size_t>(b)], opts.magnitude_base);
        if (run_start < 0) {
            run_start = b;
        } else if (mag < prev_mag) {
            // rate dropped by an order of magnitude: the previous signal's
            // LSB churn ended and a new value's high bit begins here
            emit(run_start, b);
            run_start = b;
        }
        prev_mag = mag;
    }
    layout.stats.assign(layout.spans.size(), SignalStats{});
    return layout;
}

std::vector<double> decode_signals(const CanFrame& frame, const SignalLayout& layout) {
    std::vector<double> out;
    out.reserve(layout.spans.size());
    for (const auto& s : layout.spans) {
        if (s.start_bit < 0 || s.bit_length <= 0 || s.start_bit + s.bit_length > 64)
            throw std::runtime_error("decode_signals: span leaves the 64-bit payload");
        uint64_t v = 0;
        for (int b = s.start_bit; b < s.start_bit + s.bit_length; ++b)
            v = (v << 1) | static_cast<uint64_t>(payload_bit(frame.payload, b));
        out.push_back(static_cast<double>(v));
    }
    return out;
}

void encode_signals(std::span<const double> values, const SignalLayout& layout,
                    std::array<uint8_t, 8>& payload) {
    if (values.size() != layout.spans.size())
        throw std::runtime_error("encode_signals: value count != span count");
    for (size_t i = 0; i < values.size(); ++i) {
        const auto& s = layout.spans[i];
        if (s.start_bit < 0 || s.bit_length <= 0 || s.start_bit + s.bit_length > 64)
            throw std::runtime_error("encode_signals: span leaves the 64-bit payload");
        double clamped = std::max(0.0, std::min(values[i], span_max_value(s.bit_length)));
        auto v = static_cast<uint64_t>(std::llround(clamped));
        for (int k = 0; k < s.bit_length; ++k) {
            int bit = s.start_bit + s.bit_length - 1 - k;
            set_payload_bit(payload, bit, static_cast<int>((v >> k) & 1u));
        }
    }
}

void compute_layout_stats(const std::vector<CanFrame>& frames, SignalLayout& layout) {
    layout.stats.assign(layout.spans.size(), SignalStats{});
    bool first = true;
    for (const auto& f : frames) {
        auto vals = decode_signals(f, layout);
        for (size_t i = 0; i < vals.size(); ++i) {
            if (first) {
                layout.stats[i].min = layout.stats[i].max = vals[i];
            } else {
                layout.stats[i].min = std::min(layout.stats[i].min, vals[i]);
                layout.stats[i].max = std::max(layout.stats[i].max, vals[i]);
            }
        }
        first = false;
    }
}

Mat decode_series(const std::vector<CanFrame>& frames, const SignalLayout& layout) {
    Mat series(static_cast<int>(layout.spans.size()), static_cast<int>(frames.size()));
    for (size_t n = 0; n < frames.size(); ++n) {
        auto vals = decode_signals(frames[n], layout);
        for (size_t m = 0; m < vals.size(); ++m)
            series(static_cast<int>(m), static_cast<int>(n)) = vals[m];
    }
    return series;
}

std::vector<uint16_t> select_candidate_ids(
    const std::map<uint16_t, std::vector<CanFrame>>& grouped,
    const std::map<uint16_t, SignalLayout>& layouts,
    const SelectionOptions& opts) {
    std::vector<uint16_t> out;
    for (const auto& [id, frames] : grouped) {
        auto it = layouts.find(id);
        if (it == layouts.end()) continue;

        int total_bits = 0;
        for (const auto& s : it->second.spans) total_bits += s.bit_length;
        if (total_bits <= opts.min_total_bits) continue;

        if (frames.size() < 3) continue;
        double mean = 0.0;
        for (size_t i = 1; i < frames.size(); ++i)
            mean += frames[i].timestamp - frames[i - 1].timestamp;
        const double n = static_cast<double>(frames.size() - 1);
        mean /= n;
        if (mean <= 0.0) continue;
        double var = 0.0;
        for (size_t i = 1; i < frames.size(); ++i) {
            double d = (frames[i].timestamp - frames[i - 1].timestamp) - mean;
            var += d * d;
        }
        double cv = std::sqrt(var / n) / mean;
        if (cv < opts.cv_max) out.push_back(id);
    }
    return out;
}

void save_layouts(const std::filesystem::path& path,
                  const std::map<uint16_t, SignalLayout>& layouts) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write layout manifest: " + path.string());
    out << "# canids layout v1\n";
    char buf[96];
    for (const auto& [id, layout] : layouts) {
        std::snprintf(buf, sizeof(buf), "id %03X signals %zu\n", id, layout.spans.size());
        out << buf;
        for (size_t i = 0; i < layout.spans.size(); ++i) {
            SignalStats st = i < layout.stats.size() ? layout.stats[i] : SignalStats{};
            std::snprintf(buf, sizeof(buf), "  signal start %d len %d min %.17g max %.17g\n",
                          layout.spans[i].start_bit, layout.spans[i].bit_length, st.min, st.max);
            out << buf;
        }
    }
}

std::map<uint16_t, SignalLayout> load_layouts(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open layout manifest: " + path.string());
    std::map<uint16_t, SignalLayout> out;
    std::string line;
    SignalLayout* cur = nullptr;
    long line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::istringstream ss(line);
        std::string tok;
        ss >> tok;
        if (tok.empty() || tok[0] == '#') continue;
        if (tok == "id") {
            std::string hex;
            size_t count = 0;
            std::string kw;
            ss >> hex >> kw >> count;
            if (!ss || kw != "signals")
                throw std::runtime_error("layout manifest: bad id line " + std::to_string(line_no));
            auto id = static_cast<uint16_t>(std::stoul(hex, nullptr, 16));
            cur = &out[id];
            cur->can_id = id;
            cur->spans.reserve(count);
        } else if (tok == "signal") {
            if (!cur)
                throw std::runtime_error("layout manifest: signal before id, line " + std::to_string(line_no));
            std::string k1, k2, k3, k4;
            SignalSpan span;
            SignalStats st;
            ss >> k1 >> span.start_bit >> k2 >> span.bit_length >> k3 >> st.min >> k4 >> st.max;
            if (!ss || k1 != "start" || k2 != "len" || k3 != "min" || k4 != "max")
                throw std::runtime_error("layout manifest: bad signal line " + std::to_string(line_no));
            cur->spans.push_back(span);
            cur->stats.push_back(st);
        } else {
            throw std::runtime_error("layout manifest: unknown token '" + tok + "' line " +
                                     std::to_string(line_no));
        }
    }
    return out;
}

} // namespace canids
