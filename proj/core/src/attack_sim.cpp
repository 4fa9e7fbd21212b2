#include "canids/attack_sim.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <stdexcept>

namespace canids {

namespace {

double clamp01(double v) { return std::max(0.0, std::min(1.0, v)); }

struct SignalProfile {
    double mean = 0.0, sigma = 0.0, min = 0.0, max = 0.0;
};

std::vector<SignalProfile> profile_signals(const Mat& series) {
    std::vector<SignalProfile> out(static_cast<size_t>(series.rows));
    for (int m = 0; m < series.rows; ++m) {
        const double* row = series.row(m);
        double mn = row[0], mx = row[0], sum = 0.0;
        for (int n = 0; n < series.cols; ++n) {
            mn = std::min(mn, row[n]);
            mx = std::max(mx, row[n]);
            sum += row[n];
        }
        const double mean = sum / series.cols;
        double var = 0.0;
        for (int n = 0; n < series.cols; ++n) {
            const double d = row[n] - mean;
            var += d * d;
        }
        out[static_cast<size_t>(m)] = {mean, std::sqrt(var / series.cols), mn, mx};
    }
    return out;
}

std::vector<int> resolve_targets(const AttackScenario& s, int signals) {
    std::vector<int> t = s.target_signals;
    if (t.empty()) {
        t.resize(static_cast<size_t>(signals));
        for (int i = 0; i < signals; ++i) t[static_cast<size_t>(i)] = i;
    }
    for (int i : t)
        if (i < 0 || i >= signals)
            throw std::runtime_error("inject: target signal index out of range");
    return t;
}

void validate(const Mat& series, const std::vector<uint8_t>& prior,
              const AttackScenario& s) {
    if (series.rows < 1 || series.cols < 1)
        throw std::runtime_error("inject: empty series");
    if (!prior.empty() && prior.size() != static_cast<size_t>(series.cols))
        throw std::runtime_error("inject: prior label length mismatch");
    if (s.begin < 0 || s.end > series.cols || s.begin >= s.end)
        throw std::runtime_error("inject: interval must satisfy 0 <= begin < end <= N");
    if ((s.kind == AttackKind::dos || s.kind == AttackKind::fuzzy) &&
        (s.rho <= 0.0 || s.rho > 1.0))
        throw std::runtime_error("inject: rho must be in (0, 1]");
    if (s.kind == AttackKind::replay) {
        const long len = s.end - s.begin;
        if (s.replay_src < 0 || s.replay_src + len > series.cols)
            throw std::runtime_error("inject: replay source out of range");
        if (s.replay_src < s.end && s.replay_src + len > s.begin)
            throw std::runtime_error("inject: replay source overlaps the injected interval");
    }
    if (s.kind == AttackKind::suspension && s.window < 1)
        throw std::runtime_error("inject: suspension labelling needs window >= 1");
}

// forged values for spoofing and masquerade, one column per block step
Mat spoof_payload(const Mat& series, const AttackScenario& s,
                  const std::vector<SignalProfile>& prof, const std::vector<int>& targets,
                  long block_len, std::mt19937_64& rng) {
    Mat block(series.rows, static_cast<int>(block_len));
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    for (int tgt : targets) {
        const auto& pr = prof[static_cast<size_t>(tgt)];
        double lo, hi;
        if (s.granularity == Granularity::coarse) {
            // push past the observed range, then clip to the unit bound
            double v = s.spoof_value >= 0.0 ? clamp01(s.spoof_value) : clamp01(pr.max + 0.5);
            lo = hi = v;
        } else {
            // stay near the local mean of the attacked stretch
            double local = 0.0;
            for (long n = s.begin; n < std::min<long>(s.end, series.cols); ++n)
                local += series(tgt, static_cast<int>(n));
            local /= static_cast<double>(std::min<long>(s.end, series.cols) - s.begin);
            const double d = s.delta > 0.0 ? s.delta : std::max(pr.sigma, 1e-6);
            lo = clamp01(local - d);
            hi = clamp01(local + d);
        }
        if (s.ramp) {
            // drift from the last clean value toward the forged target
            const long base_col = s.begin > 0 ? s.begin - 1 : 0;
            const double start = clamp01(series(tgt, static_cast<int>(base_col)));
            const double target = hi;
            for (long j = 0; j < block_len; ++j) {
                const double f = block_len > 1 ? static_cast<double>(j) / (block_len - 1) : 1.0;
                block(tgt, static_cast<int>(j)) = start + f * (target - start);
            }
        } else {
            const double v = lo == hi ? lo : lo + unif(rng) * (hi - lo);
            for (long j = 0; j < block_len; ++j) block(tgt, static_cast<int>(j)) = v;
        }
    }
    return block;
}

} // namespace

const char* to_string(AttackKind k) {
    switch (k) {
        case AttackKind::dos: return "dos";
        case AttackKind::fuzzy: return "fuzzy";
        case AttackKind::suspension: return "suspension";
        case AttackKind::replay: return "replay";
        case AttackKind::spoofing: return "spoofing";
        case AttackKind::masquerade: return "masquerade";
    }
    return "?";
}

const char* to_string(Granularity g) {
    return g == Granularity::coarse ? "coarse" : "fine";
}

AttackKind attack_kind_from_string(const std::string& s) {
    if (s == "dos") return AttackKind::dos;
    if (s == "fuzzy") return AttackKind::fuzzy;
    if (s == "suspension") return AttackKind::suspension;
    if (s == "replay") return AttackKind::replay;
    if (s == "spoofing") return AttackKind::spoofing;
    if (s == "masquerade") return AttackKind::masquerade;
    throw std::runtime_error("unknown attack kind: " + s);
}

Granularity granularity_from_string(const std::string& s) {
    if (s == "coarse") return Granularity::coarse;
    if (s == "fine") return Granularity::fine;
    throw std::runtime_error("unknown granularity: " + s);
}

InjectResult inject(const Mat& series, const AttackScenario& scenario) {
    return inject(series, {}, scenario);
}

InjectResult inject(const Mat& series, const std::vector<uint8_t>& prior_labels,
                    const AttackScenario& s) {
    validate(series, prior_labels, s);
    const int M = series.rows;
    const long N = series.cols;
    auto prior = [&](long n) -> uint8_t {
        return prior_labels.empty() ? 0 : prior_labels[static_cast<size_t>(n)];
    };

    std::mt19937_64 rng(s.seed ^ 0x494E4A4543ull);
    const auto prof = profile_signals(series);
    const auto targets = resolve_targets(s, M);

    InjectResult out;

    switch (s.kind) {
        case AttackKind::dos:
        case AttackKind::fuzzy: {
            const long span = s.end - s.begin;
            const long count = std::llround(s.rho * static_cast<double>(span));
            std::vector<long> offsets;
            offsets.reserve(static_cast<size_t>(span));
            for (long n = s.begin; n < s.end; ++n) offsets.push_back(n);
            std::shuffle(offsets.begin(), offsets.end(), rng);
            offsets.resize(static_cast<size_t>(std::min(count, span)));
            std::sort(offsets.begin(), offsets.end());

            out.series.resize(M, static_cast<int>(N + static_cast<long>(offsets.size())));
            out.labels.reserve(out.series.cols);
            std::uniform_real_distribution<double> unif(0.0, 1.0);

            size_t next = 0;
            int w = 0;
            for (long n = 0; n < N; ++n) {
                while (next < offsets.size() && offsets[next] == n) {
                    // forge one flooded/fuzzed step in front of the real one
                    for (int m = 0; m < M; ++m)
                        out.series(m, w) = n > 0 ? series(m, static_cast<int>(n - 1))
                                                 : series(m, 0);
                    for (int tgt : targets) {
                        double v;
                        if (s.kind == AttackKind::dos) {
                            v = s.granularity == Granularity::coarse
                                    ? 0.0
                                    : prof[static_cast<size_t>(tgt)].min;
                        } else {
                            if (s.granularity == Granularity::coarse) {
                                v = unif(rng);
                            } else {
                                const auto& pr = prof[static_cast<size_t>(tgt)];
                                const double lo = clamp01(pr.mean - pr.sigma);
                                const double hi = clamp01(pr.mean + pr.sigma);
                                v = lo + unif(rng) * (hi - lo);
                            }
                        }
                        out.series(tgt, w) = v;
                    }
                    out.labels.push_back(1);
                    ++w;
                    ++next;
                }
                for (int m = 0; m < M; ++m) out.series(m, w) = series(m, static_cast<int>(n));
                out.labels.push_back(prior(n));
                ++w;
            }
            break;
        }

        case AttackKind::suspension: {
            const long removed = s.end - s.begin;
            out.series.resize(M, static_cast<int>(N - removed));
            out.labels.assign(static_cast<size_t>(N - removed), 0);
            int w = 0;
            for (long n = 0; n < N; ++n) {
                if (n >= s.begin && n < s.end) continue;
                for (int m = 0; m < M; ++m) out.series(m, w) = series(m, static_cast<int>(n));
                out.labels[static_cast<size_t>(w)] = prior(n);
                ++w;
            }
            // the silent gap is only observable in the frames that follow it
            for (long n = s.begin; n < std::min<long>(s.begin + s.window, N - removed); ++n)
                out.labels[static_cast<size_t>(n)] = 1;
            break;
        }

        case AttackKind::replay:
        case AttackKind::spoofing: {
            const long len = s.end - s.begin;
            Mat block;
            if (s.kind == AttackKind::replay) {
                block.resize(M, static_cast<int>(len));
                for (int m = 0; m < M; ++m)
                    for (long j = 0; j < len; ++j)
                        block(m, static_cast<int>(j)) =
                            series(m, static_cast<int>(s.replay_src + j));
            } else {
                // non-target signals freeze at the last clean value
                block.resize(M, static_cast<int>(len));
                const long base = s.begin > 0 ? s.begin - 1 : 0;
                for (int m = 0; m < M; ++m)
                    for (long j = 0; j < len; ++j)
                        block(m, static_cast<int>(j)) = series(m, static_cast<int>(base));
                Mat forged = spoof_payload(series, s, prof, targets, len, rng);
                for (int tgt : targets)
                    for (long j = 0; j < len; ++j)
                        block(tgt, static_cast<int>(j)) = forged(tgt, static_cast<int>(j));
            }

            out.series.resize(M, static_cast<int>(N + len));
            out.labels.assign(static_cast<size_t>(N + len), 0);
            int w = 0;
            for (long n = 0; n < s.begin; ++n, ++w) {
                for (int m = 0; m < M; ++m) out.series(m, w) = series(m, static_cast<int>(n));
                out.labels[static_cast<size_t>(w)] = prior(n);
            }
            for (long j = 0; j < len; ++j, ++w) {
                for (int m = 0; m < M; ++m) out.series(m, w) = block(m, static_cast<int>(j));
                out.labels[static_cast<size_t>(w)] = 1;
            }
            for (long n = s.begin; n < N; ++n, ++w) {
                for (int m = 0; m < M; ++m) out.series(m, w) = series(m, static_cast<int>(n));
                out.labels[static_cast<size_t>(w)] = prior(n);
            }
            break;
        }

        case AttackKind::masquerade: {
            const long len = s.end - s.begin;
            Mat forged = spoof_payload(series, s, prof, targets, len, rng);
            out.series = series;
            out.labels.assign(static_cast<size_t>(N), 0);
            for (long n = 0; n < N; ++n) out.labels[static_cast<size_t>(n)] = prior(n);
            for (long j = 0; j < len; ++j) {
                for (int tgt : targets)
                    out.series(tgt, static_cast<int>(s.begin + j)) =
                        forged(tgt, static_cast<int>(j));
                out.labels[static_cast<size_t>(s.begin + j)] = 1;
            }
            break;
        }
    }
    return out;
}

std::vector<uint8_t> label_windows(const std::vector<uint8_t>& step_labels, int T, int L) {
    if (T < 1 || L < 1) throw std::runtime_error("label_windows: T and L must be >= 1");
    const long N = static_cast<long>(step_labels.size());
    const long span = T + L;
    if (N < span) return {};
    // prefix sums make each window an O(1) range query
    std::vector<long> pref(static_cast<size_t>(N + 1), 0);
    for (long n = 0; n < N; ++n)
        pref[static_cast<size_t>(n + 1)] =
            pref[static_cast<size_t>(n)] + (step_labels[static_cast<size_t>(n)] ? 1 : 0);
    std::vector<uint8_t> out(static_cast<size_t>(N - span + 1));
    for (long k = 0; k + span <= N; ++k)
        out[static_cast<size_t>(k)] =
            pref[static_cast<size_t>(k + span)] - pref[static_cast<size_t>(k)] > 0 ? 1 : 0;
    return out;
}

std::string scenario_to_record(const AttackScenario& s) {
    std::ostringstream out;
    out.precision(17); // doubles survive the round trip
    out << "kind=" << to_string(s.kind) << " granularity=" << to_string(s.granularity)
        << " begin=" << s.begin << " end=" << s.end << " rho=" << s.rho
        << " replay_src=" << s.replay_src << " spoof_value=" << s.spoof_value
        << " delta=" << s.delta << " ramp=" << (s.ramp ? 1 : 0) << " window=" << s.window
        << " seed=" << s.seed;
    if (!s.target_signals.empty()) {
        out << " targets=";
        for (size_t i = 0; i < s.target_signals.size(); ++i) {
            if (i) out << ';';
            out << s.target_signals[i];
        }
    }
    return out.str();
}

AttackScenario scenario_from_record(const std::string& record) {
    AttackScenario s;
    std::istringstream in(record);
    std::string tok;
    while (in >> tok) {
        const auto eq = tok.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("scenario record: expected key=value, got '" + tok + "'");
        const std::string key = tok.substr(0, eq);
        const std::string val = tok.substr(eq + 1);
        static const std::string known[] = {"kind", "granularity", "begin", "end",
                                            "rho", "replay_src", "spoof_value", "delta",
                                            "ramp", "window", "seed", "targets"};
        if (std::find(std::begin(known), std::end(known), key) == std::end(known))
            throw std::runtime_error("scenario record: unknown key '" + key + "'");
        try {
            if (key == "kind") s.kind = attack_kind_from_string(val);
            else if (key == "granularity") s.granularity = granularity_from_string(val);
            else if (key == "begin") s.begin = std::stol(val);
            else if (key == "end") s.end = std::stol(val);
            else if (key == "rho") s.rho = std::stod(val);
            else if (key == "replay_src") s.replay_src = std::stol(val);
            else if (key == "spoof_value") s.spoof_value = std::stod(val);
            else if (key == "delta") s.delta = std::stod(val);
            else if (key == "ramp") s.ramp = std::stoi(val) != 0;
            else if (key == "window") s.window = std::stoi(val);
            else if (key == "seed") s.seed = std::stoull(val);
            else if (key == "targets") {
                s.target_signals.clear();
                std::istringstream ts(val);
                std::string part;
                while (std::getline(ts, part, ';'))
                    if (!part.empty()) s.target_signals.push_back(std::stoi(part));
            }
        } catch (const std::exception&) {
            throw std::runtime_error("scenario record: bad value for '" + key + "'");
        }
    }
    return s;
}

} // namespace canids
