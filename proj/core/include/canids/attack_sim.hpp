#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "canids/mat.hpp"

namespace canids {

// Six attack behaviours injected into the normalized decoded-signal stream.
// Granularity picks between a blatant variant (coarse) and one that stays
// near the normal value distribution (fine).
enum class AttackKind { dos, fuzzy, suspension, replay, spoofing, masquerade };
enum class Granularity { coarse, fine };

const char* to_string(AttackKind k);
const char* to_string(Granularity g);
AttackKind attack_kind_from_string(const std::string& s);
Granularity granularity_from_string(const std::string& s);

struct AttackScenario {
    AttackKind kind = AttackKind::dos;
    Granularity granularity = Granularity::coarse;
    long begin = 0; // attacked interval [begin, end) in current stream steps
    long end = 0;
    double rho = 0.5;        // dos/fuzzy: injected steps per interval step
    long replay_src = 0;     // replay: start of the copied clean segment
    double spoof_value = -1.0; // spoofing/masquerade: forged constant; < 0 derives one
    double delta = 0.0;        // fine spoofing/masquerade: half-width around the local mean; 0 = 1 sigma
    bool ramp = false;         // spoofing: ramp toward the forged value instead of holding it
    std::vector<int> target_signals; // empty = all signals
    int window = 16;           // T, used by suspension labelling
    uint64_t seed = 0;
};

struct InjectResult {
    Mat series;                  // M x N' post-injection stream
    std::vector<uint8_t> labels; // N' step labels, 1 = attack
};

// Apply one scenario to a clean stream. Insert kinds lengthen the stream,
// suspension shortens it, masquerade keeps the length. Steps untouched by the
// attack keep their exact values.
InjectResult inject(const Mat& series, const AttackScenario& scenario);

// Same, but steps already labelled in prior_labels stay labelled (shifted to
// their new positions). Lets callers chain several scenarios on one stream.
InjectResult inject(const Mat& series, const std::vector<uint8_t>& prior_labels,
                    const AttackScenario& scenario);

// Window k is anomalous iff any step in [k, k + T + L) is labelled.
std::vector<uint8_t> label_windows(const std::vector<uint8_t>& step_labels, int T, int L);

// One-line text record, e.g. "kind=dos granularity=coarse begin=100 end=200
// rho=0.5 seed=7". Round-trips through scenario_from_record.
std::string scenario_to_record(const AttackScenario& s);
AttackScenario scenario_from_record(const std::string& record);

} // namespace canids
