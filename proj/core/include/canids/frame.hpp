#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace canids {

// One CAN frame as it appears on a standard (11-bit id) bus.
struct CanFrame {
    double timestamp = 0.0;          // seconds
    uint16_t can_id = 0;             // 0x000 .. 0x7FF
    uint8_t dlc = 0;                 // 0 .. 8, number of valid payload bytes
    std::array<uint8_t, 8> payload{};
    std::optional<std::string> label; // optional ground-truth tag (kept verbatim)

    bool operator==(const CanFrame& o) const {
        return timestamp == o.timestamp && can_id == o.can_id && dlc == o.dlc &&
               payload == o.payload && label == o.label;
    }
};

// Column indices for CSV traces. Defaults match the common capture layout
// (timestamp, id, dlc, 8 data bytes, optional flag). Payload bytes occupy
// `dlc` consecutive columns starting at `data0`. A negative label index or a
// missing trailing field means "no label".
struct ColumnMap {
    int timestamp = 0;
    int can_id = 1;
    int dlc = 2;
    int data0 = 3;
    int label = 11;
};

class ParseError : public std::runtime_error {
  public:
    explicit ParseError(const std::string& msg) : std::runtime_error(msg) {}
};

// Parse one CSV record. line_no is only used for error messages.
CanFrame parse_csv_line(std::string_view line, const ColumnMap& map = {}, long line_no = 0);

// Parse one candump log record, e.g. "(1645.000100) can0 260#0521680921210060".
CanFrame parse_candump_line(std::string_view line, long line_no = 0);

// Canonical CSV export: timestamp, 3-digit hex id, dlc, 8 hex bytes (zero
// padded past dlc), label. Parsing the emitted line yields the same frame.
std::string to_csv_line(const CanFrame& f);
std::string to_candump_line(const CanFrame& f, std::string_view iface = "can0");

// Split a trace per arbitration id, preserving arrival order inside each id.
std::map<uint16_t, std::vector<CanFrame>> group_by_id(const std::vector<CanFrame>& frames);

// Read a whole trace. Sniffs candump vs CSV from the first record and skips a
// CSV header row when one is present. Errors carry the 1-based line number.
std::vector<CanFrame> read_trace(const std::filesystem::path& path, const ColumnMap& map = {});

void write_trace_csv(const std::filesystem::path& path, const std::vector<CanFrame>& frames);

} // namespace canids
