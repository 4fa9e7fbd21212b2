#include "canids/frame.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <fstream>

namespace canids {

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

std::vector<std::string_view> split_csv(std::string_view line) {
    std::vector<std::string_view> out;
    size_t start = 0;
    for (size_t i = 0; i <= line.size(); ++i) {
        if (i == line.size() || line[i] == ',') {
            out.push_back(trim(line.substr(start, i - start)));
            start = i + 1;
        }
    }
    return out;
}

[[noreturn]] void fail(long line_no, const std::string& field, const std::string& what) {
    throw ParseError("line " + std::to_string(line_no) + ": field '" + field + "': " + what);
}

bool parse_double(std::string_view s, double& out) {
    if (s.empty()) return false;
    char buf[64];
    if (s.size() >= sizeof(buf)) return false;
    std::copy(s.begin(), s.end(), buf);
    buf[s.size()] = '\0';
    char* end = nullptr;
    out = std::strtod(buf, &end);
    return end == buf + s.size();
}

bool parse_hex(std::string_view s, unsigned long& out) {
    if (s.size() >= 2 && (s[1] == 'x' || s[1] == 'X') && s[0] == '0') s.remove_prefix(2);
    if (s.empty()) return false;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out, 16);
    return ec == std::errc() && ptr == s.data() + s.size();
}

bool parse_uint(std::string_view s, unsigned long& out) {
    if (s.empty()) return false;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out, 10);
    return ec == std::errc() && ptr == s.data() + s.size();
}

} // namespace

CanFrame parse_csv_line(std::string_view line, const ColumnMap& map, long line_no) {
    auto fields = split_csv(line);
    CanFrame f;

    auto need = [&](int idx, const char* name) -> std::string_view {
        if (idx < 0 || static_cast<size_t>(idx) >= fields.size())
            fail(line_no, name, "missing column " + std::to_string(idx));
        return fields[static_cast<size_t>(idx)];
    };

    if (!parse_double(need(map.timestamp, "timestamp"), f.timestamp))
        fail(line_no, "timestamp", "not a number");

    unsigned long id = 0;
    if (!parse_hex(need(map.can_id, "can_id"), id))
        fail(line_no, "can_id", "not a hex id");
    if (id > 0x7FF)
        fail(line_no, "can_id", "id out of 11-bit range");
    f.can_id = static_cast<uint16_t>(id);

    unsigned long dlc = 0;
    if (!parse_uint(need(map.dlc, "dlc"), dlc))
        fail(line_no, "dlc", "not a number");
    if (dlc > 8)
        fail(line_no, "dlc", "dlc > 8");
    f.dlc = static_cast<uint8_t>(dlc);

    for (unsigned i = 0; i < f.dlc; ++i) {
        std::string name = "data" + std::to_string(i);
        unsigned long byte = 0;
        if (!parse_hex(need(map.data0 + static_cast<int>(i), name.c_str()), byte))
            fail(line_no, name, "not a hex byte");
        if (byte > 0xFF)
            fail(line_no, name, "byte out of range");
        f.payload[i] = static_cast<uint8_t>(byte);
    }

    if (map.label >= 0 && static_cast<size_t>(map.label) < fields.size()) {
        auto tag = fields[static_cast<size_t>(map.label)];
        if (!tag.empty()) f.label = std::string(tag);
    }
    return f;
}

CanFrame parse_candump_line(std::string_view line, long line_no) {
    std::string_view s = trim(line);
    if (s.empty() || s.front() != '(')
        fail(line_no, "timestamp", "expected '(' at start of candump record");
    size_t close = s.find(')');
    if (close == std::string_view::npos)
        fail(line_no, "timestamp", "unterminated '('");

    CanFrame f;
    if (!parse_double(trim(s.substr(1, close - 1)), f.timestamp))
        fail(line_no, "timestamp", "not a number");

    s = trim(s.substr(close + 1));
    size_t sp = s.find_first_of(" \t");
    if (sp == std::string_view::npos)
        fail(line_no, "frame", "missing interface or frame field");
    s = trim(s.substr(sp + 1)); // drop the interface name

    size_t hash = s.find('#');
    if (hash == std::string_view::npos)
        fail(line_no, "frame", "missing '#' separator");
    // keep only id#payload even if trailing columns follow
    size_t end = s.find_first_of(" \t", hash);
    if (end != std::string_view::npos) s = s.substr(0, end);

    unsigned long id = 0;
    if (!parse_hex(s.substr(0, hash), id))
        fail(line_no, "can_id", "not a hex id");
    if (id > 0x7FF)
        fail(line_no, "can_id", "id out of 11-bit range");
    f.can_id = static_cast<uint16_t>(id);

    std::string_view hex = s.substr(hash + 1);
    if (hex.size() % 2 != 0)
        fail(line_no, "payload", "odd hex digit count");
    if (hex.size() / 2 > 8)
        fail(line_no, "payload", "more than 8 bytes");
    f.dlc = static_cast<uint8_t>(hex.size() / 2);
    for (unsigned i = 0; i < f.dlc; ++i) {
        unsigned long byte = 0;
        if (!parse_hex(hex.substr(2 * i, 2), byte))
            fail(line_no, "payload", "not a hex byte");
        f.payload[i] = static_cast<uint8_t>(byte);
    }
    return f;
}

std::string to_csv_line(const CanFrame& f) {
    char buf[160];
    int n = std::snprintf(buf, sizeof(buf), "%.6f,%03X,%u", f.timestamp, f.can_id, f.dlc);
    std::string out(buf, static_cast<size_t>(n));
    for (int i = 0; i < 8; ++i) {
        std::snprintf(buf, sizeof(buf), ",%02X", i < f.dlc ? f.payload[i] : 0);
        out += buf;
    }
    out += ',';
    if (f.label) out += *f.label;
    return out;
}

std::string to_candump_line(const CanFrame& f, std::string_view iface) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "(%.6f) ", f.timestamp);
    std::string out = buf;
    out += iface;
    std::snprintf(buf, sizeof(buf), " %03X#", f.can_id);
    out += buf;
    for (unsigned i = 0; i < f.dlc; ++i) {
        std::snprintf(buf, sizeof(buf), "%02X", f.payload[i]);
        out += buf;
    }
    return out;
}

std::map<uint16_t, std::vector<CanFrame>> group_by_id(const std::vector<CanFrame>& frames) {
    std::map<uint16_t, std::vector<CanFrame>> out;
    for (const auto& f : frames) out[f.can_id].push_back(f);
    return out;
}

std::vector<CanFrame> read_trace(const std::filesystem::path& path, const ColumnMap& map) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open trace: " + path.string());

    std::vector<CanFrame> frames;
    std::string line;
    long line_no = 0;
    bool first_record = true;
    while (std::getline(in, line)) {
        ++line_no;
        std::string_view s = trim(line);
        if (s.empty()) continue;
        if (first_record) {
            first_record = false;
            // a CSV header row starts with a non-numeric field
            if (s.front() != '(') {
                double t;
                auto fields = split_csv(s);
                if (fields.empty() || !parse_double(fields[0], t)) continue;
            }
        }
        if (s.front() == '(')
            frames.push_back(parse_candump_line(s, line_no));
        else
            frames.push_back(parse_csv_line(s, map, line_no));
    }
    return frames;
}

void write_trace_csv(const std::filesystem::path& path, const std::vector<CanFrame>& frames) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write trace: " + path.string());
    out << "timestamp,can_id,dlc,d0,d1,d2,d3,d4,d5,d6,d7,label\n";
    for (const auto& f : frames) out << to_csv_line(f) << '\n';
}

} // namespace canids
