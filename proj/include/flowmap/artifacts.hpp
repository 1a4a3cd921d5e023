#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace flowmap {

struct BarDatum {
    std::string label;
    double value = 0.0;
};

// Static horizontal bar chart. Deterministic output for fixed input, but SVG
// files are meant for humans; machine comparisons should use the JSON/CSV
// reports instead.
std::string bar_chart_svg(const std::string& title, const std::string& unit,
                          const std::vector<BarDatum>& data);
void write_bar_chart(const std::string& path, const std::string& title,
                     const std::string& unit, const std::vector<BarDatum>& data);

struct RunManifest {
    std::string tool_version;
    std::string network_path;
    std::string platform_path;
    std::uint64_t config_hash = 0;
    std::vector<std::pair<std::string, double>> stage_seconds;
};

extern const char* kToolVersion;

std::uint64_t config_hash(const std::vector<std::string>& parts);
std::string manifest_to_json(const RunManifest& m);
void write_manifest(const std::string& path, const RunManifest& m);

}  // namespace flowmap
