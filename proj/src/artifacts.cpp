#include "flowmap/artifacts.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "flowmap/graph.hpp"
#include "json.hpp"

namespace flowmap {

const char* kToolVersion = "0.1.0";

static std::string xml_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

std::string bar_chart_svg(const std::string& title, const std::string& unit,
                          const std::vector<BarDatum>& data) {
    const int bar_h = 22, gap = 8, label_w = 180, value_w = 140;
    const int chart_w = 420, top = 40;
    const int width = label_w + chart_w + value_w + 20;
    const int height = top + int(data.size()) * (bar_h + gap) + 20;
    double vmax = 0.0;
    for (const auto& d : data) vmax = std::max(vmax, d.value);
    if (vmax <= 0.0) vmax = 1.0;

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
        << "\" height=\"" << height << "\" font-family=\"sans-serif\">\n";
    svg << "  <text x=\"10\" y=\"24\" font-size=\"16\">" << xml_escape(title)
        << "</text>\n";
    int y = top;
    for (const auto& d : data) {
        int w = int(chart_w * d.value / vmax + 0.5);
        svg << "  <text x=\"" << label_w - 6 << "\" y=\"" << y + bar_h - 6
            << "\" font-size=\"12\" text-anchor=\"end\">" << xml_escape(d.label)
            << "</text>\n";
        svg << "  <rect x=\"" << label_w << "\" y=\"" << y << "\" width=\""
            << std::max(w, 1) << "\" height=\"" << bar_h
            << "\" fill=\"#4878a8\"/>\n";
        std::ostringstream val;
        val.precision(6);
        val << d.value << " " << unit;
        svg << "  <text x=\"" << label_w + std::max(w, 1) + 6 << "\" y=\""
            << y + bar_h - 6 << "\" font-size=\"12\">" << xml_escape(val.str())
            << "</text>\n";
        y += bar_h + gap;
    }
    svg << "</svg>\n";
    return svg.str();
}

void write_bar_chart(const std::string& path, const std::string& title,
                     const std::string& unit, const std::vector<BarDatum>& data) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw GraphError("cannot write " + path);
    f << bar_chart_svg(title, unit, data);
}

std::uint64_t config_hash(const std::vector<std::string>& parts) {
    std::string joined;
    for (const auto& p : parts) {
        joined += p;
        joined += '\x1f';
    }
    return fnv1a(joined.data(), joined.size());
}

std::string manifest_to_json(const RunManifest& m) {
    nlohmann::ordered_json j;
    j["tool_version"] = m.tool_version;
    j["network"] = m.network_path;
    j["platform"] = m.platform_path;
    std::ostringstream hash;
    hash << std::hex << m.config_hash;
    j["config_hash"] = hash.str();
    nlohmann::ordered_json stages = nlohmann::ordered_json::array();
    for (const auto& [name, secs] : m.stage_seconds)
        stages.push_back({{"stage", name}, {"seconds", secs}});
    j["stages"] = stages;
    return j.dump(2) + "\n";
}

void write_manifest(const std::string& path, const RunManifest& m) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw GraphError("cannot write " + path);
    f << manifest_to_json(m);
}

}  // namespace flowmap
