// Command-line driver: validate -> quantize -> depths -> dse -> simulate ->
// report, plus an ablation sweep. All outputs land under --out-dir together
// with a manifest recording what produced them.
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "flowmap/artifacts.hpp"
#include "flowmap/dse.hpp"
#include "flowmap/golden.hpp"
#include "flowmap/graph.hpp"
#include "flowmap/perf.hpp"
#include "flowmap/quant.hpp"
#include "flowmap/sim.hpp"

namespace fs = std::filesystem;
using namespace flowmap;

namespace {

struct CliFailure {
    std::string stage;
    std::string message;
    int code = 2;
};

[[noreturn]] void fail(const std::string& stage, const std::string& msg, int code = 2) {
    throw CliFailure{stage, msg, code};
}

struct CommonOpts {
    std::string network;
    std::string platform;
    std::string out_dir = "out";
    int w_bits = 8;
    int a_bits = 16;
    std::uint64_t seed = 1;

    QuantConfig qc() const { return QuantConfig{w_bits, a_bits}; }
};

void add_common(CLI::App* cmd, CommonOpts& o, bool needs_platform) {
    cmd->add_option("--network", o.network, "network description (JSON)")->required();
    auto* p = cmd->add_option("--platform", o.platform, "platform description (JSON)");
    if (needs_platform) p->required();
    cmd->add_option("--out-dir", o.out_dir, "output directory");
    cmd->add_option("--w-bits", o.w_bits, "weight wordlength");
    cmd->add_option("--a-bits", o.a_bits, "activation wordlength");
    cmd->add_option("--seed", o.seed, "seed for synthesized weights/inputs");
}

NetworkGraph load_graph(const CommonOpts& o) {
    if (!fs::exists(o.network))
        fail("parse", "network file not found: " + o.network);
    NetworkGraph g;
    try {
        g = parse_network_file(o.network);
    } catch (const std::exception& e) {
        fail("parse", e.what());
    }
    if (g.input_shape.words() <= 0)
        fail("parse", "network lacks a positive input_shape");
    try {
        g = infer_shapes(g, g.input_shape);
    } catch (const std::exception& e) {
        fail("shapes", e.what());
    }
    auto violations = validate_graph(g);
    if (!violations.empty()) {
        std::string msg;
        for (const auto& v : violations) {
            if (!msg.empty()) msg += "; ";
            msg += v;
        }
        fail("validate", msg);
    }
    ensure_weights(g, o.seed);
    return g;
}

PlatformSpec load_platform(const CommonOpts& o) {
    if (!fs::exists(o.platform))
        fail("parse", "platform file not found: " + o.platform);
    try {
        return parse_platform_file(o.platform);
    } catch (const std::exception& e) {
        fail("parse", e.what());
    }
}

RealTensor synth_input(const TensorShape& s, std::uint64_t seed) {
    // splitmix64 keeps this reproducible across standard libraries
    RealTensor t(s);
    std::uint64_t x = seed * 0x9e3779b97f4a7c15ULL + 0x61c88647ULL;
    for (auto& v : t.data) {
        x += 0x9e3779b97f4a7c15ULL;
        std::uint64_t z = x;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        z ^= z >> 31;
        v = double(z >> 11) / double(1ULL << 53) * 2.0 - 1.0;
    }
    return t;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) fail("write", "cannot write " + path.string());
    f << text;
}

struct StageClock {
    std::vector<std::pair<std::string, double>> stages;
    std::chrono::steady_clock::time_point t = std::chrono::steady_clock::now();

    void mark(const std::string& name) {
        auto now = std::chrono::steady_clock::now();
        stages.emplace_back(name, std::chrono::duration<double>(now - t).count());
        t = now;
    }
};

void emit_manifest(const CommonOpts& o, const std::string& command,
                   const StageClock& clock) {
    RunManifest m;
    m.tool_version = kToolVersion;
    m.network_path = o.network;
    m.platform_path = o.platform;
    m.config_hash = config_hash({command, o.network, o.platform,
                                 std::to_string(o.w_bits), std::to_string(o.a_bits),
                                 std::to_string(o.seed)});
    m.stage_seconds = clock.stages;
    write_manifest((fs::path(o.out_dir) / "manifest.json").string(), m);
}

std::string depths_to_json(const DepthReport& depths) {
    nlohmann::ordered_json j;
    for (const auto& [edge, q] : depths.q) j[edge] = q;
    return j.dump(2) + "\n";
}

DepthReport depths_from_json_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) fail("parse", "depths file not found: " + path);
    DepthReport d;
    try {
        auto j = nlohmann::json::parse(f);
        for (auto& [edge, q] : j.items()) d.q[edge] = q.get<std::int64_t>();
    } catch (const std::exception& e) {
        fail("parse", std::string("malformed depths file: ") + e.what());
    }
    return d;
}

void write_report_files(const CommonOpts& o, const PerfReport& r) {
    fs::path out(o.out_dir);
    write_text(out / "report.json", report_to_json(r) + "\n");
    write_text(out / "report.csv", report_to_csv(r));

    std::vector<BarDatum> mem = {
        {"weights", double(r.memory.weights_bits)},
        {"window", double(r.memory.window_bits)},
        {"concat", double(r.memory.concat_bits)},
        {"skip", double(r.memory.skip_bits)},
    };
    write_bar_chart((out / "memory_breakdown.svg").string(),
                    "On-chip memory breakdown", "bits", mem);
    std::vector<BarDatum> lat;
    for (const auto& n : r.nodes)
        lat.push_back({n.id, n.latency_s * 1e6});
    write_bar_chart((out / "node_latency.svg").string(), "Per-node latency", "us", lat);
}

// ---- commands ---------------------------------------------------------------

int cmd_validate(const CommonOpts& o) {
    auto g = load_graph(o);
    std::cout << "ok: " << g.nodes.size() << " nodes, " << g.edges().size()
              << " edges, input " << g.input_shape.str() << "\n";
    return 0;
}

int cmd_quantize(const CommonOpts& o) {
    StageClock clock;
    auto g = load_graph(o);
    clock.mark("parse");
    auto qc = o.qc();
    try {
        qc.check();
    } catch (const std::exception& e) {
        fail("quantize", e.what());
    }
    auto qw = quantize_graph_weights(g, qc);
    fs::create_directories(o.out_dir);
    write_quantized_file((fs::path(o.out_dir) / "weights_quantized.satq").string(), qw);
    nlohmann::ordered_json j;
    for (const auto& [ref, t] : qw)
        j[ref] = {{"scale", t.params.scale},
                  {"zero_point", t.params.zero_point},
                  {"wordlength", t.params.wordlength},
                  {"count", t.values.size()}};
    write_text(fs::path(o.out_dir) / "quantize.json", j.dump(2) + "\n");
    clock.mark("quantize");
    emit_manifest(o, "quantize", clock);
    return 0;
}

int cmd_depths(const CommonOpts& o, const std::string& design_path, bool analytic) {
    StageClock clock;
    auto g = load_graph(o);
    clock.mark("parse");
    DesignPoint dp;
    if (!design_path.empty()) {
        std::ifstream f(design_path, std::ios::binary);
        if (!f) fail("parse", "design file not found: " + design_path);
        std::stringstream ss;
        ss << f.rdbuf();
        try {
            dp = design_from_json(ss.str());
        } catch (const std::exception& e) {
            fail("parse", e.what());
        }
    }
    DepthReport depths;
    if (analytic) {
        depths = analytic_depths(g, dp);
    } else {
        auto input = synth_input(g.input_shape, o.seed);
        auto ranges = golden::activation_ranges(g, input);
        auto shifts = shift_map(g, ranges, o.a_bits);
        auto qin = sim::quantize_input_tensor(g, shifts, input, o.a_bits);
        try {
            depths = sim::measure_fifo_depths(g, dp, o.qc(), shifts, qin);
        } catch (const std::exception& e) {
            fail("simulate", e.what(), 4);
        }
    }
    clock.mark(analytic ? "analytic-depths" : "measured-depths");
    fs::create_directories(o.out_dir);
    write_text(fs::path(o.out_dir) / "depths.json", depths_to_json(depths));
    emit_manifest(o, "depths", clock);
    return 0;
}

int cmd_dse(const CommonOpts& o, double lambda) {
    StageClock clock;
    auto g = load_graph(o);
    auto ps = load_platform(o);
    clock.mark("parse");
    DseConfig cfg;
    cfg.lambda = lambda;
    DesignPoint dp;
    DepthReport depths;
    try {
        dp = allocate_dsp(g, ps, cfg);
        depths = analytic_depths(g, dp);
        allocate_buffers(g, depths, ps, o.qc(), dp);
    } catch (const InfeasibleError& e) {
        fail("dse", e.what(), 3);
    } catch (const std::exception& e) {
        fail("dse", e.what());
    }
    clock.mark("dse");
    fs::create_directories(o.out_dir);
    write_text(fs::path(o.out_dir) / "design.json", design_to_json(dp) + "\n");
    write_text(fs::path(o.out_dir) / "depths.json", depths_to_json(depths));
    emit_manifest(o, "dse", clock);
    return 0;
}

int cmd_simulate(const CommonOpts& o, const std::string& design_path,
                 const std::string& input_path, bool check, bool trace) {
    StageClock clock;
    auto g = load_graph(o);
    if (design_path.empty()) fail("parse", "simulate requires --design");
    std::ifstream f(design_path, std::ios::binary);
    if (!f) fail("parse", "design file not found: " + design_path);
    std::stringstream ss;
    ss << f.rdbuf();
    DesignPoint dp;
    try {
        dp = design_from_json(ss.str());
    } catch (const std::exception& e) {
        fail("parse", e.what());
    }
    for (const auto& n : g.nodes)
        if (!dp.p.count(n.id))
            fail("parse", "design lacks a parallelism for node '" + n.id + "'");

    RealTensor input;
    if (input_path.empty()) {
        input = synth_input(g.input_shape, o.seed);
    } else {
        if (!fs::exists(input_path)) fail("parse", "input file not found: " + input_path);
        IntTensor raw;
        try {
            raw = read_tensor_file(input_path);
        } catch (const std::exception& e) {
            fail("parse", e.what());
        }
        if (!(raw.shape == g.input_shape))
            fail("parse", "input tensor is " + raw.shape.str() + ", network expects " +
                              g.input_shape.str());
        input = RealTensor(raw.shape);
        for (size_t i = 0; i < raw.data.size(); ++i)
            input.data[i] = double(raw.data[i]);
    }
    clock.mark("parse");

    auto qc = o.qc();
    auto ranges = golden::activation_ranges(g, input);
    auto shifts = shift_map(g, ranges, qc.w_a);
    auto qin = sim::quantize_input_tensor(g, shifts, input, qc.w_a);

    sim::SimOptions opts;
    opts.trace_occupancy = trace;
    sim::SimResult res;
    try {
        auto pipe = sim::build_pipeline(g, dp, qc, shifts, opts);
        res = sim::run_sim(pipe, qin);
    } catch (const std::exception& e) {
        fail("simulate", e.what());
    }
    clock.mark("simulate");

    fs::create_directories(o.out_dir);
    nlohmann::ordered_json j;
    j["cycles_total"] = res.cycles_total;
    j["cycles_steady"] = res.cycles_steady;
    j["deadlocked"] = res.deadlocked;
    j["skip_depths"] = nlohmann::ordered_json::object();
    for (const auto& [e, q] : res.depths.q) j["skip_depths"][e] = q;
    j["measured_depth"] = nlohmann::ordered_json::object();
    for (const auto& [id, d] : res.measured_depth) j["measured_depth"][id] = d;
    j["blocked_channels"] = res.blocked_channels;
    write_text(fs::path(o.out_dir) / "sim.json", j.dump(2) + "\n");
    if (trace) {
        std::ostringstream csv;
        csv << "cycle,channel,occupancy\n";
        for (const auto& [cyc, ch, occ] : res.occupancy_trace)
            csv << cyc << "," << ch << "," << occ << "\n";
        write_text(fs::path(o.out_dir) / "occupancy.csv", csv.str());
    }
    for (const auto& [id, t] : res.outputs)
        write_tensor_file((fs::path(o.out_dir) / ("output_" + id + ".satt")).string(), t);
    emit_manifest(o, "simulate", clock);

    if (res.deadlocked) {
        std::string msg = "deadlock after " + std::to_string(res.cycles_total) + " cycles";
        for (const auto& b : res.blocked_channels) msg += "; " + b;
        fail("simulate", msg, 4);
    }
    if (check) {
        auto ref = golden::run_reference_quantized(g, input, qc, &shifts);
        for (const auto& [id, t] : ref.outputs) {
            auto it = res.outputs.find(id);
            if (it == res.outputs.end() || !(it->second.data == t.data))
                fail("check", "simulator output for '" + id +
                                  "' differs from the reference", 1);
        }
        std::cout << "check: outputs match the reference exactly\n";
    }
    std::cout << "cycles_total=" << res.cycles_total
              << " cycles_steady=" << res.cycles_steady << "\n";
    return 0;
}

int cmd_report(const CommonOpts& o, const std::string& design_path,
               const std::string& depths_path) {
    StageClock clock;
    auto g = load_graph(o);
    auto ps = load_platform(o);
    clock.mark("parse");
    DesignPoint dp;
    DepthReport depths;
    try {
        if (design_path.empty()) {
            dp = allocate_dsp(g, ps);
        } else {
            std::ifstream f(design_path, std::ios::binary);
            if (!f) fail("parse", "design file not found: " + design_path);
            std::stringstream ss;
            ss << f.rdbuf();
            dp = design_from_json(ss.str());
        }
        depths = depths_path.empty() ? analytic_depths(g, dp)
                                     : depths_from_json_file(depths_path);
        if (design_path.empty()) allocate_buffers(g, depths, ps, o.qc(), dp);
    } catch (const InfeasibleError& e) {
        fail("dse", e.what(), 3);
    } catch (const CliFailure&) {
        throw;
    } catch (const std::exception& e) {
        fail("report", e.what());
    }
    auto r = make_report(g, dp, ps, o.qc(), depths);
    clock.mark("report");
    fs::create_directories(o.out_dir);
    write_report_files(o, r);
    emit_manifest(o, "report", clock);
    std::cout << "total_latency_s=" << r.total_latency_s << " dsp_used=" << r.dsp_used
              << "/" << r.dsp_total << "\n";
    return 0;
}

int cmd_flow(const CommonOpts& o, double lambda) {
    StageClock clock;
    auto g = load_graph(o);
    auto ps = load_platform(o);
    clock.mark("parse");
    auto qc = o.qc();
    auto qw = quantize_graph_weights(g, qc);
    fs::create_directories(o.out_dir);
    write_quantized_file((fs::path(o.out_dir) / "weights_quantized.satq").string(), qw);
    clock.mark("quantize");

    DseConfig cfg;
    cfg.lambda = lambda;
    DesignPoint dp;
    DepthReport depths;
    try {
        dp = allocate_dsp(g, ps, cfg);
        depths = analytic_depths(g, dp);
        allocate_buffers(g, depths, ps, qc, dp);
    } catch (const InfeasibleError& e) {
        fail("dse", e.what(), 3);
    }
    clock.mark("dse");
    write_text(fs::path(o.out_dir) / "design.json", design_to_json(dp) + "\n");
    write_text(fs::path(o.out_dir) / "depths.json", depths_to_json(depths));

    auto r = make_report(g, dp, ps, qc, depths);
    write_report_files(o, r);
    clock.mark("report");
    emit_manifest(o, "flow", clock);
    std::cout << "total_latency_s=" << r.total_latency_s << " dsp_used=" << r.dsp_used
              << "/" << r.dsp_total << "\n";
    return 0;
}

int cmd_ablation(const CommonOpts& o, int top_k) {
    StageClock clock;
    auto g = load_graph(o);
    auto ps = load_platform(o);
    clock.mark("parse");
    auto qc = o.qc();
    DesignPoint dp;
    DepthReport depths;
    try {
        dp = allocate_dsp(g, ps);
        depths = analytic_depths(g, dp);
    } catch (const InfeasibleError& e) {
        fail("dse", e.what(), 3);
    }
    double latency = total_latency(g, dp, ps);

    // skip edges ordered by on-chip footprint, largest first
    struct Entry {
        std::string key;
        std::int64_t bits;
    };
    std::vector<Entry> entries;
    for (const auto& e : g.skip_edges())
        entries.push_back({e.key(), depths.at(e.key()) * qc.w_a});
    std::stable_sort(entries.begin(), entries.end(),
                     [](const Entry& a, const Entry& b) { return a.bits > b.bits; });
    if (int(entries.size()) < top_k) {
        std::cerr << "warning: only " << entries.size() << " skip edges, requested top "
                  << top_k << "\n";
        top_k = int(entries.size());
    }

    std::int64_t io_words = g.input_shape.words();
    for (const auto& n : g.nodes)
        if (n.kind == NodeKind::Output) io_words += g.in_shape(n).words();
    double io_bw = double(io_words) * qc.w_a / latency;

    std::ostringstream csv;
    csv << "k,mem_skip_bits,mem_total_bits,offchip_bw_bits_per_s\n";
    std::vector<BarDatum> chart;
    for (int k = 0; k <= top_k; ++k) {
        DesignPoint trial = dp;
        for (const auto& e : entries) trial.buffer_on[e.key] = true;
        for (int i = 0; i < k; ++i) trial.buffer_on[entries[size_t(i)].key] = false;
        auto mb = memory_breakdown(g, trial, qc, depths, latency, qc.w_a);
        double bw = io_bw;
        for (const auto& d : mb.skip_detail) bw += d.offchip_bandwidth;
        csv << k << "," << mb.skip_bits << "," << mb.total_bits() << "," << bw << "\n";
        chart.push_back({"k=" + std::to_string(k), double(mb.total_bits())});
    }
    clock.mark("ablation");
    fs::create_directories(o.out_dir);
    write_text(fs::path(o.out_dir) / "ablation.csv", csv.str());
    write_bar_chart((fs::path(o.out_dir) / "ablation.svg").string(),
                    "On-chip memory vs buffers moved off-chip", "bits", chart);
    emit_manifest(o, "ablation", clock);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"streaming NN accelerator modeling toolflow"};
    app.require_subcommand(1);

    CommonOpts o;
    std::string design_path, input_path, depths_path;
    bool analytic = false, check = false, trace = false;
    double lambda = 0.0;
    int top_k = 5;

    auto* validate = app.add_subcommand("validate", "parse and check a network");
    add_common(validate, o, false);

    auto* quantize = app.add_subcommand("quantize", "quantize weights");
    add_common(quantize, o, false);

    auto* depths = app.add_subcommand("depths", "skip-buffer depth analysis");
    add_common(depths, o, false);
    depths->add_option("--design", design_path, "design point (JSON)");
    depths->add_flag("--analytic", analytic, "use the analytic fill model");

    auto* dse = app.add_subcommand("dse", "DSP allocation + buffer placement");
    add_common(dse, o, true);
    dse->add_option("--lambda", lambda, "off-chip buffer count penalty");

    auto* simulate = app.add_subcommand("simulate", "run the dataflow simulator");
    add_common(simulate, o, false);
    simulate->add_option("--design", design_path, "design point (JSON)")->required();
    simulate->add_option("--input", input_path, "input tensor (SATT)");
    simulate->add_flag("--check", check, "compare against the reference");
    simulate->add_flag("--trace", trace, "dump channel occupancy CSV");

    auto* report = app.add_subcommand("report", "performance/memory report");
    add_common(report, o, true);
    report->add_option("--design", design_path, "design point (JSON)");
    report->add_option("--depths", depths_path, "buffer depths (JSON)");

    auto* flow = app.add_subcommand("flow", "full pipeline");
    add_common(flow, o, true);
    flow->add_option("--lambda", lambda, "off-chip buffer count penalty");

    auto* ablation = app.add_subcommand("ablation", "buffer eviction sweep");
    add_common(ablation, o, true);
    ablation->add_option("--top-k", top_k, "buffers to evict");

    CLI11_PARSE(app, argc, argv);

    try {
        if (validate->parsed()) return cmd_validate(o);
        if (quantize->parsed()) return cmd_quantize(o);
        if (depths->parsed()) return cmd_depths(o, design_path, analytic);
        if (dse->parsed()) return cmd_dse(o, lambda);
        if (simulate->parsed())
            return cmd_simulate(o, design_path, input_path, check, trace);
        if (report->parsed()) return cmd_report(o, design_path, depths_path);
        if (flow->parsed()) return cmd_flow(o, lambda);
        if (ablation->parsed()) return cmd_ablation(o, top_k);
    } catch (const CliFailure& e) {
        std::cerr << "error[" << e.stage << "]: " << e.message << "\n";
        return e.code;
    } catch (const InfeasibleError& e) {
        std::cerr << "error[dse]: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error[internal]: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
