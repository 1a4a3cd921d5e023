#include "flowmap/sim.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <set>

namespace flowmap::sim {

void SoftFifoConfig::check() const {
    if (depth < 1 || chunk_size < 1)
        throw SimError("soft FIFO depth and chunk_size must be >= 1");
}

namespace {

constexpr std::int64_t kUnbounded = std::numeric_limits<std::int64_t>::max() / 4;

struct Channel {
    std::string key;
    std::int64_t capacity = kUnbounded;
    std::deque<std::int64_t> visible;
    std::vector<std::int64_t> staged;
    std::int64_t high_water = 0;
    std::int64_t* activity = nullptr;

    std::int64_t size() const {
        return std::int64_t(visible.size()) + std::int64_t(staged.size());
    }
    bool can_push() const { return size() < capacity; }
    void push(std::int64_t v) {
        staged.push_back(v);
        ++*activity;
    }
    bool can_pop() const { return !visible.empty(); }
    std::int64_t pop() {
        std::int64_t v = visible.front();
        visible.pop_front();
        ++*activity;
        return v;
    }
    void commit() {
        for (auto v : staged) visible.push_back(v);
        staged.clear();
        high_water = std::max(high_water, size());
    }
};

struct Process {
    std::string id;
    std::int64_t p = 1;
    int w_a = 16;
    std::vector<Channel*> ins;
    std::vector<Channel*> outs;
    std::int64_t credit = 0;
    std::int64_t credit_cap = 1;
    std::int64_t first_in = -1, first_out = -1, last_out = -1;
    bool is_model_node = true;  // soft FIFOs are plumbing, not graph nodes

    virtual ~Process() = default;
    virtual void step(std::int64_t cycle) = 0;
    virtual bool done() const = 0;

    void accrue() { credit = std::min(credit + p, credit_cap); }
    void note_in(std::int64_t c) {
        if (first_in < 0) first_in = c;
    }
    void note_out(std::int64_t c) {
        if (first_out < 0) first_out = c;
        last_out = c;
    }
    bool outs_can_push() const {
        return std::all_of(outs.begin(), outs.end(),
                           [](Channel* o) { return o->can_push(); });
    }
    void push_all(std::int64_t v, std::int64_t cycle) {
        for (auto* o : outs) o->push(v);
        note_out(cycle);
    }
};

struct InputProcess : Process {
    std::vector<std::int64_t> words;
    size_t idx = 0;

    void step(std::int64_t cycle) override {
        accrue();
        while (credit >= 1 && idx < words.size() && outs_can_push()) {
            push_all(words[idx], cycle);
            ++idx;
            --credit;
        }
    }
    bool done() const override { return idx == words.size(); }
};

struct OutputProcess : Process {
    IntTensor result;
    std::int64_t expected = 0;
    std::int64_t received = 0;

    void step(std::int64_t cycle) override {
        accrue();
        while (credit >= 1 && received < expected && ins[0]->can_pop()) {
            result.data[size_t(received)] = ins[0]->pop();
            note_in(cycle);
            note_out(cycle);
            ++received;
            --credit;
        }
    }
    bool done() const override { return received == expected; }
};

struct ElementwiseProcess : Process {
    enum class Fn { HardSwish, LeakyReLU } fn = Fn::HardSwish;
    int shift = 0;
    double slope = 0.0;
    std::int64_t total = 0, processed = 0;

    void step(std::int64_t cycle) override {
        accrue();
        while (credit >= 1 && processed < total && ins[0]->can_pop() && outs_can_push()) {
            std::int64_t v = ins[0]->pop();
            note_in(cycle);
            v = fn == Fn::HardSwish ? hardswish_fixed(v, shift, w_a)
                                    : leaky_relu_fixed(v, slope, w_a);
            push_all(v, cycle);
            ++processed;
            --credit;
        }
    }
    bool done() const override { return processed == total; }
};

struct AddProcess : Process {
    std::int64_t total = 0, processed = 0;

    void step(std::int64_t cycle) override {
        accrue();
        while (credit >= 1 && processed < total && outs_can_push()) {
            bool all = std::all_of(ins.begin(), ins.end(),
                                   [](Channel* c) { return c->can_pop(); });
            if (!all) break;
            std::int64_t acc = ins[0]->pop();
            for (size_t i = 1; i < ins.size(); ++i) acc = sat_add(acc, ins[i]->pop(), w_a);
            note_in(cycle);
            push_all(acc, cycle);
            ++processed;
            --credit;
        }
    }
    bool done() const override { return processed == total; }
};

struct SplitProcess : Process {
    // Output channel index for each input-channel position.
    std::vector<int> route;
    int c_in = 0;
    int c_pos = 0;
    std::int64_t total = 0, processed = 0;

    void step(std::int64_t cycle) override {
        accrue();
        while (credit >= 1 && processed < total && ins[0]->can_pop()) {
            Channel* target = outs[size_t(route[size_t(c_pos)])];
            if (!target->can_push()) break;
            target->push(ins[0]->pop());
            note_in(cycle);
            note_out(cycle);
            c_pos = (c_pos + 1) % c_in;
            ++processed;
            --credit;
        }
    }
    bool done() const override { return processed == total; }
};

struct ConcatProcess : Process {
    // Input slot for each output-channel position.
    std::vector<int> route;
    int c_out = 0;
    int c_pos = 0;
    std::int64_t total = 0, processed = 0;

    void step(std::int64_t cycle) override {
        accrue();
        while (credit >= 1 && processed < total && outs_can_push()) {
            Channel* source = ins[size_t(route[size_t(c_pos)])];
            if (!source->can_pop()) break;
            push_all(source->pop(), cycle);
            note_in(cycle);
            c_pos = (c_pos + 1) % c_out;
            ++processed;
            --credit;
        }
    }
    bool done() const override { return processed == total; }
};

// Shared sliding-window store: a contiguous run of input words in NHWC
// linear order, bounded so occupancy never exceeds the line-buffer budget.
struct WindowStore {
    std::deque<std::int64_t> words;
    std::int64_t base = 0;      // linear index of the front word
    std::int64_t in_count = 0;  // words consumed so far
    std::int64_t cap = 0;

    bool can_accept() const { return in_count - base < cap; }
    void accept(std::int64_t v) {
        words.push_back(v);
        ++in_count;
    }
    void evict_below(std::int64_t idx_min) {
        while (base < idx_min && !words.empty()) {
            words.pop_front();
            ++base;
        }
    }
    std::int64_t at(std::int64_t linear) const { return words[size_t(linear - base)]; }
};

struct ConvProcess : Process {
    int hin = 0, win = 0, cin = 0, f = 0, k = 0, stride = 1, pt = 0, pl = 0;
    int hout = 0, wout = 0;
    std::vector<std::int64_t> wint;  // (f, c, kh, kw), w' + Z
    double factor = 1.0;
    WindowStore store;
    std::int64_t total_in = 0, total_out = 0, out_pos = 0;

    std::int64_t widx(int fi, int c, int kh, int kw) const {
        return ((std::int64_t(fi) * cin + c) * k + kh) * k + kw;
    }

    void step(std::int64_t cycle) override {
        credit_cap = std::int64_t(cin) + p;
        accrue();
        // produce: each output word costs C credits
        while (out_pos < total_out && credit >= cin) {
            std::int64_t pos = out_pos / f;
            int fi = int(out_pos % f);
            int oh = int(pos / wout), ow = int(pos % wout);
            // drop words this window no longer reaches, but never past what
            // the next output row still needs (its top row can repeat ours
            // when top padding clips the window)
            std::int64_t col_min =
                (std::int64_t(std::max(oh * stride - pt, 0)) * win +
                 std::max(ow * stride - pl, 0)) * cin;
            std::int64_t next_row_min =
                std::int64_t(std::max((oh + 1) * stride - pt, 0)) * win * cin;
            store.evict_below(std::min(col_min, next_row_min));
            int ih_max = std::min(oh * stride - pt + k - 1, hin - 1);
            int iw_max = std::min(ow * stride - pl + k - 1, win - 1);
            bool ready = ih_max < 0 || iw_max < 0 ||
                         (std::int64_t(ih_max) * win + iw_max) * cin + cin - 1 <
                             store.in_count;
            if (!ready || !outs_can_push()) break;
            std::int64_t acc = 0;
            for (int kh = 0; kh < k; ++kh) {
                int ih = oh * stride - pt + kh;
                if (ih < 0 || ih >= hin) continue;
                for (int kw = 0; kw < k; ++kw) {
                    int iw = ow * stride - pl + kw;
                    if (iw < 0 || iw >= win) continue;
                    std::int64_t linear = (std::int64_t(ih) * win + iw) * cin;
                    for (int c = 0; c < cin; ++c)
                        acc += store.at(linear + c) * wint[size_t(widx(fi, c, kh, kw))];
                }
            }
            push_all(requantize_acc(acc, factor, w_a), cycle);
            credit -= cin;
            ++out_pos;
        }
        // consume: bounded only by the line-buffer budget (and drain freely
        // once every output has been produced)
        std::int64_t taken = 0;
        while (taken < p && store.in_count < total_in && ins[0]->can_pop() &&
               (out_pos == total_out || store.can_accept())) {
            store.accept(ins[0]->pop());
            note_in(cycle);
            ++taken;
        }
        if (out_pos == total_out) store.evict_below(store.in_count);
    }
    bool done() const override {
        return out_pos == total_out && store.in_count == total_in;
    }
};

struct MaxPoolProcess : Process {
    int hin = 0, win = 0, cin = 0, k = 0, stride = 1, pt = 0, pl = 0;
    int hout = 0, wout = 0;
    WindowStore store;
    std::int64_t total_in = 0, total_out = 0, out_pos = 0;

    void step(std::int64_t cycle) override {
        credit_cap = 1 + p;
        accrue();
        // produce: free once the window is resident
        while (out_pos < total_out) {
            std::int64_t pos = out_pos / cin;
            int c = int(out_pos % cin);
            int oh = int(pos / wout), ow = int(pos % wout);
            // see ConvProcess: row-repeat under top padding limits eviction
            std::int64_t col_min =
                (std::int64_t(std::max(oh * stride - pt, 0)) * win +
                 std::max(ow * stride - pl, 0)) * cin;
            std::int64_t next_row_min =
                std::int64_t(std::max((oh + 1) * stride - pt, 0)) * win * cin;
            store.evict_below(std::min(col_min, next_row_min));
            int ih_max = std::min(oh * stride - pt + k - 1, hin - 1);
            int iw_max = std::min(ow * stride - pl + k - 1, win - 1);
            bool ready = ih_max < 0 || iw_max < 0 ||
                         (std::int64_t(ih_max) * win + iw_max) * cin + c < store.in_count;
            if (!ready || !outs_can_push()) break;
            std::int64_t best = std::numeric_limits<std::int64_t>::min();
            for (int kh = 0; kh < k; ++kh) {
                int ih = oh * stride - pt + kh;
                if (ih < 0 || ih >= hin) continue;
                for (int kw = 0; kw < k; ++kw) {
                    int iw = ow * stride - pl + kw;
                    if (iw < 0 || iw >= win) continue;
                    best = std::max(best, store.at((std::int64_t(ih) * win + iw) * cin + c));
                }
            }
            push_all(best, cycle);
            ++out_pos;
        }
        // consume: one credit per word
        while (credit >= 1 && store.in_count < total_in && ins[0]->can_pop() &&
               (out_pos == total_out || store.can_accept())) {
            store.accept(ins[0]->pop());
            note_in(cycle);
            --credit;
        }
        if (out_pos == total_out) store.evict_below(store.in_count);
    }
    bool done() const override {
        return out_pos == total_out && store.in_count == total_in;
    }
};

struct ResizeProcess : Process {
    int hin = 0, win = 0, cin = 0, r = 1;
    int hout = 0, wout = 0;
    WindowStore store;
    std::int64_t total_in = 0, total_out = 0, out_pos = 0;

    void step(std::int64_t cycle) override {
        credit_cap = 1 + p;
        accrue();
        // produce: one credit per output word; an input row must be fully
        // cached before it is replayed
        while (credit >= 1 && out_pos < total_out) {
            std::int64_t pos = out_pos / cin;
            int c = int(out_pos % cin);
            int oh = int(pos / wout), ow = int(pos % wout);
            int ih = oh / r, iw = ow / r;
            store.evict_below(std::int64_t(ih) * win * cin);
            bool ready = (std::int64_t(ih) + 1) * win * cin - 1 < store.in_count;
            if (!ready || !outs_can_push()) break;
            push_all(store.at((std::int64_t(ih) * win + iw) * cin + c), cycle);
            --credit;
            ++out_pos;
        }
        // consume: free, bounded by the two-row cache
        while (store.in_count < total_in && ins[0]->can_pop() &&
               (out_pos == total_out || store.can_accept())) {
            store.accept(ins[0]->pop());
            note_in(cycle);
        }
        if (out_pos == total_out) store.evict_below(store.in_count);
    }
    bool done() const override {
        return out_pos == total_out && store.in_count == total_in;
    }
};

struct SoftFifoProcess : Process {
    std::int64_t chunk = 256, depth = 4, dma = 256;
    std::int64_t words_total = 0;
    std::deque<std::int64_t> mem;
    std::int64_t written = 0, read = 0;
    std::int64_t high_water = 0;

    std::int64_t chunks_written() const {
        // the final partial chunk is flushed (zero-padded, pad trimmed)
        if (written == words_total) return (written + chunk - 1) / chunk;
        return written / chunk;
    }

    void step(std::int64_t cycle) override {
        std::int64_t moved = 0;
        while (moved < dma && written < words_total && ins[0]->can_pop() &&
               written - read < depth * chunk) {
            mem.push_back(ins[0]->pop());
            ++written;
            note_in(cycle);
            ++moved;
        }
        high_water = std::max(high_water, written - read);
        std::int64_t readable = std::min(chunks_written() * chunk, words_total) - read;
        moved = 0;
        while (moved < dma && readable > 0 && outs[0]->can_push()) {
            outs[0]->push(mem.front());
            mem.pop_front();
            ++read;
            --readable;
            note_out(cycle);
            ++moved;
        }
    }
    bool done() const override { return read == words_total; }
};

}  // namespace

class Pipeline {
  public:
    NetworkGraph graph;
    SimOptions opts;
    std::vector<std::unique_ptr<Process>> processes;
    std::map<std::string, std::unique_ptr<Channel>> channels;
    std::map<std::string, SoftFifoProcess*> skip_fifos;  // edge key -> fifo
    InputProcess* input_proc = nullptr;
    std::vector<std::pair<std::string, OutputProcess*>> output_procs;
    std::int64_t activity = 0;
    bool used = false;
};

PipelineHandle build_pipeline(const NetworkGraph& g, const DesignPoint& dp,
                              const QuantConfig& qc, const EdgeShifts& shifts,
                              const SimOptions& opts) {
    qc.check();
    if (g.edge_shapes.empty())
        throw SimError("graph has no inferred shapes; run infer_shapes first");

    auto pl = std::make_shared<Pipeline>();
    pl->graph = g;
    pl->opts = opts;

    for (const auto& n : g.nodes) {
        std::int64_t dim = max_parallelism(g, n);
        std::int64_t p = dp.par(n.id);
        if (p < 1 || (dim % p) != 0)
            throw SimError("node '" + n.id + "': parallelism " + std::to_string(p) +
                           " does not divide workload dimension " + std::to_string(dim));
    }

    auto qweights = quantize_graph_weights(g, qc);

    std::set<std::string> skip_keys;
    for (const auto& e : g.skip_edges()) skip_keys.insert(e.key());

    auto make_channel = [&](const std::string& key, std::int64_t cap) {
        auto ch = std::make_unique<Channel>();
        ch->key = key;
        ch->capacity = cap;
        ch->activity = &pl->activity;
        Channel* raw = ch.get();
        pl->channels[key] = std::move(ch);
        return raw;
    };

    auto edge_capacity = [&](const EdgeRef& e) -> std::int64_t {
        auto key = e.key();
        if (auto it = opts.capacity_override.find(key); it != opts.capacity_override.end())
            return it->second;
        if (auto it = dp.channel_capacity.find(key); it != dp.channel_capacity.end())
            return it->second;
        if (opts.unbounded_channels) return kUnbounded;
        if (skip_keys.count(key)) {
            if (auto it = opts.skip_capacity.find(key); it != opts.skip_capacity.end())
                return it->second;
            return kUnbounded;
        }
        std::int64_t p_prod = dp.par(e.from), p_cons = dp.par(e.to);
        return std::max(opts.default_capacity, 2 * std::max(p_prod, p_cons));
    };

    // Channels. Off-chip skip edges get a soft FIFO spliced in (except in
    // unbounded measurement mode, where placement is irrelevant).
    std::map<std::string, Channel*> consumer_side;  // edge key -> channel at consumer
    std::map<std::string, Channel*> producer_side;  // edge key -> channel at producer
    std::vector<std::unique_ptr<Process>> fifo_procs;
    for (const auto& e : g.edges()) {
        auto key = e.key();
        bool off = skip_keys.count(key) && !dp.on_chip(key) && !opts.unbounded_channels;
        if (!off) {
            Channel* ch = make_channel(key, edge_capacity(e));
            producer_side[key] = consumer_side[key] = ch;
        } else {
            std::int64_t words = g.edge_shape(e).words();
            std::int64_t side_cap = std::max<std::int64_t>(2 * opts.dma_burst, 8);
            Channel* pre = make_channel(key + ":pre", side_cap);
            Channel* post = make_channel(key + ":post", side_cap);
            auto fifo = std::make_unique<SoftFifoProcess>();
            fifo->id = key + ":soft_fifo";
            fifo->is_model_node = false;
            fifo->chunk = opts.soft_fifo_chunk;
            fifo->dma = opts.dma_burst;
            fifo->words_total = words;
            fifo->depth = (words + fifo->chunk - 1) / fifo->chunk + 1;
            fifo->ins.push_back(pre);
            fifo->outs.push_back(post);
            pl->skip_fifos[key] = fifo.get();
            fifo_procs.push_back(std::move(fifo));
            producer_side[key] = pre;
            consumer_side[key] = post;
        }
    }

    for (const auto& n : g.nodes) {
        std::unique_ptr<Process> proc;
        auto in_edges = g.input_edges(n.id);
        auto out_edges = g.output_edges(n.id);
        TensorShape in = g.in_shape(n);
        TensorShape out = g.out_shape(n);
        int s_in = in_edges.empty() ? 0 : shifts.at(in_edges[0].key());

        switch (n.kind) {
            case NodeKind::Input: {
                auto p = std::make_unique<InputProcess>();
                pl->input_proc = p.get();
                proc = std::move(p);
                break;
            }
            case NodeKind::Output: {
                auto p = std::make_unique<OutputProcess>();
                p->expected = in.words();
                p->result = IntTensor(in);
                pl->output_procs.emplace_back(n.id, p.get());
                proc = std::move(p);
                break;
            }
            case NodeKind::Convolution: {
                auto p = std::make_unique<ConvProcess>();
                p->hin = in.h; p->win = in.w; p->cin = in.c;
                p->f = n.filters; p->k = n.kernel_size; p->stride = n.stride;
                p->pt = n.padding.top; p->pl = n.padding.left;
                p->hout = out.h; p->wout = out.w;
                p->total_in = in.words();
                p->total_out = out.words();
                p->store.cap = (std::int64_t(n.kernel_size) - 1) * in.w * in.c +
                               std::int64_t(n.kernel_size) * in.c;
                const auto& qw = qweights.at(n.weights_ref);
                p->wint.resize(qw.values.size());
                for (size_t i = 0; i < qw.values.size(); ++i)
                    p->wint[i] = qw.values[i] + qw.params.zero_point;
                int s_out = out_edges.empty() ? s_in : shifts.at(out_edges[0].key());
                p->factor = requant_factor(qw.params.scale, s_in, s_out);
                proc = std::move(p);
                break;
            }
            case NodeKind::MaxPool: {
                auto p = std::make_unique<MaxPoolProcess>();
                p->hin = in.h; p->win = in.w; p->cin = in.c;
                p->k = n.kernel_size; p->stride = n.stride;
                p->pt = n.padding.top; p->pl = n.padding.left;
                p->hout = out.h; p->wout = out.w;
                p->total_in = in.words();
                p->total_out = out.words();
                p->store.cap = (std::int64_t(n.kernel_size) - 1) * in.w * in.c +
                               std::int64_t(n.kernel_size) * in.c;
                proc = std::move(p);
                break;
            }
            case NodeKind::Resize: {
                auto p = std::make_unique<ResizeProcess>();
                p->hin = in.h; p->win = in.w; p->cin = in.c;
                p->r = n.scale_factor;
                p->hout = out.h; p->wout = out.w;
                p->total_in = in.words();
                p->total_out = out.words();
                p->store.cap = 2 * std::int64_t(in.w) * in.c;
                proc = std::move(p);
                break;
            }
            case NodeKind::Split: {
                auto p = std::make_unique<SplitProcess>();
                p->c_in = in.c;
                p->total = in.words();
                p->route.assign(size_t(in.c), 0);
                for (size_t oi = 0; oi < out_edges.size(); ++oi) {
                    auto [first, count] = g.split_range(out_edges[oi]);
                    for (int c = first; c < first + count; ++c)
                        p->route[size_t(c)] = int(oi);
                }
                proc = std::move(p);
                break;
            }
            case NodeKind::Concat: {
                auto p = std::make_unique<ConcatProcess>();
                p->c_out = out.c;
                p->total = out.words();
                for (size_t ii = 0; ii < in_edges.size(); ++ii) {
                    int c = g.edge_shape(in_edges[ii]).c;
                    for (int j = 0; j < c; ++j) p->route.push_back(int(ii));
                }
                proc = std::move(p);
                break;
            }
            case NodeKind::Add: {
                auto p = std::make_unique<AddProcess>();
                p->total = out.words();
                proc = std::move(p);
                break;
            }
            case NodeKind::HardSwish:
            case NodeKind::LeakyReLU: {
                auto p = std::make_unique<ElementwiseProcess>();
                p->fn = n.kind == NodeKind::HardSwish ? ElementwiseProcess::Fn::HardSwish
                                                      : ElementwiseProcess::Fn::LeakyReLU;
                p->shift = s_in;
                p->slope = n.slope;
                p->total = out.words();
                proc = std::move(p);
                break;
            }
        }

        proc->id = n.id;
        proc->p = dp.par(n.id);
        proc->w_a = qc.w_a;
        proc->credit_cap = std::max<std::int64_t>(proc->p + 1, 2);
        for (const auto& e : in_edges) proc->ins.push_back(consumer_side.at(e.key()));
        for (const auto& e : out_edges) proc->outs.push_back(producer_side.at(e.key()));
        pl->processes.push_back(std::move(proc));
    }
    for (auto& f : fifo_procs) pl->processes.push_back(std::move(f));

    PipelineHandle h;
    h.impl = std::move(pl);
    return h;
}

IntTensor quantize_input_tensor(const NetworkGraph& g, const EdgeShifts& shifts,
                                const RealTensor& input, int w_a) {
    const NodeSpec* in_node = nullptr;
    for (const auto& n : g.nodes)
        if (n.kind == NodeKind::Input) in_node = &n;
    if (!in_node) throw SimError("graph has no Input node");
    auto outs = g.output_edges(in_node->id);
    if (outs.empty()) throw SimError("Input node has no consumers");
    int s = shifts.at(outs[0].key());
    IntTensor t(input.shape);
    for (size_t i = 0; i < input.data.size(); ++i)
        t.data[i] = quantize_activation(input.data[i], s, w_a);
    return t;
}

SimResult run_sim(PipelineHandle& pipeline, const IntTensor& input) {
    auto& pl = *pipeline.impl;
    if (pl.used) throw SimError("pipeline already ran; build a fresh one");
    pl.used = true;
    if (!pl.input_proc) throw SimError("pipeline has no Input process");
    if (!(input.shape == pl.graph.input_shape))
        throw SimError("input tensor shape " + input.shape.str() +
                       " does not match graph input " + pl.graph.input_shape.str());
    pl.input_proc->words = input.data;

    // A zero-transfer streak longer than any credit build-up means no token
    // can ever move again.
    std::int64_t idle_threshold = 8;
    for (const auto& p : pl.processes)
        idle_threshold = std::max(idle_threshold, p->credit_cap / std::max<std::int64_t>(p->p, 1) + 8);
    for (const auto& n : pl.graph.nodes)
        if (n.kind == NodeKind::Convolution) {
            std::int64_t c = pl.graph.in_shape(n).c;
            idle_threshold = std::max(idle_threshold, c + 8);
        }

    SimResult res;
    std::int64_t idle = 0;
    std::int64_t cycle = 0;
    for (; cycle < pl.opts.max_cycles; ++cycle) {
        pl.activity = 0;
        for (auto& p : pl.processes) p->step(cycle);
        for (auto& [key, ch] : pl.channels) ch->commit();
        if (pl.opts.trace_occupancy)
            for (auto& [key, ch] : pl.channels)
                res.occupancy_trace.emplace_back(cycle, key, ch->size());

        bool all_done = std::all_of(pl.processes.begin(), pl.processes.end(),
                                    [](const auto& p) { return p->done(); });
        if (all_done) {
            ++cycle;
            break;
        }
        if (pl.activity == 0) {
            if (++idle > idle_threshold) {
                res.deadlocked = true;
                for (auto& [key, ch] : pl.channels) {
                    if (ch->capacity != kUnbounded && ch->size() >= ch->capacity)
                        res.blocked_channels.push_back(key + " (full at " +
                                                       std::to_string(ch->size()) + ")");
                }
                for (auto& p : pl.processes)
                    if (!p->done())
                        for (auto* c : p->ins)
                            if (!c->can_pop())
                                res.blocked_channels.push_back(c->key + " (starved, waited on by " +
                                                               p->id + ")");
                break;
            }
        } else {
            idle = 0;
        }
    }
    if (!res.deadlocked && cycle >= pl.opts.max_cycles)
        throw SimError("simulation exceeded max_cycles");

    res.cycles_total = cycle;
    for (auto& [id, op] : pl.output_procs) res.outputs[id] = op->result;
    for (auto& [key, ch] : pl.channels) res.high_water[key] = ch->high_water;
    for (const auto& e : pl.graph.skip_edges()) {
        auto key = e.key();
        if (auto it = pl.skip_fifos.find(key); it != pl.skip_fifos.end())
            res.depths.q[key] = it->second->high_water;
        else
            res.depths.q[key] = pl.channels.at(key)->high_water;
    }
    for (auto& p : pl.processes) {
        if (!p->is_model_node) continue;
        if (p->first_out >= 0)
            res.cycles_steady =
                std::max(res.cycles_steady, p->last_out - p->first_out + 1);
        std::int64_t start = p->first_in >= 0 ? p->first_in : 0;
        if (p->first_out >= 0)
            res.measured_depth[p->id] = double(p->first_out - start);
    }
    return res;
}

DepthReport measure_fifo_depths(const NetworkGraph& g, const DesignPoint& dp,
                                const QuantConfig& qc, const EdgeShifts& shifts,
                                const IntTensor& input) {
    SimOptions opts;
    opts.unbounded_channels = true;
    auto pipe = build_pipeline(g, dp, qc, shifts, opts);
    auto res = run_sim(pipe, input);
    if (res.deadlocked)
        throw SimError("deadlock with unbounded channels; graph is malformed");
    return res.depths;
}

SoftFifoRun simulate_soft_fifo(const SoftFifoConfig& cfg,
                               const std::vector<std::int64_t>& in_stream,
                               std::int64_t dma_burst,
                               const std::vector<std::int64_t>* stall_until) {
    cfg.check();
    const std::int64_t total = std::int64_t(in_stream.size());
    std::deque<std::int64_t> mem;
    std::int64_t written = 0, read = 0;
    SoftFifoRun run;
    std::int64_t cycle = 0;
    const std::int64_t guard = 64 + 2 * total + (stall_until && !stall_until->empty()
                                                     ? *std::max_element(stall_until->begin(),
                                                                         stall_until->end())
                                                     : 0);
    for (; read < total && cycle < guard + 16; ++cycle) {
        std::int64_t moved = 0;
        // producer side: one chunk row at a time, bounded by DMA burst
        while (moved < dma_burst && written < total &&
               written - read < cfg.depth * cfg.chunk_size) {
            mem.push_back(in_stream[size_t(written)]);
            ++written;
            ++moved;
        }
        std::int64_t chunks_in = written == total
                                     ? (written + cfg.chunk_size - 1) / cfg.chunk_size
                                     : written / cfg.chunk_size;
        std::int64_t readable = std::min(chunks_in * cfg.chunk_size, total) - read;
        std::int64_t out_moved = 0;
        while (out_moved < dma_burst && readable > 0) {
            if (stall_until && size_t(read) < stall_until->size() &&
                cycle < (*stall_until)[size_t(read)])
                break;
            run.out.push_back(mem.front());
            mem.pop_front();
            ++read;
            --readable;
            ++out_moved;
        }
        run.peak_words_per_cycle =
            std::max(run.peak_words_per_cycle, double(moved + out_moved));
    }
    run.cycles = cycle;
    if (read < total) throw SimError("soft FIFO failed to drain");
    return run;
}

}  // namespace flowmap::sim
