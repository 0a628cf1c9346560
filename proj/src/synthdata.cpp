#include "kclnet/synthdata.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"
#include "kclnet/cktgraph.hpp"
#include "kclnet/rng.hpp"

namespace kclnet {

namespace {

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    return s;
}

// Emits netlist text; the result is parsed afterwards so every generated
// circuit goes through the same front end as user input.
class Builder {
public:
    explicit Builder(Rng& rng) : rng_(rng) {
        line("V1 vdd 0 " + render_value(round3(rng_.uniform(1.0, 5.0))));
    }

    std::string net(const std::string& hint) { return hint + std::to_string(++net_counter_); }

    std::string r(const std::string& a, const std::string& b) {
        return r(a, b, rng_.log_uniform(1e1, 1e6));
    }
    std::string r(const std::string& a, const std::string& b, double v) {
        std::string id = "R" + std::to_string(++dev_counter_);
        line(id + " " + a + " " + b + " " + render_value(round3(v)));
        return id;
    }
    std::string c(const std::string& a, const std::string& b) {
        std::string id = "C" + std::to_string(++dev_counter_);
        line(id + " " + a + " " + b + " " + render_value(round3(rng_.log_uniform(1e-13, 1e-9))));
        return id;
    }
    std::string l(const std::string& a, const std::string& b) {
        std::string id = "L" + std::to_string(++dev_counter_);
        line(id + " " + a + " " + b + " " + render_value(round3(rng_.log_uniform(1e-9, 1e-5))));
        return id;
    }
    std::string d(const std::string& a, const std::string& b) {
        std::string id = "D" + std::to_string(++dev_counter_);
        line(id + " " + a + " " + b);
        return id;
    }
    std::string mos(const std::string& drain, const std::string& gate, const std::string& source,
                    const std::string& bulk, bool nmos, double w_scale = 1.0) {
        std::string id = "M" + std::to_string(++dev_counter_);
        double w = round3(rng_.log_uniform(2e-7, 5e-6) * w_scale);
        double l = round3(rng_.log_uniform(1.5e-7, 1e-6));
        line(id + " " + drain + " " + gate + " " + source + " " + bulk + " " +
             (nmos ? "NMOS" : "PMOS") + " W=" + render_value(w) + " L=" + render_value(l));
        return id;
    }
    std::string bjt(const std::string& collector, const std::string& base,
                    const std::string& emitter, bool npn) {
        std::string id = "Q" + std::to_string(++dev_counter_);
        line(id + " " + collector + " " + base + " " + emitter + " " + (npn ? "NPN" : "PNP"));
        return id;
    }

    // Resistive divider driving a fresh net; every gate/input net in the
    // templates is driven this way so nothing floats.
    std::string divider(const std::string& hint) {
        std::string mid = net(hint);
        r("vdd", mid);
        r(mid, "0");
        return mid;
    }

    // Bleeder + decoupling pair across the rails. The two devices share the
    // same predecessors, so at least one depth layer always holds two nodes.
    void rail_decap() {
        r("vdd", "0", round3(rng_.log_uniform(1e4, 1e6)));
        c("vdd", "0");
    }

    std::string text() const { return text_; }

private:
    static double round3(double v) {
        // 3 significant digits keeps the rendered netlists short.
        std::ostringstream os;
        os.precision(3);
        os << v;
        return std::strtod(os.str().c_str(), nullptr);
    }

    void line(const std::string& s) { text_ += s + "\n"; }

    Rng& rng_;
    std::string text_;
    int dev_counter_ = 1;  // V1 took slot 1 conceptually
    int net_counter_ = 0;
};

void build_divider(Builder& b, Rng& rng, int stages) {
    int k = stages + 2;
    std::string prev = "vdd";
    std::string last_mid;
    for (int i = 0; i < k; ++i) {
        std::string next = (i == k - 1) ? "0" : b.net("n");
        b.r(prev, next);
        if (i == k - 1)
            last_mid = prev;
        else
            prev = next;
    }
    b.r(last_mid, "0");  // load across the bottom segment
}

void build_rc_ladder(Builder& b, Rng& rng, int stages) {
    std::string prev = "vdd";
    for (int i = 0; i < stages; ++i) {
        std::string node = b.net("n");
        b.r(prev, node);
        b.c(node, "0");
        prev = node;
    }
    b.r(prev, "0");
}

void build_current_mirror(Builder& b, Rng& rng, int stages) {
    std::string nbias = b.net("bias");
    b.r("vdd", nbias);
    b.mos(nbias, nbias, "0", "0", true);  // diode-connected reference
    for (int j = 0; j < stages + 1; ++j) {
        std::string out = b.net("out");
        b.r("vdd", out);
        b.mos(out, nbias, "0", "0", true);
    }
}

void build_diff_pair(Builder& b, Rng& rng, int stages) {
    std::string nbias = b.divider("bias");
    int pairs = 1 + stages / 3;
    for (int p = 0; p < pairs; ++p) {
        std::string ntail = b.net("tail");
        b.mos(ntail, nbias, "0", "0", true);
        std::string inp = b.divider("inp");
        std::string inn = b.divider("inn");
        std::string outp = b.net("outp");
        std::string outn = b.net("outn");
        b.mos(outp, inp, ntail, "0", true);
        b.mos(outn, inn, ntail, "0", true);
        b.r("vdd", outp);
        b.r("vdd", outn);
    }
}

void build_inverter_chain(Builder& b, Rng& rng, int stages) {
    std::string in = b.divider("in");
    for (int i = 0; i < stages + 1; ++i) {
        std::string out = b.net("inv");
        b.mos(out, in, "vdd", "vdd", false);
        b.mos(out, in, "0", "0", true);
        in = out;
    }
    b.r(in, "0");
}

void build_buffer_chain(Builder& b, Rng& rng, int stages) {
    std::string in = b.divider("in");
    int cells = 1 + stages / 2;
    for (int i = 0; i < cells; ++i) {
        std::string mid = b.net("bm");
        std::string out = b.net("bo");
        b.mos(mid, in, "vdd", "vdd", false);
        b.mos(mid, in, "0", "0", true);
        b.mos(out, mid, "vdd", "vdd", false);
        b.mos(out, mid, "0", "0", true);
        b.c(out, "0");
        std::string next = b.net("bn");
        b.r(out, next);
        in = next;
    }
    b.r(in, "0");
}

void build_mux_tree(Builder& b, Rng& rng, int stages) {
    int levels = 2 + stages / 4;
    levels = std::min(levels, 4);
    std::vector<std::string> nodes;
    for (int i = 0; i < (1 << levels); ++i) nodes.push_back(b.divider("leaf"));
    while (nodes.size() > 1) {
        std::string sel = b.divider("sel");
        std::vector<std::string> next;
        for (size_t i = 0; i + 1 < nodes.size(); i += 2) {
            std::string out = b.net("mx");
            b.mos(nodes[i], sel, out, "0", true);
            b.mos(nodes[i + 1], sel, out, "0", true);
            next.push_back(out);
        }
        nodes = std::move(next);
    }
    b.r(nodes[0], "0");
}

void build_reference_stack(Builder& b, Rng& rng, int stages) {
    std::string prev = "vdd";
    std::string tap;
    for (int i = 0; i < stages + 1; ++i) {
        std::string node = b.net("ref");
        b.d(prev, node);
        if (i == 0) tap = node;
        prev = node;
    }
    b.r(prev, "0");
    b.c(tap, "0");
    std::string out = b.net("refout");
    b.bjt("vdd", tap, out, true);
    b.r(out, "0");
}

void build_decoder_fan(Builder& b, Rng& rng, int stages) {
    std::string gate = b.divider("g");
    for (int i = 0; i < stages + 2; ++i) {
        std::string out = b.net("dec");
        b.r("vdd", out);
        b.mos(out, gate, "0", "0", true);
        if (i % 2 == 0) b.c(out, "0");
    }
}

void build_pad_buffer(Builder& b, Rng& rng, int stages) {
    std::string in = b.divider("pin");
    for (int i = 0; i < 1 + stages / 4; ++i) {
        std::string out = b.net("pre");
        b.mos(out, in, "vdd", "vdd", false);
        b.mos(out, in, "0", "0", true);
        in = out;
    }
    std::string drv = b.net("drv");
    b.mos(drv, in, "vdd", "vdd", false, 8.0);
    b.mos(drv, in, "0", "0", true, 8.0);
    std::string pad = b.net("pad");
    b.r(drv, pad);
    b.c(pad, "0");
    b.d(pad, "vdd");
    b.d("0", pad);
    b.r(pad, "0");
}

void build_spare_row(Builder& b, Rng& rng, int stages) {
    std::string tie = b.divider("tie");
    for (int i = 0; i < stages + 2; ++i) {
        std::string out = b.net("sp");
        b.mos(out, tie, "vdd", "vdd", false);
        b.mos(out, tie, "0", "0", true);
        b.r(out, "0");
    }
}

void build_sar_array(Builder& b, Rng& rng, int stages) {
    std::string top = b.net("top");
    b.r("vdd", top);
    std::string sel = b.divider("sel");
    for (int i = 0; i < stages + 2; ++i) {
        std::string bot = b.net("bot");
        b.c(top, bot);
        b.mos(bot, sel, "0", "0", true);
    }
    b.r(top, "0");
}

using TemplateFn = void (*)(Builder&, Rng&, int);

const TemplateFn kTemplates[kNumClasses] = {
    build_divider,      build_rc_ladder,  build_current_mirror, build_diff_pair,
    build_inverter_chain, build_buffer_chain, build_mux_tree,     build_reference_stack,
    build_decoder_fan,  build_pad_buffer, build_spare_row,      build_sar_array,
};

const char* kClassNames[kNumClasses] = {
    "divider",      "rc_ladder",  "current_mirror", "diff_pair",
    "inverter_chain", "buffer_chain", "mux_tree",     "reference_stack",
    "decoder_fan",  "pad_buffer", "spare_row",      "sar_array",
};

// Small two-port block per class, used for subcircuit injection. Ports a/b
// are existing host nets; every fresh id carries the "inj" marker.
std::string block_lines(int block_class, const std::string& a, const std::string& b, int& counter,
                        Rng& rng) {
    auto id = [&counter](const char* letter) {
        return std::string(letter) + "inj" + std::to_string(++counter);
    };
    auto netid = [&counter]() { return "injn" + std::to_string(++counter); };
    auto rv = [&rng]() { return render_value(rng.log_uniform(1e2, 1e5)); };
    auto cv = [&rng]() { return render_value(rng.log_uniform(1e-13, 1e-10)); };
    std::string w = " W=1e-6 L=2e-7";
    std::string o;
    switch (block_class) {
        case 0: {  // divider: two series resistors plus a parallel leg
            std::string x = netid();
            o += id("R") + " " + a + " " + x + " " + rv() + "\n";
            o += id("R") + " " + x + " " + b + " " + rv() + "\n";
            o += id("R") + " " + x + " " + b + " " + rv() + "\n";
            break;
        }
        case 1: {  // rc stage
            std::string x = netid();
            o += id("R") + " " + a + " " + x + " " + rv() + "\n";
            o += id("C") + " " + x + " " + b + " " + cv() + "\n";
            break;
        }
        case 2: {  // mirror
            std::string x = netid();
            o += id("R") + " " + a + " " + x + " " + rv() + "\n";
            o += id("M") + " " + x + " " + x + " " + b + " " + b + " NMOS" + w + "\n";
            o += id("M") + " " + a + " " + x + " " + b + " " + b + " NMOS" + w + "\n";
            break;
        }
        case 3: {  // degenerated pair with shared tail
            std::string g = netid();
            std::string t = netid();
            o += id("R") + " " + a + " " + g + " " + rv() + "\n";
            o += id("M") + " " + a + " " + g + " " + t + " " + b + " NMOS" + w + "\n";
            o += id("M") + " " + a + " " + g + " " + t + " " + b + " NMOS" + w + "\n";
            o += id("R") + " " + t + " " + b + " " + rv() + "\n";
            break;
        }
        case 4: {  // inverter-like
            std::string x = netid();
            o += id("M") + " " + x + " " + a + " " + a + " " + a + " PMOS" + w + "\n";
            o += id("M") + " " + x + " " + a + " " + b + " " + b + " NMOS" + w + "\n";
            o += id("R") + " " + x + " " + b + " " + rv() + "\n";
            break;
        }
        case 5: {  // buffer-like
            std::string x = netid();
            std::string y = netid();
            o += id("M") + " " + x + " " + a + " " + a + " " + a + " PMOS" + w + "\n";
            o += id("M") + " " + x + " " + a + " " + b + " " + b + " NMOS" + w + "\n";
            o += id("M") + " " + y + " " + x + " " + a + " " + a + " PMOS" + w + "\n";
            o += id("M") + " " + y + " " + x + " " + b + " " + b + " NMOS" + w + "\n";
            o += id("R") + " " + y + " " + b + " " + rv() + "\n";
            break;
        }
        case 6: {  // pass-gate pair
            std::string g = netid();
            std::string x = netid();
            o += id("R") + " " + a + " " + g + " " + rv() + "\n";
            o += id("M") + " " + a + " " + g + " " + x + " " + b + " NMOS" + w + "\n";
            o += id("M") + " " + x + " " + g + " " + b + " " + b + " NMOS" + w + "\n";
            break;
        }
        case 7: {  // diode stack
            std::string x = netid();
            std::string y = netid();
            o += id("D") + " " + a + " " + x + "\n";
            o += id("D") + " " + x + " " + y + "\n";
            o += id("R") + " " + y + " " + b + " " + rv() + "\n";
            break;
        }
        case 8: {  // fan of two switches
            std::string g = netid();
            o += id("R") + " " + a + " " + g + " " + rv() + "\n";
            o += id("M") + " " + a + " " + g + " " + b + " " + b + " NMOS" + w + "\n";
            o += id("M") + " " + a + " " + g + " " + b + " " + b + " NMOS" + w + "\n";
            break;
        }
        case 9: {  // pad cell
            std::string x = netid();
            o += id("R") + " " + a + " " + x + " " + rv() + "\n";
            o += id("C") + " " + x + " " + b + " " + cv() + "\n";
            o += id("D") + " " + x + " " + b + "\n";
            break;
        }
        case 10: {  // spare cell
            std::string x = netid();
            o += id("R") + " " + a + " " + x + " " + rv() + "\n";
            o += id("M") + " " + x + " " + a + " " + b + " " + b + " NMOS" + w + "\n";
            break;
        }
        case 11: {  // weighted-cap pair with switch
            std::string x = netid();
            o += id("C") + " " + a + " " + x + " " + cv() + "\n";
            o += id("C") + " " + x + " " + b + " " + cv() + "\n";
            o += id("M") + " " + x + " " + a + " " + b + " " + b + " NMOS" + w + "\n";
            break;
        }
        default:
            throw SynthError("InvalidTemplateParams", "block class out of range");
    }
    return o;
}

}  // namespace

const char* class_name(int class_id) {
    if (class_id < 0 || class_id >= kNumClasses)
        throw SynthError("InvalidTemplateParams", "class id out of range");
    return kClassNames[class_id];
}

Circuit gen_circuit(int class_id, const GenParams& params, uint64_t seed) {
    if (class_id < 0 || class_id >= kNumClasses)
        throw SynthError("InvalidTemplateParams", "class id out of range");
    if (params.min_stages < 1 || params.min_stages > params.max_stages)
        throw SynthError("InvalidTemplateParams", "bad stage range");

    Rng rng(derive_seed(seed, 0xc1ac5ull, static_cast<uint64_t>(class_id)));
    int stages = params.min_stages + rng.uniform_int(params.max_stages - params.min_stages + 1);

    Builder b(rng);
    kTemplates[class_id](b, rng, stages);
    b.rail_decap();

    Circuit c = parse_netlist(b.text());
    c.name = std::string(kClassNames[class_id]) + "_" + std::to_string(seed);
    ValidationReport rep = validate_circuit(c);
    if (!rep.ok) throw SynthError("InvalidTemplateParams", "template produced invalid circuit");
    return c;
}

Injection inject_subcircuit(const Circuit& host, int block_class, uint64_t seed) {
    if (host.nets.size() < 2) throw SynthError("NoSpliceSite", "host has fewer than two nets");
    Rng rng(derive_seed(seed, 0x1213ecull, static_cast<uint64_t>(block_class)));

    int a = rng.uniform_int(static_cast<int>(host.nets.size()));
    int b = rng.uniform_int(static_cast<int>(host.nets.size() - 1));
    if (b >= a) ++b;

    int counter = 0;
    std::string lines =
        block_lines(block_class, host.nets[a].id, host.nets[b].id, counter, rng);

    Injection out;
    out.block_class = block_class;
    out.merged = parse_netlist(serialize_circuit(host) + lines);
    out.merged.name = host.name + "+inj" + std::to_string(block_class);
    for (const Device& d : out.merged.devices)
        if (d.id.find("inj") != std::string::npos) out.positive_nodes.push_back(d.id);
    for (const Net& n : out.merged.nets)
        if (n.id.rfind("injn", 0) == 0) out.positive_nodes.push_back(n.id);
    return out;
}

namespace {

bool is_two_terminal(DeviceKind k) {
    return k == DeviceKind::Resistor || k == DeviceKind::Capacitor ||
           k == DeviceKind::Inductor || k == DeviceKind::Diode;
}

char kind_letter(DeviceKind k) {
    switch (k) {
        case DeviceKind::Resistor: return 'R';
        case DeviceKind::Capacitor: return 'C';
        case DeviceKind::Inductor: return 'L';
        case DeviceKind::Diode: return 'D';
        default: return '?';
    }
}

const char* value_param(DeviceKind k) {
    switch (k) {
        case DeviceKind::Resistor: return "resistance";
        case DeviceKind::Capacitor: return "capacitance";
        case DeviceKind::Inductor: return "inductance";
        default: return nullptr;
    }
}

bool accepts(const Circuit& c) {
    if (!validate_circuit(c).ok) return false;
    try {
        CircuitGraph g = build_bipartite(c);
        to_dag(g, c);
    } catch (const GraphError&) {
        return false;
    }
    return true;
}

}  // namespace

Mutation mutate(const Circuit& input, int n_edits, uint64_t seed) {
    Rng rng(derive_seed(seed, 0x3d17ull));
    Circuit cur = input;
    int fresh = 0;

    for (int edit = 0; edit < n_edits; ++edit) {
        bool applied = false;
        for (int attempt = 0; attempt < 50 && !applied; ++attempt) {
            Circuit work = cur;
            int op = rng.uniform_int(3);
            if (op == 0) {  // insert a series device at a random pin
                int di = rng.uniform_int(static_cast<int>(work.devices.size()));
                Device& d = work.devices[di];
                int pin = rng.uniform_int(static_cast<int>(d.pins.size()));
                if (d.kind == DeviceKind::Vsource && pin == 1) continue;  // keep the return at 0
                std::string old_net = d.pins[pin].net;
                std::string new_net = "mutn" + std::to_string(++fresh);
                d.pins[pin].net = new_net;
                int kind_pick = rng.uniform_int(3);
                const char* letters = "RCL";
                double v = rng.log_uniform(1e1, 1e5);
                std::string line = std::string(1, letters[kind_pick]) + "mut" +
                                   std::to_string(++fresh) + " " + new_net + " " + old_net + " " +
                                   render_value(v);
                std::string text = serialize_circuit(work) + line + "\n";
                Circuit parsed = parse_netlist(text);
                if (accepts(parsed)) {
                    parsed.name = cur.name;
                    cur = std::move(parsed);
                    applied = true;
                }
            } else if (op == 1) {  // delete a two-terminal device, splicing its nets
                std::vector<int> candidates;
                for (size_t i = 0; i < work.devices.size(); ++i)
                    if (is_two_terminal(work.devices[i].kind))
                        candidates.push_back(static_cast<int>(i));
                if (candidates.empty()) continue;
                int di = candidates[rng.uniform_int(static_cast<int>(candidates.size()))];
                std::string neta = work.devices[di].pins[0].net;
                std::string netb = work.devices[di].pins[1].net;
                work.devices.erase(work.devices.begin() + di);
                if (lower(neta) != lower(netb)) {
                    std::string keep = lower(neta) == "0" ? neta : (lower(netb) == "0" ? netb : neta);
                    std::string gone = lower(keep) == lower(neta) ? netb : neta;
                    for (Device& d : work.devices)
                        for (Pin& p : d.pins)
                            if (lower(p.net) == lower(gone)) p.net = keep;
                }
                Circuit parsed = parse_netlist(serialize_circuit(work));
                if (accepts(parsed)) {
                    parsed.name = cur.name;
                    cur = std::move(parsed);
                    applied = true;
                }
            } else {  // substitute an arity-compatible kind
                std::vector<int> candidates;
                for (size_t i = 0; i < work.devices.size(); ++i) {
                    DeviceKind k = work.devices[i].kind;
                    if (is_two_terminal(k) || k == DeviceKind::Nmos || k == DeviceKind::Pmos ||
                        k == DeviceKind::Npn || k == DeviceKind::Pnp)
                        candidates.push_back(static_cast<int>(i));
                }
                if (candidates.empty()) continue;
                int di = candidates[rng.uniform_int(static_cast<int>(candidates.size()))];
                Device& d = work.devices[di];
                if (is_two_terminal(d.kind)) {
                    DeviceKind opts[4] = {DeviceKind::Resistor, DeviceKind::Capacitor,
                                          DeviceKind::Inductor, DeviceKind::Diode};
                    DeviceKind target = d.kind;
                    while (target == d.kind) target = opts[rng.uniform_int(4)];
                    double v = 1e3;
                    if (const char* pn = value_param(d.kind))
                        if (auto cur_v = d.param(pn)) v = *cur_v;
                    Device repl;
                    repl.id = std::string(1, kind_letter(target)) + "mut" + std::to_string(++fresh);
                    repl.kind = target;
                    repl.pins = {{"n+", d.pins[0].net}, {"n-", d.pins[1].net}};
                    if (const char* pn = value_param(target)) repl.params.emplace_back(pn, v);
                    d = std::move(repl);
                } else if (d.kind == DeviceKind::Nmos || d.kind == DeviceKind::Pmos) {
                    DeviceKind target =
                        d.kind == DeviceKind::Nmos ? DeviceKind::Pmos : DeviceKind::Nmos;
                    const auto& roles = kind_pin_roles(target);
                    for (int i = 0; i < 4; ++i) d.pins[i].role = roles[i];
                    d.kind = target;
                } else {
                    d.kind = d.kind == DeviceKind::Npn ? DeviceKind::Pnp : DeviceKind::Npn;
                }
                Circuit parsed = parse_netlist(serialize_circuit(work));
                if (accepts(parsed)) {
                    parsed.name = cur.name;
                    cur = std::move(parsed);
                    applied = true;
                }
            }
        }
        if (!applied)
            throw SynthError("ExhaustedEdits", "no applicable edit after 50 attempts");
    }

    Mutation out;
    out.mutated = std::move(cur);
    out.mutated.name = input.name + "_mut" + std::to_string(n_edits);
    out.ged = n_edits;
    return out;
}

SplitSpec split_spec_for_task(const std::string& task) {
    SplitSpec s;
    if (task == "cls") {
        s.train = 360000.0 / 428400.0;
        s.val = 28800.0 / 428400.0;
        s.test = 39600.0 / 428400.0;
    } else if (task == "det") {
        s.train = 0.769;
        s.val = 0.077;
        s.test = 0.154;
    } else if (task == "ged") {
        s.train = 0.70;
        s.val = 0.10;
        s.test = 0.20;
    } else {
        throw SynthError("InvalidTemplateParams", "unknown task " + task);
    }
    return s;
}

Splits make_splits(const std::vector<int>& class_of_sample, const SplitSpec& spec) {
    if (std::abs(spec.train + spec.val + spec.test - 1.0) > 1e-9)
        throw SynthError("InvalidTemplateParams", "split fractions must sum to 1");

    std::map<int, std::vector<int>> by_class;
    for (size_t i = 0; i < class_of_sample.size(); ++i)
        by_class[class_of_sample[i]].push_back(static_cast<int>(i));

    Splits out;
    for (auto& [cls, idx] : by_class) {
        const int n = static_cast<int>(idx.size());
        if (n < 3)
            throw SynthError("TooFewSamples",
                             "class " + std::to_string(cls) + " has " + std::to_string(n));
        Rng rng(derive_seed(spec.seed, 0x5b117ull, static_cast<uint64_t>(cls)));
        rng.shuffle(idx);
        int n_test = static_cast<int>(std::llround(spec.test * n));
        int n_val = static_cast<int>(std::llround(spec.val * n));
        while (n - n_val - n_test < 1) (n_test > n_val ? n_test : n_val) -= 1;
        for (int i = 0; i < n; ++i) {
            if (i < n_test)
                out.test.push_back(idx[i]);
            else if (i < n_test + n_val)
                out.val.push_back(idx[i]);
            else
                out.train.push_back(idx[i]);
        }
    }
    std::sort(out.train.begin(), out.train.end());
    std::sort(out.val.begin(), out.val.end());
    std::sort(out.test.begin(), out.test.end());
    return out;
}

std::vector<DatasetEntry> generate_dataset(const std::string& dir, const std::string& task, int n,
                                           uint64_t seed, const GenParams& params, ExecMode mode) {
    namespace fs = std::filesystem;
    if (task != "cls" && task != "det" && task != "ged")
        throw SynthError("InvalidTemplateParams", "unknown task " + task);
    fs::create_directories(dir);

    struct Built {
        std::string file_a;
        std::string content_a;
        std::string file_b;
        std::string content_b;
        int label;
        std::vector<std::string> positives;
    };
    std::vector<Built> built(n);

    parallel_for(n, mode, [&](int i) {
        uint64_t si = derive_seed(seed, 0xda7aull, static_cast<uint64_t>(i));
        Built& b = built[i];
        if (task == "cls") {
            int cls = i % kNumClasses;
            Circuit c = gen_circuit(cls, params, si);
            b.file_a = "cls_" + std::to_string(i) + "_c" + std::to_string(cls) + ".cir";
            b.content_a = serialize_circuit(c);
            b.label = cls;
        } else if (task == "det") {
            Rng rng(si);
            int host_class = rng.uniform_int(kNumClasses);
            int block_class = i % kNumClasses;
            Circuit host = gen_circuit(host_class, params, derive_seed(si, 1));
            Injection inj = inject_subcircuit(host, block_class, derive_seed(si, 2));
            b.file_a = "det_" + std::to_string(i) + "_b" + std::to_string(block_class) + ".cir";
            b.content_a = serialize_circuit(inj.merged);
            b.label = block_class;
            b.positives = std::move(inj.positive_nodes);
        } else if (task == "ged") {
            Rng rng(si);
            int cls = i % kNumClasses;
            int edits = rng.uniform_int(9);
            Circuit base = gen_circuit(cls, params, derive_seed(si, 1));
            Mutation mut = mutate(base, edits, derive_seed(si, 2));
            b.file_a = "ged_" + std::to_string(i) + "_a.cir";
            b.content_a = serialize_circuit(base);
            b.file_b = "ged_" + std::to_string(i) + "_b.cir";
            b.content_b = serialize_circuit(mut.mutated);
            b.label = mut.ged;
        } else {
            throw SynthError("InvalidTemplateParams", "unknown task " + task);
        }
    });

    std::vector<DatasetEntry> entries(n);
    std::vector<int> strat(n);
    for (int i = 0; i < n; ++i) {
        const Built& b = built[i];
        std::ofstream(fs::path(dir) / b.file_a) << b.content_a;
        if (!b.file_b.empty()) std::ofstream(fs::path(dir) / b.file_b) << b.content_b;
        entries[i].path = (fs::path(dir) / b.file_a).string();
        entries[i].path2 = b.file_b.empty() ? "" : (fs::path(dir) / b.file_b).string();
        entries[i].task = task;
        entries[i].label = b.label;
        entries[i].positive_nodes = b.positives;
        strat[i] = b.label;
    }

    SplitSpec spec = split_spec_for_task(task);
    spec.seed = derive_seed(seed, 0x5e71ull);
    Splits splits = make_splits(strat, spec);
    for (int i : splits.train) entries[i].split = "train";
    for (int i : splits.val) entries[i].split = "val";
    for (int i : splits.test) entries[i].split = "test";
    return entries;
}

void write_manifest(const std::string& path, const std::vector<DatasetEntry>& entries) {
    // Netlists sit flat next to the manifest, so paths are stored relative.
    nlohmann::ordered_json j = nlohmann::ordered_json::array();
    for (const DatasetEntry& e : entries) {
        nlohmann::ordered_json je;
        je["path"] = std::filesystem::path(e.path).filename().string();
        if (!e.path2.empty()) je["path2"] = std::filesystem::path(e.path2).filename().string();
        je["task"] = e.task;
        je["label"] = e.label;
        if (!e.positive_nodes.empty()) je["positive_nodes"] = e.positive_nodes;
        je["split"] = e.split;
        j.push_back(std::move(je));
    }
    std::ofstream(path) << j.dump(2) << "\n";
}

std::vector<DatasetEntry> load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw SynthError("InvalidTemplateParams", "cannot open manifest " + path);
    nlohmann::json j = nlohmann::json::parse(in);
    std::filesystem::path base = std::filesystem::path(path).parent_path();
    std::vector<DatasetEntry> out;
    for (const auto& je : j) {
        DatasetEntry e;
        e.path = (base / je.at("path").get<std::string>()).string();
        if (je.contains("path2") && !je.at("path2").get<std::string>().empty())
            e.path2 = (base / je.at("path2").get<std::string>()).string();
        e.task = je.at("task").get<std::string>();
        e.label = je.at("label").get<int>();
        if (je.contains("positive_nodes"))
            e.positive_nodes = je.at("positive_nodes").get<std::vector<std::string>>();
        e.split = je.at("split").get<std::string>();
        out.push_back(std::move(e));
    }
    return out;
}

}  // namespace kclnet
