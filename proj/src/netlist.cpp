#include "kclnet/netlist.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <set>
#include <sstream>
#include <unordered_map>

namespace kclnet {

namespace {

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    return s;
}

const std::vector<std::pair<std::string, int>> kSuffixes = {
    {"meg", 6}, {"f", -15}, {"p", -12}, {"n", -9}, {"u", -6}, {"m", -3}, {"k", 3}, {"g", 9},
};

struct Token {
    std::string text;
    int col;  // 1-based
};

std::vector<Token> split_tokens(const std::string& line) {
    std::vector<Token> out;
    size_t i = 0;
    while (i < line.size()) {
        if (std::isspace(static_cast<unsigned char>(line[i]))) {
            ++i;
            continue;
        }
        size_t j = i;
        while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
        out.push_back({line.substr(i, j - i), static_cast<int>(i) + 1});
        i = j;
    }
    return out;
}

}  // namespace

const char* kind_name(DeviceKind k) {
    switch (k) {
        case DeviceKind::Nmos: return "NMOS";
        case DeviceKind::Pmos: return "PMOS";
        case DeviceKind::Npn: return "NPN";
        case DeviceKind::Pnp: return "PNP";
        case DeviceKind::Diode: return "DIODE";
        case DeviceKind::Resistor: return "RESISTOR";
        case DeviceKind::Capacitor: return "CAPACITOR";
        case DeviceKind::Inductor: return "INDUCTOR";
        case DeviceKind::Vsource: return "VSOURCE";
        case DeviceKind::Ground: return "GROUND";
    }
    return "?";
}

int kind_pin_count(DeviceKind k) {
    switch (k) {
        case DeviceKind::Nmos:
        case DeviceKind::Pmos: return 4;
        case DeviceKind::Npn:
        case DeviceKind::Pnp: return 3;
        case DeviceKind::Ground: return 1;
        default: return 2;
    }
}

const std::vector<std::string>& kind_pin_roles(DeviceKind k) {
    static const std::vector<std::string> mos_n = {"nd", "ng", "ns", "nb"};
    static const std::vector<std::string> mos_p = {"pd", "pg", "ps", "pb"};
    static const std::vector<std::string> bjt = {"nb", "nc", "ne"};
    static const std::vector<std::string> two = {"n+", "n-"};
    static const std::vector<std::string> gnd = {"gnd"};
    switch (k) {
        case DeviceKind::Nmos: return mos_n;
        case DeviceKind::Pmos: return mos_p;
        case DeviceKind::Npn:
        case DeviceKind::Pnp: return bjt;
        case DeviceKind::Ground: return gnd;
        default: return two;
    }
}

std::optional<double> Device::param(const std::string& name) const {
    for (const auto& [k, v] : params)
        if (k == name) return v;
    return std::nullopt;
}

int Circuit::device_index(const std::string& id) const {
    std::string key = lower(id);
    for (size_t i = 0; i < devices.size(); ++i)
        if (lower(devices[i].id) == key) return static_cast<int>(i);
    return -1;
}

int Circuit::net_index(const std::string& id) const {
    std::string key = lower(id);
    for (size_t i = 0; i < nets.size(); ++i)
        if (lower(nets[i].id) == key) return static_cast<int>(i);
    return -1;
}

bool ValidationReport::has(const std::string& code) const {
    for (const Issue& i : issues)
        if (i.code == code) return true;
    return false;
}

double unit_value(const std::string& token) {
    if (token.empty()) throw NetlistError("UnitError", 0, 0, "empty value");
    const char* begin = token.c_str();
    char* end = nullptr;
    errno = 0;
    double v = std::strtod(begin, &end);
    if (end == begin) throw NetlistError("UnitError", 0, 0, "not a number: '" + token + "'");
    std::string rest = lower(token.substr(end - begin));
    if (rest.empty()) {
        if (!std::isfinite(v)) throw NetlistError("UnitError", 0, 0, "non-finite value");
        return v;
    }
    // A suffix combined with an explicit exponent is rejected; pick the
    // longest matching suffix otherwise.
    std::string prefix = token.substr(0, end - begin);
    if (prefix.find('e') != std::string::npos || prefix.find('E') != std::string::npos)
        throw NetlistError("UnitError", 0, 0, "suffix after exponent: '" + token + "'");
    for (const auto& [suf, exp] : kSuffixes) {
        if (rest == suf) {
            // Recombine textually so "0.18u" lands on the same double as
            // "1.8e-7" would.
            std::string recombined = prefix + "e" + std::to_string(exp);
            double out = std::strtod(recombined.c_str(), nullptr);
            if (!std::isfinite(out)) throw NetlistError("UnitError", 0, 0, "overflow: " + token);
            return out;
        }
    }
    throw NetlistError("UnitError", 0, 0, "unknown suffix '" + rest + "' in '" + token + "'");
}

std::string render_value(double v) {
    if (v == 0.0) return "0";
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::scientific);
    std::string s(buf, res.ptr);
    size_t epos = s.find('e');
    std::string mant = s.substr(0, epos);
    int exp = std::atoi(s.c_str() + epos + 1);
    if (exp == 0) return mant;
    return mant + "e" + std::to_string(exp);
}

namespace {

class Parser {
public:
    explicit Parser(const std::string& text) : text_(text) {}

    Circuit run() {
        std::istringstream in(text_);
        std::string raw;
        int line_no = 0;
        bool ended = false;
        while (std::getline(in, raw)) {
            ++line_no;
            if (ended) continue;
            if (!raw.empty() && raw.back() == '\r') raw.pop_back();
            std::vector<Token> toks = split_tokens(raw);
            if (toks.empty()) continue;
            if (toks[0].text[0] == '*') continue;
            if (lower(toks[0].text) == ".end") {
                ended = true;
                continue;
            }
            parse_statement(toks, line_no);
        }
        if (circuit_.devices.empty())
            throw NetlistError("SyntaxError", line_no, 1, "no devices");
        return std::move(circuit_);
    }

private:
    void parse_statement(const std::vector<Token>& toks, int line) {
        const std::string& id = toks[0].text;
        char c = static_cast<char>(std::toupper(static_cast<unsigned char>(id[0])));
        switch (c) {
            case 'R': two_terminal(toks, line, DeviceKind::Resistor, "resistance"); break;
            case 'C': two_terminal(toks, line, DeviceKind::Capacitor, "capacitance"); break;
            case 'L': two_terminal(toks, line, DeviceKind::Inductor, "inductance"); break;
            case 'D': diode(toks, line); break;
            case 'M': mosfet(toks, line); break;
            case 'Q': bjt(toks, line); break;
            case 'V': vsource(toks, line); break;
            default:
                throw NetlistError("SyntaxError", line, toks[0].col,
                                   "unknown statement '" + id + "'");
        }
    }

    void two_terminal(const std::vector<Token>& toks, int line, DeviceKind kind,
                      const std::string& pname) {
        if (toks.size() != 4)
            throw NetlistError("ArityError", line, toks[0].col,
                               std::string(kind_name(kind)) + " needs 2 nets and a value");
        Device d;
        d.id = toks[0].text;
        d.kind = kind;
        d.pins = {{"n+", canon_net(toks[1].text)}, {"n-", canon_net(toks[2].text)}};
        double v = value_at(toks[3], line);
        if (v < 0.0)
            throw NetlistError("UnitError", line, toks[3].col, "negative value");
        d.params.emplace_back(pname, v);
        add_device(std::move(d), line, toks[0].col);
    }

    void diode(const std::vector<Token>& toks, int line) {
        if (toks.size() != 3 && toks.size() != 4)
            throw NetlistError("ArityError", line, toks[0].col, "diode needs 2 nets [model]");
        Device d;
        d.id = toks[0].text;
        d.kind = DeviceKind::Diode;
        d.pins = {{"n+", canon_net(toks[1].text)}, {"n-", canon_net(toks[2].text)}};
        if (toks.size() == 4) d.model = toks[3].text;
        add_device(std::move(d), line, toks[0].col);
    }

    void mosfet(const std::vector<Token>& toks, int line) {
        if (toks.size() < 6)
            throw NetlistError("ArityError", line, toks[0].col, "MOS needs 4 nets and a type");
        std::string type = lower(toks[5].text);
        DeviceKind kind;
        if (type == "nmos")
            kind = DeviceKind::Nmos;
        else if (type == "pmos")
            kind = DeviceKind::Pmos;
        else
            throw NetlistError("SyntaxError", line, toks[5].col, "expected NMOS or PMOS");
        Device d;
        d.id = toks[0].text;
        d.kind = kind;
        const auto& roles = kind_pin_roles(kind);
        for (int i = 0; i < 4; ++i) d.pins.push_back({roles[i], canon_net(toks[1 + i].text)});
        for (size_t i = 6; i < toks.size(); ++i) {
            size_t eq = toks[i].text.find('=');
            if (eq == std::string::npos)
                throw NetlistError("ArityError", line, toks[i].col,
                                   "expected key=value, got '" + toks[i].text + "'");
            std::string key = lower(toks[i].text.substr(0, eq));
            std::string val = toks[i].text.substr(eq + 1);
            if (key == "w" || key == "l") {
                double v = value_at({val, toks[i].col}, line);
                if (v < 0.0) throw NetlistError("UnitError", line, toks[i].col, "negative value");
                d.params.emplace_back(key == "w" ? "W" : "L", v);
            } else {
                d.opaque.emplace_back(toks[i].text.substr(0, eq), val);
            }
        }
        add_device(std::move(d), line, toks[0].col);
    }

    void bjt(const std::vector<Token>& toks, int line) {
        if (toks.size() != 5)
            throw NetlistError("ArityError", line, toks[0].col, "BJT needs 3 nets and a type");
        std::string type = lower(toks[4].text);
        DeviceKind kind;
        if (type == "npn")
            kind = DeviceKind::Npn;
        else if (type == "pnp")
            kind = DeviceKind::Pnp;
        else
            throw NetlistError("SyntaxError", line, toks[4].col, "expected NPN or PNP");
        Device d;
        d.id = toks[0].text;
        d.kind = kind;
        // Statement order is collector, base, emitter.
        d.pins = {{"nc", canon_net(toks[1].text)},
                  {"nb", canon_net(toks[2].text)},
                  {"ne", canon_net(toks[3].text)}};
        add_device(std::move(d), line, toks[0].col);
    }

    void vsource(const std::vector<Token>& toks, int line) {
        if (toks.size() != 4)
            throw NetlistError("ArityError", line, toks[0].col,
                               "voltage source needs 2 nets and a value");
        if (toks[2].text != "0")
            throw NetlistError("SyntaxError", line, toks[2].col,
                               "voltage source second terminal must be net 0");
        Device d;
        d.id = toks[0].text;
        d.kind = DeviceKind::Vsource;
        d.pins = {{"n+", canon_net(toks[1].text)}, {"n-", canon_net(toks[2].text)}};
        double v = value_at(toks[3], line);
        if (v < 0.0) throw NetlistError("UnitError", line, toks[3].col, "negative value");
        d.params.emplace_back("volts", v);
        circuit_.vsource_ids.push_back(d.id);
        add_device(std::move(d), line, toks[0].col);
    }

    double value_at(const Token& t, int line) {
        try {
            return unit_value(t.text);
        } catch (const NetlistError& e) {
            throw NetlistError(e.code, line, t.col, t.text);
        }
    }

    // Net names compare case-insensitively; the first spelling wins.
    std::string canon_net(const std::string& name) {
        std::string key = lower(name);
        auto it = net_index_.find(key);
        if (it != net_index_.end()) return circuit_.nets[it->second].id;
        Net n;
        n.id = name;
        n.is_ground = (key == "0");
        if (n.is_ground) circuit_.has_ground = true;
        net_index_.emplace(key, circuit_.nets.size());
        circuit_.nets.push_back(std::move(n));
        return name;
    }

    void add_device(Device d, int line, int col) {
        std::string key = lower(d.id);
        if (!device_ids_.insert(key).second)
            throw NetlistError("DuplicateId", line, col, "device '" + d.id + "' already defined");
        for (const Pin& p : d.pins) {
            int ni = static_cast<int>(net_index_.at(lower(p.net)));
            circuit_.nets[ni].connected_pins.emplace_back(d.id, p.role);
        }
        circuit_.devices.push_back(std::move(d));
    }

    const std::string& text_;
    Circuit circuit_;
    std::unordered_map<std::string, size_t> net_index_;
    std::set<std::string> device_ids_;
};

}  // namespace

Circuit parse_netlist(const std::string& text) { return Parser(text).run(); }

ValidationReport validate_circuit(const Circuit& c) {
    ValidationReport rep;
    auto error = [&rep](const std::string& code, const std::string& msg, const std::string& loc) {
        rep.issues.push_back({Severity::Error, code, msg, loc});
        rep.ok = false;
    };
    auto warn = [&rep](const std::string& code, const std::string& msg, const std::string& loc) {
        rep.issues.push_back({Severity::Warning, code, msg, loc});
    };

    if (c.vsource_ids.empty()) error("NO_VSOURCE", "circuit has no voltage source", c.name);
    if (!c.has_ground) error("NO_GROUND", "circuit has no ground net \"0\"", c.name);

    for (const Net& n : c.nets) {
        if (n.connected_pins.size() == 1)
            error("FLOATING_NET", "net has a single connected pin", n.id);
    }
    for (const Device& d : c.devices) {
        bool any_shared = false;
        for (const Pin& p : d.pins) {
            int ni = c.net_index(p.net);
            if (ni < 0) {
                error("MISSING_NET", "pin references missing net '" + p.net + "'", d.id);
                continue;
            }
            for (const auto& [dev, role] : c.nets[ni].connected_pins)
                if (lower(dev) != lower(d.id)) any_shared = true;
        }
        if (!any_shared) warn("UNCONNECTED_DEVICE", "device shares no net with any other", d.id);
    }
    return rep;
}

std::string serialize_circuit(const Circuit& c) {
    std::string out;
    for (const Device& d : c.devices) {
        out += d.id;
        for (const Pin& p : d.pins) {
            out += ' ';
            out += p.net;
        }
        switch (d.kind) {
            case DeviceKind::Resistor:
            case DeviceKind::Capacitor:
            case DeviceKind::Inductor: {
                const char* pname = d.kind == DeviceKind::Resistor     ? "resistance"
                                    : d.kind == DeviceKind::Capacitor ? "capacitance"
                                                                      : "inductance";
                out += ' ';
                out += render_value(d.param(pname).value_or(0.0));
                break;
            }
            case DeviceKind::Diode:
                if (!d.model.empty()) {
                    out += ' ';
                    out += d.model;
                }
                break;
            case DeviceKind::Nmos:
            case DeviceKind::Pmos: {
                out += ' ';
                out += d.kind == DeviceKind::Nmos ? "NMOS" : "PMOS";
                if (auto w = d.param("W")) out += " W=" + render_value(*w);
                if (auto l = d.param("L")) out += " L=" + render_value(*l);
                for (const auto& [k, v] : d.opaque) out += " " + k + "=" + v;
                break;
            }
            case DeviceKind::Npn:
            case DeviceKind::Pnp:
                out += ' ';
                out += d.kind == DeviceKind::Npn ? "NPN" : "PNP";
                break;
            case DeviceKind::Vsource:
                out += ' ';
                out += render_value(d.param("volts").value_or(0.0));
                break;
            case DeviceKind::Ground:
                break;
        }
        out += '\n';
    }
    return out;
}

}  // namespace kclnet
