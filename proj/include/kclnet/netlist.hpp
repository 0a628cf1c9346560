#pragma once

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace kclnet {

enum class DeviceKind { Nmos, Pmos, Npn, Pnp, Diode, Resistor, Capacitor, Inductor, Vsource, Ground };

const char* kind_name(DeviceKind k);
int kind_pin_count(DeviceKind k);
// Canonical ordered pin-role tags per kind (nd/ng/ns/nb, pd/pg/ps/pb,
// nb/nc/ne, n+/n-).
const std::vector<std::string>& kind_pin_roles(DeviceKind k);

struct Pin {
    std::string role;
    std::string net;
};

struct Device {
    std::string id;
    DeviceKind kind = DeviceKind::Resistor;
    std::vector<Pin> pins;                                   // statement order
    std::vector<std::pair<std::string, double>> params;      // name -> value (SI units)
    std::vector<std::pair<std::string, std::string>> opaque; // unparsed key=value passthrough
    std::string model;                                       // diode model name, if any

    std::optional<double> param(const std::string& name) const;
};

struct Net {
    std::string id;
    std::vector<std::pair<std::string, std::string>> connected_pins;  // (device_id, role)
    bool is_ground = false;
};

struct Circuit {
    std::string name;
    std::vector<Device> devices;
    std::vector<Net> nets;
    std::vector<std::string> vsource_ids;
    bool has_ground = false;

    int device_index(const std::string& id) const;  // -1 if absent (case-insensitive)
    int net_index(const std::string& id) const;
};

enum class Severity { Warning, Error };

struct Issue {
    Severity severity;
    std::string code;
    std::string message;
    std::string location;
};

struct ValidationReport {
    bool ok = true;
    std::vector<Issue> issues;

    bool has(const std::string& code) const;
};

struct NetlistError : std::runtime_error {
    NetlistError(std::string error_code, int line_no, int col_no, const std::string& msg)
        : std::runtime_error(error_code + " at line " + std::to_string(line_no) + ", col " +
                             std::to_string(col_no) + ": " + msg),
          code(std::move(error_code)),
          line(line_no),
          col(col_no) {}
    std::string code;  // SyntaxError | ArityError | DuplicateId | UnitError
    int line;
    int col;
};

// Value with SPICE suffix (f p n u m k meg g, longest match, case-insensitive).
double unit_value(const std::string& token);
// Shortest exact decimal, scientific mantissa with compact exponent
// ("1e4", "1.8e-7", "5"); parses back to the identical double.
std::string render_value(double v);

Circuit parse_netlist(const std::string& text);
ValidationReport validate_circuit(const Circuit& c);
std::string serialize_circuit(const Circuit& c);

}  // namespace kclnet
