#include "doctest.h"
#include "kclnet/netlist.hpp"

using namespace kclnet;

TEST_CASE("single resistor statement") {
    Circuit c = parse_netlist("R1 a b 10k\n");
    REQUIRE(c.devices.size() == 1);
    const Device& d = c.devices[0];
    CHECK(d.kind == DeviceKind::Resistor);
    CHECK(d.id == "R1");
    REQUIRE(d.pins.size() == 2);
    CHECK(d.pins[0].role == "n+");
    CHECK(d.pins[0].net == "a");
    CHECK(d.pins[1].role == "n-");
    CHECK(d.pins[1].net == "b");
    CHECK(*d.param("resistance") == 1.0e4);
    CHECK(c.nets.size() == 2);
    CHECK_FALSE(c.has_ground);
}

TEST_CASE("mosfet statement carries the four ordered pin roles") {
    Circuit c = parse_netlist("M1 d g s b NMOS W=1u L=0.18u\n");
    REQUIRE(c.devices.size() == 1);
    const Device& m = c.devices[0];
    CHECK(m.kind == DeviceKind::Nmos);
    REQUIRE(m.pins.size() == 4);
    CHECK(m.pins[0].role == "nd");
    CHECK(m.pins[1].role == "ng");
    CHECK(m.pins[2].role == "ns");
    CHECK(m.pins[3].role == "nb");
    CHECK(*m.param("W") == 1e-6);
    CHECK(*m.param("L") == 1.8e-7);
}

TEST_CASE("empty input is a syntax error") {
    CHECK_THROWS_WITH_AS(parse_netlist(""), doctest::Contains("no devices"), NetlistError);
    CHECK_THROWS_AS(parse_netlist("* only a comment\n\n"), NetlistError);
}

TEST_CASE("arity, duplicate and unit errors") {
    auto code_of = [](const std::string& text) {
        try {
            parse_netlist(text);
        } catch (const NetlistError& e) {
            return e.code;
        }
        return std::string("none");
    };
    CHECK(code_of("R1 a b\n") == "ArityError");
    CHECK(code_of("Q1 c b NPN\n") == "ArityError");
    CHECK(code_of("R1 a b 1k\nr1 c d 2k\n") == "DuplicateId");
    CHECK(code_of("R1 a b 10q\n") == "UnitError");
    CHECK(code_of("R1 a b -5\n") == "UnitError");
    CHECK(code_of("X1 a b 1\n") == "SyntaxError");
    CHECK(code_of("V1 a b 5\n") == "SyntaxError");  // source must return to net 0
}

TEST_CASE("unit suffixes are exact over the table") {
    CHECK(unit_value("10k") == 1.0e4);
    CHECK(unit_value("0.18u") == 1.8e-7);
    CHECK(unit_value("5meg") == 5.0e6);
    CHECK(unit_value("3f") == 3e-15);
    CHECK(unit_value("2p") == 2e-12);
    CHECK(unit_value("7n") == 7e-9);
    CHECK(unit_value("4m") == 4e-3);
    CHECK(unit_value("1g") == 1e9);
    CHECK(unit_value("1e4") == 1.0e4);
    CHECK(unit_value("5MEG") == 5.0e6);  // suffixes are case-insensitive
    CHECK_THROWS_AS(unit_value("1e3k"), NetlistError);
}

TEST_CASE("bjt statement order is collector base emitter") {
    Circuit c = parse_netlist("Q1 vc vb ve NPN\n");
    const Device& q = c.devices[0];
    CHECK(q.kind == DeviceKind::Npn);
    CHECK(q.pins[0].role == "nc");
    CHECK(q.pins[0].net == "vc");
    CHECK(q.pins[1].role == "nb");
    CHECK(q.pins[2].role == "ne");
    // canonical role tags per kind
    CHECK(kind_pin_roles(DeviceKind::Npn) == std::vector<std::string>{"nb", "nc", "ne"});
    CHECK(kind_pin_count(DeviceKind::Npn) == 3);
}

TEST_CASE("pin arity matches the kind table for every parsed device") {
    Circuit c = parse_netlist(
        "V1 vdd 0 5\n"
        "R1 vdd mid 1k\n"
        "C1 mid 0 1p\n"
        "L1 vdd mid 1n\n"
        "D1 mid 0 dx\n"
        "M1 mid g 0 0 NMOS\n"
        "Q1 vdd mid 0 PNP\n"
        "R2 g 0 1k\n"
        "R3 vdd g 1k\n");
    for (const Device& d : c.devices)
        CHECK(static_cast<int>(d.pins.size()) == kind_pin_count(d.kind));
    CHECK(c.vsource_ids == std::vector<std::string>{"V1"});
    CHECK(c.has_ground);
}

TEST_CASE("validation of a well-formed series chain") {
    Circuit c = parse_netlist("V1 vdd 0 5\nR1 vdd mid 1k\nR2 mid 0 2k\n");
    ValidationReport rep = validate_circuit(c);
    CHECK(rep.ok);
}

TEST_CASE("validation error codes") {
    ValidationReport no_vsrc = validate_circuit(parse_netlist("R1 a 0 1k\nR2 a 0 2k\n"));
    CHECK_FALSE(no_vsrc.ok);
    CHECK(no_vsrc.has("NO_VSOURCE"));

    ValidationReport floating =
        validate_circuit(parse_netlist("V1 vdd 0 5\nR1 vdd mid 1k\nR2 mid 0 2k\nR3 vdd dangle 1\n"));
    CHECK_FALSE(floating.ok);
    CHECK(floating.has("FLOATING_NET"));

    ValidationReport no_gnd = validate_circuit(parse_netlist("R1 a b 1k\nR2 b a 2k\n"));
    CHECK(no_gnd.has("NO_GROUND"));
}

TEST_CASE("serialization canonicalizes values") {
    Circuit c = parse_netlist("R1 a b 10k\n");
    CHECK(serialize_circuit(c) == "R1 a b 1e4\n");
    CHECK(render_value(1.8e-7) == "1.8e-7");
    CHECK(render_value(5.0) == "5");
    CHECK(render_value(0.0) == "0");
    CHECK(render_value(5e6) == "5e6");
}

TEST_CASE("round-trip is isomorphic and idempotent") {
    std::string src =
        "V1 vdd 0 3.3\n"
        "R1 vdd mid 10k\n"
        "M1 out mid 0 0 NMOS W=2u L=0.18u\n"
        "C1 out 0 1p\n";
    Circuit c = parse_netlist(src);
    std::string canon = serialize_circuit(c);
    Circuit c2 = parse_netlist(canon);
    CHECK(c2.devices.size() == c.devices.size());
    CHECK(c2.nets.size() == c.nets.size());
    for (size_t i = 0; i < c.devices.size(); ++i) {
        CHECK(c2.devices[i].id == c.devices[i].id);
        CHECK(c2.devices[i].kind == c.devices[i].kind);
        REQUIRE(c2.devices[i].pins.size() == c.devices[i].pins.size());
        for (size_t p = 0; p < c.devices[i].pins.size(); ++p) {
            CHECK(c2.devices[i].pins[p].role == c.devices[i].pins[p].role);
            CHECK(c2.devices[i].pins[p].net == c.devices[i].pins[p].net);
        }
        CHECK(c2.devices[i].params == c.devices[i].params);
    }
    CHECK(serialize_circuit(c2) == canon);  // fixpoint
}

TEST_CASE("net names are case-insensitive, first spelling wins") {
    Circuit c = parse_netlist("R1 Mid 0 1k\nR2 MID vdd 2k\nV1 vdd 0 5\n");
    CHECK(c.nets.size() == 3);
    CHECK(c.net_index("mid") == c.net_index("MID"));
    CHECK(c.nets[c.net_index("mid")].id == "Mid");
}

TEST_CASE("comments, blank lines, crlf and .end") {
    Circuit c = parse_netlist("* header\r\n\r\nV1 vdd 0 5\r\nR1 vdd 0 1k\r\n.end\r\nR2 x y 1\r\n");
    CHECK(c.devices.size() == 2);  // statements after .end are ignored
}

TEST_CASE("unknown mos parameters are preserved") {
    Circuit c = parse_netlist("M1 d g s b PMOS W=1u L=1u AS=2e-12\n");
    std::string out = serialize_circuit(c);
    CHECK(out.find("AS=2e-12") != std::string::npos);
    Circuit c2 = parse_netlist(out);
    CHECK(c2.devices[0].opaque == c.devices[0].opaque);
}
