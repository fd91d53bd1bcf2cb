#include <doctest.h>

#include <sstream>

#include "srl/core.hpp"
#include "srl/csv.hpp"

using namespace srl;

TEST_CASE("csv parses quoted fields, CRLF and a BOM") {
    const auto t = csv::parse("\xEF\xBB\xBF" "a,b\r\n1,\"x, \"\"y\"\"\"\r\n\"multi\nline\",2\n");
    REQUIRE(t.header == csv::Row{"a", "b"});
    REQUIRE(t.rows.size() == 2);
    CHECK(t.rows[0][1] == "x, \"y\"");
    CHECK(t.rows[1][0] == "multi\nline");
    CHECK(t.line_numbers == std::vector<std::size_t>{2, 3});
}

TEST_CASE("csv skips blank lines and keeps empty fields") {
    const auto t = csv::parse("a,b\n\n1,\n");
    REQUIRE(t.rows.size() == 1);
    CHECK(t.rows[0][1].empty());
}

TEST_CASE("csv errors name the source and line") {
    try {
        csv::parse("a,b\n1,2\n3\n", "f.csv");
        FAIL("expected IngestError");
    } catch (const IngestError& e) {
        CHECK(std::string(e.what()).find("f.csv:3") != std::string::npos);
    }
    CHECK_THROWS_AS(csv::parse("a\nx\"y\n"), IngestError);
    CHECK_THROWS_AS(csv::parse("a\n1\n").column("b", "f.csv"), IngestError);
}

TEST_CASE("csv escape and double formatting round-trip") {
    CHECK(csv::escape("plain") == "plain");
    CHECK(csv::escape("a,b") == "\"a,b\"");
    CHECK(csv::escape("q\"") == "\"q\"\"\"");
    for (double v : {0.1, 1.0 / 3.0, 1e-300, 123456.0, -2.5}) {
        CHECK(std::stod(csv::format_double(v)) == v);
    }
    std::ostringstream out;
    csv::write_row(out, {"x", "y,z"});
    const auto t = csv::parse("h1,h2\n" + out.str());
    CHECK(t.rows[0] == csv::Row{"x", "y,z"});
}
