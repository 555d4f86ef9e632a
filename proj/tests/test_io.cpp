#include <gtest/gtest.h>

#include "channel_stab/io.hpp"

using namespace channel_stab;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    fs::path p = fs::temp_directory_path() / ("cstab_io_" + name);
    fs::remove_all(p);
    return p;
}

io::CstbFile sample_file() {
    io::CstbFile f;
    f.n = 5;
    f.nu = 1e-3;
    f.ks = {0, 1, 7};
    for (int r = 0; r < 3; ++r) {
        io::Snapshot s;
        s.time = 0.25 * r;
        for (size_t m = 0; m < f.ks.size(); ++m) {
            ComplexProfile p(f.n);
            for (int j = 0; j < f.n; ++j) p(j) = cdouble(std::sin(1.0 + r + m + j), -1.0 / (3.0 + j + m));
            s.modes.push_back(p);
        }
        f.records.push_back(s);
    }
    return f;
}

}  // namespace

TEST(Cstb, RoundTripIsBitExact) {
    const auto f = sample_file();
    const std::string bytes = io::encode_cstb(f);
    EXPECT_EQ(bytes.substr(0, 4), "CSTB");
    const auto g = io::decode_cstb(bytes);
    EXPECT_EQ(g.n, f.n);
    EXPECT_EQ(g.nu, f.nu);
    EXPECT_EQ(g.ks, f.ks);
    ASSERT_EQ(g.records.size(), f.records.size());
    for (size_t r = 0; r < f.records.size(); ++r) {
        EXPECT_EQ(g.records[r].time, f.records[r].time);
        for (size_t m = 0; m < f.ks.size(); ++m) EXPECT_TRUE((g.records[r].modes[m].array() == f.records[r].modes[m].array()).all());
    }
    EXPECT_EQ(io::encode_cstb(g), bytes);
}

TEST(Cstb, CorruptInputsRejected) {
    const std::string bytes = io::encode_cstb(sample_file());
    std::string bad = bytes;
    bad[0] = 'X';
    EXPECT_THROW(io::decode_cstb(bad), DataError);
    bad = bytes;
    bad[4] = 9;  // version
    EXPECT_THROW(io::decode_cstb(bad), DataError);
    EXPECT_THROW(io::decode_cstb(bytes.substr(0, bytes.size() - 3)), DataError);
    EXPECT_THROW(io::decode_cstb(bytes + "x"), DataError);
    EXPECT_THROW(io::decode_cstb(""), DataError);
}

TEST(Cstb, FileRoundTripAndWriteOnce) {
    const fs::path dir = scratch("cstb");
    const fs::path p = dir / "a" / "snap.cstb";
    io::write_cstb(p, sample_file());
    EXPECT_EQ(io::read_cstb(p).records.size(), 3u);
    EXPECT_THROW(io::write_cstb(p, sample_file()), ExistsError);
    EXPECT_NO_THROW(io::write_cstb(p, sample_file(), true));
    EXPECT_THROW(io::read_cstb(dir / "missing.cstb"), DataError);
    fs::remove_all(dir);
}

TEST(Csv, WriterAndParserAgree) {
    io::CsvWriter w({"t", "energy", "label"});
    w.row(std::vector<std::string>{"0", "1", "x"});
    w.row(std::vector<std::string>{io::num(0.1), io::num(1.0 / 3.0), ""});
    const auto t = io::parse_csv(w.str());
    ASSERT_EQ(t.rows.size(), 2u);
    EXPECT_EQ(t.column("energy"), 1);
    EXPECT_EQ(t.column("nope"), -1);
    EXPECT_EQ(std::stod(t.rows[1][1]), 1.0 / 3.0);
    EXPECT_EQ(t.rows[1][2], "");
    EXPECT_THROW(w.row(std::vector<double>{1.0}), InternalError);
    EXPECT_THROW(io::parse_csv("a,b\n1\n"), DataError);
    EXPECT_THROW(io::parse_csv(""), DataError);
}

TEST(Csv, NumberFormattingRoundTrips) {
    for (double v : {0.1, 1e-300, 123456789.123, -2.5e-7}) EXPECT_EQ(std::stod(io::num(v)), v);
    EXPECT_EQ(io::num(std::numeric_limits<double>::infinity()), "inf");
    EXPECT_EQ(io::num(std::nan("")), "nan");
}

TEST(Svg, DeterministicAndEscaped) {
    io::PlotSeries s{"a<b", {1, 10, 100}, {1e-3, 1e-2, 0.0}, false, true};
    io::PlotSpec spec{"gap & slope", "nu", "ratio", true, true};
    const std::string a = io::svg_plot(spec, {s});
    EXPECT_EQ(a, io::svg_plot(spec, {s}));
    EXPECT_NE(a.find("a&lt;b"), std::string::npos);
    EXPECT_NE(a.find("gap &amp; slope"), std::string::npos);
    EXPECT_EQ(a.find("nan"), std::string::npos);  // y = 0 dropped on a log axis
    EXPECT_EQ(a.rfind("</svg>\n"), a.size() - 7);
}
