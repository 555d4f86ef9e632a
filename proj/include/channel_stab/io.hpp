#pragma once

// File formats: CSTB binary snapshots, CSV tables, SVG line plots.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "channel_stab/errors.hpp"
#include "channel_stab/spectral_core.hpp"

namespace channel_stab::io {

namespace fs = std::filesystem;

/// Shortest round-trip text for a double ("%.17g" keeps CSV output byte-stable).
inline std::string num(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

/// Create parent directories and refuse to clobber an existing file unless `force`.
inline void prepare_output(const fs::path& p, bool force) {
    if (fs::exists(p) && !force) throw ExistsError("refusing to overwrite " + p.string() + " (use --force)");
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

inline void write_text(const fs::path& p, const std::string& text, bool force = false) {
    prepare_output(p, force);
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open " + p.string() + " for writing");
    out << text;
    if (!out) throw DataError("write failed: " + p.string());
}

inline std::string read_text(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw DataError("cannot open " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

class CsvWriter {
public:
    explicit CsvWriter(std::vector<std::string> header) : cols_(header.size()) { line(header); }

    void row(const std::vector<double>& values) {
        std::vector<std::string> s;
        s.reserve(values.size());
        for (double v : values) s.push_back(num(v));
        line(s);
    }

    void row(const std::vector<std::string>& values) { line(values); }

    const std::string& str() const { return text_; }

private:
    void line(const std::vector<std::string>& cells) {
        if (cells.size() != cols_) throw InternalError("CsvWriter: row width does not match header");
        for (size_t i = 0; i < cells.size(); ++i) {
            if (i) text_ += ',';
            text_ += cells[i];
        }
        text_ += '\n';
    }

    size_t cols_;
    std::string text_;
};

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    int column(const std::string& name) const {
        for (size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return static_cast<int>(i);
        return -1;
    }
};

/// Minimal CSV reader for the files this toolkit writes (no quoting).
inline CsvTable parse_csv(const std::string& text) {
    CsvTable t;
    std::istringstream in(text);
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::string cell;
        std::istringstream ls(line);
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        if (line.back() == ',') cells.emplace_back();
        if (first) {
            t.header = std::move(cells);
            first = false;
        } else {
            if (cells.size() != t.header.size()) throw DataError("csv: ragged row: " + line);
            t.rows.push_back(std::move(cells));
        }
    }
    if (first) throw DataError("csv: empty file");
    return t;
}

// ---------------------------------------------------------------------------
// CSTB: versioned little-endian snapshot container.
//   "CSTB" | u32 version | i32 n | f64 nu | u32 mode_count | i32 k[mode_count] | u64 records
//   records x ( f64 time | mode_count x n x (f64 re, f64 im) )

inline constexpr std::uint32_t kCstbVersion = 1;

struct Snapshot {
    double time = 0.0;
    std::vector<ComplexProfile> modes;  // one per entry of CstbFile::ks
};

struct CstbFile {
    int n = 0;
    double nu = 0.0;
    std::vector<int> ks;
    std::vector<Snapshot> records;
};

namespace detail {

template <class T>
void put_le(std::string& out, T v) {
    static_assert(std::is_trivially_copyable_v<T>);
    std::uint64_t bits = 0;
    std::memcpy(&bits, &v, sizeof(T));
    for (size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

template <class T>
T get_le(const std::string& in, size_t& pos) {
    if (pos + sizeof(T) > in.size()) throw DataError("cstb: truncated file");
    std::uint64_t bits = 0;
    for (size_t i = 0; i < sizeof(T); ++i) bits |= std::uint64_t(static_cast<unsigned char>(in[pos + i])) << (8 * i);
    pos += sizeof(T);
    T v;
    std::memcpy(&v, &bits, sizeof(T));
    return v;
}

}  // namespace detail

inline std::string encode_cstb(const CstbFile& f) {
    std::string out = "CSTB";
    detail::put_le<std::uint32_t>(out, kCstbVersion);
    detail::put_le<std::int32_t>(out, f.n);
    detail::put_le<double>(out, f.nu);
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(f.ks.size()));
    for (int k : f.ks) detail::put_le<std::int32_t>(out, k);
    detail::put_le<std::uint64_t>(out, f.records.size());
    for (const auto& r : f.records) {
        if (r.modes.size() != f.ks.size()) throw InternalError("cstb: snapshot mode count mismatch");
        detail::put_le<double>(out, r.time);
        for (const auto& m : r.modes) {
            if (m.size() != f.n) throw InternalError("cstb: profile length mismatch");
            for (int j = 0; j < f.n; ++j) {
                detail::put_le<double>(out, m(j).real());
                detail::put_le<double>(out, m(j).imag());
            }
        }
    }
    return out;
}

inline CstbFile decode_cstb(const std::string& in) {
    if (in.size() < 4 || in.compare(0, 4, "CSTB") != 0) throw DataError("cstb: bad magic");
    size_t pos = 4;
    const auto version = detail::get_le<std::uint32_t>(in, pos);
    if (version != kCstbVersion) throw DataError("cstb: unsupported version " + std::to_string(version));
    CstbFile f;
    f.n = detail::get_le<std::int32_t>(in, pos);
    f.nu = detail::get_le<double>(in, pos);
    const auto mc = detail::get_le<std::uint32_t>(in, pos);
    if (f.n < 0 || mc > 1u << 20) throw DataError("cstb: corrupt header");
    for (std::uint32_t i = 0; i < mc; ++i) f.ks.push_back(detail::get_le<std::int32_t>(in, pos));
    const auto count = detail::get_le<std::uint64_t>(in, pos);
    const std::uint64_t per = 8 + std::uint64_t(mc) * f.n * 16;
    if (per == 0 || count > (in.size() - pos) / per + 1) throw DataError("cstb: record count exceeds file size");
    f.records.resize(count);
    for (auto& r : f.records) {
        r.time = detail::get_le<double>(in, pos);
        r.modes.assign(mc, ComplexProfile(f.n));
        for (auto& m : r.modes)
            for (int j = 0; j < f.n; ++j) {
                const double re = detail::get_le<double>(in, pos);
                const double im = detail::get_le<double>(in, pos);
                m(j) = cdouble(re, im);
            }
    }
    if (pos != in.size()) throw DataError("cstb: trailing bytes");
    return f;
}

inline void write_cstb(const fs::path& p, const CstbFile& f, bool force = false) { write_text(p, encode_cstb(f), force); }
inline CstbFile read_cstb(const fs::path& p) { return decode_cstb(read_text(p)); }

// ---------------------------------------------------------------------------
// SVG line plots (no timestamps, so output is reproducible).

struct PlotSeries {
    std::string label;
    std::vector<double> x, y;
    bool dashed = false;
    bool markers = true;
};

struct PlotSpec {
    std::string title, xlabel, ylabel;
    bool logx = false, logy = false;
    int width = 640, height = 420;
};

inline std::string xml_escape(const std::string& s) {
    std::string o;
    for (char c : s) {
        if (c == '<') o += "&lt;";
        else if (c == '>') o += "&gt;";
        else if (c == '&') o += "&amp;";
        else if (c == '"') o += "&quot;";
        else o += c;
    }
    return o;
}

inline std::string svg_plot(const PlotSpec& spec, const std::vector<PlotSeries>& series) {
    const double ml = 70, mr = 150, mt = 36, mb = 48;
    const double pw = spec.width - ml - mr, ph = spec.height - mt - mb;
    auto tx = [&](double v) { return spec.logx ? std::log10(v) : v; };
    auto ty = [&](double v) { return spec.logy ? std::log10(v) : v; };
    auto usable = [&](double x, double y) {
        return std::isfinite(x) && std::isfinite(y) && (!spec.logx || x > 0) && (!spec.logy || y > 0);
    };
    double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
    for (const auto& s : series)
        for (size_t i = 0; i < s.x.size() && i < s.y.size(); ++i)
            if (usable(s.x[i], s.y[i])) {
                x0 = std::min(x0, tx(s.x[i]));
                x1 = std::max(x1, tx(s.x[i]));
                y0 = std::min(y0, ty(s.y[i]));
                y1 = std::max(y1, ty(s.y[i]));
            }
    if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
    if (x1 - x0 < 1e-12) x0 -= 0.5, x1 += 0.5;
    if (y1 - y0 < 1e-12) y0 -= 0.5, y1 += 0.5;
    const double padx = 0.04 * (x1 - x0), pady = 0.06 * (y1 - y0);
    x0 -= padx, x1 += padx, y0 -= pady, y1 += pady;
    auto px = [&](double v) { return ml + (tx(v) - x0) / (x1 - x0) * pw; };
    auto py = [&](double v) { return mt + ph - (ty(v) - y0) / (y1 - y0) * ph; };
    auto f = [](double v) {
        char b[32];
        std::snprintf(b, sizeof b, "%.2f", v);
        return std::string(b);
    };
    auto tick_label = [](double v, bool log) {
        char b[32];
        if (log) std::snprintf(b, sizeof b, "1e%g", v);
        else std::snprintf(b, sizeof b, "%.3g", v);
        return std::string(b);
    };
    static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2"};
    std::ostringstream o;
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << spec.width << "\" height=\"" << spec.height
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    o << "<text x=\"" << f(ml + pw / 2) << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" << xml_escape(spec.title) << "</text>\n";
    o << "<rect x=\"" << f(ml) << "\" y=\"" << f(mt) << "\" width=\"" << f(pw) << "\" height=\"" << f(ph)
      << "\" fill=\"none\" stroke=\"black\"/>\n";
    // ticks: integer decades on log axes, 5 even steps otherwise
    auto ticks = [](double a, double b, bool log) {
        std::vector<double> t;
        if (log) {
            for (double d = std::ceil(a); d <= std::floor(b) && t.size() < 12; d += 1.0) t.push_back(d);
        }
        if (t.size() < 2) {
            t.clear();
            for (int i = 0; i <= 4; ++i) t.push_back(a + (b - a) * i / 4.0);
        }
        return t;
    };
    for (double t : ticks(x0, x1, spec.logx)) {
        const double X = ml + (t - x0) / (x1 - x0) * pw;
        o << "<line x1=\"" << f(X) << "\" y1=\"" << f(mt + ph) << "\" x2=\"" << f(X) << "\" y2=\"" << f(mt + ph + 5)
          << "\" stroke=\"black\"/><text x=\"" << f(X) << "\" y=\"" << f(mt + ph + 18) << "\" text-anchor=\"middle\">"
          << tick_label(t, spec.logx) << "</text>\n";
    }
    for (double t : ticks(y0, y1, spec.logy)) {
        const double Y = mt + ph - (t - y0) / (y1 - y0) * ph;
        o << "<line x1=\"" << f(ml - 5) << "\" y1=\"" << f(Y) << "\" x2=\"" << f(ml) << "\" y2=\"" << f(Y)
          << "\" stroke=\"black\"/><text x=\"" << f(ml - 8) << "\" y=\"" << f(Y + 4) << "\" text-anchor=\"end\">"
          << tick_label(t, spec.logy) << "</text>\n";
    }
    o << "<text x=\"" << f(ml + pw / 2) << "\" y=\"" << f(spec.height - 10) << "\" text-anchor=\"middle\">" << xml_escape(spec.xlabel)
      << "</text>\n";
    o << "<text x=\"16\" y=\"" << f(mt + ph / 2) << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " << f(mt + ph / 2)
      << ")\">" << xml_escape(spec.ylabel) << "</text>\n";
    for (size_t si = 0; si < series.size(); ++si) {
        const auto& s = series[si];
        const char* c = colors[si % 8];
        std::string pts;
        for (size_t i = 0; i < s.x.size() && i < s.y.size(); ++i)
            if (usable(s.x[i], s.y[i])) pts += f(px(s.x[i])) + "," + f(py(s.y[i])) + " ";
        o << "<polyline fill=\"none\" stroke=\"" << c << "\" stroke-width=\"1.5\"" << (s.dashed ? " stroke-dasharray=\"6 4\"" : "")
          << " points=\"" << pts << "\"/>\n";
        if (s.markers)
            for (size_t i = 0; i < s.x.size() && i < s.y.size(); ++i)
                if (usable(s.x[i], s.y[i]))
                    o << "<circle cx=\"" << f(px(s.x[i])) << "\" cy=\"" << f(py(s.y[i])) << "\" r=\"3\" fill=\"" << c << "\"/>\n";
        const double ly = mt + 14 + 18 * si;
        o << "<line x1=\"" << f(ml + pw + 10) << "\" y1=\"" << f(ly - 4) << "\" x2=\"" << f(ml + pw + 30) << "\" y2=\"" << f(ly - 4)
          << "\" stroke=\"" << c << "\" stroke-width=\"2\"" << (s.dashed ? " stroke-dasharray=\"6 4\"" : "") << "/>"
          << "<text x=\"" << f(ml + pw + 34) << "\" y=\"" << f(ly) << "\">" << xml_escape(s.label) << "</text>\n";
    }
    o << "</svg>\n";
    return o.str();
}

}  // namespace channel_stab::io
