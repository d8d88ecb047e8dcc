#include "dlenergy/report.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <map>

#include <fmt/format.h>

#include "dlenergy/csv.hpp"
#include "dlenergy/regress.hpp"

namespace dlenergy {

namespace fs = std::filesystem;

std::string_view to_string(ArtifactKind kind) noexcept {
    switch (kind) {
        case ArtifactKind::Scatter: return "scatter";
        case ArtifactKind::ContributionBars: return "contribution_bars";
        case ArtifactKind::AggregateVsTotal: return "aggregate_vs_total";
        case ArtifactKind::AblationScatter: return "ablation_scatter";
    }
    return "scatter";
}

ArtifactKind parse_artifact_kind(std::string_view name) {
    for (const auto k : {ArtifactKind::Scatter, ArtifactKind::ContributionBars, ArtifactKind::AggregateVsTotal,
                         ArtifactKind::AblationScatter}) {
        if (to_string(k) == name) return k;
    }
    throw ParseError(fmt::format("unknown report artifact '{}'", name));
}

// ---------------------------------------------------------------------------
// Builders

ReportArtifact layer_scatter_artifact(const std::vector<LayerScatterPoint>& points) {
    ReportArtifact a{ArtifactKind::Scatter, "scatter_layers", {}, {}};
    for (const auto& p : points) a.points.push_back({std::string(to_string(p.kind)), p.measured_j, p.predicted_j});
    return a;
}

ReportArtifact model_scatter_artifact(const std::vector<ModelScatterPoint>& points) {
    ReportArtifact a{ArtifactKind::Scatter, "scatter_models", {}, {}};
    for (const auto& p : points) a.points.push_back({p.architecture, p.measured_j, p.predicted_j});
    return a;
}

ReportArtifact contribution_artifact(const std::vector<LayerScatterPoint>& points) {
    ReportArtifact a{ArtifactKind::ContributionBars, "contribution_bars", {}, {}};
    // Architectures and modules keep their order of first appearance.
    std::vector<std::string> groups;
    std::vector<std::string> modules;
    std::map<std::pair<std::string, std::string>, double> sums;
    std::map<std::string, double> totals;
    for (const auto& p : points) {
        const std::string module(to_string(p.kind));
        if (std::find(groups.begin(), groups.end(), p.architecture) == groups.end()) groups.push_back(p.architecture);
        if (std::find(modules.begin(), modules.end(), module) == modules.end()) modules.push_back(module);
        sums[{p.architecture, module}] += p.measured_j;
        totals[p.architecture] += p.measured_j;
    }
    for (const auto& g : groups) {
        for (const auto& m : modules) {
            const auto it = sums.find({g, m});
            if (it == sums.end()) continue;
            const double total = totals[g];
            a.bars.push_back({g, m, total > 0.0 ? it->second / total : 0.0});
        }
    }
    return a;
}

ReportArtifact aggregate_artifact(const std::vector<ModelScatterPoint>& points) {
    ReportArtifact a{ArtifactKind::AggregateVsTotal, "aggregate_vs_total", {}, {}};
    for (const auto& p : points) {
        if (p.layer_sum_j > 0.0) a.points.push_back({p.architecture, p.measured_j, p.layer_sum_j});
    }
    return a;
}

ReportArtifact ablation_artifact(const AblationResult& result) {
    ReportArtifact a{ArtifactKind::AblationScatter, "ablation_scatter", {}, {}};
    for (const auto& r : result.rows) {
        a.points.push_back({r.has_macs ? "with macs" : "without macs", static_cast<double>(r.size), r.r2});
    }
    return a;
}

// ---------------------------------------------------------------------------
// CSV

void write_artifact_csv(std::ostream& out, const ReportArtifact& artifact) {
    if (artifact.kind == ArtifactKind::ContributionBars) {
        out << kBarHeader << '\n';
        for (const auto& b : artifact.bars) csv::write_row(out, {b.group, b.category, csv::format_double(b.value)});
    } else {
        out << kPointHeader << '\n';
        for (const auto& p : artifact.points) {
            csv::write_row(out, {p.series, csv::format_double(p.x), csv::format_double(p.y)});
        }
    }
}

ReportArtifact read_artifact_csv(std::istream& in, ArtifactKind kind, std::string name) {
    const auto table = csv::read(in);
    ReportArtifact a{kind, std::move(name), {}, {}};
    const auto number = [&](std::size_t row, std::size_t col, std::string_view label) {
        const auto v = csv::parse_double(table.rows[row][col], table.line_numbers[row], label);
        if (!v) throw SchemaError(fmt::format("line {}: missing {}", table.line_numbers[row], label));
        return *v;
    };
    if (kind == ArtifactKind::ContributionBars) {
        const auto g = table.require_column("group"), c = table.require_column("category"),
                   v = table.require_column("value");
        for (std::size_t i = 0; i < table.rows.size(); ++i) {
            a.bars.push_back({table.rows[i][g], table.rows[i][c], number(i, v, "value")});
        }
    } else {
        const auto s = table.require_column("series"), x = table.require_column("x"), y = table.require_column("y");
        for (std::size_t i = 0; i < table.rows.size(); ++i) {
            a.points.push_back({table.rows[i][s], number(i, x, "x"), number(i, y, "y")});
        }
    }
    return a;
}

// ---------------------------------------------------------------------------
// SVG

namespace {

constexpr double kWidth = 640.0;
constexpr double kHeight = 480.0;
constexpr double kLeft = 80.0, kRight = 170.0, kTop = 40.0, kBottom = 60.0;

constexpr const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string escape(std::string_view text) {
    std::string out;
    for (const char c : text) {
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

struct Range {
    double lo = 0.0;
    double hi = 1.0;
};

Range padded(double lo, double hi) {
    if (!(hi > lo)) {
        const double d = lo == 0.0 ? 1.0 : std::abs(lo) * 0.1;
        return {lo - d, hi + d};
    }
    const double pad = (hi - lo) * 0.05;
    return {lo - pad, hi + pad};
}

std::vector<double> ticks(const Range& r) {
    const double raw = (r.hi - r.lo) / 5.0;
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    double step = mag;
    for (const double m : {1.0, 2.0, 5.0, 10.0}) {
        step = m * mag;
        if (step >= raw) break;
    }
    std::vector<double> out;
    for (double t = std::ceil(r.lo / step) * step; t <= r.hi + step * 1e-9; t += step) {
        out.push_back(std::abs(t) < step * 1e-9 ? 0.0 : t);
    }
    return out;
}

std::vector<std::string> series_order(const ReportArtifact& a) {
    std::vector<std::string> out;
    const auto add = [&](const std::string& s) {
        if (std::find(out.begin(), out.end(), s) == out.end()) out.push_back(s);
    };
    for (const auto& p : a.points) add(p.series);
    for (const auto& b : a.bars) add(b.category);
    return out;
}

void header(std::string& svg, double height, std::string_view title) {
    svg += fmt::format(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0:.0f}\" height=\"{1:.0f}\" viewBox=\"0 0 {0:.0f} "
        "{1:.0f}\" font-family=\"sans-serif\" font-size=\"11\">\n",
        kWidth, height);
    svg += fmt::format("<rect width=\"{:.0f}\" height=\"{:.0f}\" fill=\"white\"/>\n", kWidth, height);
    svg += fmt::format("<text x=\"{:.2f}\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n",
                       kLeft + (kWidth - kLeft - kRight) / 2, escape(title));
}

void legend(std::string& svg, const std::vector<std::string>& names) {
    const double x = kWidth - kRight + 15;
    for (std::size_t i = 0; i < names.size(); ++i) {
        const double y = kTop + 10 + 18.0 * static_cast<double>(i);
        svg += fmt::format("<rect x=\"{:.2f}\" y=\"{:.2f}\" width=\"10\" height=\"10\" fill=\"{}\"/>\n", x, y - 9,
                           kPalette[i % std::size(kPalette)]);
        svg += fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\">{}</text>\n", x + 15, y, escape(names[i]));
    }
}

std::string render_points(const ReportArtifact& a) {
    const bool identity = a.kind != ArtifactKind::AblationScatter;
    std::string x_label = "measured energy [J]";
    std::string y_label = a.kind == ArtifactKind::AggregateVsTotal ? "sum of per-layer measurements [J]"
                                                                   : "predicted energy [J]";
    std::string title = a.name;
    if (a.kind == ArtifactKind::AblationScatter) {
        x_label = "number of features";
        y_label = "test R²";
    } else if (!a.points.empty()) {
        Eigen::VectorXd truth(static_cast<Eigen::Index>(a.points.size()));
        Eigen::VectorXd pred(truth.size());
        for (std::size_t i = 0; i < a.points.size(); ++i) {
            truth(static_cast<Eigen::Index>(i)) = a.points[i].x;
            pred(static_cast<Eigen::Index>(i)) = a.points[i].y;
        }
        title += fmt::format(" (R² = {:.3f})", compute_metrics(truth, pred).r2);
    }

    Range rx, ry;
    if (!a.points.empty()) {
        double xlo = a.points[0].x, xhi = xlo, ylo = a.points[0].y, yhi = ylo;
        for (const auto& p : a.points) {
            xlo = std::min(xlo, p.x);
            xhi = std::max(xhi, p.x);
            ylo = std::min(ylo, p.y);
            yhi = std::max(yhi, p.y);
        }
        if (identity) {
            // Same scale on both axes so the diagonal is the 45-degree line.
            rx = ry = padded(std::min(xlo, ylo), std::max(xhi, yhi));
        } else {
            rx = padded(xlo, xhi);
            ry = padded(ylo, yhi);
        }
    }
    const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
    const auto sx = [&](double v) { return kLeft + (v - rx.lo) / (rx.hi - rx.lo) * pw; };
    const auto sy = [&](double v) { return kTop + ph - (v - ry.lo) / (ry.hi - ry.lo) * ph; };

    std::string svg;
    header(svg, kHeight, title);
    svg += fmt::format("<rect x=\"{:.2f}\" y=\"{:.2f}\" width=\"{:.2f}\" height=\"{:.2f}\" fill=\"none\" "
                       "stroke=\"black\"/>\n",
                       kLeft, kTop, pw, ph);
    for (const double t : ticks(rx)) {
        svg += fmt::format("<line x1=\"{0:.2f}\" y1=\"{1:.2f}\" x2=\"{0:.2f}\" y2=\"{2:.2f}\" stroke=\"black\"/>\n",
                           sx(t), kTop + ph, kTop + ph + 5);
        svg += fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\" text-anchor=\"middle\">{:.3g}</text>\n", sx(t),
                           kTop + ph + 18, t);
    }
    for (const double t : ticks(ry)) {
        svg += fmt::format("<line x1=\"{0:.2f}\" y1=\"{1:.2f}\" x2=\"{2:.2f}\" y2=\"{1:.2f}\" stroke=\"black\"/>\n",
                           kLeft - 5, sy(t), kLeft);
        svg += fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\" text-anchor=\"end\">{:.3g}</text>\n", kLeft - 8,
                           sy(t) + 4, t);
    }
    svg += fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\" text-anchor=\"middle\">{}</text>\n", kLeft + pw / 2,
                       kHeight - 15, escape(x_label));
    svg += fmt::format(
        "<text x=\"18\" y=\"{0:.2f}\" text-anchor=\"middle\" transform=\"rotate(-90 18 {0:.2f})\">{1}</text>\n",
        kTop + ph / 2, escape(y_label));
    if (identity) {
        svg += fmt::format("<line class=\"identity\" x1=\"{:.2f}\" y1=\"{:.2f}\" x2=\"{:.2f}\" y2=\"{:.2f}\" "
                           "stroke=\"#888888\" stroke-dasharray=\"4 3\"/>\n",
                           sx(rx.lo), sy(rx.lo), sx(rx.hi), sy(rx.hi));
    }
    const auto names = series_order(a);
    for (const auto& p : a.points) {
        const auto idx = static_cast<std::size_t>(std::find(names.begin(), names.end(), p.series) - names.begin());
        svg += fmt::format("<circle cx=\"{:.2f}\" cy=\"{:.2f}\" r=\"2.5\" fill=\"{}\" fill-opacity=\"0.7\"/>\n",
                           sx(p.x), sy(p.y), kPalette[idx % std::size(kPalette)]);
    }
    legend(svg, names);
    svg += "</svg>\n";
    return svg;
}

std::string render_bars(const ReportArtifact& a) {
    std::vector<std::string> groups;
    for (const auto& b : a.bars) {
        if (std::find(groups.begin(), groups.end(), b.group) == groups.end()) groups.push_back(b.group);
    }
    const auto names = series_order(a);
    constexpr double kRow = 28.0;
    const double height = kTop + kBottom + kRow * static_cast<double>(std::max<std::size_t>(groups.size(), 1));
    const double pw = kWidth - kLeft - kRight;

    std::string svg;
    header(svg, height, a.name);
    for (std::size_t g = 0; g < groups.size(); ++g) {
        const double y = kTop + kRow * static_cast<double>(g);
        svg += fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\" text-anchor=\"end\">{}</text>\n", kLeft - 6,
                           y + kRow / 2 + 4, escape(groups[g]));
        double offset = 0.0;
        for (const auto& b : a.bars) {
            if (b.group != groups[g]) continue;
            const auto idx = static_cast<std::size_t>(std::find(names.begin(), names.end(), b.category) - names.begin());
            const double w = std::max(0.0, b.value) * pw;
            svg += fmt::format("<rect x=\"{:.2f}\" y=\"{:.2f}\" width=\"{:.2f}\" height=\"{:.2f}\" fill=\"{}\"/>\n",
                               kLeft + offset, y + 4, w, kRow - 8, kPalette[idx % std::size(kPalette)]);
            offset += w;
        }
    }
    const double axis_y = kTop + kRow * static_cast<double>(groups.size()) + 4;
    for (int i = 0; i <= 4; ++i) {
        const double x = kLeft + pw * i / 4.0;
        svg += fmt::format("<line x1=\"{0:.2f}\" y1=\"{1:.2f}\" x2=\"{0:.2f}\" y2=\"{2:.2f}\" stroke=\"black\"/>\n", x,
                           axis_y, axis_y + 5);
        svg += fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\" text-anchor=\"middle\">{}%</text>\n", x, axis_y + 18,
                           25 * i);
    }
    svg += fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\" text-anchor=\"middle\">share of measured energy</text>\n",
                       kLeft + pw / 2, axis_y + 36);
    legend(svg, names);
    svg += "</svg>\n";
    return svg;
}

}  // namespace

std::string render_svg(const ReportArtifact& artifact) {
    return artifact.kind == ArtifactKind::ContributionBars ? render_bars(artifact) : render_points(artifact);
}

std::vector<fs::path> write_artifact(const fs::path& dir, const ReportArtifact& artifact) {
    fs::create_directories(dir);
    const auto csv_path = dir / (artifact.name + ".csv");
    const auto svg_path = dir / (artifact.name + ".svg");
    {
        std::ofstream out(csv_path, std::ios::binary);
        if (!out) throw IoError(fmt::format("cannot write {}", csv_path.string()));
        write_artifact_csv(out, artifact);
    }
    {
        std::ofstream out(svg_path, std::ios::binary);
        if (!out) throw IoError(fmt::format("cannot write {}", svg_path.string()));
        out << render_svg(artifact);
    }
    return {csv_path, svg_path};
}

// ---------------------------------------------------------------------------
// Readers

namespace {

std::int64_t int_field(const csv::Table& t, std::size_t row, std::size_t col, std::string_view name) {
    const auto v = csv::parse_int(t.rows[row][col], t.line_numbers[row], name);
    if (!v) throw SchemaError(fmt::format("line {}: missing {}", t.line_numbers[row], name));
    return *v;
}

double double_field(const csv::Table& t, std::size_t row, std::size_t col, std::string_view name) {
    const auto v = csv::parse_double(t.rows[row][col], t.line_numbers[row], name);
    if (!v) throw SchemaError(fmt::format("line {}: missing {}", t.line_numbers[row], name));
    return *v;
}

}  // namespace

std::vector<LayerScatterPoint> read_layer_scatter_csv(std::istream& in) {
    const auto t = csv::read(in);
    const auto arch = t.require_column("architecture"), batch = t.require_column("batch_size"),
               index = t.require_column("layer_index"), module = t.require_column("module"),
               macs = t.require_column("macs"), measured = t.require_column("measured_j"),
               predicted = t.require_column("predicted_j");
    std::vector<LayerScatterPoint> out;
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        LayerScatterPoint p;
        p.architecture = t.rows[i][arch];
        p.batch_size = int_field(t, i, batch, "batch_size");
        p.layer_index = int_field(t, i, index, "layer_index");
        p.kind = parse_layer_kind(t.rows[i][module]);
        p.macs = int_field(t, i, macs, "macs");
        p.measured_j = double_field(t, i, measured, "measured_j");
        p.predicted_j = double_field(t, i, predicted, "predicted_j");
        out.push_back(std::move(p));
    }
    return out;
}

std::vector<ModelScatterPoint> read_model_scatter_csv(std::istream& in) {
    const auto t = csv::read(in);
    const auto arch = t.require_column("architecture"), batch = t.require_column("batch_size"),
               macs = t.require_column("total_macs"), measured = t.require_column("measured_j"),
               sum = t.require_column("layer_sum_j"), predicted = t.require_column("predicted_j");
    std::vector<ModelScatterPoint> out;
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        ModelScatterPoint p;
        p.architecture = t.rows[i][arch];
        p.batch_size = int_field(t, i, batch, "batch_size");
        p.total_macs = int_field(t, i, macs, "total_macs");
        p.measured_j = double_field(t, i, measured, "measured_j");
        p.layer_sum_j = double_field(t, i, sum, "layer_sum_j");
        p.predicted_j = double_field(t, i, predicted, "predicted_j");
        out.push_back(std::move(p));
    }
    return out;
}

AblationResult read_ablation_csv(std::istream& in, LayerKind kind) {
    const auto t = csv::read(in);
    const auto mask = t.require_column("mask"), size = t.require_column("size"),
               features = t.require_column("features"), has_macs = t.require_column("has_macs"),
               r2 = t.require_column("r2"), mse = t.require_column("mse");
    AblationResult result;
    result.kind = kind;
    std::map<int, std::string> names;
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        AblationRow row;
        const auto m = int_field(t, i, mask, "mask");
        if (m <= 0 || m > 0x7fffffff) throw SchemaError(fmt::format("line {}: bad mask", t.line_numbers[i]));
        row.mask = static_cast<std::uint32_t>(m);
        row.size = static_cast<int>(int_field(t, i, size, "size"));
        row.has_macs = int_field(t, i, has_macs, "has_macs") != 0;
        row.r2 = double_field(t, i, r2, "r2");
        row.mse = double_field(t, i, mse, "mse");
        if (std::has_single_bit(row.mask)) names[std::countr_zero(row.mask)] = t.rows[i][features];
        result.rows.push_back(row);
    }
    for (const auto& [bit, name] : names) {
        if (static_cast<std::size_t>(bit) != result.columns.size()) break;
        result.columns.push_back(name);
    }
    return result;
}

}  // namespace dlenergy
