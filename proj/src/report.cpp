#include "condi/bench.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

#include "condi/common.hpp"

namespace fs = std::filesystem;

namespace condi {

namespace {

std::string fmt_double(double v) {
    if (std::isnan(v)) return "nan";
    std::ostringstream out;
    out.precision(17);
    out << v;
    return out.str();
}

std::string fmt_fixed(double v, int digits) {
    if (std::isnan(v)) return "n/a";
    std::ostringstream out;
    out << std::fixed << std::setprecision(digits) << v;
    return out.str();
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            fields.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    fields.push_back(cur);
    return fields;
}

double parse_double(const std::string& s, const std::string& context) {
    try {
        size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw DataError(context + ": bad numeric field '" + s + "'");
    }
}

int parse_int(const std::string& s, const std::string& context) {
    try {
        size_t pos = 0;
        const int v = std::stoi(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw DataError(context + ": bad integer field '" + s + "'");
    }
}

std::string series_name(const ReportRow& row) {
    if (row.regime == "topk") return row.sampler;
    return row.regime;
}

// Rows that stand for a whole (sampler, K) cell: single-seed rows as-is,
// random rows only through their seed="mean" aggregate.
bool is_cell_row(const ReportRow& row) {
    if (row.sampler == "random") return row.seed == "mean";
    return true;
}

struct Series {
    std::string name;
    std::vector<std::pair<double, double>> points; // x, y
};

constexpr const char* kPalette[] = {"#1f6fb2", "#d1495b", "#2e8b57", "#b8860b",
                                    "#6a51a3", "#444444"};

std::string svg_header(const char* x_label, const char* y_label) {
    std::ostringstream out;
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"440\" "
           "viewBox=\"0 0 640 440\">\n"
        << "<rect width=\"640\" height=\"440\" fill=\"#ffffff\"/>\n"
        << "<text x=\"320\" y=\"428\" text-anchor=\"middle\" font-family=\"sans-serif\" "
           "font-size=\"13\">"
        << x_label << "</text>\n"
        << "<text x=\"16\" y=\"220\" text-anchor=\"middle\" font-family=\"sans-serif\" "
           "font-size=\"13\" transform=\"rotate(-90 16 220)\">"
        << y_label << "</text>\n";
    return out.str();
}

// Plot area inside the 640x440 canvas.
constexpr double kX0 = 70, kX1 = 610, kY0 = 390, kY1 = 30;

void write_svg_plot(const fs::path& path, const std::vector<Series>& series,
                    const char* x_label, const char* y_label, double dense_y,
                    bool has_dense_line) {
    double xmin = 0, xmax = 1, ymin = 0, ymax = 1;
    bool any = false;
    for (const Series& s : series) {
        for (const auto& [x, y] : s.points) {
            if (!any) {
                xmin = xmax = x;
                ymin = ymax = y;
                any = true;
            }
            xmin = std::min(xmin, x);
            xmax = std::max(xmax, x);
            ymin = std::min(ymin, y);
            ymax = std::max(ymax, y);
        }
    }
    if (has_dense_line) {
        if (!any) {
            ymin = ymax = dense_y;
            any = true;
        }
        ymin = std::min(ymin, dense_y);
        ymax = std::max(ymax, dense_y);
    }
    if (xmax - xmin < 1e-12) {
        xmin -= 0.5;
        xmax += 0.5;
    }
    if (ymax - ymin < 1e-12) {
        ymin -= 0.05;
        ymax += 0.05;
    }
    const double xpad = 0.05 * (xmax - xmin);
    const double ypad = 0.08 * (ymax - ymin);
    xmin -= xpad;
    xmax += xpad;
    ymin -= ypad;
    ymax += ypad;

    auto px = [&](double x) { return kX0 + (x - xmin) / (xmax - xmin) * (kX1 - kX0); };
    auto py = [&](double y) { return kY0 + (y - ymin) / (ymax - ymin) * (kY1 - kY0); };

    std::ostringstream out;
    out << svg_header(x_label, y_label);
    out << "<rect x=\"" << kX0 << "\" y=\"" << kY1 << "\" width=\"" << kX1 - kX0
        << "\" height=\"" << kY0 - kY1
        << "\" fill=\"none\" stroke=\"#888888\" stroke-width=\"1\"/>\n";
    for (int i = 0; i <= 4; ++i) {
        const double fx = xmin + (xmax - xmin) * i / 4.0;
        const double fy = ymin + (ymax - ymin) * i / 4.0;
        out << "<line x1=\"" << px(fx) << "\" y1=\"" << kY0 << "\" x2=\"" << px(fx)
            << "\" y2=\"" << kY0 + 5 << "\" stroke=\"#888888\"/>\n"
            << "<text x=\"" << px(fx) << "\" y=\"" << kY0 + 18
            << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">"
            << fmt_fixed(fx, 2) << "</text>\n"
            << "<line x1=\"" << kX0 - 5 << "\" y1=\"" << py(fy) << "\" x2=\"" << kX0
            << "\" y2=\"" << py(fy) << "\" stroke=\"#888888\"/>\n"
            << "<text x=\"" << kX0 - 8 << "\" y=\"" << py(fy) + 4
            << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">"
            << fmt_fixed(fy, 3) << "</text>\n";
    }
    if (has_dense_line) {
        out << "<line x1=\"" << kX0 << "\" y1=\"" << py(dense_y) << "\" x2=\"" << kX1
            << "\" y2=\"" << py(dense_y)
            << "\" stroke=\"#999999\" stroke-dasharray=\"6 4\"/>\n"
            << "<text x=\"" << kX1 - 4 << "\" y=\"" << py(dense_y) - 5
            << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\" "
               "fill=\"#777777\">dense</text>\n";
    }
    int color_index = 0;
    double legend_y = kY1 + 14;
    for (const Series& s : series) {
        const char* color = kPalette[color_index % (sizeof(kPalette) / sizeof(kPalette[0]))];
        ++color_index;
        if (s.points.size() > 1) {
            out << "<polyline fill=\"none\" stroke=\"" << color
                << "\" stroke-width=\"2\" points=\"";
            for (const auto& [x, y] : s.points) out << px(x) << ',' << py(y) << ' ';
            out << "\"/>\n";
        }
        for (const auto& [x, y] : s.points) {
            out << "<circle cx=\"" << px(x) << "\" cy=\"" << py(y) << "\" r=\"3.5\" fill=\""
                << color << "\"/>\n";
        }
        out << "<rect x=\"" << kX0 + 10 << "\" y=\"" << legend_y - 9
            << "\" width=\"14\" height=\"4\" fill=\"" << color << "\"/>\n"
            << "<text x=\"" << kX0 + 30 << "\" y=\"" << legend_y
            << "\" font-family=\"sans-serif\" font-size=\"12\">" << s.name << "</text>\n";
        legend_y += 16;
    }
    if (series.empty()) {
        out << "<text x=\"320\" y=\"210\" text-anchor=\"middle\" font-family=\"sans-serif\" "
               "font-size=\"14\" fill=\"#777777\">no data</text>\n";
    }
    out << "</svg>\n";

    std::ofstream file(path, std::ios::binary);
    file << out.str();
    if (!file) {
        throw DataError("failed writing plot: " + path.string());
    }
}

} // namespace

std::string render_csv_row(const ReportRow& row) {
    std::ostringstream out;
    out << row.regime << ',' << row.sampler << ',' << row.k << ',' << row.k_s << ','
        << fmt_double(row.top1) << ',' << fmt_double(row.mean_flops) << ','
        << fmt_double(row.mean_wall_s) << ',' << fmt_double(row.auroc) << ',' << row.seed
        << ',' << row.dataset_hash;
    return out.str();
}

std::string render_csv(const ReportTable& table) {
    std::string out = kMetricsHeader;
    out.push_back('\n');
    for (const ReportRow& row : table.rows) {
        out += render_csv_row(row);
        out.push_back('\n');
    }
    return out;
}

ReportTable parse_csv(std::istream& in, const std::string& context) {
    std::string line;
    if (!std::getline(in, line) || line != kMetricsHeader) {
        throw DataError(context + ": missing or unexpected metrics header");
    }
    ReportTable table;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const std::string where = context + ":" + std::to_string(line_no);
        const std::vector<std::string> f = split_csv_line(line);
        if (f.size() != 10) {
            throw DataError(where + ": expected 10 fields, got " + std::to_string(f.size()));
        }
        ReportRow row;
        row.regime = f[0];
        row.sampler = f[1];
        row.k = parse_int(f[2], where);
        row.k_s = parse_int(f[3], where);
        row.top1 = parse_double(f[4], where);
        row.mean_flops = parse_double(f[5], where);
        row.mean_wall_s = parse_double(f[6], where);
        row.auroc = parse_double(f[7], where);
        row.seed = f[8];
        row.dataset_hash = f[9];
        table.rows.push_back(std::move(row));
    }
    return table;
}

ReportTable load_report_csv(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open report: " + path.string());
    }
    return parse_csv(in, path.string());
}

std::string render_markdown(const ReportTable& table) {
    std::ostringstream out;
    out << "# Evaluation report\n";

    const ReportRow* dense = nullptr;
    std::vector<const ReportRow*> topk;
    std::vector<const ReportRow*> divided;
    for (const ReportRow& row : table.rows) {
        if (row.regime == "dense") dense = &row;
        else if (row.regime == "topk" && is_cell_row(row)) topk.push_back(&row);
        else if (row.regime == "divided") divided.push_back(&row);
    }

    if (!topk.empty()) {
        std::set<int> k_set;
        std::vector<std::string> samplers;
        std::map<std::pair<std::string, int>, const ReportRow*> cells;
        for (const ReportRow* row : topk) {
            k_set.insert(row->k);
            if (std::find(samplers.begin(), samplers.end(), row->sampler) == samplers.end()) {
                samplers.push_back(row->sampler);
            }
            cells[{row->sampler, row->k}] = row;
        }
        const std::vector<int> ks(k_set.begin(), k_set.end());

        // Best accuracy per K column; ties all bolded.
        std::map<int, double> best;
        for (int k : ks) {
            double b = -1.0;
            for (const std::string& s : samplers) {
                auto it = cells.find({s, k});
                if (it != cells.end()) b = std::max(b, it->second->top1);
            }
            best[k] = b;
        }

        out << "\n## Top-1 accuracy by sampler (top-k regime)\n\n";
        out << "| sampler |";
        for (int k : ks) out << " K=" << k << " |";
        out << "\n|---|";
        for (size_t i = 0; i < ks.size(); ++i) out << "---|";
        out << "\n";
        for (const std::string& s : samplers) {
            out << "| " << s << (s == "random" ? " (3-seed mean)" : "") << " |";
            for (int k : ks) {
                auto it = cells.find({s, k});
                if (it == cells.end()) {
                    out << " |";
                } else if (it->second->top1 == best[k]) {
                    out << " **" << fmt_fixed(it->second->top1, 4) << "** |";
                } else {
                    out << ' ' << fmt_fixed(it->second->top1, 4) << " |";
                }
            }
            out << "\n";
        }
        if (dense) {
            out << "\nDense baseline: " << fmt_fixed(dense->top1, 4) << " top-1 at "
                << fmt_fixed(dense->mean_flops / 1e6, 2) << " MFLOPs per video.\n";
        }

        out << "\n## Mean MFLOPs per video (top-k regime)\n\n";
        out << "| sampler |";
        for (int k : ks) out << " K=" << k << " |";
        out << "\n|---|";
        for (size_t i = 0; i < ks.size(); ++i) out << "---|";
        out << "\n";
        for (const std::string& s : samplers) {
            out << "| " << s << " |";
            for (int k : ks) {
                auto it = cells.find({s, k});
                if (it == cells.end()) out << " |";
                else out << ' ' << fmt_fixed(it->second->mean_flops / 1e6, 2) << " |";
            }
            out << "\n";
        }
    } else if (dense) {
        out << "\nDense baseline: " << fmt_fixed(dense->top1, 4) << " top-1 at "
            << fmt_fixed(dense->mean_flops / 1e6, 2) << " MFLOPs per video.\n";
    }

    if (!divided.empty()) {
        out << "\n## Workload division (divided regime)\n\n"
            << "| K | K_s | top1 | mean MFLOPs | mean wall s |\n|---|---|---|---|---|\n";
        for (const ReportRow* row : divided) {
            out << "| " << row->k << " | " << row->k_s << " | " << fmt_fixed(row->top1, 4)
                << " | " << fmt_fixed(row->mean_flops / 1e6, 2) << " | "
                << fmt_fixed(row->mean_wall_s, 5) << " |\n";
        }
    }

    bool any_auroc = false;
    for (const ReportRow& row : table.rows) {
        if (!std::isnan(row.auroc)) any_auroc = true;
    }
    if (any_auroc) {
        out << "\nStudent confidence AUROC against teacher clip-correctness: ";
        for (const ReportRow& row : table.rows) {
            if (!std::isnan(row.auroc)) {
                out << fmt_fixed(row.auroc, 4) << ".\n";
                break;
            }
        }
    }
    return out.str();
}

void write_accuracy_vs_k_svg(const ReportTable& table, const fs::path& path) {
    std::map<std::string, Series> by_name;
    std::vector<std::string> order;
    double dense_y = 0.0;
    bool has_dense = false;
    for (const ReportRow& row : table.rows) {
        if (row.regime == "dense") {
            dense_y = row.top1;
            has_dense = true;
            continue;
        }
        if (row.regime != "topk" || !is_cell_row(row)) continue;
        const std::string name = series_name(row);
        if (!by_name.count(name)) {
            by_name[name].name = name;
            order.push_back(name);
        }
        by_name[name].points.push_back({static_cast<double>(row.k), row.top1});
    }
    std::vector<Series> series;
    for (const std::string& name : order) {
        Series s = by_name[name];
        std::sort(s.points.begin(), s.points.end());
        series.push_back(std::move(s));
    }
    write_svg_plot(path, series, "K (clips per video)", "top-1 accuracy", dense_y, has_dense);
}

void write_accuracy_vs_flops_svg(const ReportTable& table, const fs::path& path) {
    std::map<std::string, Series> by_name;
    std::vector<std::string> order;
    for (const ReportRow& row : table.rows) {
        if (!is_cell_row(row)) continue;
        std::string name = series_name(row);
        if (row.regime == "divided") name = "divided K=" + std::to_string(row.k);
        if (!by_name.count(name)) {
            by_name[name].name = name;
            order.push_back(name);
        }
        by_name[name].points.push_back({row.mean_flops / 1e6, row.top1});
    }
    std::vector<Series> series;
    for (const std::string& name : order) {
        Series s = by_name[name];
        std::sort(s.points.begin(), s.points.end());
        series.push_back(std::move(s));
    }
    write_svg_plot(path, series, "mean MFLOPs per video", "top-1 accuracy", 0.0, false);
}

} // namespace condi
