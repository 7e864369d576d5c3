#include "safetune/plot.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>

#include <fmt/format.h>

#include "safetune/common.hpp"

namespace safetune {

std::vector<double> running_bin_minimum(const std::vector<double>& f, const std::vector<std::size_t>& bin,
                                        const std::vector<char>& feasible) {
    std::map<std::size_t, double> best;
    std::vector<double> out(f.size(), std::nan(""));
    for (std::size_t i = 0; i < f.size(); ++i) {
        auto [it, _] = best.try_emplace(bin[i], std::nan(""));
        if (feasible[i] && std::isfinite(f[i]) && (std::isnan(it->second) || f[i] < it->second)) it->second = f[i];
        out[i] = it->second;
    }
    return out;
}

namespace {

constexpr double kPanelW = 400, kPanelH = 320, kMarginL = 60, kMarginR = 15, kMarginT = 30, kMarginB = 40;
const char* const kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

struct Series {
    std::vector<double> x, y;
    std::string color;
    bool dashed = false;
    bool markers = false;
};

struct Panel {
    std::string title;
    std::vector<Series> series;
    std::vector<double> hlines;  // kappa
    std::vector<std::pair<double, double>> flagged;  // violation markers
};

void draw_panel(std::ostream& os, const Panel& p, double x0) {
    double xmin = 0, xmax = 1, ymin = kInf, ymax = -kInf;
    for (const auto& s : p.series)
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            xmax = std::max(xmax, s.x[i]);
            if (std::isfinite(s.y[i])) {
                ymin = std::min(ymin, s.y[i]);
                ymax = std::max(ymax, s.y[i]);
            }
        }
    for (double h : p.hlines)
        if (std::isfinite(h)) {
            ymin = std::min(ymin, h);
            ymax = std::max(ymax, h);
        }
    if (!std::isfinite(ymin)) {
        ymin = 0;
        ymax = 1;
    }
    if (ymax - ymin < 1e-12) {
        ymin -= 0.5;
        ymax += 0.5;
    }
    const double pad = 0.05 * (ymax - ymin);
    ymin -= pad;
    ymax += pad;
    const double w = kPanelW - kMarginL - kMarginR, h = kPanelH - kMarginT - kMarginB;
    auto sx = [&](double x) { return x0 + kMarginL + (x - xmin) / (xmax - xmin) * w; };
    auto sy = [&](double y) { return kMarginT + (ymax - y) / (ymax - ymin) * h; };

    os << fmt::format("<g><text x=\"{:.1f}\" y=\"18\" font-size=\"13\" text-anchor=\"middle\">{}</text>\n",
                      x0 + kMarginL + w / 2, p.title);
    os << fmt::format("<rect x=\"{:.1f}\" y=\"{:.1f}\" width=\"{:.1f}\" height=\"{:.1f}\" fill=\"none\" stroke=\"#333\"/>\n",
                      x0 + kMarginL, kMarginT, w, h);
    for (int t = 0; t <= 4; ++t) {
        const double yv = ymin + (ymax - ymin) * t / 4.0;
        const double xv = xmin + (xmax - xmin) * t / 4.0;
        os << fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" font-size=\"10\" text-anchor=\"end\">{:.4g}</text>\n",
                          x0 + kMarginL - 4, sy(yv) + 3, yv);
        os << fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" font-size=\"10\" text-anchor=\"middle\">{:.0f}</text>\n",
                          sx(xv), kMarginT + h + 14, xv);
    }
    os << fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" font-size=\"11\" text-anchor=\"middle\">iteration</text>\n",
                      x0 + kMarginL + w / 2, kPanelH - 6);
    for (double k : p.hlines)
        if (std::isfinite(k))
            os << fmt::format("<line x1=\"{:.1f}\" y1=\"{:.1f}\" x2=\"{:.1f}\" y2=\"{:.1f}\" stroke=\"#000\" "
                              "stroke-dasharray=\"6 3\"/>\n",
                              x0 + kMarginL, sy(k), x0 + kMarginL + w, sy(k));
    for (const auto& s : p.series) {
        std::string pts;
        auto flush = [&] {
            if (pts.empty()) return;
            os << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"1.2\""
               << (s.dashed ? " stroke-dasharray=\"4 2\"" : "") << " points=\"" << pts << "\"/>\n";
            pts.clear();
        };
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            if (!std::isfinite(s.y[i])) {
                flush();
                continue;
            }
            pts += fmt::format("{:.1f},{:.1f} ", sx(s.x[i]), sy(s.y[i]));
            if (s.markers)
                os << fmt::format("<circle cx=\"{:.1f}\" cy=\"{:.1f}\" r=\"1.6\" fill=\"{}\"/>\n", sx(s.x[i]),
                                  sy(s.y[i]), s.color);
        }
        flush();
    }
    for (auto [x, y] : p.flagged)
        if (std::isfinite(y))
            os << fmt::format("<circle cx=\"{:.1f}\" cy=\"{:.1f}\" r=\"3.5\" fill=\"none\" stroke=\"#d62728\"/>\n",
                              sx(x), sy(y));
    os << "</g>\n";
}

struct Columns {
    std::vector<double> iter, f, q1, q2;
    std::vector<std::size_t> bin;
    std::vector<char> v1, v2;
};

Columns columns(const CsvTable& t) {
    const std::size_t ci = t.column("iter"), cf = t.column("f"), c1 = t.column("q1"), c2 = t.column("q2"),
                      cb = t.column("bin_id"), cv1 = t.column("violated_q1"), cv2 = t.column("violated_q2");
    Columns c;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        c.iter.push_back(t.number(r, ci));
        c.f.push_back(t.number(r, cf));
        c.q1.push_back(t.number(r, c1));
        c.q2.push_back(t.number(r, c2));
        c.bin.push_back(static_cast<std::size_t>(t.number(r, cb)));
        c.v1.push_back(t.number(r, cv1) != 0.0);
        c.v2.push_back(t.number(r, cv2) != 0.0);
    }
    return c;
}

void emit(std::ostream& os, const std::vector<Panel>& panels) {
    os << fmt::format("<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{:.0f}\" height=\"{:.0f}\" "
                      "font-family=\"sans-serif\">\n",
                      kPanelW * panels.size(), kPanelH);
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    for (std::size_t i = 0; i < panels.size(); ++i) draw_panel(os, panels[i], kPanelW * static_cast<double>(i));
    os << "</svg>\n";
}

std::vector<Panel> panels_for(const std::vector<RunSeries>& runs, const std::vector<double>& kappa) {
    std::vector<Panel> p(3);
    p[0].title = "cost f [mdeg]";
    p[1].title = "q1 (torque spectrum peak)";
    p[2].title = "q2 [mdeg]";
    if (kappa.size() > 0) p[1].hlines.push_back(kappa[0]);
    if (kappa.size() > 1) p[2].hlines.push_back(kappa[1]);
    for (std::size_t r = 0; r < runs.size(); ++r) {
        const Columns c = columns(runs[r].table);
        const std::string color = kColors[r % std::size(kColors)];
        std::vector<char> feasible(c.f.size());
        for (std::size_t i = 0; i < feasible.size(); ++i) feasible[i] = !c.v1[i] && !c.v2[i];
        p[0].series.push_back({c.iter, c.f, color, false, true});
        p[0].series.push_back({c.iter, running_bin_minimum(c.f, c.bin, feasible), color, true, false});
        p[1].series.push_back({c.iter, c.q1, color, false, true});
        p[2].series.push_back({c.iter, c.q2, color, false, true});
        for (std::size_t i = 0; i < c.iter.size(); ++i) {
            if (c.v1[i]) p[1].flagged.emplace_back(c.iter[i], c.q1[i]);
            if (c.v2[i]) p[2].flagged.emplace_back(c.iter[i], c.q2[i]);
        }
    }
    return p;
}

}  // namespace

void plot_run(std::ostream& svg, const RunSeries& run, const std::vector<double>& kappa) {
    emit(svg, panels_for({run}, kappa));
}

void plot_comparison(std::ostream& svg, const std::vector<RunSeries>& runs, const std::vector<double>& kappa) {
    auto panels = panels_for(runs, kappa);
    // legend in the cost panel
    std::string legend;
    for (std::size_t r = 0; r < runs.size(); ++r) legend += (r ? " / " : "") + runs[r].label;
    panels[0].title += "  " + legend;
    emit(svg, panels);
}

}  // namespace safetune
