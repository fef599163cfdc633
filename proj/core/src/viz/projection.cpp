#include "mmt/viz/projection.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>

namespace mmt::viz {

Projection project_2d(std::span<const double> vectors, std::size_t dim, std::span<const std::string> labels,
                      std::span<const LanguageId> langs) {
    const std::size_t n = labels.size();
    if (langs.size() != n) throw Error("project_2d: labels and languages differ in count");
    if (dim == 0 || vectors.size() != n * dim) throw Error("project_2d: vector data does not match rows x dim");
    if (n < 3) throw Error("project_2d: need at least 3 vectors, got " + std::to_string(n));

    using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    Mat x = Eigen::Map<const Mat>(vectors.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
    bool distinct = false;
    for (Eigen::Index r = 1; r < x.rows() && !distinct; ++r) distinct = x.row(r) != x.row(0);
    if (!distinct) throw Error("project_2d: all vectors are identical");

    x.rowwise() -= x.colwise().mean();
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(x, Eigen::ComputeThinV);
    Eigen::MatrixXd v = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(dim), 2);
    const Eigen::Index k = std::min<Eigen::Index>(2, svd.matrixV().cols());
    v.leftCols(k) = svd.matrixV().leftCols(k);
    for (Eigen::Index c = 0; c < k; ++c) {
        Eigen::Index at = 0;
        v.col(c).cwiseAbs().maxCoeff(&at);
        if (v(at, c) < 0) v.col(c) *= -1.0;
    }
    const Eigen::MatrixXd y = x * v;

    Projection p;
    const auto& sv = svd.singularValues();
    for (Eigen::Index c = 0; c < k; ++c) p.explained[c] = sv(c) * sv(c) / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        p.points.push_back({labels[i], langs[i], y(static_cast<Eigen::Index>(i), 0), y(static_cast<Eigen::Index>(i), 1)});
    }
    return p;
}

std::string projection_csv(const Projection& p) {
    std::string out = "label,language,x,y\n";
    char buf[64];
    for (const auto& q : p.points) {
        std::string label = q.label;
        if (label.find_first_of(",\"\n") != std::string::npos) {
            std::string quoted = "\"";
            for (char c : label) quoted += c == '"' ? std::string("\"\"") : std::string(1, c);
            label = quoted + "\"";
        }
        std::snprintf(buf, sizeof buf, ",%.9g,%.9g\n", q.x, q.y);
        out += label + "," + q.lang.str() + buf;
    }
    return out;
}

namespace {

std::string xml_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
        case '&':
            out += "&amp;";
            break;
        case '<':
            out += "&lt;";
            break;
        case '>':
            out += "&gt;";
            break;
        case '"':
            out += "&quot;";
            break;
        default:
            out += c;
        }
    }
    return out;
}

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

} // namespace

std::string projection_svg(const Projection& p, const std::string& title) {
    if (p.points.empty()) throw Error("projection_svg: empty projection");
    std::vector<LanguageId> langs;
    for (const auto& q : p.points) {
        if (std::find(langs.begin(), langs.end(), q.lang) == langs.end()) langs.push_back(q.lang);
    }
    double x0 = p.points[0].x, x1 = x0, y0 = p.points[0].y, y1 = y0;
    for (const auto& q : p.points) {
        x0 = std::min(x0, q.x), x1 = std::max(x1, q.x);
        y0 = std::min(y0, q.y), y1 = std::max(y1, q.y);
    }
    const double w = 640, h = 480, margin = 40, legend = 110;
    const double sx = (w - 2 * margin - legend) / std::max(x1 - x0, 1e-12);
    const double sy = (h - 2 * margin) / std::max(y1 - y0, 1e-12);

    std::string out;
    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%.0f\" height=\"%.0f\" viewBox=\"0 0 %.0f %.0f\">\n",
                  w, h, w, h);
    out += buf;
    out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    if (!title.empty()) {
        std::snprintf(buf, sizeof buf, "<text x=\"%.0f\" y=\"24\" font-family=\"sans-serif\" font-size=\"14\">", margin);
        out += buf + xml_escape(title) + "</text>\n";
    }
    for (const auto& q : p.points) {
        const std::size_t li = static_cast<std::size_t>(std::find(langs.begin(), langs.end(), q.lang) - langs.begin());
        std::snprintf(buf, sizeof buf, "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"3\" fill=\"%s\" fill-opacity=\"0.8\">",
                      margin + (q.x - x0) * sx, h - margin - (q.y - y0) * sy, kPalette[li % std::size(kPalette)]);
        out += buf;
        out += "<title>" + xml_escape(q.lang.str() + ": " + q.label) + "</title></circle>\n";
    }
    for (std::size_t i = 0; i < langs.size(); ++i) {
        const double ly = margin + 20.0 * static_cast<double>(i);
        std::snprintf(buf, sizeof buf,
                      "<g class=\"legend\"><circle cx=\"%.0f\" cy=\"%.0f\" r=\"5\" fill=\"%s\"/>"
                      "<text x=\"%.0f\" y=\"%.0f\" font-family=\"sans-serif\" font-size=\"12\">",
                      w - legend + 10, ly, kPalette[i % std::size(kPalette)], w - legend + 22, ly + 4);
        out += buf + xml_escape(langs[i].str()) + "</text></g>\n";
    }
    out += "</svg>\n";
    return out;
}

void render_scatter(const Projection& p, const std::filesystem::path& stem, const std::string& title) {
    const auto svg = projection_svg(p, title);
    for (const auto& [ext, text] : {std::pair{".csv", projection_csv(p)}, std::pair{".svg", svg}}) {
        auto path = stem;
        path += ext;
        std::ofstream os(path, std::ios::binary);
        if (!os) throw Error("cannot write " + path.string());
        os << text;
        if (!os) throw Error("failed writing " + path.string());
    }
}

double mean_cosine_distance(std::span<const double> a, std::span<const double> b, std::size_t dim) {
    if (dim == 0 || a.size() != b.size() || a.size() % dim != 0 || a.empty()) {
        throw Error("mean_cosine_distance: inputs must be equal, non-empty multiples of dim");
    }
    const std::size_t n = a.size() / dim;
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double dot = 0.0, na = 0.0, nb = 0.0;
        for (std::size_t k = 0; k < dim; ++k) {
            const double x = a[i * dim + k], y = b[i * dim + k];
            dot += x * y, na += x * x, nb += y * y;
        }
        const double denom = std::sqrt(na) * std::sqrt(nb);
        total += denom > 0.0 ? 1.0 - dot / denom : 1.0;
    }
    return total / static_cast<double>(n);
}

} // namespace mmt::viz
