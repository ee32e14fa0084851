#include "pskd/reporting.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <json.hpp>

namespace pskd {

using json = nlohmann::ordered_json;

const char* const kReportCsvHeader =
    "mode,seed,alpha,beta,gamma,k,final_accuracy,final_macro_f1,status";
const char* const kGridCsvHeader =
    "alpha,beta,gamma,mean_accuracy,std_accuracy,mean_macro_f1,std_macro_f1,best,status";

std::string make_run_id(const std::string& resolved_config) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (char c : resolved_config) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001B3ULL;
    }
    std::ostringstream os;
    os << std::hex << h;
    return os.str();
}

std::string metrics_line(const MetricsRow& row) {
    json j;
    j["run_id"] = row.run_id;
    j["seed"] = row.seed;
    j["mode"] = mode_name(row.mode);
    j["k"] = row.k;
    j["epoch"] = row.epoch;
    j["model"] = role_name(row.model);
    j["split"] = row.split == Split::train ? "train" : "test";
    j["l_c"] = row.rec.l_c;
    j["l_k"] = row.rec.l_k;
    j["l_kd"] = row.rec.l_kd;
    j["l_mk"] = row.rec.l_mk;
    j["l_s"] = row.rec.l_s;
    j["l_total"] = row.rec.l_total;
    j["accuracy"] = row.rec.accuracy;
    j["macro_f1"] = row.rec.macro_f1;
    j["wall_ms"] = 0.0;
    return j.dump();
}

MetricsRow parse_metrics_line(const std::string& line, int line_no, const std::string& origin) {
    json j;
    try {
        j = json::parse(line);
    } catch (const json::exception& e) {
        throw ParseError(origin + " line " + std::to_string(line_no) + ": " + e.what());
    }
    try {
        MetricsRow row;
        row.run_id = j.at("run_id").get<std::string>();
        row.seed = j.at("seed").get<std::uint64_t>();
        row.mode = mode_from_name(j.at("mode").get<std::string>());
        row.k = j.at("k").get<int>();
        row.epoch = j.at("epoch").get<int>();
        row.model = role_from_name(j.at("model").get<std::string>());
        const std::string split = j.at("split").get<std::string>();
        if (split != "train" && split != "test")
            throw ParamError("bad split '" + split + "'");
        row.split = split == "train" ? Split::train : Split::test;
        row.rec.l_c = j.at("l_c").get<double>();
        row.rec.l_k = j.at("l_k").get<double>();
        row.rec.l_kd = j.at("l_kd").get<double>();
        row.rec.l_mk = j.at("l_mk").get<double>();
        row.rec.l_s = j.at("l_s").get<double>();
        row.rec.l_total = j.at("l_total").get<double>();
        row.rec.accuracy = j.at("accuracy").get<double>();
        row.rec.macro_f1 = j.at("macro_f1").get<double>();
        return row;
    } catch (const json::exception& e) {
        throw ParseError(origin + " line " + std::to_string(line_no) + ": " + e.what());
    } catch (const ParamError& e) {
        throw ParseError(origin + " line " + std::to_string(line_no) + ": " + e.what());
    }
}

std::vector<MetricsRow> rows_from_result(const std::string& run_id, std::uint64_t seed, Mode mode,
                                         int k, const TrainResult& result) {
    std::vector<MetricsRow> rows;
    rows.reserve(result.records.size() * 2);
    for (const EpochRecord& rec : result.records) {
        MetricsRow row;
        row.run_id = run_id;
        row.seed = seed;
        row.mode = mode;
        row.k = k;
        row.epoch = rec.epoch;
        row.model = rec.model;
        row.split = Split::train;
        row.rec = rec.train;
        rows.push_back(row);
        row.split = Split::test;
        row.rec = rec.test;
        rows.push_back(row);
    }
    return rows;
}

std::string summary_json(const std::string& run_id, Mode mode, int k,
                         const std::vector<SeedSummary>& seeds) {
    json j;
    j["run_id"] = run_id;
    j["mode"] = mode_name(mode);
    j["k"] = k;
    json per_seed = json::array();
    std::vector<double> accs, f1s;
    for (const SeedSummary& s : seeds) {
        json e;
        e["seed"] = s.seed;
        e["status"] = s.status;
        e["student_accuracy"] = s.student_accuracy;
        e["student_macro_f1"] = s.student_macro_f1;
        if (s.teacher_sk_accuracy >= 0.0) e["teacher_sk_accuracy"] = s.teacher_sk_accuracy;
        if (s.teacher_fu_accuracy >= 0.0) e["teacher_fu_accuracy"] = s.teacher_fu_accuracy;
        e["wall_ms_total"] = s.wall_ms_total;
        per_seed.push_back(std::move(e));
        if (s.status == "ok") {
            accs.push_back(s.student_accuracy);
            f1s.push_back(s.student_macro_f1);
        }
    }
    j["per_seed"] = std::move(per_seed);

    auto mean_std = [](const std::vector<double>& v) {
        json out;
        if (v.empty()) {
            out["mean"] = nullptr;
            out["std"] = nullptr;
            return out;
        }
        double m = 0.0;
        for (double x : v) m += x;
        m /= static_cast<double>(v.size());
        double var = 0.0;
        for (double x : v) var += (x - m) * (x - m);
        out["mean"] = m;
        out["std"] = std::sqrt(var / static_cast<double>(v.size()));
        return out;
    };
    j["aggregate"]["student_accuracy"] = mean_std(accs);
    j["aggregate"]["student_macro_f1"] = mean_std(f1s);
    return j.dump(2) + "\n";
}

namespace {

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

// Commas and quotes in status cells get CSV-quoted.
std::string csv_cell(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    out += "\"";
    return out;
}

}  // namespace

std::string report_csv(const std::vector<ReportRow>& rows) {
    std::ostringstream os;
    os << kReportCsvHeader << "\n";
    for (const ReportRow& r : rows) {
        os << r.mode << "," << r.seed << "," << fmt(r.alpha) << "," << fmt(r.beta) << ","
           << fmt(r.gamma) << "," << r.k << "," << fmt(r.final_accuracy) << ","
           << fmt(r.final_macro_f1) << "," << csv_cell(r.status) << "\n";
    }
    return os.str();
}

std::string grid_report_csv(const std::vector<CellOutcome>& outcomes, int best_index) {
    std::ostringstream os;
    os << kGridCsvHeader << "\n";
    for (std::size_t i = 0; i < outcomes.size(); ++i) {
        const CellOutcome& o = outcomes[i];
        os << fmt(o.cell.alpha) << "," << fmt(o.cell.beta) << "," << fmt(o.cell.gamma) << ","
           << fmt(o.mean_acc) << "," << fmt(o.std_acc) << "," << fmt(o.mean_f1) << ","
           << fmt(o.std_f1) << "," << (static_cast<int>(i) == best_index ? "*" : "") << ","
           << csv_cell(o.status) << "\n";
    }
    return os.str();
}

std::string render_curves_svg(const std::vector<CurveSeries>& series) {
    constexpr int kW = 880, kH = 560;
    constexpr int kL = 70, kR = 240, kT = 30, kB = 50;
    const int plot_w = kW - kL - kR, plot_h = kH - kT - kB;

    int max_epoch = 1;
    for (const CurveSeries& s : series)
        for (const auto& [e, a] : s.points) max_epoch = std::max(max_epoch, e);

    auto sx = [&](double epoch) { return kL + plot_w * epoch / max_epoch; };
    auto sy = [&](double acc) { return kT + plot_h * (1.0 - acc); };

    static const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                     "#9467bd", "#8c564b", "#17becf", "#7f7f7f"};

    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH
       << "\" viewBox=\"0 0 " << kW << " " << kH << "\">\n";
    os << "<rect width=\"" << kW << "\" height=\"" << kH << "\" fill=\"white\"/>\n";
    // axes
    os << "<line x1=\"" << kL << "\" y1=\"" << kT << "\" x2=\"" << kL << "\" y2=\"" << kT + plot_h
       << "\" stroke=\"black\"/>\n";
    os << "<line x1=\"" << kL << "\" y1=\"" << kT + plot_h << "\" x2=\"" << kL + plot_w
       << "\" y2=\"" << kT + plot_h << "\" stroke=\"black\"/>\n";
    for (int i = 0; i <= 10; i += 2) {
        const double acc = i / 10.0;
        os << "<text x=\"" << kL - 8 << "\" y=\"" << sy(acc) + 4
           << "\" font-size=\"12\" text-anchor=\"end\">" << acc << "</text>\n";
        os << "<line x1=\"" << kL << "\" y1=\"" << sy(acc) << "\" x2=\"" << kL + plot_w << "\" y2=\""
           << sy(acc) << "\" stroke=\"#dddddd\"/>\n";
    }
    os << "<text x=\"" << kL + plot_w / 2 << "\" y=\"" << kH - 12
       << "\" font-size=\"13\" text-anchor=\"middle\">epoch</text>\n";
    os << "<text x=\"18\" y=\"" << kT + plot_h / 2
       << "\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 18 "
       << kT + plot_h / 2 << ")\">accuracy</text>\n";

    for (std::size_t i = 0; i < series.size(); ++i) {
        const char* color = kPalette[i % (sizeof(kPalette) / sizeof(kPalette[0]))];
        os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
        for (const auto& [e, a] : series[i].points) os << sx(e) << "," << sy(a) << " ";
        os << "\"/>\n";
        const double ly = kT + 16 + 18 * static_cast<double>(i);
        os << "<line x1=\"" << kL + plot_w + 12 << "\" y1=\"" << ly - 4 << "\" x2=\""
           << kL + plot_w + 34 << "\" y2=\"" << ly - 4 << "\" stroke=\"" << color
           << "\" stroke-width=\"2\"/>\n";
        os << "<text x=\"" << kL + plot_w + 40 << "\" y=\"" << ly
           << "\" font-size=\"12\">" << series[i].label << "</text>\n";
    }
    os << "</svg>\n";
    return os.str();
}

}  // namespace pskd
