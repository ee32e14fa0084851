#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pskd/training.hpp"

namespace pskd {

// One metrics.jsonl line: a single (epoch, model, split) record. The key
// set is fixed; see metrics_line(). wall_ms is emitted as 0 so the file
// stays byte-identical across reruns; measured timings live in
// summary.json instead.
struct MetricsRow {
    std::string run_id;
    std::uint64_t seed = 0;
    Mode mode = Mode::no_distill;
    int k = 1;
    int epoch = 0;
    Role model = Role::student;
    Split split = Split::train;
    SplitRecord rec;
};

std::string metrics_line(const MetricsRow& row);
MetricsRow parse_metrics_line(const std::string& line, int line_no, const std::string& origin);

// Deterministic run id: a hash of the resolved config text.
std::string make_run_id(const std::string& resolved_config);

// Expands a training result into rows, train and test split per record.
std::vector<MetricsRow> rows_from_result(const std::string& run_id, std::uint64_t seed, Mode mode,
                                         int k, const TrainResult& result);

// Per-seed final metrics plus measured wall time for summary.json.
struct SeedSummary {
    std::uint64_t seed = 0;
    std::string status = "ok";
    double student_accuracy = 0.0;
    double student_macro_f1 = 0.0;
    double teacher_sk_accuracy = -1.0;  // < 0 when the run had no such model
    double teacher_fu_accuracy = -1.0;
    double wall_ms_total = 0.0;
};

std::string summary_json(const std::string& run_id, Mode mode, int k,
                         const std::vector<SeedSummary>& seeds);

// report.csv, fixed header:
// mode,seed,alpha,beta,gamma,k,final_accuracy,final_macro_f1,status
struct ReportRow {
    std::string mode;
    std::string seed;  // a number or "mean"
    double alpha = 0.0, beta = 0.0, gamma = 0.0;
    int k = 1;
    double final_accuracy = 0.0;
    double final_macro_f1 = 0.0;
    std::string status = "ok";
};

extern const char* const kReportCsvHeader;
std::string report_csv(const std::vector<ReportRow>& rows);

// Grid search report, one row per cell:
// alpha,beta,gamma,mean_accuracy,std_accuracy,mean_macro_f1,std_macro_f1,best,status
extern const char* const kGridCsvHeader;
std::string grid_report_csv(const std::vector<CellOutcome>& outcomes, int best_index);

// Accuracy-vs-epoch learning curves, one polyline per series.
struct CurveSeries {
    std::string label;
    std::vector<std::pair<int, double>> points;  // (epoch, accuracy)
};

std::string render_curves_svg(const std::vector<CurveSeries>& series);

}  // namespace pskd
