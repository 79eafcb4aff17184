#include "centeratt/bench.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "centeratt/errors.hpp"

namespace centeratt {

const char* stage_name(Stage stage) {
    switch (stage) {
        case Stage::kLoadData: return "load data";
        case Stage::kPreprocess: return "preprocess";
        case Stage::kCollate: return "collate";
        case Stage::kLoadToGpu: return "load to GPU";
        case Stage::kModel: return "model";
    }
    throw ConfigError("unknown stage");
}

void StageTimer::add(Stage stage, double ms) {
    if (!(ms >= 0.0)) throw ConfigError("negative stage duration");
    ms_[static_cast<size_t>(stage)] += ms;
}

double mean_of(const std::vector<double>& values) {
    if (values.empty()) return 0.0;
    return std::accumulate(values.begin(), values.end(), 0.0) /
           static_cast<double>(values.size());
}

double p90_of(std::vector<double> values) {
    if (values.empty()) return 0.0;
    std::sort(values.begin(), values.end());
    const size_t rank = static_cast<size_t>(
        std::ceil(0.9 * static_cast<double>(values.size())));
    return values[std::max<size_t>(rank, 1) - 1];
}

double LatencyReport::stage_mean(int stage) const {
    return mean_of(samples_ms[static_cast<size_t>(stage)]);
}

double LatencyReport::stage_p90(int stage) const {
    return p90_of(samples_ms[static_cast<size_t>(stage)]);
}

std::vector<double> LatencyReport::run_totals() const {
    std::vector<double> totals(runs, 0.0);
    for (const auto& samples : samples_ms) {
        for (size_t r = 0; r < samples.size() && r < runs; ++r) {
            totals[r] += samples[r];
        }
    }
    return totals;
}

double LatencyReport::overall_mean() const {
    double sum = 0.0;
    for (int s = 0; s < kNumStages; ++s) sum += stage_mean(s);
    return sum;
}

double LatencyReport::overall_p90() const { return p90_of(run_totals()); }

LatencyReport run_profile(const RunFn& one_run, size_t runs, size_t warmup,
                          const std::string& variant) {
    if (runs < 1) throw ConfigError("profiling needs at least one run");
    LatencyReport report;
    report.variant = variant;
    report.runs = runs;
    StageTimer timer;
    for (size_t i = 0; i < warmup + runs; ++i) {
        timer.reset();
        one_run(timer);
        if (i < warmup) continue;
        for (int s = 0; s < kNumStages; ++s) {
            report.samples_ms[static_cast<size_t>(s)].push_back(
                timer.run_ms()[static_cast<size_t>(s)]);
        }
    }
    return report;
}

namespace {

constexpr int kVariantWidth = 28;

std::string header_line() {
    char line[256];
    std::snprintf(line, sizeof(line), "%-*s %10s %10s %8s %12s %7s %8s %6s\n",
                  kVariantWidth, "variant", "load data", "preprocess", "collate",
                  "load to GPU", "model", "overall", "mAPH");
    return line;
}

std::string value_line(const LatencyReport& report, bool p90) {
    std::array<double, kNumStages> v;
    for (int s = 0; s < kNumStages; ++s) {
        v[static_cast<size_t>(s)] = p90 ? report.stage_p90(s) : report.stage_mean(s);
    }
    const double overall = p90 ? report.overall_p90() : report.overall_mean();
    char quality[32];
    if (report.quality) {
        std::snprintf(quality, sizeof(quality), "%6.1f", *report.quality);
    } else {
        std::snprintf(quality, sizeof(quality), "%6s", "-");
    }
    char line[256];
    std::snprintf(line, sizeof(line), "%-*s %10.1f %10.1f %8.1f %12.1f %7.1f %8.1f %s\n",
                  kVariantWidth, report.variant.c_str(), v[0], v[1], v[2], v[3], v[4],
                  overall, quality);
    return line;
}

}  // namespace

std::string format_latency_table(const std::vector<LatencyReport>& reports) {
    std::ostringstream os;
    os << "mean latency (ms)\n" << header_line();
    for (const LatencyReport& r : reports) os << value_line(r, false);
    os << "\np90 latency (ms)\n" << header_line();
    for (const LatencyReport& r : reports) os << value_line(r, true);
    return os.str();
}

void write_latency_csv(const std::string& path, const std::vector<LatencyReport>& reports) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot open " + path + " for writing");
    f << "variant,load_data,preprocess,collate,load_to_gpu,model,overall,quality\n";
    for (const LatencyReport& r : reports) {
        char line[256];
        char quality[32];
        if (r.quality) {
            std::snprintf(quality, sizeof(quality), "%.1f", *r.quality);
        } else {
            std::snprintf(quality, sizeof(quality), "-");
        }
        std::snprintf(line, sizeof(line), "%s,%.1f,%.1f,%.1f,%.1f,%.1f,%.1f,%s\n",
                      r.variant.c_str(), r.stage_mean(0), r.stage_mean(1), r.stage_mean(2),
                      r.stage_mean(3), r.stage_mean(4), r.overall_mean(), quality);
        f << line;
    }
    if (!f) throw IoError("short write to " + path);
}

}  // namespace centeratt
