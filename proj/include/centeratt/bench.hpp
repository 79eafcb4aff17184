#pragma once

#include <array>
#include <chrono>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace centeratt {

// Latency decomposition used throughout the profiler. The stage set and its
// order are fixed; reports and CSV output always cover all five.
enum class Stage {
    kLoadData = 0,
    kPreprocess = 1,
    kCollate = 2,
    kLoadToGpu = 3,
    kModel = 4,
};

inline constexpr int kNumStages = 5;

const char* stage_name(Stage stage);

// Accumulates wall-clock spans per stage for a single profiling run. Timing a
// stage twice (e.g. once per scene) adds up; untouched stages report 0 ms.
class StageTimer {
  public:
    void add(Stage stage, double ms);

    template <typename F>
    void time(Stage stage, F&& fn) {
        const auto t0 = std::chrono::steady_clock::now();
        fn();
        const auto t1 = std::chrono::steady_clock::now();
        add(stage, std::chrono::duration<double, std::milli>(t1 - t0).count());
    }

    const std::array<double, kNumStages>& run_ms() const { return ms_; }
    void reset() { ms_.fill(0.0); }

  private:
    std::array<double, kNumStages> ms_{};
};

double mean_of(const std::vector<double>& values);

// Nearest-rank percentile: sorted[ceil(0.9 n) - 1].
double p90_of(std::vector<double> values);

struct LatencyReport {
    std::string variant = "pipeline";
    size_t runs = 0;
    std::array<std::vector<double>, kNumStages> samples_ms;
    std::optional<double> quality;

    double stage_mean(int stage) const;
    double stage_p90(int stage) const;
    std::vector<double> run_totals() const;
    double overall_mean() const;
    double overall_p90() const;
};

using RunFn = std::function<void(StageTimer&)>;

// Runs one_run warmup + runs times on the calling thread, keeping the last
// `runs` samples. Measurement is strictly serialized.
LatencyReport run_profile(const RunFn& one_run, size_t runs, size_t warmup,
                          const std::string& variant);

std::string format_latency_table(const std::vector<LatencyReport>& reports);

// Columns: variant,load_data,preprocess,collate,load_to_gpu,model,overall,quality
// (stage means in ms to 1 decimal; quality is "-" when unset).
void write_latency_csv(const std::string& path, const std::vector<LatencyReport>& reports);

}  // namespace centeratt
