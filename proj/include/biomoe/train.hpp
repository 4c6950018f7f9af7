#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace biomoe {

/// AS_WRITTEN: sum of exp(w) L + w. UNCERTAINTY: sum of exp(-w) L + w, minimized at w = ln L.
enum class LossVariant { as_written, uncertainty };

std::string_view to_string(LossVariant v) noexcept;
LossVariant parse_loss_variant(std::string_view name);

struct LossResult {
    double value = 0.0;
    std::vector<double> grad;  // d value / d w_i
};

LossResult multitask_loss(std::span<const double> losses, std::span<const double> weights,
                          LossVariant variant = LossVariant::as_written);

struct ScheduleConfig {
    std::size_t total_steps = 1000;
    double p_start = 0.10;
    double p_end = 0.20;
    double eps_start = 0.20;
    double eps_end = 0.0;
    std::size_t warmup = 50;
    std::size_t cooldown = 100;
    double base_lr = 1e-4;
    double lr_floor = 0.0;
    std::size_t batch_size = 32;
    std::size_t epochs = 200;

    /// Warmup 5% and cooldown 10% of the run, other fields at their defaults.
    static ScheduleConfig for_steps(std::size_t total_steps);
    void validate() const;
};

/// Linear interpolation from p_start at t = 0 to p_end at t = T.
double dropout_rate(double t, const ScheduleConfig& cfg);
/// Label-smoothing strength on the same linear schedule.
double smoothing_eps(double t, const ScheduleConfig& cfg);
/// Linear warmup to base_lr, half-cosine down to lr_floor, linear cooldown to zero.
double cosine_lr(double t, const ScheduleConfig& cfg);

/// Cross-entropy against (1 - eps) onehot + eps / n; log is floored at 1e-12.
double smoothed_cross_entropy(std::span<const double> probs, std::size_t true_class, double eps);

class ConfusionMatrix {
public:
    explicit ConfusionMatrix(std::size_t n_classes);
    ConfusionMatrix(std::size_t n_classes, std::vector<std::uint64_t> counts);

    void add(std::size_t true_class, std::size_t predicted, std::uint64_t count = 1);
    std::size_t classes() const noexcept { return n_; }
    std::uint64_t at(std::size_t true_class, std::size_t predicted) const;
    std::uint64_t total() const noexcept;

private:
    std::size_t n_;
    std::vector<std::uint64_t> counts_;
};

struct MacroMetrics {
    double accuracy = 0.0;  // mean per-class recall
    double precision = 0.0;
    double f1 = 0.0;
    std::vector<double> recall_per_class;
    std::vector<double> precision_per_class;
    std::vector<double> f1_per_class;
};

/// Per-class ratios take 0/0 as 0.
MacroMetrics macro_metrics(const ConfusionMatrix& cm);

}  // namespace biomoe
